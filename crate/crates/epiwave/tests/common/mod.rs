//! Shared builders for integration tests: a two-region synthetic problem
//! with a known truth and a shared delay kernel.

use chrono::NaiveDate;
use epiwave::fit::{FitResult, ParamId, ParamRole, RegionFitSpec};
use epiwave::ingest::{Metric, WeeklyPoint, WeeklySeries};
use epiwave::model::{
    cases_curve, deaths_curve, GammaKernel, GompertzPeak, LinearBackground, Quadrature,
    RegionModel,
};
use epiwave::seed::SeedParams;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const KERNEL_TRUTH: GammaKernel = GammaKernel {
    alpha: 8.0,
    beta: 0.51,
};

/// Two regions sharing one kernel: a single-wave region and a two-wave region.
pub fn two_region_truth(kernel: GammaKernel) -> Vec<RegionModel> {
    vec![
        RegionModel {
            region: "AA".into(),
            case_peaks: vec![GompertzPeak {
                n: 1.0e6,
                lambda: 0.09,
                t0: 50.0,
            }],
            death_norms: vec![3.0e3],
            bg_cases: LinearBackground { c: 500.0, s: -1.0 },
            bg_deaths: LinearBackground { c: 20.0, s: 0.05 },
            kernel,
        },
        RegionModel {
            region: "BB".into(),
            case_peaks: vec![
                GompertzPeak {
                    n: 8.0e5,
                    lambda: 0.08,
                    t0: 45.0,
                },
                GompertzPeak {
                    n: 5.0e5,
                    lambda: 0.07,
                    t0: 130.0,
                },
            ],
            death_norms: vec![2.4e3, 1.5e3],
            bg_cases: LinearBackground { c: 800.0, s: -0.5 },
            bg_deaths: LinearBackground { c: 30.0, s: 0.02 },
            kernel,
        },
    ]
}

/// Standard normal draw via Box-Muller.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 11, 23).unwrap()
}

/// Builds fit specs from the truth models on a 27-week grid; when `rng` is
/// given, each weekly value is perturbed by N(0, sigma) with the sigma the
/// spec carries, so coverage tests are exactly calibrated.
pub fn specs_from_truth(
    models: &[RegionModel],
    quad: &Quadrature,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Vec<RegionFitSpec> {
    models
        .iter()
        .map(|model| {
            let mut cases_points = Vec::new();
            for k in 0..27 {
                let t = (7 * k + 3) as f64;
                let y0 = cases_curve(model, t);
                let sigma = 0.02 * y0.abs() + 5.0;
                let y = match rng.as_deref_mut() {
                    Some(r) => y0 + sigma * standard_normal(r),
                    None => y0,
                };
                cases_points.push(WeeklyPoint {
                    t,
                    y,
                    sigma,
                    n_days: 7,
                });
            }
            let mut deaths_points = Vec::new();
            for k in 2..27 {
                let t = (7 * k + 3) as f64;
                let y0 = deaths_curve(model, t, quad);
                let sigma = 0.03 * y0.abs() + 0.5;
                let y = match rng.as_deref_mut() {
                    Some(r) => y0 + sigma * standard_normal(r),
                    None => y0,
                };
                deaths_points.push(WeeklyPoint {
                    t,
                    y,
                    sigma,
                    n_days: 7,
                });
            }
            RegionFitSpec {
                region: model.region.clone(),
                seed: SeedParams {
                    peaks: model.case_peaks.clone(),
                    bg: model.bg_cases,
                },
                n_death_peaks: model.death_norms.len(),
                cases: WeeklySeries {
                    region: model.region.clone(),
                    metric: Metric::Cases,
                    origin_date: origin(),
                    points: cases_points,
                },
                deaths: WeeklySeries {
                    region: model.region.clone(),
                    metric: Metric::Deaths,
                    origin_date: origin(),
                    points: deaths_points,
                },
            }
        })
        .collect()
}

/// Truth value of one fitted parameter, for coverage checks.
pub fn truth_value(models: &[RegionModel], kernel: &GammaKernel, id: &ParamId) -> f64 {
    let model = id
        .region
        .as_ref()
        .map(|r| models.iter().find(|m| &m.region == r).unwrap());
    match id.role {
        ParamRole::CaseNorm => model.unwrap().case_peaks[id.peak.unwrap()].n,
        ParamRole::CaseConst => model.unwrap().bg_cases.c,
        ParamRole::CaseSlope => model.unwrap().bg_cases.s,
        ParamRole::DeathNorm => model.unwrap().death_norms[id.peak.unwrap()],
        ParamRole::DeathConst => model.unwrap().bg_deaths.c,
        ParamRole::DeathSlope => model.unwrap().bg_deaths.s,
        ParamRole::PeakT0 => model.unwrap().case_peaks[id.peak.unwrap()].t0,
        ParamRole::PeakLambda => model.unwrap().case_peaks[id.peak.unwrap()].lambda,
        ParamRole::KernelAlpha => kernel.alpha,
        ParamRole::KernelBeta => kernel.beta,
    }
}

/// Largest parameter shift between two fits, in units of the first fit's
/// sigma; parameters are matched through the manifests.
pub fn max_shift_in_sigma(a: &FitResult, b: &FitResult) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, id) in a.manifest.entries.iter().enumerate() {
        let j2 = b
            .manifest
            .index_of(id.region.as_deref(), id.role, id.peak)
            .expect("manifests agree");
        let sigma = a.sigma(j);
        assert!(sigma > 0.0, "{id}: zero sigma");
        worst = worst.max((a.values[j] - b.values[j2]).abs() / sigma);
    }
    worst
}
