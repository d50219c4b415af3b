//! Stage-1 per-region fit: uniform Monte Carlo search over parameter boxes
//! minimizing the per-region cases chi-square, seeding the global fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::ingest::WeeklySeries;
use crate::model::{cases_curve, GammaKernel, GompertzPeak, LinearBackground, RegionModel};

/// RNG identifier recorded in every seed result.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Uniform sampling bounds for one peak's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakBox {
    pub n: (f64, f64),
    pub lambda: (f64, f64),
    pub t0: (f64, f64),
}

/// Search box for one region's stage-1 fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub peaks: Vec<PeakBox>,
    pub c: (f64, f64),
    pub s: (f64, f64),
    pub trials: u64,
    pub rng_seed: u64,
    /// Coordinate-descent refinement after the uniform search; off by default.
    pub polish: bool,
}

impl SearchBox {
    fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        let ok = |(lo, hi): (f64, f64)| lo <= hi && lo.is_finite() && hi.is_finite();
        for (i, p) in self.peaks.iter().enumerate() {
            if !(ok(p.n) && ok(p.lambda) && ok(p.t0)) {
                return Err(Error::Config(format!("peak {i}: invalid bounds")));
            }
        }
        if !(ok(self.c) && ok(self.s)) {
            return Err(Error::Config("invalid background bounds".into()));
        }
        Ok(())
    }

    /// Default boxes covering the plausible single- or multi-peak regime of a
    /// weekly cases series. Multi-peak boxes split the time window into
    /// non-overlapping t0 sub-windows to break permutation symmetry.
    pub fn defaults(series: &WeeklySeries, n_peaks: usize, trials: u64, rng_seed: u64) -> Self {
        let y_max = series.points.iter().map(|p| p.y).fold(0.0, f64::max);
        let y_min = series.points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let total_above_baseline: f64 = series
            .points
            .iter()
            .map(|p| (p.y - y_min).max(0.0) * p.n_days as f64)
            .sum();
        let total = total_above_baseline.max(1.0);
        let t_first = series.points.first().map(|p| p.t).unwrap_or(0.0);
        let t_last = series.points.last().map(|p| p.t).unwrap_or(7.0);
        let seg = (t_last - t_first) / n_peaks as f64;
        let peaks = (0..n_peaks)
            .map(|i| PeakBox {
                n: (0.1 * total, 10.0 * total),
                lambda: (0.02, 0.3),
                t0: (t_first + i as f64 * seg, t_first + (i + 1) as f64 * seg),
            })
            .collect();
        Self {
            peaks,
            c: (0.0, y_max),
            s: (-0.02 * y_max, 0.02 * y_max),
            trials,
            rng_seed,
            polish: false,
        }
    }
}

/// Stage-1 parameters: peaks plus the cases background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedParams {
    pub peaks: Vec<GompertzPeak>,
    pub bg: LinearBackground,
}

impl SeedParams {
    pub fn n_params(&self) -> usize {
        3 * self.peaks.len() + 2
    }
}

/// Best trial of the Monte Carlo search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub region: String,
    pub params: SeedParams,
    pub chi2: f64,
    pub ndf: i64,
    pub prob: f64,
    pub rng_algorithm: String,
    pub rng_seed: u64,
    /// Set when no trial produced a finite chi-square; the best found is
    /// still returned.
    pub warning_no_finite_chi2: bool,
}

/// Cases chi-square of one parameter set against a weekly series.
pub fn chi2_cases(params: &SeedParams, series: &WeeklySeries) -> f64 {
    let model = RegionModel {
        region: series.region.clone(),
        case_peaks: params.peaks.clone(),
        death_norms: vec![],
        bg_cases: params.bg,
        bg_deaths: LinearBackground::default(),
        // kernel is unused by the cases curve
        kernel: GammaKernel { alpha: 1.0, beta: 1.0 },
    };
    series
        .points
        .iter()
        .map(|p| {
            let r = (cases_curve(&model, p.t) - p.y) / p.sigma;
            r * r
        })
        .sum()
}

fn sample_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Uniform Monte Carlo search: `trials` draws from the box, returning the
/// draw with minimal cases chi-square. Deterministic given `rng_seed`.
pub fn mc_search(box_: &SearchBox, series: &WeeklySeries) -> Result<SeedResult> {
    box_.validate()?;
    if series.points.iter().any(|p| p.sigma <= 0.0) {
        return Err(Error::Data(format!(
            "{}: non-positive sigma in weekly series",
            series.region
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(box_.rng_seed);
    let mut best: Option<(f64, SeedParams)> = None;
    let mut saw_finite = false;
    for _ in 0..box_.trials {
        let peaks: Vec<GompertzPeak> = box_
            .peaks
            .iter()
            .map(|pb| GompertzPeak {
                n: sample_in(&mut rng, pb.n),
                lambda: sample_in(&mut rng, pb.lambda),
                t0: sample_in(&mut rng, pb.t0),
            })
            .collect();
        let bg = LinearBackground {
            c: sample_in(&mut rng, box_.c),
            s: sample_in(&mut rng, box_.s),
        };
        let params = SeedParams { peaks, bg };
        let chi2 = chi2_cases(&params, series);
        saw_finite |= chi2.is_finite();
        if best.as_ref().is_none_or(|(b, _)| chi2 < *b) {
            best = Some((chi2, params));
        }
    }
    let (mut chi2, mut params) = best.expect("trials >= 1");
    if box_.polish {
        (chi2, params) = coordinate_polish(&params, series, chi2);
    }
    let ndf = series.points.len() as i64 - params.n_params() as i64;
    Ok(SeedResult {
        region: series.region.clone(),
        prob: chi2_prob(chi2.max(0.0), ndf.max(1)),
        params,
        chi2,
        ndf,
        rng_algorithm: RNG_ALGORITHM.into(),
        rng_seed: box_.rng_seed,
        warning_no_finite_chi2: !saw_finite,
    })
}

/// A few hundred deterministic local refinements: each coordinate is stepped
/// by a shrinking relative fraction and the move is kept if chi2 improves.
fn coordinate_polish(start: &SeedParams, series: &WeeklySeries, chi2_start: f64) -> (f64, SeedParams) {
    let mut best = start.clone();
    let mut chi2 = chi2_start;
    let mut frac = 0.05;
    for _round in 0..20 {
        for coord in 0..best.n_params() {
            for sign in [1.0, -1.0] {
                let mut trial = best.clone();
                let v = coord_mut(&mut trial, coord);
                let step = sign * frac * v.abs().max(1e-3);
                *v += step;
                let c = chi2_cases(&trial, series);
                if c < chi2 {
                    chi2 = c;
                    best = trial;
                }
            }
        }
        frac *= 0.7;
    }
    (chi2, best)
}

fn coord_mut(params: &mut SeedParams, idx: usize) -> &mut f64 {
    let np = params.peaks.len();
    if idx < 3 * np {
        let p = &mut params.peaks[idx / 3];
        match idx % 3 {
            0 => &mut p.n,
            1 => &mut p.lambda,
            _ => &mut p.t0,
        }
    } else if idx == 3 * np {
        &mut params.bg.c
    } else {
        &mut params.bg.s
    }
}

/// Upper-tail chi-square probability `Q(ndf/2, chi2/2)`.
pub fn chi2_prob(chi2: f64, ndf: i64) -> f64 {
    assert!(chi2 >= 0.0 && ndf >= 1, "chi2 >= 0 and ndf >= 1 required");
    if chi2 == 0.0 {
        return 1.0;
    }
    gamma_ur(ndf as f64 / 2.0, chi2 / 2.0)
}
