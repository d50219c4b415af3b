//! Stage-2 global fit: stacked design matrix over all regions' cases and
//! deaths, generalized least squares solve, and iterated re-linearization of
//! the nonlinear parameters until the delta corrections vanish.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::WeeklySeries;
use crate::model::{
    death_shape_with_partials, gompertz_rate, partials_cases, DerivativeMode, GammaKernel,
    GompertzPeak, LinearBackground, Quadrature, RegionModel,
};
use crate::seed::{chi2_prob, SeedParams};

/// Role of one entry of the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    CaseNorm,
    CaseConst,
    CaseSlope,
    DeathNorm,
    DeathConst,
    DeathSlope,
    PeakT0,
    PeakLambda,
    KernelAlpha,
    KernelBeta,
}

/// Maps a parameter-vector index to (region, role, peak).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId {
    pub region: Option<String>,
    pub role: ParamRole,
    pub peak: Option<usize>,
}

impl std::fmt::Display for ParamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (&self.region, self.peak) {
            (Some(r), Some(p)) => write!(f, "{r}/{:?}[{p}]", self.role),
            (Some(r), None) => write!(f, "{r}/{:?}", self.role),
            _ => write!(f, "{:?}", self.role),
        }
    }
}

/// Ordering manifest: a bijection index -> (region, role, peak).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingManifest {
    pub entries: Vec<ParamId>,
}

impl OrderingManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, region: Option<&str>, role: ParamRole, peak: Option<usize>) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.region.as_deref() == region && e.role == role && e.peak == peak)
    }
}

/// Everything the global fit needs for one region.
#[derive(Debug, Clone)]
pub struct RegionFitSpec {
    pub region: String,
    /// Stage-1 cases parameters (peaks plus background).
    pub seed: SeedParams,
    /// Number of retained death peaks (leading case peaks keep a death
    /// normalization; trailing ones are dropped per config).
    pub n_death_peaks: usize,
    /// Weekly cases with final (inflated) errors, on the region day axis.
    pub cases: WeeklySeries,
    /// Weekly deaths with final (inflated) errors, on the same axis.
    pub deaths: WeeklySeries,
}

/// Global-fit options.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub quadrature: Quadrature,
    pub derivative_mode: DerivativeMode,
    /// When set, the kernel stays at its initial value and the delta-alpha /
    /// delta-beta columns are omitted.
    pub fixed_kernel: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            quadrature: Quadrature::default(),
            derivative_mode: DerivativeMode::default(),
            fixed_kernel: false,
        }
    }
}

/// Converged global fit: parameter values in manifest order, the full
/// covariance matrix, and goodness-of-fit summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub manifest: OrderingManifest,
    /// Converged values; delta entries hold the folded-in t0, lambda, alpha,
    /// beta rather than the (vanished) corrections.
    pub values: Vec<f64>,
    /// Dense covariance matrix, row-major, `manifest.len()` squared.
    pub covariance: Vec<f64>,
    pub chi2: f64,
    pub ndf: i64,
    pub prob: f64,
    pub iterations: usize,
    pub delta_norm_trace: Vec<f64>,
    pub chi2_trace: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
    pub quadrature: Quadrature,
    pub derivative_mode: DerivativeMode,
    pub kernel: GammaKernel,
}

impl FitResult {
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.manifest.len() + j]
    }

    pub fn value_of(&self, region: Option<&str>, role: ParamRole, peak: Option<usize>) -> Option<f64> {
        self.manifest
            .index_of(region, role, peak)
            .map(|i| self.values[i])
    }

    pub fn sigma(&self, idx: usize) -> f64 {
        self.cov(idx, idx).max(0.0).sqrt()
    }

    /// Regions present in the manifest, in fit order.
    pub fn regions(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in &self.manifest.entries {
            if let Some(r) = &e.region {
                if out.last() != Some(r) && !out.contains(r) {
                    out.push(r.clone());
                }
            }
        }
        out
    }

    /// Reassembles the converged per-region model.
    pub fn region_model(&self, region: &str) -> Result<RegionModel> {
        let mut case_peaks = Vec::new();
        let mut death_norms = Vec::new();
        for i in 0.. {
            let (Some(n), Some(t0), Some(l)) = (
                self.value_of(Some(region), ParamRole::CaseNorm, Some(i)),
                self.value_of(Some(region), ParamRole::PeakT0, Some(i)),
                self.value_of(Some(region), ParamRole::PeakLambda, Some(i)),
            ) else {
                break;
            };
            case_peaks.push(GompertzPeak { n, lambda: l, t0 });
            if let Some(nd) = self.value_of(Some(region), ParamRole::DeathNorm, Some(i)) {
                death_norms.push(nd);
            }
        }
        if case_peaks.is_empty() {
            return Err(Error::Config(format!("region {region} not in fit result")));
        }
        let get = |role| {
            self.value_of(Some(region), role, None)
                .ok_or_else(|| Error::Config(format!("region {region}: missing {role:?}")))
        };
        Ok(RegionModel {
            region: region.to_string(),
            case_peaks,
            death_norms,
            bg_cases: LinearBackground {
                c: get(ParamRole::CaseConst)?,
                s: get(ParamRole::CaseSlope)?,
            },
            bg_deaths: LinearBackground {
                c: get(ParamRole::DeathConst)?,
                s: get(ParamRole::DeathSlope)?,
            },
            kernel: self.kernel,
        })
    }
}

/// Builds the ordering manifest for a set of region specs.
pub fn build_manifest(specs: &[RegionFitSpec], fixed_kernel: bool) -> OrderingManifest {
    let mut entries = Vec::new();
    for spec in specs {
        let r = Some(spec.region.clone());
        let np = spec.seed.peaks.len();
        for i in 0..np {
            entries.push(ParamId {
                region: r.clone(),
                role: ParamRole::CaseNorm,
                peak: Some(i),
            });
        }
        entries.push(ParamId {
            region: r.clone(),
            role: ParamRole::CaseConst,
            peak: None,
        });
        entries.push(ParamId {
            region: r.clone(),
            role: ParamRole::CaseSlope,
            peak: None,
        });
        for i in 0..spec.n_death_peaks {
            entries.push(ParamId {
                region: r.clone(),
                role: ParamRole::DeathNorm,
                peak: Some(i),
            });
        }
        entries.push(ParamId {
            region: r.clone(),
            role: ParamRole::DeathConst,
            peak: None,
        });
        entries.push(ParamId {
            region: r.clone(),
            role: ParamRole::DeathSlope,
            peak: None,
        });
        for i in 0..np {
            entries.push(ParamId {
                region: r.clone(),
                role: ParamRole::PeakT0,
                peak: Some(i),
            });
        }
        for i in 0..np {
            entries.push(ParamId {
                region: r.clone(),
                role: ParamRole::PeakLambda,
                peak: Some(i),
            });
        }
    }
    if !fixed_kernel {
        entries.push(ParamId {
            region: None,
            role: ParamRole::KernelAlpha,
            peak: None,
        });
        entries.push(ParamId {
            region: None,
            role: ParamRole::KernelBeta,
            peak: None,
        });
    }
    OrderingManifest { entries }
}

/// Current nonlinear state of the iteration: one model per region plus the
/// shared kernel (held inside each model).
#[derive(Debug, Clone)]
pub struct FitState {
    pub models: Vec<RegionModel>,
    pub kernel: GammaKernel,
}

/// Assembles the stacked design matrix, data vector, and diagonal variance
/// vector at the current linearization point.
///
/// Rows are stacked region-by-region, cases then deaths. Linear columns hold
/// basis-function values; delta columns hold the partial-derivative
/// coefficients scaled by the current normalizations.
pub fn build_design(
    state: &FitState,
    specs: &[RegionFitSpec],
    manifest: &OrderingManifest,
    options: &FitOptions,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let n_rows: usize = specs
        .iter()
        .map(|s| s.cases.points.len() + s.deaths.points.len())
        .sum();
    let n_cols = manifest.len();
    let mut x = DMatrix::zeros(n_rows, n_cols);
    let mut y = DVector::zeros(n_rows);
    let mut v = DVector::zeros(n_rows);

    let idx = |region: Option<&str>, role: ParamRole, peak: Option<usize>| -> Result<usize> {
        manifest.index_of(region, role, peak).ok_or_else(|| {
            Error::Config(format!(
                "manifest does not cover ({region:?}, {role:?}, {peak:?})"
            ))
        })
    };
    let alpha_col = manifest.index_of(None, ParamRole::KernelAlpha, None);
    let beta_col = manifest.index_of(None, ParamRole::KernelBeta, None);

    let mut row = 0;
    for (spec, model) in specs.iter().zip(&state.models) {
        if model.case_peaks.len() != spec.seed.peaks.len()
            || model.death_norms.len() != spec.n_death_peaks
        {
            return Err(Error::Config(format!(
                "region {}: model shape does not match manifest",
                spec.region
            )));
        }
        let r = Some(spec.region.as_str());
        let c_const = idx(r, ParamRole::CaseConst, None)?;
        let c_slope = idx(r, ParamRole::CaseSlope, None)?;
        let d_const = idx(r, ParamRole::DeathConst, None)?;
        let d_slope = idx(r, ParamRole::DeathSlope, None)?;

        for p in &spec.cases.points {
            y[row] = p.y;
            v[row] = p.sigma * p.sigma;
            x[(row, c_const)] = 1.0;
            x[(row, c_slope)] = p.t;
            for (i, peak) in model.case_peaks.iter().enumerate() {
                let fc = gompertz_rate(p.t, peak.t0, peak.lambda);
                let (d_t0, d_lambda) = partials_cases(p.t, peak.t0, peak.lambda);
                x[(row, idx(r, ParamRole::CaseNorm, Some(i))?)] = fc;
                x[(row, idx(r, ParamRole::PeakT0, Some(i))?)] = peak.n * d_t0;
                x[(row, idx(r, ParamRole::PeakLambda, Some(i))?)] = peak.n * d_lambda;
            }
            row += 1;
        }

        for p in &spec.deaths.points {
            y[row] = p.y;
            v[row] = p.sigma * p.sigma;
            x[(row, d_const)] = 1.0;
            x[(row, d_slope)] = p.t;
            for (i, peak) in model.case_peaks.iter().enumerate().take(spec.n_death_peaks) {
                let parts = death_shape_with_partials(
                    peak.t0,
                    peak.lambda,
                    &state.kernel,
                    p.t,
                    &options.quadrature,
                    options.derivative_mode,
                );
                let nd = model.death_norms[i];
                x[(row, idx(r, ParamRole::DeathNorm, Some(i))?)] = parts.value;
                x[(row, idx(r, ParamRole::PeakT0, Some(i))?)] += nd * parts.d_t0;
                x[(row, idx(r, ParamRole::PeakLambda, Some(i))?)] += nd * parts.d_lambda;
                if let (Some(ac), Some(bc)) = (alpha_col, beta_col) {
                    x[(row, ac)] += nd * parts.d_alpha;
                    x[(row, bc)] += nd * parts.d_beta;
                }
            }
            row += 1;
        }
    }
    Ok((x, y, v))
}

const CONDITION_LIMIT: f64 = 1e12;

/// Solves the weighted least-squares system via SVD of the whitened design.
///
/// Returns the estimate, its covariance `(X^T V^-1 X)^-1`, and the chi-square
/// of the solution.
pub fn solve_gls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    v_diag: &DVector<f64>,
    manifest: Option<&OrderingManifest>,
) -> Result<(DVector<f64>, DMatrix<f64>, f64)> {
    let (n, p) = x.shape();
    if y.len() != n || v_diag.len() != n {
        return Err(Error::Config(format!(
            "dimension mismatch: X is {n}x{p}, Y has {}, V has {}",
            y.len(),
            v_diag.len()
        )));
    }
    // negated form also rejects NaN variances
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if v_diag.iter().any(|&s2| !(s2 > 0.0)) {
        return Err(Error::Numerical("variance matrix has a non-positive entry".into()));
    }
    // whiten rows, then scale columns to unit norm so the condition estimate
    // reflects collinearity rather than units
    let mut xw = x.clone();
    let mut yw = y.clone();
    for i in 0..n {
        let w = 1.0 / v_diag[i].sqrt();
        for j in 0..p {
            xw[(i, j)] *= w;
        }
        yw[i] *= w;
    }
    let col_scale: Vec<f64> = (0..p)
        .map(|j| {
            let norm = xw.column(j).norm();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    for j in 0..p {
        let inv = 1.0 / col_scale[j];
        for i in 0..n {
            xw[(i, j)] *= inv;
        }
    }

    let svd = xw.clone().svd(true, true);
    let sv = &svd.singular_values;
    let s_max = sv.iter().cloned().fold(0.0, f64::max);
    let s_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = s_max / s_min.max(f64::MIN_POSITIVE);
    // negated form also rejects a NaN condition estimate
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(cond < CONDITION_LIMIT) {
        let v_t = svd.v_t.as_ref().expect("svd with v_t");
        let min_idx = sv
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let null_vec = v_t.row(min_idx);
        let mut comps: Vec<(usize, f64)> =
            null_vec.iter().enumerate().map(|(j, c)| (j, c.abs())).collect();
        comps.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let name = |j: usize| {
            manifest
                .map(|m| m.entries[j].to_string())
                .unwrap_or_else(|| format!("column {j}"))
        };
        return Err(Error::IllConditioned {
            cond,
            col_a: name(comps[0].0),
            col_b: name(comps.get(1).map(|c| c.0).unwrap_or(comps[0].0)),
        });
    }

    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let uty = u.transpose() * &yw;
    let mut scaled = DVector::zeros(p);
    for k in 0..sv.len() {
        scaled[k] = uty[k] / sv[k];
    }
    let mut b = v_t.transpose() * scaled;
    // Vb = V S^-2 V^T in the scaled basis, then undo the column scaling
    let mut vb = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let mut acc = 0.0;
            for k in 0..sv.len() {
                acc += v_t[(k, i)] * v_t[(k, j)] / (sv[k] * sv[k]);
            }
            vb[(i, j)] = acc;
            vb[(j, i)] = acc;
        }
    }
    for j in 0..p {
        b[j] /= col_scale[j];
        for i in 0..p {
            vb[(i, j)] /= col_scale[i] * col_scale[j];
        }
    }

    let resid = y - x * &b;
    let chi2 = resid
        .iter()
        .zip(v_diag.iter())
        .map(|(r, s2)| r * r / s2)
        .sum();
    Ok((b, vb, chi2))
}

/// Initial death-side linear parameters: a deaths-only GLS at the seed
/// timing and initial kernel. Needed because the delta columns are scaled by
/// the current normalizations, which start unknown for deaths.
fn init_death_linear(
    spec: &RegionFitSpec,
    kernel: &GammaKernel,
    options: &FitOptions,
) -> Result<(Vec<f64>, LinearBackground)> {
    let n = spec.deaths.points.len();
    let k = spec.n_death_peaks;
    let mut x = DMatrix::zeros(n, k + 2);
    let mut y = DVector::zeros(n);
    let mut v = DVector::zeros(n);
    for (row, p) in spec.deaths.points.iter().enumerate() {
        for (i, peak) in spec.seed.peaks.iter().enumerate().take(k) {
            x[(row, i)] = death_shape_with_partials(
                peak.t0,
                peak.lambda,
                kernel,
                p.t,
                &options.quadrature,
                options.derivative_mode,
            )
            .value;
        }
        x[(row, k)] = 1.0;
        x[(row, k + 1)] = p.t;
        y[row] = p.y;
        v[row] = p.sigma * p.sigma;
    }
    let (b, _, _) = solve_gls(&x, &y, &v, None)?;
    let norms = (0..k).map(|i| b[i]).collect();
    Ok((
        norms,
        LinearBackground {
            c: b[k],
            s: b[k + 1],
        },
    ))
}

const DELTA_SCALE_FLOOR: f64 = 1e-12;
const MAX_HALVINGS: usize = 20;
const DIVERGENCE_STREAK: usize = 5;
/// Relative chi2 growth below this is rounding creep near the minimum, not a
/// diverging step, and does not count toward the streak.
const DIVERGENCE_REL: f64 = 1e-4;

/// Iterated Gauss-Newton GLS fit over all regions simultaneously.
pub fn iterate_fit(
    specs: &[RegionFitSpec],
    kernel_init: GammaKernel,
    options: &FitOptions,
) -> Result<FitResult> {
    if specs.is_empty() {
        return Err(Error::Config("no regions to fit".into()));
    }
    let manifest = build_manifest(specs, options.fixed_kernel);
    let mut state = FitState {
        models: Vec::with_capacity(specs.len()),
        kernel: kernel_init,
    };
    for spec in specs {
        if spec.n_death_peaks > spec.seed.peaks.len() {
            return Err(Error::Config(format!(
                "region {}: {} death peaks but only {} case peaks",
                spec.region,
                spec.n_death_peaks,
                spec.seed.peaks.len()
            )));
        }
        let (death_norms, bg_deaths) = init_death_linear(spec, &kernel_init, options)?;
        state.models.push(RegionModel {
            region: spec.region.clone(),
            case_peaks: spec.seed.peaks.clone(),
            death_norms,
            bg_cases: spec.seed.bg,
            bg_deaths,
            kernel: kernel_init,
        });
    }

    let n_data: usize = specs
        .iter()
        .map(|s| s.cases.points.len() + s.deaths.points.len())
        .sum();
    let ndf = n_data as i64 - manifest.len() as i64;

    let mut delta_norm_trace = Vec::new();
    let mut chi2_trace: Vec<f64> = Vec::new();
    let mut increases = 0usize;
    let mut converged = false;
    let mut last: Option<(DVector<f64>, DMatrix<f64>, f64)> = None;
    let mut iterations = 0usize;

    while iterations < options.max_iter {
        iterations += 1;
        let (x, y, v) = build_design(&state, specs, &manifest, options)?;
        let (b, vb, chi2) = solve_gls(&x, &y, &v, Some(&manifest))?;

        if let Some(prev) = chi2_trace.last() {
            if chi2 > *prev * (1.0 + DIVERGENCE_REL) {
                increases += 1;
                if increases >= DIVERGENCE_STREAK {
                    return Err(Error::Diverged {
                        count: DIVERGENCE_STREAK,
                        trace: format!("{chi2_trace:?} -> {chi2}"),
                    });
                }
            } else {
                increases = 0;
            }
        }
        chi2_trace.push(chi2);

        // adopt the linear parameters and collect the deltas
        let mut deltas: Vec<(usize, f64, f64)> = Vec::new(); // (manifest idx, delta, scale)
        for (j, id) in manifest.entries.iter().enumerate() {
            let model = id
                .region
                .as_ref()
                .map(|r| state.models.iter().position(|m| &m.region == r).unwrap());
            match id.role {
                ParamRole::CaseNorm => {
                    state.models[model.unwrap()].case_peaks[id.peak.unwrap()].n = b[j]
                }
                ParamRole::CaseConst => state.models[model.unwrap()].bg_cases.c = b[j],
                ParamRole::CaseSlope => state.models[model.unwrap()].bg_cases.s = b[j],
                ParamRole::DeathNorm => {
                    state.models[model.unwrap()].death_norms[id.peak.unwrap()] = b[j]
                }
                ParamRole::DeathConst => state.models[model.unwrap()].bg_deaths.c = b[j],
                ParamRole::DeathSlope => state.models[model.unwrap()].bg_deaths.s = b[j],
                ParamRole::PeakT0 => {
                    let cur = state.models[model.unwrap()].case_peaks[id.peak.unwrap()].t0;
                    deltas.push((j, b[j], cur));
                }
                ParamRole::PeakLambda => {
                    let cur = state.models[model.unwrap()].case_peaks[id.peak.unwrap()].lambda;
                    deltas.push((j, b[j], cur));
                }
                ParamRole::KernelAlpha => deltas.push((j, b[j], state.kernel.alpha)),
                ParamRole::KernelBeta => deltas.push((j, b[j], state.kernel.beta)),
            }
        }

        let max_rel = deltas
            .iter()
            .map(|(_, d, scale)| d.abs() / scale.abs().max(DELTA_SCALE_FLOOR))
            .fold(0.0, f64::max);
        delta_norm_trace.push(max_rel);

        // fold the deltas in, halving the step until the positivity
        // constraints on lambda, alpha, beta hold
        let mut factor = 1.0;
        let mut halvings = 0;
        loop {
            let ok = deltas.iter().all(|(j, d, _)| {
                let id = &manifest.entries[*j];
                match id.role {
                    ParamRole::PeakLambda => {
                        let m = state
                            .models
                            .iter()
                            .find(|m| Some(&m.region) == id.region.as_ref())
                            .unwrap();
                        m.case_peaks[id.peak.unwrap()].lambda + factor * d > 0.0
                    }
                    ParamRole::KernelAlpha => state.kernel.alpha + factor * d > 0.0,
                    ParamRole::KernelBeta => state.kernel.beta + factor * d > 0.0,
                    _ => true,
                }
            });
            if ok {
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::Numerical(
                    "step halving failed to keep lambda/alpha/beta positive".into(),
                ));
            }
            factor *= 0.5;
        }
        for (j, d, _) in &deltas {
            let id = &manifest.entries[*j];
            let step = factor * d;
            match id.role {
                ParamRole::PeakT0 => {
                    let m = state
                        .models
                        .iter_mut()
                        .find(|m| Some(&m.region) == id.region.as_ref())
                        .unwrap();
                    m.case_peaks[id.peak.unwrap()].t0 += step;
                }
                ParamRole::PeakLambda => {
                    let m = state
                        .models
                        .iter_mut()
                        .find(|m| Some(&m.region) == id.region.as_ref())
                        .unwrap();
                    m.case_peaks[id.peak.unwrap()].lambda += step;
                }
                ParamRole::KernelAlpha => state.kernel.alpha += step,
                ParamRole::KernelBeta => state.kernel.beta += step,
                _ => unreachable!(),
            }
        }
        for m in &mut state.models {
            m.kernel = state.kernel;
        }

        last = Some((b, vb, chi2));
        if max_rel < options.tol {
            converged = true;
            break;
        }
    }

    let (b, vb, chi2) = last.expect("at least one iteration");

    // report converged values: linear parameters from the solve, nonlinear
    // parameters from the folded state
    let mut values = vec![0.0; manifest.len()];
    for (j, id) in manifest.entries.iter().enumerate() {
        let model = id
            .region
            .as_ref()
            .map(|r| state.models.iter().find(|m| &m.region == r).unwrap());
        values[j] = match id.role {
            ParamRole::PeakT0 => model.unwrap().case_peaks[id.peak.unwrap()].t0,
            ParamRole::PeakLambda => model.unwrap().case_peaks[id.peak.unwrap()].lambda,
            ParamRole::KernelAlpha => state.kernel.alpha,
            ParamRole::KernelBeta => state.kernel.beta,
            _ => b[j],
        };
    }

    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "did not converge in {} iterations (last max relative delta {:.3e})",
            iterations,
            delta_norm_trace.last().copied().unwrap_or(f64::NAN)
        ));
    }
    for (j, id) in manifest.entries.iter().enumerate() {
        if id.role == ParamRole::DeathNorm {
            let sigma = vb[(j, j)].max(0.0).sqrt();
            if values[j].abs() < 2.0 * sigma {
                warnings.push(format!(
                    "{id}: death normalization {:.3e} consistent with zero (sigma {:.3e})",
                    values[j], sigma
                ));
            }
        }
    }

    let covariance: Vec<f64> = (0..manifest.len())
        .flat_map(|i| (0..manifest.len()).map(move |j| (i, j)))
        .map(|(i, j)| vb[(i, j)])
        .collect();

    Ok(FitResult {
        prob: chi2_prob(chi2.max(0.0), ndf.max(1)),
        manifest,
        values,
        covariance,
        chi2,
        ndf,
        iterations,
        delta_norm_trace,
        chi2_trace,
        converged,
        warnings,
        quadrature: options.quadrature,
        derivative_mode: options.derivative_mode,
        kernel: state.kernel,
    })
}
