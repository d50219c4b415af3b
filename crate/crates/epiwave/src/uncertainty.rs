//! Post-fit inference: confidence bands from the full covariance matrix,
//! kernel summaries, and case-fatality rates with delta-method variances and
//! covariance-aware combination.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fit::{FitResult, ParamRole};
use crate::ingest::Metric;
use crate::model::{death_shape_with_partials, gompertz_rate, partials_cases};

/// Normal quantile for a central confidence level, e.g. 0.95 -> 1.96.
pub fn z_for_level(level: f64) -> f64 {
    assert!((0.0..1.0).contains(&level), "level must be in (0, 1)");
    let normal = Normal::new(0.0, 1.0).unwrap();
    normal.inverse_cdf(0.5 + level / 2.0)
}

/// Pointwise confidence band for a fitted curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub t: Vec<f64>,
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub level: f64,
}

/// Gradient of the region curve at `t` with respect to every fitted
/// parameter, in manifest order.
fn curve_gradient(metric: Metric, region: &str, fit: &FitResult, t: f64) -> Result<DVector<f64>> {
    let model = fit.region_model(region)?;
    let mut g = DVector::zeros(fit.manifest.len());
    for (j, id) in fit.manifest.entries.iter().enumerate() {
        let same_region = id.region.as_deref() == Some(region);
        g[j] = match (metric, id.role) {
            (Metric::Cases, ParamRole::CaseNorm) if same_region => {
                let p = model.case_peaks[id.peak.unwrap()];
                gompertz_rate(t, p.t0, p.lambda)
            }
            (Metric::Cases, ParamRole::CaseConst) if same_region => 1.0,
            (Metric::Cases, ParamRole::CaseSlope) if same_region => t,
            (Metric::Cases, ParamRole::PeakT0) if same_region => {
                let p = model.case_peaks[id.peak.unwrap()];
                p.n * partials_cases(t, p.t0, p.lambda).0
            }
            (Metric::Cases, ParamRole::PeakLambda) if same_region => {
                let p = model.case_peaks[id.peak.unwrap()];
                p.n * partials_cases(t, p.t0, p.lambda).1
            }
            (Metric::Deaths, ParamRole::DeathNorm) if same_region => {
                let p = model.case_peaks[id.peak.unwrap()];
                death_shape_with_partials(
                    p.t0,
                    p.lambda,
                    &model.kernel,
                    t,
                    &fit.quadrature,
                    fit.derivative_mode,
                )
                .value
            }
            (Metric::Deaths, ParamRole::DeathConst) if same_region => 1.0,
            (Metric::Deaths, ParamRole::DeathSlope) if same_region => t,
            (Metric::Deaths, ParamRole::PeakT0 | ParamRole::PeakLambda) if same_region => {
                let i = id.peak.unwrap();
                if i < model.death_norms.len() {
                    let p = model.case_peaks[i];
                    let parts = death_shape_with_partials(
                        p.t0,
                        p.lambda,
                        &model.kernel,
                        t,
                        &fit.quadrature,
                        fit.derivative_mode,
                    );
                    let d = if id.role == ParamRole::PeakT0 {
                        parts.d_t0
                    } else {
                        parts.d_lambda
                    };
                    model.death_norms[i] * d
                } else {
                    0.0
                }
            }
            (Metric::Deaths, ParamRole::KernelAlpha | ParamRole::KernelBeta) => {
                // shared-kernel entries appear in every region's deaths band
                let mut acc = 0.0;
                for (i, nd) in model.death_norms.iter().enumerate() {
                    let p = model.case_peaks[i];
                    let parts = death_shape_with_partials(
                        p.t0,
                        p.lambda,
                        &model.kernel,
                        t,
                        &fit.quadrature,
                        fit.derivative_mode,
                    );
                    acc += nd
                        * if id.role == ParamRole::KernelAlpha {
                            parts.d_alpha
                        } else {
                            parts.d_beta
                        };
                }
                acc
            }
            _ => 0.0,
        };
    }
    Ok(g)
}

/// Evaluates the fitted curve and its `level` confidence band on `grid`.
///
/// The band half-width is `z * sigma(t)` with `sigma(t)^2 = g(t)^T Vb g(t)`.
pub fn curve_band(
    metric: Metric,
    region: &str,
    fit: &FitResult,
    grid: &[f64],
    level: f64,
) -> Result<Band> {
    let model = fit.region_model(region)?;
    let p = fit.manifest.len();
    let vb = DMatrix::from_fn(p, p, |i, j| fit.cov(i, j));
    let z = z_for_level(level);
    let mut center = Vec::with_capacity(grid.len());
    let mut half_width = Vec::with_capacity(grid.len());
    for &t in grid {
        let value = match metric {
            Metric::Cases => crate::model::cases_curve(&model, t),
            Metric::Deaths => crate::model::deaths_curve(&model, t, &fit.quadrature),
        };
        let g = curve_gradient(metric, region, fit, t)?;
        let var = (g.transpose() * &vb * &g)[(0, 0)].max(0.0);
        center.push(value);
        half_width.push(z * var.sqrt());
    }
    Ok(Band {
        t: grid.to_vec(),
        center,
        half_width,
        level,
    })
}

/// Kernel mean and coefficient of variation with propagated uncertainties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub alpha: f64,
    pub alpha_sigma: f64,
    pub beta: f64,
    pub beta_sigma: f64,
    pub mu: f64,
    pub mu_sigma: f64,
    pub cv: f64,
    pub cv_sigma: f64,
    pub rho_alpha_beta: f64,
}

/// Delta-method summary of the fitted kernel:
/// `mu = alpha/beta`, `cv = 1/sqrt(alpha)`, with the alpha-beta covariance
/// folded into `sigma_mu`.
pub fn kernel_summary(fit: &FitResult) -> Result<KernelSummary> {
    let ai = fit
        .manifest
        .index_of(None, ParamRole::KernelAlpha, None)
        .ok_or_else(|| Error::Config("fit has no free kernel parameters".into()))?;
    let bi = fit.manifest.index_of(None, ParamRole::KernelBeta, None).unwrap();
    let (alpha, beta) = (fit.values[ai], fit.values[bi]);
    if alpha <= 0.0 || beta <= 0.0 {
        return Err(Error::Numerical("kernel parameters must be positive".into()));
    }
    let (va, vb_, cab) = (fit.cov(ai, ai), fit.cov(bi, bi), fit.cov(ai, bi));
    let mu = alpha / beta;
    let mu_var = va / (beta * beta) + (alpha * alpha / beta.powi(4)) * vb_
        - 2.0 * (alpha / beta.powi(3)) * cab;
    let cv = 1.0 / alpha.sqrt();
    let cv_sigma = va.sqrt() / (2.0 * alpha.powf(1.5));
    let rho = if va > 0.0 && vb_ > 0.0 {
        cab / (va.sqrt() * vb_.sqrt())
    } else {
        0.0
    };
    Ok(KernelSummary {
        alpha,
        alpha_sigma: va.max(0.0).sqrt(),
        beta,
        beta_sigma: vb_.max(0.0).sqrt(),
        mu,
        mu_sigma: mu_var.max(0.0).sqrt(),
        cv,
        cv_sigma,
        rho_alpha_beta: rho,
    })
}

/// A case-fatality-rate estimate: the ratio of a death normalization to its
/// case normalization, with delta-method variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfrEstimate {
    pub region: String,
    /// Peak index, or `None` for the combined estimate.
    pub peak: Option<usize>,
    pub value: f64,
    pub sigma: f64,
    /// Manifest indices of the parameters the estimate depends on.
    pub param_indices: Vec<usize>,
}

/// CFR of one peak: `N_d / N_c` with variance from `var(N_d)`, `var(N_c)`
/// and their covariance.
pub fn cfr_single(region: &str, peak: usize, fit: &FitResult) -> Result<CfrEstimate> {
    let nd_idx = fit
        .manifest
        .index_of(Some(region), ParamRole::DeathNorm, Some(peak))
        .ok_or_else(|| Error::Config(format!("{region}: no death peak {peak}")))?;
    let nc_idx = fit
        .manifest
        .index_of(Some(region), ParamRole::CaseNorm, Some(peak))
        .ok_or_else(|| Error::Config(format!("{region}: no case peak {peak}")))?;
    let (nd, nc) = (fit.values[nd_idx], fit.values[nc_idx]);
    let var_nc = fit.cov(nc_idx, nc_idx);
    if nc.abs() < 3.0 * var_nc.max(0.0).sqrt() {
        return Err(Error::Numerical(format!(
            "{region} peak {peak}: case normalization consistent with zero, ratio unstable"
        )));
    }
    let value = nd / nc;
    let var_nd = fit.cov(nd_idx, nd_idx);
    let cov = fit.cov(nd_idx, nc_idx);
    // delta method for a ratio: (d/da, d/db) = (1/b, -a/b^2)
    let var = var_nd / (nc * nc) + (nd * nd / nc.powi(4)) * var_nc - 2.0 * (nd / nc.powi(3)) * cov;
    Ok(CfrEstimate {
        region: region.to_string(),
        peak: Some(peak),
        value,
        sigma: var.max(0.0).sqrt(),
        param_indices: vec![nd_idx, nc_idx],
    })
}

/// Combines a region's per-peak CFRs through the full covariance of the
/// underlying normalizations: builds the ratio Jacobian, propagates to the
/// CFR covariance, and takes the GLS mean with a ones design.
pub fn cfr_combine(estimates: &[CfrEstimate], fit: &FitResult) -> Result<CfrEstimate> {
    let k = estimates.len();
    if k < 2 {
        return Err(Error::Config("need at least two estimates to combine".into()));
    }
    let region = &estimates[0].region;
    if estimates.iter().any(|e| &e.region != region) {
        return Err(Error::Config("estimates span different regions".into()));
    }
    // parameter order (Nd1, Nc1, Nd2, Nc2, ...)
    let mut param_indices = Vec::with_capacity(2 * k);
    for e in estimates {
        param_indices.extend_from_slice(&e.param_indices);
    }
    let v_abcd = DMatrix::from_fn(2 * k, 2 * k, |i, j| {
        fit.cov(param_indices[i], param_indices[j])
    });
    let mut d = DMatrix::zeros(k, 2 * k);
    for (i, e) in estimates.iter().enumerate() {
        let nd = fit.values[e.param_indices[0]];
        let nc = fit.values[e.param_indices[1]];
        d[(i, 2 * i)] = 1.0 / nc;
        d[(i, 2 * i + 1)] = -nd / (nc * nc);
    }
    let v12 = &d * v_abcd * d.transpose();
    let v12_inv = v12
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("CFR covariance singular: perfectly correlated estimates".into()))?;
    let ones = DVector::from_element(k, 1.0);
    let y = DVector::from_fn(k, |i, _| estimates[i].value);
    let weight = (ones.transpose() * &v12_inv * &ones)[(0, 0)];
    // negated form also rejects a NaN weight
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(weight > 0.0) {
        return Err(Error::Numerical("CFR combination weight not positive".into()));
    }
    let value = (ones.transpose() * &v12_inv * y)[(0, 0)] / weight;
    Ok(CfrEstimate {
        region: region.clone(),
        peak: None,
        value,
        sigma: (1.0 / weight).sqrt(),
        param_indices,
    })
}
