//! Forward model: normalized Gompertz-derivative peaks, linear backgrounds,
//! gamma delay kernel, case-to-death convolution, and the analytic partial
//! derivatives consumed by the linearized global fit.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Exponent arguments below this short-circuit to 0 instead of underflowing.
const EXP_UNDERFLOW: f64 = -700.0;

/// One epidemic wave: asymptotic total `n`, growth rate `lambda` (1/day),
/// inflection day `t0` on the region's day-index axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GompertzPeak {
    pub n: f64,
    pub lambda: f64,
    pub t0: f64,
}

impl GompertzPeak {
    /// Analytic maximum of the peak's daily rate, `n * lambda / e`.
    pub fn peak_height(&self) -> f64 {
        self.n * self.lambda / std::f64::consts::E
    }
}

/// Constant-plus-slope background absorbing counts from co-circulating strains.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearBackground {
    pub c: f64,
    pub s: f64,
}

impl LinearBackground {
    pub fn eval(&self, t: f64) -> f64 {
        self.c + self.s * t
    }
}

/// Gamma delay kernel for the case-to-death period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaKernel {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaKernel {
    pub fn mean(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn cv(&self) -> f64 {
        1.0 / self.alpha.sqrt()
    }
}

/// Per-region model: case peaks, retained death normalizations, two
/// backgrounds, and the kernel shared across regions.
///
/// Death peak `i` inherits `(t0, lambda)` from case peak `i`; `death_norms`
/// may be shorter than `case_peaks` when trailing death peaks were dropped
/// as consistent with zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionModel {
    pub region: String,
    pub case_peaks: Vec<GompertzPeak>,
    pub death_norms: Vec<f64>,
    pub bg_cases: LinearBackground,
    pub bg_deaths: LinearBackground,
    pub kernel: GammaKernel,
}

impl RegionModel {
    pub fn validate(&self) -> Result<()> {
        if self.case_peaks.is_empty() {
            return Err(Error::Config(format!(
                "region {}: at least one case peak required",
                self.region
            )));
        }
        if self.death_norms.len() > self.case_peaks.len() {
            return Err(Error::Config(format!(
                "region {}: more death normalizations ({}) than case peaks ({})",
                self.region,
                self.death_norms.len(),
                self.case_peaks.len()
            )));
        }
        Ok(())
    }
}

/// Normalized Gompertz-derivative rate
/// `f(t) = lambda * exp(-exp(-u)) * exp(-u)` with `u = lambda*(t - t0)`.
///
/// Underflow-safe: returns 0 instead of NaN for large `|u|`.
pub fn gompertz_rate(t: f64, t0: f64, lambda: f64) -> f64 {
    let u = lambda * (t - t0);
    let eu = if -u < EXP_UNDERFLOW { 0.0 } else { (-u).exp() };
    let exponent = -eu - u;
    if exponent < EXP_UNDERFLOW {
        0.0
    } else {
        lambda * exponent.exp()
    }
}

/// `h(t) = 1 - exp(-lambda*(t - t0))`, the factor shared by both case partials.
fn gompertz_h(t: f64, t0: f64, lambda: f64) -> f64 {
    let u = lambda * (t - t0);
    if -u > 700.0 {
        f64::NEG_INFINITY
    } else {
        1.0 - (-u).exp()
    }
}

/// Partial derivatives of `gompertz_rate` with respect to `t0` and `lambda`.
pub fn partials_cases(t: f64, t0: f64, lambda: f64) -> (f64, f64) {
    let f = gompertz_rate(t, t0, lambda);
    if f == 0.0 {
        return (0.0, 0.0);
    }
    let h = gompertz_h(t, t0, lambda);
    let d_t0 = f * lambda * h;
    let d_lambda = f * (1.0 / lambda - (t - t0) * h);
    (d_t0, d_lambda)
}

/// Gamma density `G(t) = beta^alpha t^(alpha-1) exp(-beta t) / Gamma(alpha)`.
pub fn gamma_pdf(t: f64, alpha: f64, beta: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Numerical(format!(
            "gamma_pdf: t = {t} outside domain [0, inf)"
        )));
    }
    Ok(gamma_pdf_raw(t, alpha, beta))
}

fn gamma_pdf_raw(t: f64, alpha: f64, beta: f64) -> f64 {
    debug_assert!(t >= 0.0 && alpha > 0.0 && beta > 0.0);
    if t == 0.0 {
        return match alpha.partial_cmp(&1.0).unwrap() {
            std::cmp::Ordering::Greater => 0.0,
            std::cmp::Ordering::Equal => beta,
            std::cmp::Ordering::Less => f64::INFINITY,
        };
    }
    let log_pdf = alpha * beta.ln() + (alpha - 1.0) * t.ln() - beta * t - ln_gamma(alpha);
    if log_pdf < EXP_UNDERFLOW {
        0.0
    } else {
        log_pdf.exp()
    }
}

/// Quadrature settings for the case-to-death convolution integrals.
///
/// Composite trapezoid on a fixed step; the lower limit is extended
/// `pre_window` days before the region's day-index origin so early-peak
/// mass is not clipped when `t0` is small.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub step: f64,
    pub pre_window: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            step: 0.25,
            pre_window: 60.0,
        }
    }
}

/// Which alpha-derivative to use in the deaths linearization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DerivativeMode {
    /// `ln(beta) - ln(alpha) + ln(t - tau)` inside the alpha integrand.
    #[default]
    Paper,
    /// `ln(beta) - digamma(alpha) + ln(t - tau)`, the exact derivative.
    Exact,
}

/// Convolution value plus the four partial derivatives needed by the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeathPartials {
    pub value: f64,
    pub d_t0: f64,
    pub d_lambda: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
}

/// Normalized death-peak shape: the convolution of the Gompertz rate with
/// the gamma kernel, evaluated at `t`.
pub fn death_shape(t0: f64, lambda: f64, kernel: &GammaKernel, t: f64, quad: &Quadrature) -> f64 {
    death_shape_with_partials(t0, lambda, kernel, t, quad, DerivativeMode::Paper).value
}

/// Evaluates the convolution and all four partial integrals on one shared
/// trapezoid grid.
pub fn death_shape_with_partials(
    t0: f64,
    lambda: f64,
    kernel: &GammaKernel,
    t: f64,
    quad: &Quadrature,
    mode: DerivativeMode,
) -> DeathPartials {
    let t_lo = -quad.pre_window;
    if t <= t_lo {
        return DeathPartials {
            value: 0.0,
            d_t0: 0.0,
            d_lambda: 0.0,
            d_alpha: 0.0,
            d_beta: 0.0,
        };
    }
    let span = t - t_lo;
    let n = (span / quad.step).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let (alpha, beta) = (kernel.alpha, kernel.beta);
    let alpha_ref = match mode {
        DerivativeMode::Paper => alpha.ln(),
        DerivativeMode::Exact => digamma(alpha),
    };

    let mut acc = [0.0f64; 5];
    for k in 0..=n {
        let tau = t_lo + k as f64 * h;
        let lag = (t - tau).max(0.0);
        let fc = gompertz_rate(tau, t0, lambda);
        let g = gamma_pdf_raw(lag, alpha, beta);
        let base = fc * g;
        let weight = if k == 0 || k == n { 0.5 } else { 1.0 };
        if base == 0.0 {
            continue;
        }
        let hh = gompertz_h(tau, t0, lambda);
        // The node at tau = t has g = 0 for alpha > 1, so the ln(t - tau)
        // singularity in the alpha integrand never contributes.
        let d_alpha = if lag == 0.0 {
            0.0
        } else {
            base * (beta.ln() - alpha_ref + lag.ln())
        };
        acc[0] += weight * base;
        acc[1] += weight * base * lambda * hh;
        acc[2] += weight * base * (1.0 / lambda - (tau - t0) * hh);
        acc[3] += weight * d_alpha;
        acc[4] += weight * base * (alpha / beta - lag);
    }
    DeathPartials {
        value: acc[0] * h,
        d_t0: acc[1] * h,
        d_lambda: acc[2] * h,
        d_alpha: acc[3] * h,
        d_beta: acc[4] * h,
    }
}

/// Daily cases curve: superposed peaks plus the linear background.
pub fn cases_curve(model: &RegionModel, t: f64) -> f64 {
    let peaks: f64 = model
        .case_peaks
        .iter()
        .map(|p| p.n * gompertz_rate(t, p.t0, p.lambda))
        .sum();
    peaks + model.bg_cases.eval(t)
}

/// Daily deaths curve: superposed convolved peaks plus the death background.
pub fn deaths_curve(model: &RegionModel, t: f64, quad: &Quadrature) -> f64 {
    let peaks: f64 = model
        .death_norms
        .iter()
        .zip(&model.case_peaks)
        .map(|(nd, p)| nd * death_shape(p.t0, p.lambda, &model.kernel, t, quad))
        .sum();
    peaks + model.bg_deaths.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    /// Independent Simpson-rule oracle used to check trapezoid results and
    /// normalizations; deliberately a different scheme from the production path.
    pub(crate) fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = if n.is_multiple_of(2) { n } else { n + 1 };
        let h = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(a + k as f64 * h);
        }
        sum * h / 3.0
    }

    #[test]
    fn gompertz_peak_value_at_t0() {
        let lambda = 0.0863;
        let f = gompertz_rate(49.7, 49.7, lambda);
        assert_relative_eq!(f, lambda / std::f64::consts::E, max_relative = 1e-14);
    }

    #[test]
    fn gompertz_normalizes_to_one() {
        let (t0, lambda) = (50.0, 0.0863);
        // right tail mass beyond t0 + w/lambda is e^{-w}; w = 20 leaves ~2e-9
        let integral = simpson(|t| gompertz_rate(t, t0, lambda), t0 - 12.0 / lambda, t0 + 20.0 / lambda, 20_000);
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn usa_peak_magnitude() {
        let peak = GompertzPeak {
            n: 22.0e6,
            lambda: 0.0863,
            t0: 49.70,
        };
        assert_relative_eq!(peak.peak_height(), 6.98e5, max_relative = 0.01);
    }

    #[test]
    fn gompertz_underflow_is_zero_not_nan() {
        assert_eq!(gompertz_rate(-1e6, 0.0, 0.1), 0.0);
        assert_eq!(gompertz_rate(1e6, 0.0, 0.1), 0.0);
    }

    #[test]
    fn gamma_shape_one_is_exponential() {
        let beta = 0.3;
        for t in [0.0, 0.5, 2.0, 11.0] {
            assert_relative_eq!(
                gamma_pdf(t, 1.0, beta).unwrap(),
                beta * (-beta * t).exp(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn gamma_normalizes_to_one() {
        let (alpha, beta) = (8.0, 0.51);
        let kernel = GammaKernel { alpha, beta };
        let hi = kernel.mean() + 12.0 * kernel.mean() / alpha.sqrt();
        let integral = simpson(|t| gamma_pdf(t, alpha, beta).unwrap(), 0.0, hi, 40_000);
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn gamma_mode_mean_match_fitted_kernel() {
        let kernel = GammaKernel {
            alpha: 8.0,
            beta: 0.51,
        };
        let mode = (kernel.alpha - 1.0) / kernel.beta;
        assert_relative_eq!(mode, 13.7, max_relative = 0.01);
        assert_relative_eq!(kernel.mean(), 15.69, max_relative = 1e-3);
        // argmax of the pdf sits at the mode
        let step = 0.01;
        let mut best = (0.0, 0.0);
        let mut t = 0.0;
        while t < 40.0 {
            let v = gamma_pdf(t, kernel.alpha, kernel.beta).unwrap();
            if v > best.1 {
                best = (t, v);
            }
            t += step;
        }
        assert_abs_diff_eq!(best.0, mode, epsilon = 0.02);
    }

    #[test]
    fn gamma_rejects_negative_t() {
        assert!(gamma_pdf(-0.1, 8.0, 0.51).is_err());
    }

    #[test]
    fn gamma_pdf_zero_at_origin_for_alpha_above_one() {
        assert_eq!(gamma_pdf(0.0, 8.0, 0.51).unwrap(), 0.0);
    }

    #[test]
    fn cases_curve_is_exact_superposition() {
        let kernel = GammaKernel {
            alpha: 8.0,
            beta: 0.51,
        };
        let peaks = vec![
            GompertzPeak {
                n: 3.86e6,
                lambda: 0.0803,
                t0: 36.26,
            },
            GompertzPeak {
                n: 0.88e6,
                lambda: 0.113,
                t0: 65.2,
            },
            GompertzPeak {
                n: 2.35e6,
                lambda: 0.0784,
                t0: 114.57,
            },
        ];
        let model = RegionModel {
            region: "GB".into(),
            case_peaks: peaks.clone(),
            death_norms: vec![],
            bg_cases: LinearBackground { c: 5.31e4, s: -329.0 },
            bg_deaths: LinearBackground::default(),
            kernel,
        };
        for t in [10.0, 36.26, 50.0, 65.2, 90.0, 114.57, 140.0] {
            let separate: f64 = peaks
                .iter()
                .map(|p| p.n * gompertz_rate(t, p.t0, p.lambda))
                .sum::<f64>()
                + model.bg_cases.eval(t);
            assert_relative_eq!(cases_curve(&model, t), separate, max_relative = 1e-12);
        }
        // double peak plus shoulder: local maxima near the first and third t0
        let at = |t: f64| cases_curve(&model, t);
        assert!(at(36.0) > at(20.0) && at(36.0) > at(52.0));
        assert!(at(114.5) > at(95.0) && at(114.5) > at(135.0));
    }

    #[test]
    fn background_only_when_norms_zero() {
        let model = RegionModel {
            region: "X".into(),
            case_peaks: vec![GompertzPeak {
                n: 0.0,
                lambda: 0.1,
                t0: 40.0,
            }],
            death_norms: vec![0.0],
            bg_cases: LinearBackground { c: 100.0, s: 2.0 },
            bg_deaths: LinearBackground { c: 7.0, s: -0.1 },
            kernel: GammaKernel {
                alpha: 8.0,
                beta: 0.51,
            },
        };
        let quad = Quadrature::default();
        for t in [0.0, 25.0, 80.0] {
            assert_eq!(cases_curve(&model, t), 100.0 + 2.0 * t);
            assert_eq!(deaths_curve(&model, t, &quad), 7.0 - 0.1 * t);
        }
    }

    #[test]
    fn single_peak_value_at_t0() {
        let model = RegionModel {
            region: "X".into(),
            case_peaks: vec![GompertzPeak {
                n: 1e6,
                lambda: 0.09,
                t0: 50.0,
            }],
            death_norms: vec![],
            bg_cases: LinearBackground::default(),
            bg_deaths: LinearBackground::default(),
            kernel: GammaKernel {
                alpha: 8.0,
                beta: 0.51,
            },
        };
        assert_relative_eq!(
            cases_curve(&model, 50.0),
            1e6 * 0.09 / std::f64::consts::E,
            max_relative = 1e-14
        );
    }

    #[test]
    fn case_partials_vanish_and_reduce_at_t0() {
        let (t0, lambda) = (48.0, 0.11);
        let (d_t0, d_lambda) = partials_cases(t0, t0, lambda);
        assert_eq!(d_t0, 0.0);
        let f = gompertz_rate(t0, t0, lambda);
        assert_relative_eq!(d_lambda, f / lambda, max_relative = 1e-12);
    }

    #[test]
    fn case_partials_match_finite_differences() {
        let (t0, lambda) = (49.7, 0.0863);
        let eps = 1e-5;
        for t in [20.0, 35.0, 49.7, 60.0, 85.0] {
            let (d_t0, d_lambda) = partials_cases(t, t0, lambda);
            let fd_t0 =
                (gompertz_rate(t, t0 + eps, lambda) - gompertz_rate(t, t0 - eps, lambda)) / (2.0 * eps);
            let fd_l = (gompertz_rate(t, t0, lambda + eps * lambda)
                - gompertz_rate(t, t0, lambda - eps * lambda))
                / (2.0 * eps * lambda);
            assert_relative_eq!(d_t0, fd_t0, max_relative = 1e-6, epsilon = 1e-12);
            assert_relative_eq!(d_lambda, fd_l, max_relative = 1e-6, epsilon = 1e-12);
        }
    }

    #[test]
    fn t0_partial_integrates_to_zero() {
        // normalization is t0-invariant, so the t0 partial has zero mass
        let (t0, lambda) = (50.0, 0.09);
        let integral = simpson(
            |t| partials_cases(t, t0, lambda).0,
            t0 - 12.0 / lambda,
            t0 + 12.0 / lambda,
            20_000,
        );
        assert_abs_diff_eq!(integral, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn death_shape_dirac_limit_recovers_shifted_cases() {
        // alpha -> inf at fixed mean collapses the kernel to a delta at mu
        let mu = 15.0;
        let alpha = 1e4;
        let kernel = GammaKernel {
            alpha,
            beta: alpha / mu,
        };
        let (t0, lambda) = (40.0, 0.09);
        let quad = Quadrature::default();
        for t in [45.0, 55.0, 62.0, 75.0] {
            let fd = death_shape(t0, lambda, &kernel, t, &quad);
            let shifted = gompertz_rate(t - mu, t0, lambda);
            assert_relative_eq!(fd, shifted, max_relative = 5e-3);
        }
    }

    #[test]
    fn death_shape_conserves_mass() {
        let kernel = GammaKernel {
            alpha: 8.0,
            beta: 0.51,
        };
        let (t0, lambda) = (40.0, 0.09);
        let quad = Quadrature::default();
        let hi = t0 + 12.0 / lambda + 5.0 * kernel.mean();
        let integral = simpson(|t| death_shape(t0, lambda, &kernel, t, &quad), -quad.pre_window, hi, 4_000);
        assert!((0.999..=1.001).contains(&integral), "mass = {integral}");
    }

    #[test]
    fn death_peak_lags_case_peak_by_roughly_the_kernel_mean() {
        let kernel = GammaKernel {
            alpha: 8.0,
            beta: 0.51,
        };
        let (t0, lambda) = (49.7, 0.0863);
        let quad = Quadrature::default();
        let mut best = (0.0, 0.0);
        let mut t = t0;
        while t < t0 + 40.0 {
            let v = death_shape(t0, lambda, &kernel, t, &quad);
            if v > best.1 {
                best = (t, v);
            }
            t += 0.1;
        }
        let lag = best.0 - t0;
        // the convolved peak trails the kernel mean (15.7) a little because
        // the case curve is still rising through the kernel's support
        assert!((13.0..=18.0).contains(&lag), "lag = {lag}");
    }

    #[test]
    fn death_partials_match_finite_differences_exact_mode() {
        let kernel = GammaKernel {
            alpha: 8.0,
            beta: 0.51,
        };
        let (t0, lambda) = (49.7, 0.0863);
        let quad = Quadrature::default();
        for t in [40.0, 60.0, 75.0, 95.0] {
            let p = death_shape_with_partials(t0, lambda, &kernel, t, &quad, DerivativeMode::Exact);
            let fd = |f: &dyn Fn(f64) -> f64, x: f64| {
                let h = 1e-5 * x.abs().max(1.0);
                (f(x + h) - f(x - h)) / (2.0 * h)
            };
            let fd_t0 = fd(&|x| death_shape(x, lambda, &kernel, t, &quad), t0);
            let fd_l = fd(&|x| death_shape(t0, x, &kernel, t, &quad), lambda);
            let fd_a = fd(
                &|x| {
                    death_shape(
                        t0,
                        lambda,
                        &GammaKernel {
                            alpha: x,
                            beta: kernel.beta,
                        },
                        t,
                        &quad,
                    )
                },
                kernel.alpha,
            );
            let fd_b = fd(
                &|x| {
                    death_shape(
                        t0,
                        lambda,
                        &GammaKernel {
                            alpha: kernel.alpha,
                            beta: x,
                        },
                        t,
                        &quad,
                    )
                },
                kernel.beta,
            );
            assert_relative_eq!(p.d_t0, fd_t0, max_relative = 1e-4, epsilon = 1e-10);
            assert_relative_eq!(p.d_lambda, fd_l, max_relative = 1e-4, epsilon = 1e-10);
            assert_relative_eq!(p.d_alpha, fd_a, max_relative = 1e-4, epsilon = 1e-10);
            assert_relative_eq!(p.d_beta, fd_b, max_relative = 1e-4, epsilon = 1e-10);
        }
    }

    #[test]
    fn paper_mode_alpha_partial_differs_by_digamma_gap() {
        // the two alpha-derivative modes differ by (digamma(a) - ln a) * value
        let kernel = GammaKernel {
            alpha: 8.0,
            beta: 0.51,
        };
        let (t0, lambda) = (49.7, 0.0863);
        let quad = Quadrature::default();
        let t = 70.0;
        let paper = death_shape_with_partials(t0, lambda, &kernel, t, &quad, DerivativeMode::Paper);
        let exact = death_shape_with_partials(t0, lambda, &kernel, t, &quad, DerivativeMode::Exact);
        let gap = (digamma(kernel.alpha) - kernel.alpha.ln()) * paper.value;
        assert_relative_eq!(paper.d_alpha - exact.d_alpha, gap, max_relative = 1e-10);
        assert_eq!(paper.d_t0, exact.d_t0);
        assert_eq!(paper.d_beta, exact.d_beta);
    }

    #[test]
    fn beta_partial_reduces_to_gamma_rate_derivative_for_point_mass_cases() {
        // With the kernel evaluated at a fixed lag, the beta integrand is
        // (alpha/beta - lag) * G(lag), which is exactly dG/dbeta.
        let (alpha, beta) = (8.0, 0.51);
        for lag in [5.0, 13.7, 25.0] {
            let g = gamma_pdf(lag, alpha, beta).unwrap();
            let analytic = (alpha / beta - lag) * g;
            let h = 1e-6;
            let fd = (gamma_pdf(lag, alpha, beta + h).unwrap()
                - gamma_pdf(lag, alpha, beta - h).unwrap())
                / (2.0 * h);
            assert_relative_eq!(analytic, fd, max_relative = 1e-6);
        }
    }

    proptest! {
        #[test]
        fn shift_covariance(delta in -200.0f64..200.0, t in -50.0f64..150.0,
                            t0 in 0.0f64..100.0, lambda in 0.02f64..0.3) {
            let a = gompertz_rate(t + delta, t0 + delta, lambda);
            let b = gompertz_rate(t, t0, lambda);
            // deep in the rising tail the double exponential amplifies the
            // rounding of t - t0 by a factor ~ e^{-lambda (t - t0)}
            let sens = 1.0 + (-lambda * (t - t0)).exp().min(1e6);
            prop_assert!((a - b).abs() <= 1e-13 * sens * b.abs().max(1e-290));
        }

        #[test]
        fn gompertz_positive_and_finite(t in -500.0f64..500.0, t0 in -100.0f64..200.0,
                                        lambda in 0.01f64..0.5) {
            let f = gompertz_rate(t, t0, lambda);
            prop_assert!(f.is_finite() && f >= 0.0);
        }

        #[test]
        fn death_shape_nonnegative(t in -70.0f64..200.0, t0 in 20.0f64..120.0,
                                   lambda in 0.02f64..0.3,
                                   alpha in 2.0f64..20.0, beta in 0.2f64..1.5) {
            let kernel = GammaKernel { alpha, beta };
            let quad = Quadrature { step: 0.5, pre_window: 60.0 };
            prop_assert!(death_shape(t0, lambda, &kernel, t, &quad) >= 0.0);
        }
    }
}
