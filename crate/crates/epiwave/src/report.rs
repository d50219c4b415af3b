//! Rendering fit results: aligned text tables, a structured JSON summary,
//! and band CSVs. Sigmas are rounded to two significant digits and values to
//! the sigma's decimal place.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitResult, ParamRole};
use crate::uncertainty::{Band, CfrEstimate, KernelSummary};

/// Formats `value +- sigma` with the sigma rounded to two significant digits
/// and the value rounded to the same decimal place.
pub fn format_value_sigma(value: f64, sigma: f64) -> String {
    if !sigma.is_finite() || sigma <= 0.0 {
        return format!("{value:.6}");
    }
    let e = sigma.abs().log10().floor() as i32;
    if (-4..5).contains(&e) {
        let decimals = (1 - e).max(0) as usize;
        if e > 1 {
            // last significant digit sits above the units place
            let scale = 10f64.powi(e - 1);
            let v = (value / scale).round() * scale;
            let s = (sigma / scale).round() * scale;
            format!("{v:.0} ± {s:.0}")
        } else {
            format!("{value:.decimals$} ± {sigma:.decimals$}")
        }
    } else {
        let ev = if value != 0.0 {
            value.abs().log10().floor() as i32
        } else {
            e
        };
        let dv = (ev - (e - 1)).max(0) as usize;
        format!("{value:.dv$e} ± {sigma:.1e}")
    }
}

fn role_label(role: ParamRole, peak: Option<usize>) -> String {
    let base = match role {
        ParamRole::CaseNorm => "N_c",
        ParamRole::CaseConst => "C_c",
        ParamRole::CaseSlope => "S_c",
        ParamRole::DeathNorm => "N_d",
        ParamRole::DeathConst => "C_d",
        ParamRole::DeathSlope => "S_d",
        ParamRole::PeakT0 => "t0",
        ParamRole::PeakLambda => "lambda",
        ParamRole::KernelAlpha => "alpha",
        ParamRole::KernelBeta => "beta",
    };
    match peak {
        Some(i) => format!("{base}[{i}]"),
        None => base.to_string(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamReport {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfrReport {
    /// Peak index; `None` is the covariance-weighted combination.
    pub peak: Option<usize>,
    pub percent: f64,
    pub percent_sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: String,
    pub params: Vec<ParamReport>,
    pub cfr: Vec<CfrReport>,
}

/// Structured fit summary, serialized as the JSON report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub chi2: f64,
    pub ndf: i64,
    pub prob: f64,
    pub iterations: usize,
    pub converged: bool,
    pub regions: Vec<RegionReport>,
    pub kernel: Option<KernelSummary>,
    pub warnings: Vec<String>,
}

/// Assembles the report from a fit result and precomputed CFR estimates.
pub fn build_report(
    fit: &FitResult,
    cfrs: &[CfrEstimate],
    kernel: Option<KernelSummary>,
) -> Report {
    let mut regions = Vec::new();
    for region in fit.regions() {
        let mut params = Vec::new();
        for (j, id) in fit.manifest.entries.iter().enumerate() {
            if id.region.as_deref() == Some(region.as_str()) {
                params.push(ParamReport {
                    name: role_label(id.role, id.peak),
                    value: fit.values[j],
                    sigma: fit.sigma(j),
                });
            }
        }
        let cfr = cfrs
            .iter()
            .filter(|e| e.region == region)
            .map(|e| CfrReport {
                peak: e.peak,
                percent: 100.0 * e.value,
                percent_sigma: 100.0 * e.sigma,
            })
            .collect();
        regions.push(RegionReport {
            region,
            params,
            cfr,
        });
    }
    Report {
        chi2: fit.chi2,
        ndf: fit.ndf,
        prob: fit.prob,
        iterations: fit.iterations,
        converged: fit.converged,
        regions,
        kernel,
        warnings: fit.warnings.clone(),
    }
}

/// Renders the report as aligned plain text.
pub fn render_text(report: &Report) -> String {
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut out = String::new();
    out.push_str("global fit\n");
    out.push_str(&format!(
        "  chi2 = {:.1}   ndf = {}   prob = {:.1}%   iterations = {}   converged = {}\n",
        report.chi2,
        report.ndf,
        100.0 * report.prob,
        report.iterations,
        if report.converged { "yes" } else { "no" }
    ));
    for r in &report.regions {
        rows.clear();
        for p in &r.params {
            rows.push((p.name.clone(), format_value_sigma(p.value, p.sigma)));
        }
        for c in &r.cfr {
            let name = match c.peak {
                Some(i) => format!("CFR[{i}] (%)"),
                None => "CFR combined (%)".to_string(),
            };
            rows.push((name, format_value_sigma(c.percent, c.percent_sigma)));
        }
        out.push_str(&format!("\nregion {}\n", r.region));
        push_aligned(&mut out, &rows);
    }
    if let Some(k) = &report.kernel {
        out.push_str("\ndelay kernel\n");
        rows.clear();
        rows.push(("alpha".into(), format_value_sigma(k.alpha, k.alpha_sigma)));
        rows.push(("beta".into(), format_value_sigma(k.beta, k.beta_sigma)));
        rows.push(("mu (days)".into(), format_value_sigma(k.mu, k.mu_sigma)));
        rows.push(("cv".into(), format_value_sigma(k.cv, k.cv_sigma)));
        rows.push(("rho(alpha,beta)".into(), format!("{:.3}", k.rho_alpha_beta)));
        push_aligned(&mut out, &rows);
    }
    if !report.warnings.is_empty() {
        out.push_str("\nwarnings\n");
        for w in &report.warnings {
            out.push_str(&format!("  - {w}\n"));
        }
    }
    out
}

fn push_aligned(out: &mut String, rows: &[(String, String)]) {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    for (name, value) in rows {
        out.push_str(&format!("  {name:<width$}  {value}\n"));
    }
}

/// Band CSV: one `t,center,lower,upper` row per grid point.
pub fn band_csv(band: &Band) -> String {
    let mut out = String::from("t,center,lower,upper\n");
    for i in 0..band.t.len() {
        let (c, h) = (band.center[i], band.half_width[i]);
        out.push_str(&format!(
            "{},{:.10e},{:.10e},{:.10e}\n",
            band.t[i],
            c,
            c - h,
            c + h
        ));
    }
    out
}

/// Parses a band CSV produced by [`band_csv`].
pub fn parse_band_csv(text: &str, level: f64) -> Result<Band> {
    let mut band = Band {
        t: vec![],
        center: vec![],
        half_width: vec![],
        level,
    };
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Data(format!("band csv line {}: expected 4 fields", i + 1)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::Data(format!("band csv line {}: {e}", i + 1)))
        };
        let (t, c, lo, hi) = (
            parse(fields[0])?,
            parse(fields[1])?,
            parse(fields[2])?,
            parse(fields[3])?,
        );
        band.t.push(t);
        band.center.push(c);
        band.half_width.push(0.5 * (hi - lo));
    }
    Ok(band)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_rounds_to_two_significant_digits() {
        assert_eq!(format_value_sigma(8.04, 3.13), "8.0 ± 3.1");
        assert_eq!(format_value_sigma(0.512, 0.214), "0.51 ± 0.21");
        assert_eq!(format_value_sigma(15.7089, 0.553), "15.71 ± 0.55");
        assert_eq!(format_value_sigma(0.3536, 0.0702), "0.354 ± 0.070");
        assert_eq!(format_value_sigma(48.83, 0.0932), "48.830 ± 0.093");
    }

    #[test]
    fn value_follows_sigma_decimal_place() {
        assert_eq!(format_value_sigma(176.52, 18.7), "177 ± 19");
        assert_eq!(format_value_sigma(1234.5, 210.0), "1230 ± 210");
        assert_eq!(format_value_sigma(0.2957, 0.071), "0.296 ± 0.071");
    }

    #[test]
    fn huge_sigmas_switch_to_scientific() {
        assert_eq!(format_value_sigma(2.18e7, 1.6e6), "2.18e7 ± 1.6e6");
        assert_eq!(format_value_sigma(7.7e6, 1.04e5), "7.70e6 ± 1.0e5");
    }

    #[test]
    fn zero_sigma_prints_plain_value() {
        assert_eq!(format_value_sigma(1.5, 0.0), "1.500000");
    }

    #[test]
    fn band_csv_round_trips() {
        let band = Band {
            t: vec![0.0, 1.0, 2.0],
            center: vec![10.0, 20.0, 30.0],
            half_width: vec![1.0, 2.0, 3.0],
            level: 0.95,
        };
        let text = band_csv(&band);
        assert!(text.starts_with("t,center,lower,upper\n"));
        let parsed = parse_band_csv(&text, 0.95).unwrap();
        for i in 0..3 {
            assert!((parsed.center[i] - band.center[i]).abs() < 1e-9);
            assert!((parsed.half_width[i] - band.half_width[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn text_report_has_region_blocks_and_kernel() {
        let report = Report {
            chi2: 176.5,
            ndf: 174,
            prob: 0.434,
            iterations: 7,
            converged: true,
            regions: vec![RegionReport {
                region: "US".into(),
                params: vec![ParamReport {
                    name: "N_c[0]".into(),
                    value: 2.2e7,
                    sigma: 1.6e6,
                }],
                cfr: vec![CfrReport {
                    peak: Some(0),
                    percent: 0.2957,
                    percent_sigma: 0.071,
                }],
            }],
            kernel: Some(KernelSummary {
                alpha: 8.0,
                alpha_sigma: 3.1,
                beta: 0.51,
                beta_sigma: 0.21,
                mu: 15.71,
                mu_sigma: 0.55,
                cv: 0.354,
                cv_sigma: 0.070,
                rho_alpha_beta: 0.997,
            }),
            warnings: vec!["something".into()],
        };
        let text = render_text(&report);
        assert!(text.contains("region US"));
        assert!(text.contains("prob = 43.4%"));
        assert!(text.contains("CFR[0] (%)"));
        assert!(text.contains("0.296 ± 0.071"));
        assert!(text.contains("rho(alpha,beta)"));
        assert!(text.contains("- something"));
    }
}
