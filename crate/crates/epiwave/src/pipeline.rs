//! Stage orchestration: ingest -> seed -> fit -> report, with
//! content-addressed outputs so a stale upstream stage is refused instead of
//! silently reused.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex_string, RegionConfig, RunConfig, RunManifest};
use crate::error::{Error, Result};
use crate::fit::{iterate_fit, FitOptions, FitResult, RegionFitSpec};
use crate::ingest::{
    aggregate_weekly, deaths_window, inflate_errors, load_daily, Metric, WeeklySeries,
};
use crate::report::{band_csv, build_report, render_text, Report};
use crate::seed::{chi2_cases, chi2_prob, mc_search, PeakBox, SearchBox, SeedParams, SeedResult};
use crate::uncertainty::{cfr_combine, cfr_single, curve_band, kernel_summary, CfrEstimate};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex_string(&hasher.finalize()))
}

fn sha256_json<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("hash input serializes");
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hex_string(&hasher.finalize())
}

/// Hash of the configuration slice the ingest stage depends on.
pub fn ingest_hash(config: &RunConfig) -> String {
    let windows: Vec<_> = config
        .regions
        .iter()
        .map(|r| (&r.code, r.start, r.cutoff))
        .collect();
    sha256_json(&(&config.data, windows))
}

/// Hash of everything the seed stage depends on (ingest inputs included).
pub fn seed_hash(config: &RunConfig) -> String {
    sha256_json(&(ingest_hash(config), &config.regions, &config.seed))
}

/// Hash of the full effective configuration; the fit depends on all of it.
pub fn fit_hash(config: &RunConfig) -> String {
    config.content_hash()
}

pub fn weekly_dir(config: &RunConfig) -> PathBuf {
    config.output.dir.join("weekly")
}

pub fn seed_dir(config: &RunConfig) -> PathBuf {
    config.output.dir.join("seed")
}

pub fn fit_dir(config: &RunConfig) -> PathBuf {
    config.output.dir.join("fit")
}

pub fn report_dir(config: &RunConfig) -> PathBuf {
    config.output.dir.join("report")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionWeekly {
    pub region: String,
    pub cases: WeeklySeries,
    pub deaths: WeeklySeries,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestOutput {
    pub ingest_hash: String,
    pub data_hash: String,
    pub regions: Vec<RegionWeekly>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutput {
    pub seed_hash: String,
    pub ingest_hash: String,
    pub data_hash: String,
    pub results: Vec<SeedResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutput {
    pub fit_hash: String,
    pub seed_hash: String,
    pub data_hash: String,
    pub fit: FitResult,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Data(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_file(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, stage: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|_| {
        Error::StaleStage(format!(
            "{} missing; run `{stage}` first",
            path.display()
        ))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: unreadable stage output: {e}", path.display())))
}

fn write_manifest(dir: &Path, config: &RunConfig, data_hash: &str) -> Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &RunManifest::new(config, data_hash.to_string()),
    )
}

/// Stage 0: load the daily data, aggregate each region's windows into weekly
/// series, and write them (plus audit CSVs) under `out/weekly/`.
pub fn cmd_ingest(config: &RunConfig) -> Result<IngestOutput> {
    let data_hash = sha256_file(&config.data.path)?;
    let codes: Vec<String> = config.regions.iter().map(|r| r.code.clone()).collect();
    let daily = load_daily(
        &config.data.path,
        &config.data.columns,
        &codes,
        config.data.negative_policy,
    )?;
    let mut regions = Vec::new();
    for rc in &config.regions {
        let (raw_cases, raw_deaths) = &daily[&rc.code];
        let cases = aggregate_weekly(raw_cases, rc.start, rc.cutoff)?;
        let deaths = aggregate_weekly(raw_deaths, deaths_window(rc.start), rc.cutoff)?
            .with_origin(rc.start);
        log::info!(
            "{}: {} case weeks, {} death weeks",
            rc.code,
            cases.points.len(),
            deaths.points.len()
        );
        regions.push(RegionWeekly {
            region: rc.code.clone(),
            cases,
            deaths,
        });
    }
    let output = IngestOutput {
        ingest_hash: ingest_hash(config),
        data_hash: data_hash.clone(),
        regions,
    };
    let dir = weekly_dir(config);
    write_json(&dir.join("weekly.json"), &output)?;
    for rw in &output.regions {
        write_file(
            &dir.join(format!("{}_cases.csv", rw.region)),
            &rw.cases.to_csv_string(),
        )?;
        write_file(
            &dir.join(format!("{}_deaths.csv", rw.region)),
            &rw.deaths.to_csv_string(),
        )?;
    }
    write_manifest(&dir, config, &data_hash)?;
    Ok(output)
}

fn load_ingest_checked(config: &RunConfig) -> Result<IngestOutput> {
    let output: IngestOutput =
        read_json(&weekly_dir(config).join("weekly.json"), "ingest")?;
    if output.ingest_hash != ingest_hash(config) {
        return Err(Error::StaleStage(
            "weekly series were built from a different configuration; rerun ingest".into(),
        ));
    }
    let data_hash = sha256_file(&config.data.path)?;
    if output.data_hash != data_hash {
        return Err(Error::StaleStage(
            "daily data file changed since ingest; rerun ingest".into(),
        ));
    }
    Ok(output)
}

/// Builds one region's stage-1 search box from config, with data-driven
/// defaults for anything left unspecified.
fn search_box(rc: &RegionConfig, cases: &WeeklySeries, config: &RunConfig, index: usize) -> SearchBox {
    // distinct deterministic stream per region
    let rng_seed = config.seed.rng_seed + index as u64;
    let mut box_ = SearchBox::defaults(cases, rc.peaks.len(), config.seed.trials, rng_seed);
    box_.polish = config.seed.polish;
    for (pb, pc) in box_.peaks.iter_mut().zip(&rc.peaks) {
        if let Some(pin) = pc.pinned {
            *pb = PeakBox {
                n: (pin.n, pin.n),
                lambda: (pin.lambda, pin.lambda),
                t0: (pin.t0, pin.t0),
            };
            continue;
        }
        if let Some([lo, hi]) = pc.n {
            pb.n = (lo, hi);
        }
        if let Some([lo, hi]) = pc.lambda {
            pb.lambda = (lo, hi);
        }
        if let Some([lo, hi]) = pc.t0 {
            pb.t0 = (lo, hi);
        }
    }
    if let Some(bg) = &rc.background {
        if let Some(pin) = bg.pinned {
            box_.c = (pin.c, pin.c);
            box_.s = (pin.s, pin.s);
        } else {
            if let Some([lo, hi]) = bg.c {
                box_.c = (lo, hi);
            }
            if let Some([lo, hi]) = bg.s {
                box_.s = (lo, hi);
            }
        }
    }
    let degenerate = box_
        .peaks
        .iter()
        .all(|p| p.n.0 == p.n.1 && p.lambda.0 == p.lambda.1 && p.t0.0 == p.t0.1)
        && box_.c.0 == box_.c.1
        && box_.s.0 == box_.s.1;
    if degenerate {
        box_.trials = 1;
    }
    box_
}

/// Tallest Gompertz peak height of a stage-1 parameter set.
fn cases_peak_height(params: &SeedParams) -> f64 {
    params
        .peaks
        .iter()
        .map(|p| p.peak_height())
        .fold(0.0, f64::max)
}

/// Peak-height proxy for deaths before any death normalization exists:
/// the above-baseline amplitude of the weekly deaths series.
fn deaths_peak_height(deaths: &WeeklySeries) -> f64 {
    let y_max = deaths.points.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let y_min = deaths.points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    y_max - y_min
}

/// Stage 1: per-region Monte Carlo seed fits. The reported chi-square uses
/// the inflated case errors so it matches what the global fit will see.
pub fn cmd_seed(config: &RunConfig) -> Result<SeedOutput> {
    let ingest = load_ingest_checked(config)?;
    let mut results = Vec::new();
    for (i, rc) in config.regions.iter().enumerate() {
        let rw = &ingest.regions[i];
        let box_ = search_box(rc, &rw.cases, config, i);
        let mut result = mc_search(&box_, &rw.cases)?;
        if rc.cases_inflation > 0.0 {
            let height = cases_peak_height(&result.params);
            let inflated = inflate_errors(&rw.cases, rc.cases_inflation, height)?;
            result.chi2 = chi2_cases(&result.params, &inflated);
            result.prob = chi2_prob(result.chi2.max(0.0), result.ndf.max(1));
        }
        log::info!(
            "{}: seed chi2 = {:.2}, ndf = {}, prob = {:.1}%",
            rc.code,
            result.chi2,
            result.ndf,
            100.0 * result.prob
        );
        results.push(result);
    }
    let output = SeedOutput {
        seed_hash: seed_hash(config),
        ingest_hash: ingest.ingest_hash,
        data_hash: ingest.data_hash.clone(),
        results,
    };
    let dir = seed_dir(config);
    write_json(&dir.join("seed.json"), &output)?;
    write_manifest(&dir, config, &output.data_hash)?;
    Ok(output)
}

fn load_seed_checked(config: &RunConfig) -> Result<SeedOutput> {
    let output: SeedOutput = read_json(&seed_dir(config).join("seed.json"), "seed")?;
    if output.seed_hash != seed_hash(config) {
        return Err(Error::StaleStage(
            "stage-1 seeds were built from a different configuration; rerun seed".into(),
        ));
    }
    Ok(output)
}

/// Assembles the per-region fit specs with final (inflated) errors.
fn build_specs(config: &RunConfig, ingest: &IngestOutput, seeds: &SeedOutput) -> Result<Vec<RegionFitSpec>> {
    let mut specs = Vec::new();
    for (i, rc) in config.regions.iter().enumerate() {
        let rw = &ingest.regions[i];
        let seed = &seeds.results[i];
        let cases = if rc.cases_inflation > 0.0 {
            inflate_errors(&rw.cases, rc.cases_inflation, cases_peak_height(&seed.params))?
        } else {
            rw.cases.clone()
        };
        let deaths = if rc.deaths_inflation > 0.0 {
            inflate_errors(&rw.deaths, rc.deaths_inflation, deaths_peak_height(&rw.deaths))?
        } else {
            rw.deaths.clone()
        };
        specs.push(RegionFitSpec {
            region: rc.code.clone(),
            seed: seed.params.clone(),
            n_death_peaks: rc.n_death_peaks(),
            cases,
            deaths,
        });
    }
    Ok(specs)
}

/// Stage 2: the simultaneous GLS fit over all regions.
pub fn cmd_fit(config: &RunConfig) -> Result<FitOutput> {
    let ingest = load_ingest_checked(config)?;
    let seeds = load_seed_checked(config)?;
    let specs = build_specs(config, &ingest, &seeds)?;
    let options = FitOptions {
        tol: config.fit.tol,
        max_iter: config.fit.max_iter,
        quadrature: config.fit.quadrature(),
        derivative_mode: config.fit.derivative_mode,
        fixed_kernel: config.fit.fixed_kernel,
    };
    let fit = iterate_fit(&specs, config.fit.kernel_init(), &options)?;
    log::info!(
        "global fit: chi2 = {:.2}, ndf = {}, prob = {:.1}%, {} iterations",
        fit.chi2,
        fit.ndf,
        100.0 * fit.prob,
        fit.iterations
    );
    for w in &fit.warnings {
        log::warn!("{w}");
    }
    let output = FitOutput {
        fit_hash: fit_hash(config),
        seed_hash: seeds.seed_hash,
        data_hash: seeds.data_hash.clone(),
        fit,
    };
    let dir = fit_dir(config);
    write_json(&dir.join("fit.json"), &output)?;
    write_manifest(&dir, config, &output.data_hash)?;
    Ok(output)
}

fn load_fit_checked(config: &RunConfig) -> Result<FitOutput> {
    let output: FitOutput = read_json(&fit_dir(config).join("fit.json"), "fit")?;
    if output.fit_hash != fit_hash(config) {
        return Err(Error::StaleStage(
            "fit result came from a different configuration; rerun fit".into(),
        ));
    }
    Ok(output)
}

/// Per-peak and combined case-fatality estimates for every region.
pub fn all_cfrs(config: &RunConfig, fit: &FitResult) -> Result<Vec<CfrEstimate>> {
    let mut cfrs = Vec::new();
    for rc in &config.regions {
        let singles: Vec<CfrEstimate> = (0..rc.n_death_peaks())
            .map(|peak| cfr_single(&rc.code, peak, fit))
            .collect::<Result<_>>()?;
        let combined = if singles.len() >= 2 {
            Some(cfr_combine(&singles, fit)?)
        } else {
            None
        };
        cfrs.extend(singles);
        cfrs.extend(combined);
    }
    Ok(cfrs)
}

/// Stage 3: reports and confidence bands rendered from the stored fit.
pub fn cmd_report(config: &RunConfig) -> Result<Report> {
    let output = load_fit_checked(config)?;
    let fit = &output.fit;
    let cfrs = all_cfrs(config, fit)?;
    let kernel = if config.fit.fixed_kernel {
        None
    } else {
        Some(kernel_summary(fit)?)
    };
    let report = build_report(fit, &cfrs, kernel);
    let dir = report_dir(config);
    write_json(&dir.join("report.json"), &report)?;
    write_file(&dir.join("report.txt"), &render_text(&report))?;

    for (rc, spec_region) in config.regions.iter().map(|r| (r, r.code.as_str())) {
        let t_last = (rc.cutoff - rc.start).num_days() as f64;
        let grid: Vec<f64> = (0..=(t_last as i64 + 4)).map(|d| d as f64).collect();
        for metric in [Metric::Cases, Metric::Deaths] {
            let band = curve_band(metric, spec_region, fit, &grid, config.fit.band_level)?;
            write_file(
                &dir.join("bands").join(format!("{spec_region}_{metric}.csv")),
                &band_csv(&band),
            )?;
        }
    }
    write_manifest(&dir, config, &output.data_hash)?;
    Ok(report)
}

/// Convenience: all four stages in order.
pub fn cmd_run(config: &RunConfig) -> Result<Report> {
    cmd_ingest(config)?;
    cmd_seed(config)?;
    cmd_fit(config)?;
    cmd_report(config)
}
