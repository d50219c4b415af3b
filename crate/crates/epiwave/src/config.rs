//! Run configuration: a single structured file drives ingest, seeding, and
//! the global fit.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ColumnMapping, NegativePolicy};
use crate::model::{DerivativeMode, GammaKernel, Quadrature};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: SeedConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(rename = "region")]
    pub regions: Vec<RegionConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default = "ColumnMapping::default")]
    pub columns: ColumnMapping,
    #[serde(default)]
    pub negative_policy: NegativePolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedConfig {
    pub trials: u64,
    pub rng_seed: u64,
    pub polish: bool,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            trials: 1_000_000,
            rng_seed: 1,
            polish: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub kernel_alpha: f64,
    pub kernel_beta: f64,
    pub quadrature_step: f64,
    pub pre_window: f64,
    pub derivative_mode: DerivativeMode,
    pub band_level: f64,
    pub fixed_kernel: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            kernel_alpha: 4.938,
            kernel_beta: 0.277,
            quadrature_step: 0.25,
            pre_window: 60.0,
            derivative_mode: DerivativeMode::Paper,
            band_level: 0.95,
            fixed_kernel: false,
        }
    }
}

impl FitConfig {
    pub fn kernel_init(&self) -> GammaKernel {
        GammaKernel {
            alpha: self.kernel_alpha,
            beta: self.kernel_beta,
        }
    }

    pub fn quadrature(&self) -> Quadrature {
        Quadrature {
            step: self.quadrature_step,
            pre_window: self.pre_window,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionConfig {
    pub code: String,
    pub start: NaiveDate,
    /// Last calendar day included in the window.
    pub cutoff: NaiveDate,
    #[serde(default)]
    pub cases_inflation: f64,
    #[serde(default)]
    pub deaths_inflation: f64,
    /// Death-peak indices dropped as consistent with zero. Must be a
    /// trailing suffix of the peak list.
    #[serde(default)]
    pub dropped_death_peaks: Vec<usize>,
    #[serde(rename = "peak")]
    pub peaks: Vec<PeakConfig>,
    #[serde(default)]
    pub background: Option<BackgroundConfig>,
}

impl RegionConfig {
    pub fn n_death_peaks(&self) -> usize {
        self.peaks.len() - self.dropped_death_peaks.len()
    }
}

/// One peak's stage-1 search space: either pinned values or per-parameter
/// bounds (missing bounds fall back to data-driven defaults).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PeakConfig {
    pub pinned: Option<PinnedPeak>,
    pub n: Option<[f64; 2]>,
    pub lambda: Option<[f64; 2]>,
    pub t0: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PinnedPeak {
    pub n: f64,
    pub lambda: f64,
    pub t0: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BackgroundConfig {
    pub pinned: Option<PinnedBackground>,
    pub c: Option<[f64; 2]>,
    pub s: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PinnedBackground {
    pub c: f64,
    pub s: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions.is_empty() {
            return Err(Error::Config("no regions configured".into()));
        }
        for r in &self.regions {
            if r.peaks.is_empty() {
                return Err(Error::Config(format!("region {}: peak count must be >= 1", r.code)));
            }
            if r.cutoff < r.start {
                return Err(Error::Config(format!(
                    "region {}: cutoff {} before start {}",
                    r.code, r.cutoff, r.start
                )));
            }
            for frac in [r.cases_inflation, r.deaths_inflation] {
                if !(0.0..=0.05).contains(&frac) {
                    return Err(Error::Config(format!(
                        "region {}: inflation fraction {frac} outside [0, 0.05]",
                        r.code
                    )));
                }
            }
            let np = r.peaks.len();
            let mut dropped = r.dropped_death_peaks.clone();
            dropped.sort_unstable();
            dropped.dedup();
            if dropped.len() != r.dropped_death_peaks.len() {
                return Err(Error::Config(format!(
                    "region {}: duplicate dropped death peaks",
                    r.code
                )));
            }
            for (i, &d) in dropped.iter().enumerate() {
                // dropped peaks must be the trailing suffix so retained death
                // peaks pair with the leading case peaks
                let expected = np - dropped.len() + i;
                if d != expected {
                    return Err(Error::Config(format!(
                        "region {}: dropped death peaks {:?} are not a trailing suffix of 0..{np}",
                        r.code, r.dropped_death_peaks
                    )));
                }
            }
            for pc in &r.peaks {
                for bounds in [pc.n, pc.lambda, pc.t0].into_iter().flatten() {
                    // negated form also rejects NaN bounds
                    #[allow(clippy::neg_cmp_op_on_partial_ord)]
                    if !(bounds[0] <= bounds[1]) {
                        return Err(Error::Config(format!(
                            "region {}: peak bounds [{}, {}] inverted",
                            r.code, bounds[0], bounds[1]
                        )));
                    }
                }
            }
        }
        if !(0.0 < self.fit.band_level && self.fit.band_level < 1.0) {
            return Err(Error::Config("band_level must be in (0, 1)".into()));
        }
        if self.fit.quadrature_step <= 0.0 {
            return Err(Error::Config("quadrature_step must be > 0".into()));
        }
        if self.fit.kernel_alpha <= 0.0 || self.fit.kernel_beta <= 0.0 {
            return Err(Error::Config("kernel init must be positive".into()));
        }
        Ok(())
    }

    /// Hash of the effective configuration (after CLI overrides), used to
    /// detect stale stage outputs.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reproducibility manifest written next to each stage's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub data_hash: String,
    pub rng_algorithm: String,
    pub rng_seed: u64,
    pub software_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(config: &RunConfig, data_hash: String) -> Self {
        Self {
            config_hash: config.content_hash(),
            data_hash,
            rng_algorithm: crate::seed::RNG_ALGORITHM.into(),
            rng_seed: config.seed.rng_seed,
            software_version: env!("CARGO_PKG_VERSION").into(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [data]
        path = "daily.csv"
        [output]
        dir = "out"
        [[region]]
        code = "US"
        start = "2021-11-23"
        cutoff = "2022-04-25"
        [[region.peak]]
        pinned = { n = 2.18e7, lambda = 0.0925, t0 = 49.4 }
    "#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config: RunConfig = toml::from_str(MINIMAL).unwrap();
        config.validate().unwrap();
        assert_eq!(config.seed.trials, 1_000_000);
        assert_eq!(config.fit.kernel_alpha, 4.938);
        assert_eq!(config.fit.kernel_beta, 0.277);
        assert_eq!(config.fit.quadrature_step, 0.25);
        assert_eq!(config.regions[0].n_death_peaks(), 1);
    }

    #[test]
    fn trailing_suffix_rule_for_dropped_peaks() {
        let mut config: RunConfig = toml::from_str(MINIMAL).unwrap();
        config.regions[0].peaks = vec![PeakConfig::default(); 3];
        config.regions[0].dropped_death_peaks = vec![2];
        config.validate().unwrap();
        assert_eq!(config.regions[0].n_death_peaks(), 2);
        config.regions[0].dropped_death_peaks = vec![0];
        assert!(config.validate().is_err());
        config.regions[0].dropped_death_peaks = vec![1, 2];
        config.validate().unwrap();
    }

    #[test]
    fn inflation_bounds_enforced() {
        let mut config: RunConfig = toml::from_str(MINIMAL).unwrap();
        config.regions[0].cases_inflation = 0.06;
        assert!(config.validate().is_err());
    }

    #[test]
    fn content_hash_changes_with_config() {
        let a: RunConfig = toml::from_str(MINIMAL).unwrap();
        let mut b: RunConfig = toml::from_str(MINIMAL).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        b.seed.rng_seed = 2;
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
