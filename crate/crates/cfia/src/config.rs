//! Run configuration, the metric pipeline, and the fixture self-check
//! suite.
//!
//! Configuration is JSON on disk; command-line flags override individual
//! fields after loading. Pipeline output is deterministic: given the
//! same inputs and config, the serialized bundle is byte-identical.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{bpcer_at_apcer, deer, BpcerAtApcer, EerPoint};
use crate::ingest;
use crate::quality::QualityReport;
use crate::regions::{
    self, dedup, enumerate_all, DedupReport, EquivalenceRule, PUBLISHED_UNIQUE_COUNTS,
    PUBLISHED_UNIQUE_TOTAL, RAW_COUNTS, RAW_TOTAL,
};
use crate::vulnerability::{gmap, thresholds_at_far, VulnerabilityReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default pose tolerance: 3 degrees, stored in radians.
pub fn default_tau_radians() -> f64 {
    3.0f64.to_radians()
}

fn default_alpha() -> f64 {
    0.5
}
fn default_far() -> f64 {
    0.001
}
fn default_dedup_rule() -> String {
    "identity".to_string()
}
fn default_include_ftar() -> bool {
    true
}
fn default_epsilon() -> f64 {
    1e-7
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("alpha {0} outside (0, 1]")]
    AlphaOutOfRange(f64),
    #[error("pose tau {0} must be a finite non-negative angle in radians")]
    TauOutOfRange(f64),
    #[error("FAR {0} outside (0, 1)")]
    FarOutOfRange(f64),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{0}: {1}")]
    Parse(PathBuf, #[source] serde_json::Error),
}

/// Pipeline configuration. `epsilon` is recorded for provenance only: it
/// documents the latent-perturbation setting of the external generator
/// and is never consumed by this tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Frontal-pose tolerance in radians.
    #[serde(default = "default_tau_radians")]
    pub tau_radians: f64,
    /// False accept rate at which decision thresholds are fixed.
    #[serde(default = "default_far")]
    pub far: f64,
    #[serde(default = "default_dedup_rule")]
    pub dedup_rule: String,
    #[serde(default = "default_include_ftar")]
    pub include_ftar: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// When true, the first donor segment is also scaled by alpha before
    /// the second is blended in.
    #[serde(default)]
    pub alpha_scales_first_donor: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: default_alpha(),
            tau_radians: default_tau_radians(),
            far: default_far(),
            dedup_rule: default_dedup_rule(),
            include_ftar: default_include_ftar(),
            epsilon: default_epsilon(),
            alpha_scales_first_donor: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ConfigError::AlphaOutOfRange(self.alpha));
        }
        if !self.tau_radians.is_finite() || self.tau_radians < 0.0 {
            return Err(ConfigError::TauOutOfRange(self.tau_radians));
        }
        if !(self.far > 0.0 && self.far < 1.0) {
            return Err(ConfigError::FarOutOfRange(self.far));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError::Parse(path.to_path_buf(), e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|e| ConfigError::Io(path.to_path_buf(), e))
    }
}

/// Region-catalog summary embedded in every bundle.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogSummary {
    pub raw_total: usize,
    pub raw_counts_per_index: [usize; 16],
    pub dedup_rule: String,
    pub dedup: DedupReport,
}

/// Everything one pipeline run produced, with the exact configuration
/// echoed so reports are self-describing.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReportBundle {
    pub tool_version: String,
    pub config: RunConfig,
    pub catalog: CatalogSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vulnerability: Option<VulnerabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityAggregate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectionSummary {
    pub deer: EerPoint,
    pub bpcer_at_apcer_5: BpcerAtApcer,
    pub bpcer_at_apcer_10: BpcerAtApcer,
    pub n_bonafide: usize,
    pub n_attack: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct QualityAggregate {
    pub pairs: usize,
    /// Mean over pairs with finite PSNR; `None` when no pair is finite.
    pub mean_psnr_db: Option<f64>,
    pub infinite_psnr_pairs: usize,
    pub mean_ssim: f64,
    pub per_pair: Vec<(String, QualityReport)>,
}

impl QualityAggregate {
    pub fn from_pairs(per_pair: Vec<(String, QualityReport)>) -> QualityAggregate {
        let finite: Vec<f64> = per_pair
            .iter()
            .filter_map(|(_, r)| r.psnr_db)
            .collect();
        let mean_psnr_db = if finite.is_empty() {
            None
        } else {
            Some(finite.iter().sum::<f64>() / finite.len() as f64)
        };
        QualityAggregate {
            pairs: per_pair.len(),
            mean_psnr_db,
            infinite_psnr_pairs: per_pair.iter().filter(|(_, r)| r.psnr_infinite).count(),
            mean_ssim: per_pair.iter().map(|(_, r)| r.ssim).sum::<f64>()
                / per_pair.len().max(1) as f64,
            per_pair,
        }
    }
}

/// Input files the pipeline may consume; every field is optional and the
/// corresponding report section is omitted when absent.
#[derive(Debug, Clone, Default)]
pub struct PipelineInputs {
    pub scores: Option<PathBuf>,
    pub impostors: Option<PathBuf>,
    pub detector_scores: Option<PathBuf>,
    /// (pair id, reference image path, test image path)
    pub quality_pairs: Vec<(String, PathBuf, PathBuf)>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("catalog stage: {0}")]
    Catalog(#[from] regions::DedupError),
    #[error("ingestion stage: {0}")]
    Ingest(#[from] ingest::IngestError),
    #[error("vulnerability stage: {0}")]
    Vulnerability(#[from] crate::vulnerability::MetricError),
    #[error("detection stage: {0}")]
    Detection(#[from] crate::detection::DetectionError),
    #[error("quality stage on pair {pair}: {source}")]
    Quality {
        pair: String,
        #[source]
        source: crate::quality::QualityError,
    },
    #[error("quality stage on pair {pair}: {source}")]
    QualityIo {
        pair: String,
        #[source]
        source: crate::compositing::CompositeError,
    },
    #[error("vulnerability stage: --scores requires --impostors to fix thresholds")]
    MissingImpostors,
}

/// Builds the catalog summary for the configured dedup rule.
pub fn catalog_summary(rule_id: &str) -> Result<CatalogSummary, regions::DedupError> {
    let raw = enumerate_all();
    let rule = match rule_id {
        "fixture" => {
            let catalog = regions::bundled_fixture_catalog()
                .expect("bundled fixture catalog parses");
            EquivalenceRule::fixture_from_catalog(&catalog)
        }
        other => EquivalenceRule::from_id(other)?,
    };
    let (_, report) = dedup(&raw, &rule);
    Ok(CatalogSummary {
        raw_total: RAW_TOTAL,
        raw_counts_per_index: RAW_COUNTS,
        dedup_rule: rule_id.to_string(),
        dedup: report,
    })
}

/// Runs every stage whose inputs are present and assembles the bundle.
pub fn run_pipeline(
    config: &RunConfig,
    inputs: &PipelineInputs,
) -> Result<MetricReportBundle, PipelineError> {
    config.validate()?;
    let catalog = catalog_summary(&config.dedup_rule)?;

    let vulnerability = match (&inputs.scores, &inputs.impostors) {
        (Some(scores_path), Some(impostor_path)) => {
            let tensor = ingest::load_scores(scores_path)?;
            let impostors = ingest::load_impostors(impostor_path)?;
            let thresholds = thresholds_at_far(&impostors, config.far)?;
            Some(gmap(&tensor, &thresholds, config.include_ftar)?)
        }
        (Some(_), None) => return Err(PipelineError::MissingImpostors),
        _ => None,
    };

    let detection = match &inputs.detector_scores {
        Some(path) => {
            let set = ingest::load_detector_scores(path)?;
            Some(DetectionSummary {
                deer: deer(&set)?,
                bpcer_at_apcer_5: bpcer_at_apcer(&set, 0.05)?,
                bpcer_at_apcer_10: bpcer_at_apcer(&set, 0.10)?,
                n_bonafide: set.bonafide.len(),
                n_attack: set.attack.len(),
            })
        }
        None => None,
    };

    let quality = if inputs.quality_pairs.is_empty() {
        None
    } else {
        let mut per_pair = Vec::with_capacity(inputs.quality_pairs.len());
        for (pair, reference, test) in &inputs.quality_pairs {
            let a = crate::compositing::read_raster_png(reference).map_err(|source| {
                PipelineError::QualityIo {
                    pair: pair.clone(),
                    source,
                }
            })?;
            let b = crate::compositing::read_raster_png(test).map_err(|source| {
                PipelineError::QualityIo {
                    pair: pair.clone(),
                    source,
                }
            })?;
            let report = crate::quality::quality_report(&a, &b).map_err(|source| {
                PipelineError::Quality {
                    pair: pair.clone(),
                    source,
                }
            })?;
            per_pair.push((pair.clone(), report));
        }
        Some(QualityAggregate::from_pairs(per_pair))
    };

    Ok(MetricReportBundle {
        tool_version: TOOL_VERSION.to_string(),
        config: config.clone(),
        catalog,
        vulnerability,
        detection,
        quality,
    })
}

/// One fixture self-check outcome.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Self-checks over the bundled fixtures and the enumeration: raw counts,
/// fixture parse, and the dedup oracle equivalences. `fixture_dir`
/// overrides the bundled fixture files (list + corrections) when set.
pub fn validate_fixture_suite(fixture_dir: Option<&Path>) -> Vec<CheckResult> {
    let mut results = Vec::new();

    let raw = enumerate_all();
    results.push(check(
        "raw_total",
        raw.entries.len() == RAW_TOTAL,
        format!("raw catalog count = {} (expected {})", raw.entries.len(), RAW_TOTAL),
    ));
    let counts = raw.counts_per_index();
    results.push(check(
        "raw_counts_per_index",
        counts == RAW_COUNTS,
        format!("per-index counts = {counts:?}"),
    ));

    let fixture = match fixture_dir {
        Some(dir) => regions::load_fixture_catalog(
            &dir.join("region_list.txt"),
            &dir.join("region_list_corrections.tsv"),
        ),
        None => regions::bundled_fixture_catalog(),
    };
    match fixture {
        Ok(catalog) => {
            results.push(check(
                "fixture_parse",
                catalog.entries.len() == PUBLISHED_UNIQUE_TOTAL,
                format!(
                    "fixture catalog has {} entries (published total {})",
                    catalog.entries.len(),
                    PUBLISHED_UNIQUE_TOTAL
                ),
            ));

            let rule = EquivalenceRule::fixture_from_catalog(&catalog);
            let (dedup_once, report) = dedup(&raw, &rule);
            let (dedup_twice, _) = dedup(&dedup_once, &rule);
            results.push(check(
                "dedup_idempotent",
                dedup_once.entries == dedup_twice.entries,
                format!("fixture dedup is idempotent at {} entries", dedup_once.entries.len()),
            ));
            let published_sum: usize = PUBLISHED_UNIQUE_COUNTS.iter().sum();
            results.push(check(
                "published_count_discrepancy_surfaced",
                report.published_counts_inconsistent
                    && report.published_unique_sum == published_sum,
                format!(
                    "published per-index counts sum to {} against a claimed total of {}; \
                     the report flags this inconsistency",
                    report.published_unique_sum, report.published_claimed_total
                ),
            ));

            let identity = EquivalenceRule::from_id("identity").unwrap();
            let (id_dedup, _) = dedup(&raw, &identity);
            results.push(check(
                "identity_dedup_is_noop",
                id_dedup.entries.len() == raw.entries.len(),
                format!("identity dedup keeps all {} entries", id_dedup.entries.len()),
            ));
        }
        Err(e) => {
            results.push(check("fixture_parse", false, format!("{e}")));
        }
    }

    results
}
