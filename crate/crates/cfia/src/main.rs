//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 validation failure (bad input data, config,
//! or a failed self-check), 2 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cfia::compositing::{
    initial_composite_with, read_label_map_png, read_raster_png, segment_for_set,
    split_label_map,
};
use cfia::config::{
    catalog_summary, run_pipeline, validate_fixture_suite, PipelineInputs, QualityAggregate,
    RunConfig, TOOL_VERSION,
};
use cfia::detection::{bpcer_at_apcer, deer};
use cfia::ingest;
use cfia::pose::{angle_diff, find_optimal_pairs};
use cfia::regions::parse_region_code;

#[derive(Parser)]
#[command(name = "cfia", version = TOOL_VERSION, about = "Composite face-image attack planning and benchmarking toolkit")]
struct Cli {
    /// JSON config file; flags override individual fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Blend weight for the second donor, in (0, 1].
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Frontal-pose tolerance in degrees.
    #[arg(long, global = true)]
    tau_deg: Option<f64>,
    /// False accept rate fixing the decision thresholds.
    #[arg(long, global = true)]
    far: Option<f64>,
    /// Catalog deduplication rule: identity | fixture.
    #[arg(long, global = true)]
    dedup_rule: Option<String>,
    /// Ignore failure-to-acquire flags in G-MAP.
    #[arg(long, global = true)]
    no_ftar: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate region combinations and print the catalog summary.
    Enumerate {
        #[command(flatten)]
        overrides: Overrides,
        /// Write the full summary JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Composite two donor images under a region combination.
    Composite {
        #[command(flatten)]
        overrides: Overrides,
        /// First donor image (PNG).
        #[arg(long)]
        image1: PathBuf,
        /// First donor label map (PNG, classes 0-5).
        #[arg(long)]
        labels1: PathBuf,
        #[arg(long)]
        image2: PathBuf,
        #[arg(long)]
        labels2: PathBuf,
        /// Region code, e.g. HS-EN.
        #[arg(long)]
        combination: String,
        #[arg(long)]
        donor1_id: Option<String>,
        #[arg(long)]
        donor2_id: Option<String>,
        /// Output directory for composite, mask, and manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Screen landmark sets for frontal pose.
    PoseFilter {
        #[command(flatten)]
        overrides: Overrides,
        /// Landmarks CSV.
        #[arg(long)]
        landmarks: PathBuf,
        /// Write the per-image CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pair subjects by embedding similarity.
    Pair {
        /// Embeddings CSV.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vulnerability metrics from similarity and impostor scores.
    Vuln {
        #[command(flatten)]
        overrides: Overrides,
        /// Similarity score CSV.
        #[arg(long)]
        scores: PathBuf,
        /// Impostor score CSV.
        #[arg(long)]
        impostors: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detection error rates from detector scores.
    Detect {
        /// Detector score CSV with polarity directive.
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// PSNR/SSIM over image pairs.
    Quality {
        /// Pairs CSV: "pair_id,reference_path,test_path".
        #[arg(long)]
        pairs: PathBuf,
        /// Write the per-pair CSV here; the JSON aggregate goes to
        /// stdout (or alongside with extension .json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the fixture and enumeration self-checks.
    Validate,
}

fn load_base_config(path: Option<&Path>) -> Result<RunConfig, CmdError> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn effective_config(base: Option<&Path>, ov: &Overrides) -> Result<RunConfig, CmdError> {
    let mut config = load_base_config(base)?;
    if let Some(alpha) = ov.alpha {
        config.alpha = alpha;
    }
    if let Some(deg) = ov.tau_deg {
        config.tau_radians = deg.to_radians();
    }
    if let Some(far) = ov.far {
        config.far = far;
    }
    if let Some(rule) = &ov.dedup_rule {
        config.dedup_rule = rule.clone();
    }
    if ov.no_ftar {
        config.include_ftar = false;
    }
    config.validate()?;
    Ok(config)
}

/// Validation failures exit 1; everything else unexpected exits 2.
enum CmdError {
    Validation(String),
    Internal(String),
}

impl From<cfia::config::ConfigError> for CmdError {
    fn from(e: cfia::config::ConfigError) -> Self {
        CmdError::Validation(e.to_string())
    }
}
impl From<ingest::IngestError> for CmdError {
    fn from(e: ingest::IngestError) -> Self {
        CmdError::Validation(e.to_string())
    }
}
impl From<cfia::config::PipelineError> for CmdError {
    fn from(e: cfia::config::PipelineError) -> Self {
        CmdError::Validation(e.to_string())
    }
}
impl From<cfia::regions::DedupError> for CmdError {
    fn from(e: cfia::regions::DedupError) -> Self {
        CmdError::Validation(e.to_string())
    }
}
impl From<cfia::regions::RegionParseError> for CmdError {
    fn from(e: cfia::regions::RegionParseError) -> Self {
        CmdError::Validation(e.to_string())
    }
}
impl From<cfia::compositing::CompositeError> for CmdError {
    fn from(e: cfia::compositing::CompositeError) -> Self {
        CmdError::Validation(e.to_string())
    }
}
impl From<cfia::pose::PoseError> for CmdError {
    fn from(e: cfia::pose::PoseError) -> Self {
        CmdError::Validation(e.to_string())
    }
}
impl From<cfia::pose::PairingError> for CmdError {
    fn from(e: cfia::pose::PairingError) -> Self {
        CmdError::Validation(e.to_string())
    }
}
impl From<cfia::vulnerability::MetricError> for CmdError {
    fn from(e: cfia::vulnerability::MetricError) -> Self {
        CmdError::Validation(e.to_string())
    }
}
impl From<cfia::detection::DetectionError> for CmdError {
    fn from(e: cfia::detection::DetectionError) -> Self {
        CmdError::Validation(e.to_string())
    }
}
impl From<cfia::quality::QualityError> for CmdError {
    fn from(e: cfia::quality::QualityError) -> Self {
        CmdError::Validation(e.to_string())
    }
}
impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Internal(e.to_string())
    }
}
impl From<serde_json::Error> for CmdError {
    fn from(e: serde_json::Error) -> Self {
        CmdError::Internal(e.to_string())
    }
}

fn emit(json: &str, out: Option<&Path>) -> Result<(), CmdError> {
    match out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn fixture_dir_override() -> Option<PathBuf> {
    std::env::var_os("CFIA_FIXTURES").map(PathBuf::from)
}

fn run(cli: Cli) -> Result<(), CmdError> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Enumerate { overrides, out } => {
            let config = effective_config(config_path, &overrides)?;
            let summary = catalog_summary(&config.dedup_rule)?;
            let json = serde_json::to_string_pretty(&summary)?;
            println!(
                "raw combinations: {} (per index: {:?})",
                summary.raw_total, summary.raw_counts_per_index
            );
            println!(
                "dedup rule {:?}: {} unique",
                summary.dedup_rule, summary.dedup.unique_total
            );
            if summary.dedup.published_counts_inconsistent {
                println!(
                    "note: published per-index unique counts sum to {} but the claimed total \
                     is {}; the published column is internally inconsistent",
                    summary.dedup.published_unique_sum, summary.dedup.published_claimed_total
                );
            }
            if let Some(path) = out {
                std::fs::write(path, json)?;
            }
            Ok(())
        }
        Command::Composite {
            overrides,
            image1,
            labels1,
            image2,
            labels2,
            combination,
            donor1_id,
            donor2_id,
            out,
        } => {
            let config = effective_config(config_path, &overrides)?;
            let combo = parse_region_code(&combination)?;
            let img1 = read_raster_png(&image1)?;
            let map1 = read_label_map_png(&labels1)?;
            let img2 = read_raster_png(&image2)?;
            let map2 = read_label_map_png(&labels2)?;
            let parts1 = split_label_map(&map1, &img1)?;
            let parts2 = split_label_map(&map2, &img2)?;
            let seg1 = segment_for_set(&parts1, combo.donor_one)?;
            let seg2 = segment_for_set(&parts2, combo.donor_two)?;
            let output = initial_composite_with(
                &seg1,
                &seg2,
                combo,
                config.alpha,
                config.alpha_scales_first_donor,
            )?;
            std::fs::create_dir_all(&out)?;
            let d1 = donor1_id.unwrap_or_else(|| image1.display().to_string());
            let d2 = donor2_id.unwrap_or_else(|| image2.display().to_string());
            let paths = cfia::compositing::export_composite(&output, &d1, &d2, &out)?;
            println!("wrote {}", paths.image.display());
            println!("wrote {}", paths.mask.display());
            println!("wrote {}", paths.manifest.display());
            Ok(())
        }
        Command::PoseFilter {
            overrides,
            landmarks,
            out,
        } => {
            let config = effective_config(config_path, &overrides)?;
            let sets = ingest::load_landmarks(&landmarks)?;
            let mut csv = String::from("image_id,angle_diff_deg,frontal\n");
            for (id, lm) in &sets {
                let diff = angle_diff(lm)?;
                let frontal = diff <= config.tau_radians;
                csv.push_str(&format!("{id},{},{}\n", diff.to_degrees(), frontal));
            }
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Pair { embeddings, out } => {
            let set = ingest::load_embeddings(&embeddings)?;
            let pairs = find_optimal_pairs(&set)?;
            let named: Vec<(String, String)> = pairs
                .pairs
                .iter()
                .map(|&(i, j)| (set.entries[i].0.clone(), set.entries[j].0.clone()))
                .collect();
            let json = serde_json::to_string_pretty(&named)?;
            emit(&json, out.as_deref())
        }
        Command::Vuln {
            overrides,
            scores,
            impostors,
            out,
        } => {
            let config = effective_config(config_path, &overrides)?;
            let inputs = PipelineInputs {
                scores: Some(scores),
                impostors: Some(impostors),
                ..Default::default()
            };
            let bundle = run_pipeline(&config, &inputs)?;
            let report = bundle.vulnerability.as_ref().expect("vuln stage ran");
            println!("overall G-MAP: {:.6}", report.overall_gmap);
            for t in &report.per_type {
                println!("  type {}: G-MAP {:.6}", t.gen_type, t.gmap);
            }
            let json = serde_json::to_string_pretty(&bundle)?;
            if let Some(path) = out {
                std::fs::write(path, json)?;
            }
            Ok(())
        }
        Command::Detect { scores, out } => {
            let set = ingest::load_detector_scores(&scores)?;
            let summary = cfia::config::DetectionSummary {
                deer: deer(&set)?,
                bpcer_at_apcer_5: bpcer_at_apcer(&set, 0.05)?,
                bpcer_at_apcer_10: bpcer_at_apcer(&set, 0.10)?,
                n_bonafide: set.bonafide.len(),
                n_attack: set.attack.len(),
            };
            println!("D-EER: {:.6}", summary.deer.deer);
            println!(
                "BPCER@APCER<=5%: {:.6} (achieved APCER {:.6})",
                summary.bpcer_at_apcer_5.bpcer, summary.bpcer_at_apcer_5.achieved_apcer
            );
            println!(
                "BPCER@APCER<=10%: {:.6} (achieved APCER {:.6})",
                summary.bpcer_at_apcer_10.bpcer, summary.bpcer_at_apcer_10.achieved_apcer
            );
            let json = serde_json::to_string_pretty(&summary)?;
            if let Some(path) = out {
                std::fs::write(path, json)?;
            }
            Ok(())
        }
        Command::Quality { pairs, out } => {
            let text = std::fs::read_to_string(&pairs)?;
            let mut triples = Vec::new();
            for (idx, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || (idx == 0 && line == "pair_id,reference_path,test_path") {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                if fields.len() != 3 {
                    return Err(CmdError::Validation(format!(
                        "{}:{}: expected pair_id,reference_path,test_path",
                        pairs.display(),
                        idx + 1
                    )));
                }
                triples.push((fields[0].to_string(), fields[1].to_string(), fields[2].to_string()));
            }
            let mut per_pair = Vec::new();
            let mut csv = String::from("pair_id,psnr_db,ssim\n");
            for (id, reference, test) in &triples {
                let a = read_raster_png(Path::new(reference))?;
                let b = read_raster_png(Path::new(test))?;
                let r = cfia::quality::quality_report(&a, &b)?;
                let psnr = r
                    .psnr_db
                    .map(|v| v.to_string())
                    .unwrap_or_else(|| "inf".to_string());
                csv.push_str(&format!("{id},{psnr},{}\n", r.ssim));
                per_pair.push((id.clone(), r));
            }
            let aggregate = QualityAggregate::from_pairs(per_pair);
            let json = serde_json::to_string_pretty(&aggregate)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, csv)?;
                    std::fs::write(path.with_extension("json"), json)?;
                }
                None => {
                    print!("{csv}");
                    println!("{json}");
                }
            }
            Ok(())
        }
        Command::Validate => {
            let dir = fixture_dir_override();
            let results = validate_fixture_suite(dir.as_deref());
            let mut failed = false;
            for r in &results {
                println!(
                    "{} {}: {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                failed |= !r.passed;
            }
            if failed {
                Err(CmdError::Validation("fixture self-checks failed".into()))
            } else {
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CmdError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
