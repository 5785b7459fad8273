//! Vulnerability metric family over similarity-score tensors: MMPMR,
//! FMMPMR, the attempts-by-FRS MAP matrix, and the generalized G-MAP with
//! failure-to-acquire discounting.
//!
//! All metrics compare scores against per-FRS thresholds with strict
//! inequality. Attempt counts may vary per morph; rates are normalized
//! per morph by that morph's attempt count and then averaged, so the
//! uniform-attempt case reduces to the usual 1/(|P||M|) double sum.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no scores for FRS {frs:?}, generation type {gen_type:?}")]
    MissingCell { frs: String, gen_type: String },
    #[error("no threshold for FRS {0:?}")]
    MissingThreshold(String),
    #[error("empty impostor score set for FRS {0:?}")]
    EmptyImpostorSet(String),
    #[error("FAR {0} outside (0, 1)")]
    FarOutOfRange(f64),
    #[error("score tensor is empty")]
    EmptyTensor,
    #[error("morph sets differ across FRS for generation type {0:?}")]
    InconsistentMorphSets(String),
}

/// Scores for one (FRS, generation type) cell: per morph, per attempt,
/// one similarity score per subject slot.
#[derive(Debug, Clone, Default)]
pub struct Cell {
    pub morphs: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

impl Cell {
    /// Subject-slot count, taken from the first attempt.
    pub fn slot_count(&self) -> usize {
        self.morphs
            .values()
            .flat_map(|attempts| attempts.values())
            .map(Vec::len)
            .next()
            .unwrap_or(0)
    }
}

/// Similarity scores indexed by (generation type, FRS, morph, attempt,
/// subject slot), plus per-(attempt, FRS) failure-to-acquire flags.
#[derive(Debug, Clone, Default)]
pub struct ScoreTensor {
    /// (frs_id, gen_type) -> cell.
    pub cells: BTreeMap<(String, String), Cell>,
    /// (attempt_id, frs_id) -> flag.
    pub ftar: BTreeMap<(String, String), bool>,
}

impl ScoreTensor {
    pub fn gen_types(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|(_, d)| d.as_str()).collect()
    }

    pub fn frs_ids(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|(l, _)| l.as_str()).collect()
    }

    pub fn frs_ids_for_type(&self, gen_type: &str) -> BTreeSet<&str> {
        self.cells
            .keys()
            .filter(|(_, d)| d == gen_type)
            .map(|(l, _)| l.as_str())
            .collect()
    }

    pub fn cell(&self, frs: &str, gen_type: &str) -> Result<&Cell, MetricError> {
        self.cells
            .get(&(frs.to_string(), gen_type.to_string()))
            .ok_or_else(|| MetricError::MissingCell {
                frs: frs.to_string(),
                gen_type: gen_type.to_string(),
            })
    }

    pub fn ftar_flag(&self, attempt: &str, frs: &str) -> bool {
        *self
            .ftar
            .get(&(attempt.to_string(), frs.to_string()))
            .unwrap_or(&false)
    }
}

/// Impostor (non-mated) similarity scores for one FRS.
#[derive(Debug, Clone)]
pub struct ImpostorScoreSet {
    pub frs_id: String,
    pub scores: Vec<f64>,
}

/// Per-FRS decision thresholds and the FAR they were derived at.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSet {
    pub far: f64,
    pub by_frs: BTreeMap<String, f64>,
}

impl ThresholdSet {
    pub fn get(&self, frs: &str) -> Result<f64, MetricError> {
        self.by_frs
            .get(frs)
            .copied()
            .ok_or_else(|| MetricError::MissingThreshold(frs.to_string()))
    }
}

/// Smallest threshold leaving at most `far` of the impostor scores
/// strictly above it: the (n - floor(far*n))-th order statistic, no
/// interpolation.
pub fn threshold_at_far(s: &ImpostorScoreSet, far: f64) -> Result<f64, MetricError> {
    if !(far > 0.0 && far < 1.0) {
        return Err(MetricError::FarOutOfRange(far));
    }
    if s.scores.is_empty() {
        return Err(MetricError::EmptyImpostorSet(s.frs_id.clone()));
    }
    let mut sorted = s.scores.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let allowed_above = (far * n as f64).floor() as usize;
    Ok(sorted[n - allowed_above - 1])
}

/// Builds a threshold set from per-FRS impostor scores.
pub fn thresholds_at_far(
    sets: &[ImpostorScoreSet],
    far: f64,
) -> Result<ThresholdSet, MetricError> {
    let mut by_frs = BTreeMap::new();
    for s in sets {
        by_frs.insert(s.frs_id.clone(), threshold_at_far(s, far)?);
    }
    Ok(ThresholdSet { far, by_frs })
}

fn all_slots_pass(scores: &[f64], tau: f64) -> bool {
    scores.iter().all(|&s| s > tau)
}

/// MMPMR: fraction of morphs where every subject slot's best attempt
/// clears the threshold (min over slots of max over attempts).
pub fn mmpmr(t: &ScoreTensor, frs: &str, gen_type: &str, tau: f64) -> Result<f64, MetricError> {
    let cell = t.cell(frs, gen_type)?;
    if cell.morphs.is_empty() {
        return Err(MetricError::EmptyTensor);
    }
    let mut matched = 0usize;
    for attempts in cell.morphs.values() {
        let slots = cell.slot_count();
        let all_slots_best_pass = (0..slots).all(|k| {
            attempts
                .values()
                .map(|scores| scores[k])
                .fold(f64::NEG_INFINITY, f64::max)
                > tau
        });
        if all_slots_best_pass {
            matched += 1;
        }
    }
    Ok(matched as f64 / cell.morphs.len() as f64)
}

/// Per-cell pairwise pass rate with optional FTAR discounting: mean over
/// morphs of (1/attempts) * sum over attempts of
/// [all slots > tau] * (1 - FTAR(attempt, frs)).
///
/// This single reduction implements both FMMPMR (ftar off) and the G-MAP
/// inner term (ftar on), so the two are bit-identical when FTAR is zero.
fn pairwise_rate(
    t: &ScoreTensor,
    frs: &str,
    gen_type: &str,
    tau: f64,
    include_ftar: bool,
) -> Result<f64, MetricError> {
    let cell = t.cell(frs, gen_type)?;
    if cell.morphs.is_empty() {
        return Err(MetricError::EmptyTensor);
    }
    let mut sum_over_morphs = 0.0;
    for attempts in cell.morphs.values() {
        let mut passed = 0.0;
        for (attempt_id, scores) in attempts {
            if all_slots_pass(scores, tau) {
                let qf = if include_ftar && t.ftar_flag(attempt_id, frs) {
                    0.0
                } else {
                    1.0
                };
                passed += qf;
            }
        }
        sum_over_morphs += passed / attempts.len() as f64;
    }
    Ok(sum_over_morphs / cell.morphs.len() as f64)
}

/// FMMPMR: pairwise attempts, all subject slots must pass within the same
/// attempt.
pub fn fmmpmr(t: &ScoreTensor, frs: &str, gen_type: &str, tau: f64) -> Result<f64, MetricError> {
    pairwise_rate(t, frs, gen_type, tau, false)
}

/// MAP matrix for one generation type: entry (r, c) is the fraction of
/// morphs with at least r fully-passing attempts on at least c FRSs.
/// Rows run 1..=max attempt count, columns 1..=|F|.
pub fn map_matrix(
    t: &ScoreTensor,
    gen_type: &str,
    thresholds: &ThresholdSet,
) -> Result<Vec<Vec<f64>>, MetricError> {
    let frs_ids: Vec<&str> = t.frs_ids_for_type(gen_type).into_iter().collect();
    if frs_ids.is_empty() {
        return Err(MetricError::EmptyTensor);
    }
    let first_cell = t.cell(frs_ids[0], gen_type)?;
    let morph_ids: Vec<&String> = first_cell.morphs.keys().collect();
    for frs in &frs_ids {
        let cell = t.cell(frs, gen_type)?;
        if cell.morphs.keys().collect::<Vec<_>>() != morph_ids {
            return Err(MetricError::InconsistentMorphSets(gen_type.to_string()));
        }
    }
    let max_attempts = first_cell
        .morphs
        .values()
        .map(BTreeMap::len)
        .max()
        .unwrap_or(0);
    if max_attempts == 0 || morph_ids.is_empty() {
        return Err(MetricError::EmptyTensor);
    }

    // success_counts[morph][frs] = number of attempts where all slots pass
    let mut success_counts: Vec<Vec<usize>> = vec![vec![0; frs_ids.len()]; morph_ids.len()];
    for (c, frs) in frs_ids.iter().enumerate() {
        let tau = thresholds.get(frs)?;
        let cell = t.cell(frs, gen_type)?;
        for (m, morph) in morph_ids.iter().enumerate() {
            success_counts[m][c] = cell.morphs[*morph]
                .values()
                .filter(|scores| all_slots_pass(scores, tau))
                .count();
        }
    }

    let n_morphs = morph_ids.len() as f64;
    let mut matrix = Vec::with_capacity(max_attempts);
    for r in 1..=max_attempts {
        let mut row = Vec::with_capacity(frs_ids.len());
        for c in 1..=frs_ids.len() {
            let passing = success_counts
                .iter()
                .filter(|counts| counts.iter().filter(|&&s| s >= r).count() >= c)
                .count();
            row.push(passing as f64 / n_morphs);
        }
        matrix.push(row);
    }
    Ok(matrix)
}

/// G-MAP inner term for one generation type: minimum over FRSs of the
/// FTAR-discounted pairwise rate.
pub fn gmap_per_type(
    t: &ScoreTensor,
    gen_type: &str,
    thresholds: &ThresholdSet,
    include_ftar: bool,
) -> Result<f64, MetricError> {
    let frs_ids = t.frs_ids_for_type(gen_type);
    if frs_ids.is_empty() {
        return Err(MetricError::EmptyTensor);
    }
    let mut min_rate = f64::INFINITY;
    for frs in frs_ids {
        let tau = thresholds.get(frs)?;
        let rate = pairwise_rate(t, frs, gen_type, tau, include_ftar)?;
        if rate < min_rate {
            min_rate = rate;
        }
    }
    Ok(min_rate)
}

/// Per-FRS MMPMR/FMMPMR detail for a generation type.
#[derive(Debug, Clone, Serialize)]
pub struct PerFrsRates {
    pub frs_id: String,
    pub threshold: f64,
    pub mmpmr: f64,
    pub fmmpmr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerTypeReport {
    pub gen_type: String,
    pub gmap: f64,
    pub per_frs: Vec<PerFrsRates>,
    pub map_matrix: Vec<Vec<f64>>,
    pub map_frs_order: Vec<String>,
}

/// Full vulnerability report: per-type G-MAP, the overall mean, and the
/// supporting per-FRS rates and MAP matrices, with the thresholds echoed.
#[derive(Debug, Clone, Serialize)]
pub struct VulnerabilityReport {
    pub overall_gmap: f64,
    pub per_type: Vec<PerTypeReport>,
    pub thresholds: ThresholdSet,
    pub include_ftar: bool,
}

/// Overall G-MAP: mean over generation types of the per-type value, with
/// full per-type detail.
pub fn gmap(
    t: &ScoreTensor,
    thresholds: &ThresholdSet,
    include_ftar: bool,
) -> Result<VulnerabilityReport, MetricError> {
    let gen_types: Vec<String> = t.gen_types().into_iter().map(String::from).collect();
    if gen_types.is_empty() {
        return Err(MetricError::EmptyTensor);
    }
    let mut per_type = Vec::with_capacity(gen_types.len());
    let mut sum = 0.0;
    for d in &gen_types {
        let value = gmap_per_type(t, d, thresholds, include_ftar)?;
        sum += value;
        let frs_order: Vec<String> = t.frs_ids_for_type(d).into_iter().map(String::from).collect();
        let mut per_frs = Vec::with_capacity(frs_order.len());
        for frs in &frs_order {
            let tau = thresholds.get(frs)?;
            per_frs.push(PerFrsRates {
                frs_id: frs.clone(),
                threshold: tau,
                mmpmr: mmpmr(t, frs, d, tau)?,
                fmmpmr: fmmpmr(t, frs, d, tau)?,
            });
        }
        per_type.push(PerTypeReport {
            gen_type: d.clone(),
            gmap: value,
            per_frs,
            map_matrix: map_matrix(t, d, thresholds)?,
            map_frs_order: frs_order,
        });
    }
    Ok(VulnerabilityReport {
        overall_gmap: sum / gen_types.len() as f64,
        per_type,
        thresholds: thresholds.clone(),
        include_ftar,
    })
}
