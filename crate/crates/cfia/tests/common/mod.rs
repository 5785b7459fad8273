//! Shared test utilities: seeded random generators and independently
//! written brute-force oracles for the vulnerability metrics and the
//! greedy pairing walk.
//!
//! The oracles deliberately avoid the library's data structures and code
//! paths: they work on plain sorted vectors extracted from the inputs,
//! reducing in the same deterministic order (sorted keys) so that exact
//! floating-point comparison is meaningful.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cfia::vulnerability::{Cell, ScoreTensor, ThresholdSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random tensor: `n_frs` FRSs x `n_types` generation types, up to
/// `max_morphs` morphs with 1..=`max_attempts` attempts of `slots`
/// scores each, and random FTAR flags.
pub fn random_tensor(
    rng: &mut ChaCha8Rng,
    n_frs: usize,
    n_types: usize,
    max_morphs: usize,
    max_attempts: usize,
    slots: usize,
) -> ScoreTensor {
    let mut t = ScoreTensor::default();
    let frs_ids: Vec<String> = (0..n_frs).map(|i| format!("frs{i}")).collect();
    for d in 0..n_types {
        let gen_type = format!("type{d}");
        let n_morphs = rng.gen_range(1..=max_morphs);
        // attempt counts are per morph, shared across FRSs of this type
        let attempt_counts: Vec<usize> = (0..n_morphs)
            .map(|_| rng.gen_range(1..=max_attempts))
            .collect();
        for frs in &frs_ids {
            let mut cell = Cell::default();
            for (m, &n_attempts) in attempt_counts.iter().enumerate() {
                let mut attempts = BTreeMap::new();
                for a in 0..n_attempts {
                    let scores: Vec<f64> = (0..slots).map(|_| rng.gen_range(0.0..1.0)).collect();
                    attempts.insert(format!("a{a}"), scores);
                }
                cell.morphs.insert(format!("m{m}"), attempts);
            }
            t.cells.insert((frs.clone(), gen_type.clone()), cell);
        }
    }
    // FTAR flags over every (attempt, frs) combination that can occur
    for frs in &frs_ids {
        for a in 0..max_attempts {
            t.ftar
                .insert((format!("a{a}"), frs.clone()), rng.gen_bool(0.2));
        }
    }
    t
}

pub fn random_thresholds(rng: &mut ChaCha8Rng, t: &ScoreTensor) -> ThresholdSet {
    let mut by_frs = BTreeMap::new();
    for frs in t.frs_ids() {
        by_frs.insert(frs.to_string(), rng.gen_range(0.0..1.0));
    }
    ThresholdSet { far: 0.001, by_frs }
}

/// Flat view of one cell: per morph (sorted by id), the attempt score
/// rows sorted by attempt id.
fn flat_cell(t: &ScoreTensor, frs: &str, gen_type: &str) -> Vec<Vec<(String, Vec<f64>)>> {
    let cell = &t.cells[&(frs.to_string(), gen_type.to_string())];
    cell.morphs
        .iter()
        .map(|(_, attempts)| {
            attempts
                .iter()
                .map(|(a, s)| (a.clone(), s.clone()))
                .collect()
        })
        .collect()
}

pub fn oracle_mmpmr(t: &ScoreTensor, frs: &str, gen_type: &str, tau: f64) -> f64 {
    let morphs = flat_cell(t, frs, gen_type);
    let slots = morphs[0][0].1.len();
    let mut matched = 0;
    for attempts in &morphs {
        let mut all = true;
        for k in 0..slots {
            let mut best = f64::NEG_INFINITY;
            for (_, row) in attempts {
                if row[k] > best {
                    best = row[k];
                }
            }
            if !(best > tau) {
                all = false;
            }
        }
        if all {
            matched += 1;
        }
    }
    matched as f64 / morphs.len() as f64
}

fn oracle_rate(
    t: &ScoreTensor,
    frs: &str,
    gen_type: &str,
    tau: f64,
    include_ftar: bool,
) -> f64 {
    let morphs = flat_cell(t, frs, gen_type);
    let mut total = 0.0;
    for attempts in &morphs {
        let mut passed = 0.0;
        for (attempt_id, row) in attempts {
            let all_pass = row.iter().all(|&s| s > tau);
            if all_pass {
                let acquired = !include_ftar
                    || !t
                        .ftar
                        .get(&(attempt_id.clone(), frs.to_string()))
                        .copied()
                        .unwrap_or(false);
                if acquired {
                    passed += 1.0;
                }
            }
        }
        total += passed / attempts.len() as f64;
    }
    total / morphs.len() as f64
}

pub fn oracle_fmmpmr(t: &ScoreTensor, frs: &str, gen_type: &str, tau: f64) -> f64 {
    oracle_rate(t, frs, gen_type, tau, false)
}

pub fn oracle_gmap_per_type(
    t: &ScoreTensor,
    gen_type: &str,
    thresholds: &ThresholdSet,
    include_ftar: bool,
) -> f64 {
    let mut min = f64::INFINITY;
    for frs in t.frs_ids_for_type(gen_type) {
        let r = oracle_rate(t, frs, gen_type, thresholds.by_frs[frs], include_ftar);
        if r < min {
            min = r;
        }
    }
    min
}

pub fn oracle_gmap(t: &ScoreTensor, thresholds: &ThresholdSet, include_ftar: bool) -> f64 {
    let types: Vec<&str> = t.gen_types().into_iter().collect();
    let mut sum = 0.0;
    for d in &types {
        sum += oracle_gmap_per_type(t, d, thresholds, include_ftar);
    }
    sum / types.len() as f64
}

pub fn oracle_map_matrix(
    t: &ScoreTensor,
    gen_type: &str,
    thresholds: &ThresholdSet,
) -> Vec<Vec<f64>> {
    let frs_ids: Vec<&str> = t.frs_ids_for_type(gen_type).into_iter().collect();
    let first = &t.cells[&(frs_ids[0].to_string(), gen_type.to_string())];
    let morph_ids: Vec<String> = first.morphs.keys().cloned().collect();
    let max_attempts = first.morphs.values().map(|a| a.len()).max().unwrap();

    let mut matrix = Vec::new();
    for r in 1..=max_attempts {
        let mut row = Vec::new();
        for c in 1..=frs_ids.len() {
            let mut passing_morphs = 0;
            for morph in &morph_ids {
                let mut frs_hits = 0;
                for frs in &frs_ids {
                    let tau = thresholds.by_frs[*frs];
                    let attempts =
                        &t.cells[&(frs.to_string(), gen_type.to_string())].morphs[morph];
                    let successes = attempts
                        .values()
                        .filter(|row| row.iter().all(|&s| s > tau))
                        .count();
                    if successes >= r {
                        frs_hits += 1;
                    }
                }
                if frs_hits >= c {
                    passing_morphs += 1;
                }
            }
            row.push(passing_morphs as f64 / morph_ids.len() as f64);
        }
        matrix.push(row);
    }
    matrix
}

/// Direct transcription of the greedy pairing walk over raw 2-D points:
/// for each subject in order, walk candidates by ascending cosine
/// distance (ties by lowest index) and take the first whose swapped pair
/// is not already chosen; if none qualifies the subject is skipped.
pub fn oracle_pairs(points: &[(f64, f64)]) -> Vec<(usize, usize)> {
    fn cosd(a: (f64, f64), b: (f64, f64)) -> f64 {
        let dot = a.0 * b.0 + a.1 * b.1;
        let na = (a.0 * a.0 + a.1 * a.1).sqrt();
        let nb = (b.0 * b.0 + b.1 * b.1).sqrt();
        1.0 - dot / (na * nb)
    }
    let n = points.len();
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            cosd(points[i], points[a])
                .partial_cmp(&cosd(points[i], points[b]))
                .unwrap()
                .then(a.cmp(&b))
        });
        for j in order {
            if !chosen.contains(&(j, i)) {
                chosen.push((i, j));
                break;
            }
        }
    }
    chosen
}
