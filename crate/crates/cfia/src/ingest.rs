//! File ingestion: CSV loaders for similarity scores, impostor scores,
//! landmarks, embeddings, and detector outputs.
//!
//! Ingestion is total: malformed input never panics, and every
//! diagnostic names the file, line, and violated rule.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::detection::{DetectionScoreSet, Polarity};
use crate::pose::{EmbeddingSet, LandmarkSet5, PairingError, Point};
use crate::vulnerability::{Cell, ImpostorScoreSet, ScoreTensor};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {rule}")]
    Schema {
        file: String,
        line: u64,
        rule: String,
    },
    #[error("{file}: unpaired attempt: morph {morph:?} attempt {attempt:?} on FRS {frs:?} has slots {got:?}, expected 1..={expected}")]
    UnpairedAttempt {
        file: String,
        frs: String,
        morph: String,
        attempt: String,
        got: Vec<usize>,
        expected: usize,
    },
    #[error("{file}: missing '# polarity=attack_high|attack_low' directive")]
    MissingPolarity { file: String },
    #[error("{file}: {source}")]
    Embedding {
        file: String,
        #[source]
        source: PairingError,
    },
}

fn schema(file: &str, line: u64, rule: impl Into<String>) -> IngestError {
    IngestError::Schema {
        file: file.to_string(),
        line,
        rule: rule.into(),
    }
}

fn io_err(file: &str, source: std::io::Error) -> IngestError {
    IngestError::Io {
        file: file.to_string(),
        source,
    }
}

fn parse_f64(file: &str, line: u64, field: &str, raw: &str) -> Result<f64, IngestError> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| schema(file, line, format!("non-numeric {field}: {raw:?}")))?;
    if !v.is_finite() {
        return Err(schema(file, line, format!("non-finite {field}: {raw:?}")));
    }
    Ok(v)
}

fn reader_for(path: &Path) -> Result<csv::Reader<std::fs::File>, IngestError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(&path.display().to_string(), io),
            other => schema(
                &path.display().to_string(),
                0,
                format!("unreadable CSV: {other:?}"),
            ),
        })
}

fn check_header(
    file: &str,
    rdr: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
) -> Result<(), IngestError> {
    let headers = rdr
        .headers()
        .map_err(|e| schema(file, 1, format!("unreadable header: {e}")))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(schema(
            file,
            1,
            format!("bad header: expected {expected:?}, got {got:?}"),
        ));
    }
    Ok(())
}

pub const SCORES_HEADER: &str = "frs_id,gen_type,morph_id,attempt_id,subject_slot,score,ftar";

/// Loads a similarity-score tensor, enforcing pairing completeness:
/// within each (FRS, generation type) cell, every attempt must carry
/// exactly the slots 1..=P for a single P.
pub fn load_scores(path: &Path) -> Result<ScoreTensor, IngestError> {
    let file = path.display().to_string();
    let mut rdr = reader_for(path)?;
    check_header(
        &file,
        &mut rdr,
        &SCORES_HEADER.split(',').collect::<Vec<_>>(),
    )?;

    // (frs, gen_type) -> morph -> attempt -> slot -> score
    type SlotMap = BTreeMap<usize, f64>;
    let mut raw: BTreeMap<(String, String), BTreeMap<String, BTreeMap<String, SlotMap>>> =
        BTreeMap::new();
    let mut ftar: BTreeMap<(String, String), bool> = BTreeMap::new();

    for record in rdr.records() {
        let record = record.map_err(|e| schema(&file, 0, format!("unreadable row: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 7 {
            return Err(schema(
                &file,
                line,
                format!("expected 7 fields, got {}", record.len()),
            ));
        }
        let frs = record[0].to_string();
        let gen_type = record[1].to_string();
        let morph = record[2].to_string();
        let attempt = record[3].to_string();
        for (i, name) in [(0, "frs_id"), (1, "gen_type"), (2, "morph_id"), (3, "attempt_id")] {
            if record[i].is_empty() {
                return Err(schema(&file, line, format!("empty {name}")));
            }
        }
        let slot: usize = record[4]
            .parse()
            .map_err(|_| schema(&file, line, format!("bad subject_slot: {:?}", &record[4])))?;
        if slot == 0 {
            return Err(schema(&file, line, "subject_slot must be >= 1"));
        }
        let score = parse_f64(&file, line, "score", &record[5])?;
        let ftar_flag = match &record[6] {
            "0" => false,
            "1" => true,
            other => {
                return Err(schema(
                    &file,
                    line,
                    format!("ftar must be 0 or 1, got {other:?}"),
                ))
            }
        };

        let slots = raw
            .entry((frs.clone(), gen_type))
            .or_default()
            .entry(morph.clone())
            .or_default()
            .entry(attempt.clone())
            .or_default();
        if slots.insert(slot, score).is_some() {
            return Err(schema(
                &file,
                line,
                format!("duplicate row for morph {morph:?} attempt {attempt:?} slot {slot}"),
            ));
        }
        // the flag is per (attempt, FRS); conflicting values are a schema error
        let key = (attempt, frs);
        if let Some(prev) = ftar.insert(key.clone(), ftar_flag) {
            if prev != ftar_flag {
                return Err(schema(
                    &file,
                    line,
                    format!(
                        "conflicting ftar for attempt {:?} on FRS {:?}",
                        key.0, key.1
                    ),
                ));
            }
        }
    }

    let mut tensor = ScoreTensor {
        cells: BTreeMap::new(),
        ftar,
    };
    for ((frs, gen_type), morphs) in raw {
        // pairing completeness: one slot count P per cell, slots 1..=P
        let expected = morphs
            .values()
            .flat_map(|a| a.values())
            .map(BTreeMap::len)
            .max()
            .unwrap_or(0);
        let mut cell = Cell::default();
        for (morph, attempts) in morphs {
            let mut out_attempts = BTreeMap::new();
            for (attempt, slots) in attempts {
                let got: Vec<usize> = slots.keys().copied().collect();
                if got != (1..=expected).collect::<Vec<_>>() {
                    return Err(IngestError::UnpairedAttempt {
                        file: file.clone(),
                        frs: frs.clone(),
                        morph: morph.clone(),
                        attempt: attempt.clone(),
                        got,
                        expected,
                    });
                }
                out_attempts.insert(attempt, slots.into_values().collect());
            }
            cell.morphs.insert(morph, out_attempts);
        }
        tensor.cells.insert((frs, gen_type), cell);
    }
    Ok(tensor)
}

/// Serializes a tensor to the canonical CSV form: header plus rows sorted
/// by (frs_id, gen_type, morph_id, attempt_id, subject_slot).
pub fn scores_to_csv(t: &ScoreTensor) -> String {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for ((frs, gen_type), cell) in &t.cells {
        for (morph, attempts) in &cell.morphs {
            for (attempt, slots) in attempts {
                let flag = if t.ftar_flag(attempt, frs) { 1 } else { 0 };
                for (i, score) in slots.iter().enumerate() {
                    writeln!(
                        out,
                        "{frs},{gen_type},{morph},{attempt},{},{score},{flag}",
                        i + 1
                    )
                    .unwrap();
                }
            }
        }
    }
    out
}

/// Loads per-FRS impostor scores from CSV "frs_id,score".
pub fn load_impostors(path: &Path) -> Result<Vec<ImpostorScoreSet>, IngestError> {
    let file = path.display().to_string();
    let mut rdr = reader_for(path)?;
    check_header(&file, &mut rdr, &["frs_id", "score"])?;
    let mut by_frs: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| schema(&file, 0, format!("unreadable row: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(schema(
                &file,
                line,
                format!("expected 2 fields, got {}", record.len()),
            ));
        }
        if record[0].is_empty() {
            return Err(schema(&file, line, "empty frs_id"));
        }
        let score = parse_f64(&file, line, "score", &record[1])?;
        by_frs.entry(record[0].to_string()).or_default().push(score);
    }
    Ok(by_frs
        .into_iter()
        .map(|(frs_id, scores)| ImpostorScoreSet { frs_id, scores })
        .collect())
}

pub const LANDMARKS_HEADER: &str = "image_id,lex,ley,rex,rey,nx,ny,lmx,lmy,rmx,rmy";

/// Loads 5-point landmark sets keyed by image id.
pub fn load_landmarks(path: &Path) -> Result<Vec<(String, LandmarkSet5)>, IngestError> {
    let file = path.display().to_string();
    let mut rdr = reader_for(path)?;
    check_header(
        &file,
        &mut rdr,
        &LANDMARKS_HEADER.split(',').collect::<Vec<_>>(),
    )?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| schema(&file, 0, format!("unreadable row: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 11 {
            return Err(schema(
                &file,
                line,
                format!("expected 11 fields, got {}", record.len()),
            ));
        }
        if record[0].is_empty() {
            return Err(schema(&file, line, "empty image_id"));
        }
        let mut coords = [0.0f64; 10];
        for (i, c) in coords.iter_mut().enumerate() {
            *c = parse_f64(&file, line, "coordinate", &record[i + 1])?;
        }
        out.push((
            record[0].to_string(),
            LandmarkSet5 {
                left_eye: Point::new(coords[0], coords[1]),
                right_eye: Point::new(coords[2], coords[3]),
                nose: Point::new(coords[4], coords[5]),
                left_mouth: Point::new(coords[6], coords[7]),
                right_mouth: Point::new(coords[8], coords[9]),
            },
        ));
    }
    Ok(out)
}

/// Loads an embedding set from CSV "subject_id,v1,...,vd". All rows must
/// share one dimensionality.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingSet, IngestError> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(&file, io),
            other => schema(&file, 0, format!("unreadable CSV: {other:?}")),
        })?;
    {
        let headers = rdr
            .headers()
            .map_err(|e| schema(&file, 1, format!("unreadable header: {e}")))?;
        let got: Vec<&str> = headers.iter().collect();
        if got.len() < 2 || got[0] != "subject_id" || got[1] != "v1" {
            return Err(schema(
                &file,
                1,
                format!("bad header: expected subject_id,v1,...,vd, got {got:?}"),
            ));
        }
    }
    let mut entries = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| schema(&file, 0, format!("unreadable row: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() < 2 {
            return Err(schema(&file, line, "row needs subject_id and a vector"));
        }
        if record[0].is_empty() {
            return Err(schema(&file, line, "empty subject_id"));
        }
        let mut v = Vec::with_capacity(record.len() - 1);
        for i in 1..record.len() {
            v.push(parse_f64(&file, line, "component", &record[i])?);
        }
        entries.push((record[0].to_string(), v));
    }
    EmbeddingSet::new(entries).map_err(|source| IngestError::Embedding { file, source })
}

/// Loads detector scores from CSV "image_id,label,score" preceded by a
/// "# polarity=attack_high|attack_low" directive line.
pub fn load_detector_scores(path: &Path) -> Result<DetectionScoreSet, IngestError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(&file, e))?;

    let mut polarity = None;
    let mut header_seen = false;
    let mut bonafide = Vec::new();
    let mut attack = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = (idx + 1) as u64;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(directive) = trimmed.strip_prefix('#') {
            let directive = directive.trim();
            polarity = Some(match directive {
                "polarity=attack_high" => Polarity::AttackHigh,
                "polarity=attack_low" => Polarity::AttackLow,
                other => {
                    return Err(schema(&file, line, format!("unknown directive {other:?}")))
                }
            });
            continue;
        }
        if !header_seen {
            if trimmed != "image_id,label,score" {
                return Err(schema(
                    &file,
                    line,
                    format!("bad header: expected image_id,label,score, got {trimmed:?}"),
                ));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(schema(
                &file,
                line,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let score = parse_f64(&file, line, "score", fields[2])?;
        match fields[1] {
            "bonafide" => bonafide.push(score),
            "attack" => attack.push(score),
            other => {
                return Err(schema(
                    &file,
                    line,
                    format!("label must be bonafide or attack, got {other:?}"),
                ))
            }
        }
    }
    let polarity = polarity.ok_or(IngestError::MissingPolarity { file })?;
    Ok(DetectionScoreSet {
        bonafide,
        attack,
        polarity,
    })
}
