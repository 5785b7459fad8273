//! Attribute-region combinations that define composite attack variants.
//!
//! A combination names which facial attributes are taken from each of the
//! two donor images, e.g. `SEN-M` (skin, eye and nose from donor one, mouth
//! from donor two). Sixteen region indices group the combinations by the
//! cardinality of the two attribute sets; the raw enumeration over the five
//! non-background attributes yields 607 ordered pairs plus the full
//! six-attribute pair.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// The six facial attribute classes produced by the external segmenter.
///
/// Codes are formatted in the canonical letter order H, B, S, E, N, M
/// (background sorts right after hair, matching the published full-set
/// code HBSENM).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FacialAttribute {
    Hair,
    Skin,
    Eye,
    Nose,
    Mouth,
    Background,
}

impl FacialAttribute {
    /// All six attributes in canonical letter order.
    pub const ALL: [FacialAttribute; 6] = [
        FacialAttribute::Hair,
        FacialAttribute::Background,
        FacialAttribute::Skin,
        FacialAttribute::Eye,
        FacialAttribute::Nose,
        FacialAttribute::Mouth,
    ];

    /// The five attributes eligible for partial composites (everything but
    /// background).
    pub const NON_BACKGROUND: [FacialAttribute; 5] = [
        FacialAttribute::Hair,
        FacialAttribute::Skin,
        FacialAttribute::Eye,
        FacialAttribute::Nose,
        FacialAttribute::Mouth,
    ];

    pub fn code(self) -> char {
        match self {
            FacialAttribute::Hair => 'H',
            FacialAttribute::Skin => 'S',
            FacialAttribute::Eye => 'E',
            FacialAttribute::Nose => 'N',
            FacialAttribute::Mouth => 'M',
            FacialAttribute::Background => 'B',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'H' => Some(FacialAttribute::Hair),
            'S' => Some(FacialAttribute::Skin),
            'E' => Some(FacialAttribute::Eye),
            'N' => Some(FacialAttribute::Nose),
            'M' => Some(FacialAttribute::Mouth),
            'B' => Some(FacialAttribute::Background),
            _ => None,
        }
    }

    /// Class value used in label-map rasters (0=B, 1=S, 2=E, 3=N, 4=M, 5=H).
    pub fn class_label(self) -> u8 {
        match self {
            FacialAttribute::Background => 0,
            FacialAttribute::Skin => 1,
            FacialAttribute::Eye => 2,
            FacialAttribute::Nose => 3,
            FacialAttribute::Mouth => 4,
            FacialAttribute::Hair => 5,
        }
    }

    pub fn from_class_label(label: u8) -> Option<Self> {
        match label {
            0 => Some(FacialAttribute::Background),
            1 => Some(FacialAttribute::Skin),
            2 => Some(FacialAttribute::Eye),
            3 => Some(FacialAttribute::Nose),
            4 => Some(FacialAttribute::Mouth),
            5 => Some(FacialAttribute::Hair),
            _ => None,
        }
    }
}

/// Non-empty set of facial attributes, stored as a small bitset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttributeSet(u8);

impl AttributeSet {
    fn bit(attr: FacialAttribute) -> u8 {
        1 << (attr as u8)
    }

    /// Builds a set from a slice of attributes. Returns `None` on an empty
    /// slice; duplicates are collapsed.
    pub fn new(attrs: &[FacialAttribute]) -> Option<Self> {
        if attrs.is_empty() {
            return None;
        }
        let mut bits = 0u8;
        for &a in attrs {
            bits |= Self::bit(a);
        }
        Some(AttributeSet(bits))
    }

    /// The full six-attribute set (the only one allowed to contain
    /// background).
    pub fn full() -> Self {
        AttributeSet(0b0011_1111)
    }

    pub fn contains(self, attr: FacialAttribute) -> bool {
        self.0 & Self::bit(attr) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Iterates members in canonical letter order (H, B, S, E, N, M).
    pub fn iter(self) -> impl Iterator<Item = FacialAttribute> {
        FacialAttribute::ALL
            .into_iter()
            .filter(move |&a| self.contains(a))
    }
}

impl fmt::Display for AttributeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.iter() {
            write!(f, "{}", a.code())?;
        }
        Ok(())
    }
}

/// Ordered pair of attribute sets: what donor one contributes and what
/// donor two contributes, plus the region index grouping it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionCombination {
    pub donor_one: AttributeSet,
    pub donor_two: AttributeSet,
    pub region_index: u8,
}

impl RegionCombination {
    pub fn canonical_code(&self) -> String {
        format!("{}-{}", self.donor_one, self.donor_two)
    }
}

impl fmt::Display for RegionCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.canonical_code())
    }
}

/// Region index for a (donor-one cardinality, donor-two cardinality) pair.
/// Indices 1..=15 cover ordered pairs over the five non-background
/// attributes with |donor_one| >= |donor_two|; index 16 is the full
/// six-attribute pair on both sides.
pub fn region_index_for_sizes(k: usize, m: usize) -> Option<u8> {
    match (k, m) {
        (1, 1) => Some(1),
        (2, 1) => Some(2),
        (2, 2) => Some(3),
        (3, 1) => Some(4),
        (3, 2) => Some(5),
        (3, 3) => Some(6),
        (4, 1) => Some(7),
        (4, 2) => Some(8),
        (4, 3) => Some(9),
        (4, 4) => Some(10),
        (5, 1) => Some(11),
        (5, 2) => Some(12),
        (5, 3) => Some(13),
        (5, 4) => Some(14),
        (5, 5) => Some(15),
        (6, 6) => Some(16),
        _ => None,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RegionParseError {
    #[error("malformed region code {code:?}: expected GROUP-GROUP")]
    Malformed { code: String },
    #[error("unknown letter {letter:?} at position {position} in {code:?}")]
    UnknownLetter {
        code: String,
        letter: char,
        position: usize,
    },
    #[error("duplicate letter {letter:?} within a group of {code:?}")]
    DuplicateLetter { code: String, letter: char },
    #[error("background letter 'B' only allowed in the full six-attribute pair, got {code:?}")]
    BackgroundOutsideFull { code: String },
    #[error("no region index for group sizes ({donor_one}, {donor_two}) in {code:?}")]
    UnindexedSizes {
        code: String,
        donor_one: usize,
        donor_two: usize,
    },
}

/// Parses a region code such as `SEN-M` into a combination with its region
/// index assigned.
pub fn parse_region_code(code: &str) -> Result<RegionCombination, RegionParseError> {
    let mut parts = code.split('-');
    let (first, second) = match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => (a, b),
        _ => {
            return Err(RegionParseError::Malformed {
                code: code.to_string(),
            })
        }
    };

    let parse_group = |group: &str, offset: usize| -> Result<AttributeSet, RegionParseError> {
        let mut seen = AttributeSet(0);
        for (i, ch) in group.chars().enumerate() {
            let attr = FacialAttribute::from_code(ch).ok_or(RegionParseError::UnknownLetter {
                code: code.to_string(),
                letter: ch,
                position: offset + i,
            })?;
            if seen.contains(attr) {
                return Err(RegionParseError::DuplicateLetter {
                    code: code.to_string(),
                    letter: ch,
                });
            }
            seen.0 |= AttributeSet::bit(attr);
        }
        Ok(seen)
    };

    let donor_one = parse_group(first, 0)?;
    let donor_two = parse_group(second, first.len() + 1)?;

    let has_background =
        donor_one.contains(FacialAttribute::Background) || donor_two.contains(FacialAttribute::Background);
    if has_background && !(donor_one == AttributeSet::full() && donor_two == AttributeSet::full()) {
        return Err(RegionParseError::BackgroundOutsideFull {
            code: code.to_string(),
        });
    }

    let region_index = region_index_for_sizes(donor_one.len(), donor_two.len()).ok_or(
        RegionParseError::UnindexedSizes {
            code: code.to_string(),
            donor_one: donor_one.len(),
            donor_two: donor_two.len(),
        },
    )?;

    Ok(RegionCombination {
        donor_one,
        donor_two,
        region_index,
    })
}

/// Formats a combination as its canonical code (letters in H,S,E,N,M,B
/// order within each group). `parse_region_code(format_region_code(c)) == c`.
pub fn format_region_code(c: &RegionCombination) -> String {
    c.canonical_code()
}

/// Where a catalog came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogSource {
    Generated,
    Fixture,
}

/// An ordered list of region combinations plus per-index bookkeeping.
#[derive(Debug, Clone)]
pub struct CombinationCatalog {
    pub entries: Vec<RegionCombination>,
    pub source: CatalogSource,
}

impl CombinationCatalog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries per region index (slot 0 = index 1).
    pub fn counts_per_index(&self) -> [usize; 16] {
        let mut counts = [0usize; 16];
        for c in &self.entries {
            counts[(c.region_index - 1) as usize] += 1;
        }
        counts
    }
}

fn subsets_of_size(universe: &[FacialAttribute], size: usize) -> Vec<AttributeSet> {
    // Enumerate bitmasks over the universe; collect those of the requested
    // cardinality, then sort by canonical code for a deterministic order.
    let n = universe.len();
    let mut out = Vec::new();
    for mask in 1u32..(1 << n) {
        if mask.count_ones() as usize != size {
            continue;
        }
        let members: Vec<FacialAttribute> = (0..n)
            .filter(|&i| mask & (1 << i) != 0)
            .map(|i| universe[i])
            .collect();
        out.push(AttributeSet::new(&members).expect("non-empty subset"));
    }
    out.sort_by_key(|s| s.to_string());
    out
}

/// All ordered pairs for a region index, in lexicographic canonical-code
/// order.
pub fn enumerate_raw(index: u8) -> Vec<RegionCombination> {
    assert!((1..=16).contains(&index), "region index must be 1..=16");
    if index == 16 {
        return vec![RegionCombination {
            donor_one: AttributeSet::full(),
            donor_two: AttributeSet::full(),
            region_index: 16,
        }];
    }
    let (k, m) = (1..=5)
        .flat_map(|k| (1..=k).map(move |m| (k, m)))
        .find(|&(k, m)| region_index_for_sizes(k, m) == Some(index))
        .expect("every index 1..=15 has a size pair");
    let ones = subsets_of_size(&FacialAttribute::NON_BACKGROUND, k);
    let twos = subsets_of_size(&FacialAttribute::NON_BACKGROUND, m);
    let mut out = Vec::with_capacity(ones.len() * twos.len());
    for &a in &ones {
        for &b in &twos {
            out.push(RegionCombination {
                donor_one: a,
                donor_two: b,
                region_index: index,
            });
        }
    }
    out
}

/// Full raw enumeration over all sixteen region indices (607 combinations).
pub fn enumerate_all() -> CombinationCatalog {
    let mut entries = Vec::new();
    for index in 1..=16 {
        entries.extend(enumerate_raw(index));
    }
    CombinationCatalog {
        entries,
        source: CatalogSource::Generated,
    }
}

/// Published per-index unique counts (the parenthesized column of the
/// source table). Their sum is 532 even though the same table claims a
/// unique total of 526; `compare_with_published` surfaces this.
pub const PUBLISHED_UNIQUE_COUNTS: [usize; 16] =
    [13, 26, 100, 50, 78, 86, 25, 50, 47, 25, 5, 10, 10, 5, 1, 1];

/// The unique total the source table claims.
pub const PUBLISHED_UNIQUE_TOTAL: usize = 526;

/// Raw (pre-dedup) per-index counts: binomial products over the five
/// non-background attributes, plus the single six-attribute pair.
pub const RAW_COUNTS: [usize; 16] = [25, 50, 100, 50, 100, 100, 25, 50, 50, 25, 5, 10, 10, 5, 1, 1];

/// Total of `RAW_COUNTS`.
pub const RAW_TOTAL: usize = 607;

#[derive(Debug, Error)]
pub enum DedupError {
    #[error("unknown dedup rule id {0:?} (known: identity, fixture)")]
    UnknownRule(String),
}

/// Equivalence rule applied by [`dedup`].
///
/// The source material asserts a redundancy relation it never defines
/// precisely (its published per-index unique counts do not even sum to its
/// claimed total), so the rule is pluggable: `Identity` merges nothing
/// beyond exact duplicates, `Fixture` treats membership in the normalized
/// published region list as authoritative.
#[derive(Debug, Clone)]
pub enum EquivalenceRule {
    Identity,
    Fixture(BTreeSet<String>),
}

impl EquivalenceRule {
    /// Resolves a rule id. `"fixture"` uses the bundled region-list fixture.
    pub fn from_id(id: &str) -> Result<Self, DedupError> {
        match id {
            "identity" => Ok(EquivalenceRule::Identity),
            "fixture" => {
                let catalog = bundled_fixture_catalog()
                    .expect("bundled fixture must load; covered by validate_fixture_suite");
                Ok(EquivalenceRule::fixture_from_catalog(&catalog))
            }
            other => Err(DedupError::UnknownRule(other.to_string())),
        }
    }

    pub fn fixture_from_catalog(catalog: &CombinationCatalog) -> Self {
        EquivalenceRule::Fixture(
            catalog
                .entries
                .iter()
                .map(RegionCombination::canonical_code)
                .collect(),
        )
    }
}

/// Per-index comparison of deduplicated counts against the published
/// parenthesized column.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IndexCountComparison {
    pub region_index: u8,
    pub raw: usize,
    pub unique: usize,
    pub published_unique: usize,
    pub matches_published: bool,
}

/// Summary of a dedup pass, including the published-count comparison and
/// the 532-vs-526 discrepancy in the source table itself.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DedupReport {
    pub rule: String,
    pub raw_total: usize,
    pub unique_total: usize,
    pub per_index: Vec<IndexCountComparison>,
    /// Sum of the published per-index unique counts (532).
    pub published_unique_sum: usize,
    /// The unique total claimed alongside those counts (526).
    pub published_claimed_total: usize,
    /// True because 532 != 526: the published column is internally
    /// inconsistent and cannot be reproduced exactly.
    pub published_counts_inconsistent: bool,
}

/// Deduplicates a catalog under an equivalence rule.
///
/// Output order is deterministic: region-index-major, then lexicographic
/// canonical code. Idempotent and invariant to input permutation.
pub fn dedup(
    catalog: &CombinationCatalog,
    rule: &EquivalenceRule,
) -> (CombinationCatalog, DedupReport) {
    let mut kept: BTreeSet<(u8, String)> = BTreeSet::new();
    for c in &catalog.entries {
        let code = c.canonical_code();
        let keep = match rule {
            EquivalenceRule::Identity => true,
            EquivalenceRule::Fixture(codes) => codes.contains(&code),
        };
        if keep {
            kept.insert((c.region_index, code));
        }
    }
    let entries: Vec<RegionCombination> = kept
        .iter()
        .map(|(_, code)| parse_region_code(code).expect("canonical code round-trips"))
        .collect();
    let deduped = CombinationCatalog {
        entries,
        source: catalog.source,
    };

    let raw_counts = catalog.counts_per_index();
    let unique_counts = deduped.counts_per_index();
    let per_index = (0..16)
        .map(|i| IndexCountComparison {
            region_index: (i + 1) as u8,
            raw: raw_counts[i],
            unique: unique_counts[i],
            published_unique: PUBLISHED_UNIQUE_COUNTS[i],
            matches_published: unique_counts[i] == PUBLISHED_UNIQUE_COUNTS[i],
        })
        .collect();
    let report = DedupReport {
        rule: match rule {
            EquivalenceRule::Identity => "identity".to_string(),
            EquivalenceRule::Fixture(_) => "fixture".to_string(),
        },
        raw_total: catalog.len(),
        unique_total: deduped.len(),
        per_index,
        published_unique_sum: PUBLISHED_UNIQUE_COUNTS.iter().sum(),
        published_claimed_total: PUBLISHED_UNIQUE_TOTAL,
        published_counts_inconsistent: PUBLISHED_UNIQUE_COUNTS.iter().sum::<usize>()
            != PUBLISHED_UNIQUE_TOTAL,
    };
    (deduped, report)
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrections sidecar line {line}: expected two tab-separated columns")]
    MalformedCorrection { line: usize },
    #[error("fixture line {line}: entry {entry:?} does not parse and has no correction: {source}")]
    UnparseableEntry {
        line: usize,
        entry: String,
        #[source]
        source: RegionParseError,
    },
    #[error("fixture line {line}: correction {corrected:?} for {raw:?} does not parse: {source}")]
    BadCorrection {
        line: usize,
        raw: String,
        corrected: String,
        #[source]
        source: RegionParseError,
    },
}

/// Raw transcription of the published region list, verbatim including its
/// typos, bundled with the crate.
pub const BUNDLED_REGION_LIST: &str = include_str!("../fixtures/region_list.txt");

/// Typo-normalization sidecar: `raw<TAB>corrected`, one mapping per line.
pub const BUNDLED_CORRECTIONS: &str = include_str!("../fixtures/region_list_corrections.tsv");

fn parse_corrections(text: &str) -> Result<Vec<(String, String)>, FixtureError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(raw), Some(corrected), None) => {
                out.push((raw.to_string(), corrected.to_string()))
            }
            _ => return Err(FixtureError::MalformedCorrection { line: i + 1 }),
        }
    }
    Ok(out)
}

fn load_fixture_from_strings(
    list: &str,
    corrections: &str,
) -> Result<CombinationCatalog, FixtureError> {
    let corrections = parse_corrections(corrections)?;
    let lookup = |raw: &str| -> Option<&str> {
        corrections
            .iter()
            .find(|(r, _)| r == raw)
            .map(|(_, c)| c.as_str())
    };

    let mut entries = Vec::new();
    for (i, line) in list.lines().enumerate() {
        let raw = line.trim();
        if raw.is_empty() {
            continue;
        }
        let combo = match parse_region_code(raw) {
            Ok(c) => c,
            Err(parse_err) => match lookup(raw) {
                Some(corrected) => {
                    parse_region_code(corrected).map_err(|source| FixtureError::BadCorrection {
                        line: i + 1,
                        raw: raw.to_string(),
                        corrected: corrected.to_string(),
                        source,
                    })?
                }
                None => {
                    return Err(FixtureError::UnparseableEntry {
                        line: i + 1,
                        entry: raw.to_string(),
                        source: parse_err,
                    })
                }
            },
        };
        entries.push(combo);
    }
    Ok(CombinationCatalog {
        entries,
        source: CatalogSource::Fixture,
    })
}

/// Loads a fixture region list plus its corrections sidecar from disk.
pub fn load_fixture_catalog(
    list_path: &Path,
    corrections_path: &Path,
) -> Result<CombinationCatalog, FixtureError> {
    let read = |path: &Path| -> Result<String, FixtureError> {
        std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    let list = read(list_path)?;
    let corrections = read(corrections_path)?;
    load_fixture_from_strings(&list, &corrections)
}

/// The bundled transcription of the published region list, normalized.
pub fn bundled_fixture_catalog() -> Result<CombinationCatalog, FixtureError> {
    load_fixture_from_strings(BUNDLED_REGION_LIST, BUNDLED_CORRECTIONS)
}
