//! Construction of the study outcomes from raw survey item responses:
//! depression score and subscales, psychological well-being scores, alcohol
//! measures, and the poverty percentage.
//!
//! Item-to-subscale mappings ship as versioned data files (embedded defaults
//! below) because survey releases permute item order; the mapping is
//! configuration to be audited, not hardcoded truth.

use crate::error::{Error, Result};
use serde::Deserialize;
use std::collections::BTreeSet;
use std::path::Path;

pub const CESD_ITEMS: usize = 20;
pub const CESD_MAX_FREQUENCY: u8 = 7;
pub const PWB_ITEMS: usize = 42;
pub const PWB_ASPECTS: usize = 6;

const DEFAULT_CESD_MAP: &str = include_str!("../data/cesd_items_v1.toml");
const DEFAULT_PWB_MAP: &str = include_str!("../data/pwb_items_v1.toml");

/// Names of the four depression subscales, in reporting order.
pub const CESD_SUBSCALE_NAMES: [&str; 4] = [
    "depressed_affect",
    "low_positive_affect",
    "somatic_complaints",
    "interpersonal_problems",
];

/// Names of the six well-being aspects, in reporting order.
pub const PWB_ASPECT_NAMES: [&str; 6] = [
    "autonomy",
    "environmental_mastery",
    "personal_growth",
    "positive_relations",
    "purpose_in_life",
    "self_acceptance",
];

#[derive(Debug, Deserialize)]
struct CesdMapFile {
    version: String,
    reverse_items: Vec<usize>,
    subscales: CesdSubscaleFile,
}

#[derive(Debug, Deserialize)]
struct CesdSubscaleFile {
    depressed_affect: Vec<usize>,
    low_positive_affect: Vec<usize>,
    somatic_complaints: Vec<usize>,
    interpersonal_problems: Vec<usize>,
}

/// Which CES-D items are reverse-worded and how items group into subscales.
/// Item indices are 1-based questionnaire positions.
#[derive(Debug, Clone)]
pub struct CesdItemMap {
    pub version: String,
    pub reverse_items: BTreeSet<usize>,
    /// The four subscale groups, ordered as [`CESD_SUBSCALE_NAMES`].
    pub subscales: [Vec<usize>; 4],
}

impl CesdItemMap {
    pub fn parse(toml_text: &str) -> Result<Self> {
        let file: CesdMapFile =
            toml::from_str(toml_text).map_err(|e| Error::Config(format!("CES-D item map: {e}")))?;
        let map = CesdItemMap {
            version: file.version,
            reverse_items: file.reverse_items.into_iter().collect(),
            subscales: [
                file.subscales.depressed_affect,
                file.subscales.low_positive_affect,
                file.subscales.somatic_complaints,
                file.subscales.interpersonal_problems,
            ],
        };
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.reverse_items.len() != 4 {
            return Err(Error::Config(format!(
                "CES-D map must name exactly 4 reverse items, got {}",
                self.reverse_items.len()
            )));
        }
        let sizes: Vec<usize> = self.subscales.iter().map(Vec::len).collect();
        if sizes != [5, 3, 6, 2] {
            return Err(Error::Config(format!(
                "CES-D subscale sizes must be [5, 3, 6, 2], got {sizes:?}"
            )));
        }
        let mut seen = BTreeSet::new();
        for group in &self.subscales {
            for &item in group {
                if !(1..=CESD_ITEMS).contains(&item) {
                    return Err(Error::Config(format!("CES-D item {item} out of range")));
                }
                if !seen.insert(item) {
                    return Err(Error::Config(format!(
                        "CES-D item {item} appears in two subscales"
                    )));
                }
            }
        }
        for &item in &self.reverse_items {
            if !(1..=CESD_ITEMS).contains(&item) {
                return Err(Error::Config(format!(
                    "CES-D reverse item {item} out of range"
                )));
            }
        }
        Ok(())
    }

    /// The four items excluded from every subscale.
    pub fn excluded_items(&self) -> BTreeSet<usize> {
        let used: BTreeSet<usize> = self.subscales.iter().flatten().copied().collect();
        (1..=CESD_ITEMS).filter(|i| !used.contains(i)).collect()
    }

    /// Corrected frequency of one 1-based item: reverse-worded items score
    /// 7 minus the reported frequency.
    pub fn corrected_frequency(&self, item: usize, reported: u8) -> u32 {
        if self.reverse_items.contains(&item) {
            (CESD_MAX_FREQUENCY as u32) - reported as u32
        } else {
            reported as u32
        }
    }
}

impl Default for CesdItemMap {
    fn default() -> Self {
        Self::parse(DEFAULT_CESD_MAP).expect("embedded CES-D map is valid")
    }
}

#[derive(Debug, Deserialize)]
struct PwbMapFile {
    version: String,
    aspects: PwbAspectsFile,
}

#[derive(Debug, Deserialize)]
struct PwbAspectsFile {
    autonomy: Vec<usize>,
    environmental_mastery: Vec<usize>,
    personal_growth: Vec<usize>,
    positive_relations: Vec<usize>,
    purpose_in_life: Vec<usize>,
    self_acceptance: Vec<usize>,
}

/// How the 42 well-being items group into the six aspects (1-based indices).
#[derive(Debug, Clone)]
pub struct PwbItemMap {
    pub version: String,
    /// Aspect groups ordered as [`PWB_ASPECT_NAMES`].
    pub aspects: [Vec<usize>; 6],
}

impl PwbItemMap {
    pub fn parse(toml_text: &str) -> Result<Self> {
        let file: PwbMapFile = toml::from_str(toml_text)
            .map_err(|e| Error::Config(format!("well-being item map: {e}")))?;
        let map = PwbItemMap {
            version: file.version,
            aspects: [
                file.aspects.autonomy,
                file.aspects.environmental_mastery,
                file.aspects.personal_growth,
                file.aspects.positive_relations,
                file.aspects.purpose_in_life,
                file.aspects.self_acceptance,
            ],
        };
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for group in &self.aspects {
            if group.len() != 7 {
                return Err(Error::Config(format!(
                    "each well-being aspect must have 7 items, got {}",
                    group.len()
                )));
            }
            for &item in group {
                if !(1..=PWB_ITEMS).contains(&item) {
                    return Err(Error::Config(format!(
                        "well-being item {item} out of range"
                    )));
                }
                if !seen.insert(item) {
                    return Err(Error::Config(format!(
                        "well-being item {item} appears in two aspects"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Default for PwbItemMap {
    fn default() -> Self {
        Self::parse(DEFAULT_PWB_MAP).expect("embedded well-being map is valid")
    }
}

/// A complete 20-item depression response: days-per-week frequencies in
/// [0, 7], with the reverse-worded item set attached from the item map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CesdResponse {
    frequencies: [u8; CESD_ITEMS],
    reverse_items: BTreeSet<usize>,
}

impl CesdResponse {
    pub fn new(frequencies: [u8; CESD_ITEMS], map: &CesdItemMap) -> Result<Self> {
        for (i, &f) in frequencies.iter().enumerate() {
            if f > CESD_MAX_FREQUENCY {
                return Err(Error::Validation(format!(
                    "CES-D item {} frequency {f} exceeds {CESD_MAX_FREQUENCY}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            frequencies,
            reverse_items: map.reverse_items.clone(),
        })
    }

    /// Frequency of a 1-based item after reverse correction.
    fn corrected(&self, item: usize) -> u32 {
        let reported = self.frequencies[item - 1] as u32;
        if self.reverse_items.contains(&item) {
            (CESD_MAX_FREQUENCY as u32) - reported
        } else {
            reported
        }
    }
}

/// Summary depression score: the sum of all 20 corrected frequencies
/// (range 0 to 140; higher means more depressed).
pub fn score_cesd(r: &CesdResponse) -> u32 {
    (1..=CESD_ITEMS).map(|i| r.corrected(i)).sum()
}

/// The four depression subscale scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CesdSubscales {
    pub depressed_affect: u32,
    pub low_positive_affect: u32,
    pub somatic_complaints: u32,
    pub interpersonal_problems: u32,
}

impl CesdSubscales {
    pub fn as_array(&self) -> [u32; 4] {
        [
            self.depressed_affect,
            self.low_positive_affect,
            self.somatic_complaints,
            self.interpersonal_problems,
        ]
    }
}

/// Per-group corrected sums; the four excluded items contribute to none.
pub fn score_cesd_subscales(r: &CesdResponse, map: &CesdItemMap) -> CesdSubscales {
    let group_sum = |g: &[usize]| g.iter().map(|&i| r.corrected(i)).sum();
    CesdSubscales {
        depressed_affect: group_sum(&map.subscales[0]),
        low_positive_affect: group_sum(&map.subscales[1]),
        somatic_complaints: group_sum(&map.subscales[2]),
        interpersonal_problems: group_sum(&map.subscales[3]),
    }
}

/// A complete 42-item well-being response on the 6-point agreement scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PwbResponse {
    items: [u8; PWB_ITEMS],
}

impl PwbResponse {
    pub fn new(items: [u8; PWB_ITEMS]) -> Result<Self> {
        for (i, &v) in items.iter().enumerate() {
            if !(1..=6).contains(&v) {
                return Err(Error::Validation(format!(
                    "well-being item {} value {v} outside 1..=6",
                    i + 1
                )));
            }
        }
        Ok(Self { items })
    }
}

/// Six aspect subscale scores plus their total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PwbScores {
    /// Ordered as [`PWB_ASPECT_NAMES`].
    pub subscales: [u32; PWB_ASPECTS],
    pub total: u32,
}

/// Aspect sums (each in 7..=42 for a complete response) and the combined
/// score; higher means better psychological condition.
pub fn score_pwb(r: &PwbResponse, map: &PwbItemMap) -> PwbScores {
    let mut subscales = [0u32; PWB_ASPECTS];
    for (slot, group) in map.aspects.iter().enumerate() {
        subscales[slot] = group.iter().map(|&i| r.items[i - 1] as u32).sum();
    }
    PwbScores {
        subscales,
        total: subscales.iter().sum(),
    }
}

/// Derived alcohol-usage outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlcoholMeasures {
    /// Drinking days in the last month, passed through.
    pub drinking_days: u8,
    /// Averaged at least 3 drinks per drinking day and drank on 4+ days.
    pub at_risk: bool,
    /// Admitted to two or more of the five drinking consequences.
    pub possible_dependence: bool,
}

/// Builds the three alcohol measures from the raw questionnaire answers.
/// The five consequence flags are guilt, criticism by others, work-related
/// problems, family problems, and seeking help.
pub fn derive_alcohol_measures(
    drink_days: u8,
    avg_drinks: f64,
    consequences: [bool; 5],
) -> Result<AlcoholMeasures> {
    if drink_days > 31 {
        return Err(Error::Validation(format!(
            "drinking days {drink_days} exceeds 31"
        )));
    }
    if !avg_drinks.is_finite() || avg_drinks < 0.0 {
        return Err(Error::Validation(format!(
            "average drinks must be a nonnegative number, got {avg_drinks}"
        )));
    }
    let flags = consequences.iter().filter(|&&c| c).count();
    Ok(AlcoholMeasures {
        drinking_days: drink_days,
        at_risk: avg_drinks >= 3.0 && drink_days >= 4,
        possible_dependence: flags >= 2,
    })
}

/// Household income as a percentage of the poverty guideline.
pub fn poverty_percentage(household_income: f64, guideline: f64) -> Result<f64> {
    if !(guideline.is_finite() && guideline > 0.0) {
        return Err(Error::Validation(format!(
            "poverty guideline must be positive, got {guideline}"
        )));
    }
    if !household_income.is_finite() {
        return Err(Error::Validation(format!(
            "household income must be finite, got {household_income}"
        )));
    }
    Ok(100.0 * household_income / guideline)
}
