//! MUC-5 style span scoring.
//!
//! Each selected prediction is classified against the gold spans of its
//! type as COR (same token set), PAR (at least half of the gold tokens
//! covered) or INC; leftover gold spans are MIS and leftover predictions
//! SPU. Partial credit for PAR is 0.5.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decode::SelectionResult;
use crate::error::{Error, Result};
use crate::io::AnnotationFile;
use crate::model::{Category, EntitySpan, EntityType};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MucCounts {
    #[serde(rename = "COR")]
    pub cor: u64,
    #[serde(rename = "PAR")]
    pub par: u64,
    #[serde(rename = "INC")]
    pub inc: u64,
    #[serde(rename = "MIS")]
    pub mis: u64,
    #[serde(rename = "SPU")]
    pub spu: u64,
}

impl MucCounts {
    pub fn possible(&self) -> u64 {
        self.cor + self.par + self.inc + self.mis
    }

    pub fn actual(&self) -> u64 {
        self.cor + self.par + self.inc + self.spu
    }

    pub fn total(&self) -> u64 {
        self.cor + self.par + self.inc + self.mis + self.spu
    }

    fn record(&mut self, class: MatchClass) {
        match class {
            MatchClass::Cor => self.cor += 1,
            MatchClass::Par => self.par += 1,
            MatchClass::Inc => self.inc += 1,
        }
    }
}

impl Add for MucCounts {
    type Output = MucCounts;

    fn add(self, o: MucCounts) -> MucCounts {
        MucCounts {
            cor: self.cor + o.cor,
            par: self.par + o.par,
            inc: self.inc + o.inc,
            mis: self.mis + o.mis,
            spu: self.spu + o.spu,
        }
    }
}

impl AddAssign for MucCounts {
    fn add_assign(&mut self, o: MucCounts) {
        *self = *self + o;
    }
}

impl Sum for MucCounts {
    fn sum<I: Iterator<Item = MucCounts>>(iter: I) -> Self {
        iter.fold(MucCounts::default(), Add::add)
    }
}

/// Outcome of pairing one prediction with one gold span. Ordered best
/// first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MatchClass {
    Cor,
    Par,
    Inc,
}

fn overlap(pred: &EntitySpan, gold: &EntitySpan) -> usize {
    let g = gold.token_set();
    pred.token_set().intersection(&g).count()
}

/// Overlap is measured against the gold span, so the relation is not
/// symmetric.
pub fn classify(pred: &EntitySpan, gold: &EntitySpan) -> MatchClass {
    if pred.entity_type != gold.entity_type {
        return MatchClass::Inc;
    }
    if pred.token_set() == gold.token_set() {
        return MatchClass::Cor;
    }
    if 2 * overlap(pred, gold) >= gold.token_set().len() {
        MatchClass::Par
    } else {
        MatchClass::Inc
    }
}

/// Counts per entity type for one page. Types with neither prediction nor
/// gold are absent.
pub type PageCounts = BTreeMap<EntityType, MucCounts>;

pub fn score_page(selection: &SelectionResult, gold: &AnnotationFile) -> Result<PageCounts> {
    if selection.page_no != gold.page_no {
        return Err(Error::Input(format!(
            "selection is for page {} but gold is for page {}",
            selection.page_no, gold.page_no
        )));
    }
    let mut out = PageCounts::new();
    for ty in EntityType::ALL {
        let preds = selection.get(ty);
        let golds: Vec<&EntitySpan> = gold.entities.iter().filter(|g| g.entity_type == ty).collect();
        if preds.is_empty() && golds.is_empty() {
            continue;
        }
        let counts = if ty.is_single_valued() {
            score_single(preds.first(), &golds)
        } else {
            score_multi(preds, &golds)
        };
        out.insert(ty, counts);
    }
    Ok(out)
}

fn score_single(pred: Option<&EntitySpan>, golds: &[&EntitySpan]) -> MucCounts {
    let mut c = MucCounts::default();
    match pred {
        None => c.mis = 1,
        Some(_) if golds.is_empty() => c.spu = 1,
        Some(p) => {
            let best = golds
                .iter()
                .enumerate()
                .map(|(i, g)| (classify(p, g), std::cmp::Reverse(overlap(p, g)), i))
                .min()
                .expect("golds non-empty");
            c.record(best.0);
        }
    }
    c
}

fn score_multi(preds: &[EntitySpan], golds: &[&EntitySpan]) -> MucCounts {
    let mut pairs = Vec::new();
    for (pi, p) in preds.iter().enumerate() {
        for (gi, g) in golds.iter().enumerate() {
            let ov = overlap(p, g);
            if ov > 0 {
                pairs.push((classify(p, g), std::cmp::Reverse(ov), gi, pi));
            }
        }
    }
    pairs.sort();
    let mut used_p = vec![false; preds.len()];
    let mut used_g = vec![false; golds.len()];
    let mut c = MucCounts::default();
    for (class, _, gi, pi) in pairs {
        if used_p[pi] || used_g[gi] {
            continue;
        }
        used_p[pi] = true;
        used_g[gi] = true;
        c.record(class);
    }
    c.spu += used_p.iter().filter(|u| !**u).count() as u64;
    c.mis += used_g.iter().filter(|u| !**u).count() as u64;
    c
}

/// Which denominator precision uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MucMode {
    /// precision = num / actual, recall = num / possible
    #[default]
    Standard,
    /// precision = num / possible, recall = num / actual
    Paper,
}

impl fmt::Display for MucMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MucMode::Standard => "standard",
            MucMode::Paper => "paper",
        })
    }
}

impl FromStr for MucMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(MucMode::Standard),
            "paper" => Ok(MucMode::Paper),
            other => Err(Error::Input(format!("unknown scoring mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(flatten)]
    pub counts: MucCounts,
    pub possible: u64,
    pub actual: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Nothing to find and nothing claimed; metrics reported as 1.
    #[serde(default)]
    pub degenerate: bool,
}

fn ratio(num: f64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

pub fn metrics(counts: MucCounts, mode: MucMode) -> Metrics {
    let possible = counts.possible();
    let actual = counts.actual();
    if possible == 0 && actual == 0 {
        return Metrics {
            counts,
            possible,
            actual,
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            degenerate: true,
        };
    }
    let num = counts.cor as f64 + 0.5 * counts.par as f64;
    let (precision, recall) = match mode {
        MucMode::Standard => (ratio(num, actual), ratio(num, possible)),
        MucMode::Paper => (ratio(num, possible), ratio(num, actual)),
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        counts,
        possible,
        actual,
        precision,
        recall,
        f1,
        degenerate: false,
    }
}

/// Corpus-level accumulation of page counts. Addition is commutative, so
/// pages may be folded in any order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scoreboard {
    pub pages: usize,
    pub per_type: BTreeMap<EntityType, MucCounts>,
}

impl Scoreboard {
    pub fn add_page(&mut self, page: &PageCounts) {
        self.pages += 1;
        for (ty, c) in page {
            *self.per_type.entry(*ty).or_default() += *c;
        }
    }

    pub fn merge(mut self, other: Scoreboard) -> Scoreboard {
        self.pages += other.pages;
        for (ty, c) in other.per_type {
            *self.per_type.entry(ty).or_default() += c;
        }
        self
    }

    pub fn overall(&self) -> MucCounts {
        self.per_type.values().copied().sum()
    }

    pub fn report(&self, mode: MucMode) -> MetricsReport {
        MetricsReport {
            schema_version: crate::io::SCHEMA_VERSION.into(),
            mode,
            pages: self.pages,
            per_type: EntityType::ALL
                .into_iter()
                .map(|ty| (ty, metrics(self.per_type.get(&ty).copied().unwrap_or_default(), mode)))
                .collect(),
            overall: metrics(self.overall(), mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: String,
    pub mode: MucMode,
    pub pages: usize,
    pub per_type: BTreeMap<EntityType, Metrics>,
    pub overall: Metrics,
}

impl MetricsReport {
    /// The count identities `possible = COR+PAR+INC+MIS` and
    /// `actual = COR+PAR+INC+SPU` hold for every row.
    pub fn identities_hold(&self) -> bool {
        self.per_type
            .values()
            .chain(std::iter::once(&self.overall))
            .all(|m| m.possible == m.counts.possible() && m.actual == m.counts.actual())
    }
}

fn category_title(c: Category) -> &'static str {
    match c {
        Category::Patient => "Patient entities",
        Category::Physician => "Physician entities",
        Category::Exam => "Exam entities",
    }
}

/// Plain-text comparison tables, one per category, one row per variant.
pub fn render_tables(variants: &[(&str, &MetricsReport)]) -> String {
    let mut out = String::new();
    let label_w = variants.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(7);
    for cat in Category::ALL {
        let types: Vec<EntityType> = EntityType::ALL.into_iter().filter(|t| t.category() == cat).collect();
        let _ = writeln!(out, "{}", category_title(cat));
        let mut header = format!("{:label_w$}", "variant");
        let mut sub = format!("{:label_w$}", "");
        for ty in &types {
            let _ = write!(header, " | {:^20}", ty.as_str());
            let _ = write!(sub, " | {:>6} {:>6} {:>6}", "P", "R", "F1");
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{sub}");
        for (name, report) in variants {
            let mut row = format!("{name:label_w$}");
            for ty in &types {
                let m = &report.per_type[ty];
                let _ = write!(row, " | {:>6.3} {:>6.3} {:>6.3}", m.precision, m.recall, m.f1);
            }
            let _ = writeln!(out, "{row}");
        }
        out.push('\n');
    }
    out
}
