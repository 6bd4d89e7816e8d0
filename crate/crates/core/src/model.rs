//! Shared document, entity and tag vocabulary.
//!
//! Geometry is page-normalized: every coordinate lies in `[0, 1]`, the origin
//! is the top-left corner and `y` grows downward. Pixel dimensions are carried
//! on [`Page`] for debugging only.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type TokenId = u32;
pub type LineId = u32;

/// Slack used when checking containment of one box in another.
pub const GEOMETRY_TOLERANCE: f64 = 1e-9;

/// Axis-aligned box in normalized page coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = BBox { x0, y0, x1, y1 };
        b.validate()?;
        Ok(b)
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x0, self.y0, self.x1, self.y1];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Schema(format!("non-finite coordinate in {self:?}")));
        }
        if coords.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::Schema(format!("coordinate outside [0,1] in {self:?}")));
        }
        if self.x1 < self.x0 {
            return Err(Error::Schema(format!("x1 < x0 in {self:?}")));
        }
        if self.y1 < self.y0 {
            return Err(Error::Schema(format!("y1 < y0 in {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn y_center(&self) -> f64 {
        (self.y0 + self.y1) / 2.0
    }

    pub fn x_center(&self) -> f64 {
        (self.x0 + self.x1) / 2.0
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Union of a sequence of boxes; `None` when the sequence is empty.
    pub fn union_all<'a>(boxes: impl IntoIterator<Item = &'a BBox>) -> Option<BBox> {
        boxes.into_iter().fold(None, |acc: Option<BBox>, b| {
            Some(match acc {
                Some(a) => a.union(b),
                None => *b,
            })
        })
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x0 >= self.x0 - GEOMETRY_TOLERANCE
            && other.y0 >= self.y0 - GEOMETRY_TOLERANCE
            && other.x1 <= self.x1 + GEOMETRY_TOLERANCE
            && other.y1 <= self.y1 + GEOMETRY_TOLERANCE
    }

    pub fn overlaps_x(&self, other: &BBox) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1
    }

    pub fn overlaps_y(&self, other: &BBox) -> bool {
        self.y0 <= other.y1 && other.y0 <= self.y1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub id: TokenId,
    pub text: String,
    pub bbox: BBox,
    pub line_id: LineId,
}

/// An OCR line. Token ids are ordered left to right by `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub id: LineId,
    pub token_ids: Vec<TokenId>,
    pub bbox: BBox,
}

/// One OCR'd page. Immutable after construction; every invariant is checked
/// by [`Page::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    page_no: u32,
    width_px: u32,
    height_px: u32,
    tokens: Vec<Token>,
    lines: Vec<Line>,
    token_index: HashMap<TokenId, usize>,
    line_index: HashMap<LineId, usize>,
}

impl Page {
    /// Build a page from line boxes and tokens. Line membership is derived
    /// from each token's `line_id`.
    pub fn new(
        page_no: u32,
        width_px: u32,
        height_px: u32,
        line_boxes: Vec<(LineId, BBox)>,
        tokens: Vec<Token>,
    ) -> Result<Self> {
        if page_no == 0 {
            return Err(Error::Schema("page_no is 1-based".into()));
        }
        let mut line_index = HashMap::with_capacity(line_boxes.len());
        let mut lines = Vec::with_capacity(line_boxes.len());
        for (id, bbox) in line_boxes {
            bbox.validate()
                .map_err(|e| Error::Schema(format!("line {id}: {e}")))?;
            if line_index.insert(id, lines.len()).is_some() {
                return Err(Error::Schema(format!("duplicate line id {id}")));
            }
            lines.push(Line {
                id,
                token_ids: Vec::new(),
                bbox,
            });
        }

        let mut token_index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            tok.bbox
                .validate()
                .map_err(|e| Error::Schema(format!("token {}: {e}", tok.id)))?;
            if tok.text.is_empty() {
                return Err(Error::Schema(format!("token {} has empty text", tok.id)));
            }
            if token_index.insert(tok.id, i).is_some() {
                return Err(Error::Schema(format!("duplicate token id {}", tok.id)));
            }
            let Some(&li) = line_index.get(&tok.line_id) else {
                return Err(Error::Integrity(format!(
                    "token {} references missing line {}",
                    tok.id, tok.line_id
                )));
            };
            let line = &mut lines[li];
            if !line.bbox.contains(&tok.bbox) {
                return Err(Error::Integrity(format!(
                    "token {} lies outside its line {} box",
                    tok.id, line.id
                )));
            }
            line.token_ids.push(tok.id);
        }

        for line in &mut lines {
            if line.token_ids.is_empty() {
                return Err(Error::Integrity(format!("line {} has no tokens", line.id)));
            }
            line.token_ids.sort_by(|a, b| {
                let ta = &tokens[token_index[a]];
                let tb = &tokens[token_index[b]];
                ta.bbox.x0.total_cmp(&tb.bbox.x0).then(a.cmp(b))
            });
        }

        Ok(Page {
            page_no,
            width_px,
            height_px,
            tokens,
            lines,
            token_index,
            line_index,
        })
    }

    pub fn page_no(&self) -> u32 {
        self.page_no
    }

    pub fn width_px(&self) -> u32 {
        self.width_px
    }

    pub fn height_px(&self) -> u32 {
        self.height_px
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn token(&self, id: TokenId) -> Option<&Token> {
        self.token_index.get(&id).map(|&i| &self.tokens[i])
    }

    pub fn line(&self, id: LineId) -> Option<&Line> {
        self.line_index.get(&id).map(|&i| &self.lines[i])
    }

    pub fn token_text(&self, id: TokenId) -> Result<&str> {
        self.token(id)
            .map(|t| t.text.as_str())
            .ok_or_else(|| Error::Integrity(format!("token {id} not on page {}", self.page_no)))
    }

    pub fn contains_token(&self, id: TokenId) -> bool {
        self.token_index.contains_key(&id)
    }
}

/// Coarse grouping of entity types used by selection and the rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Patient,
    Physician,
    Exam,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Patient, Category::Physician, Category::Exam];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    PatientName,
    PatientDob,
    PatientGender,
    PatientAddress,
    PhysicianName,
    PhysicianAddress,
    ExamProcedure,
    ExamReason,
}

impl EntityType {
    pub const ALL: [EntityType; 8] = [
        EntityType::PatientName,
        EntityType::PatientDob,
        EntityType::PatientGender,
        EntityType::PatientAddress,
        EntityType::PhysicianName,
        EntityType::PhysicianAddress,
        EntityType::ExamProcedure,
        EntityType::ExamReason,
    ];

    pub fn category(self) -> Category {
        use EntityType::*;
        match self {
            PatientName | PatientDob | PatientGender | PatientAddress => Category::Patient,
            PhysicianName | PhysicianAddress => Category::Physician,
            ExamProcedure | ExamReason => Category::Exam,
        }
    }

    pub fn is_address(self) -> bool {
        matches!(self, EntityType::PatientAddress | EntityType::PhysicianAddress)
    }

    pub fn is_name(self) -> bool {
        matches!(self, EntityType::PatientName | EntityType::PhysicianName)
    }

    /// Patient and physician types keep a single value per page; exam types
    /// keep every distinct value.
    pub fn is_single_valued(self) -> bool {
        self.category() != Category::Exam
    }

    pub fn as_str(self) -> &'static str {
        use EntityType::*;
        match self {
            PatientName => "PatientName",
            PatientDob => "PatientDob",
            PatientGender => "PatientGender",
            PatientAddress => "PatientAddress",
            PhysicianName => "PhysicianName",
            PhysicianAddress => "PhysicianAddress",
            ExamProcedure => "ExamProcedure",
            ExamReason => "ExamReason",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// A token-level BIO label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioTag {
    O,
    B(EntityType),
    I(EntityType),
}

impl BioTag {
    /// All 17 tag values: `O` followed by `B-`/`I-` for each entity type.
    pub fn all() -> Vec<BioTag> {
        let mut tags = vec![BioTag::O];
        for t in EntityType::ALL {
            tags.push(BioTag::B(t));
            tags.push(BioTag::I(t));
        }
        tags
    }

    pub fn entity_type(self) -> Option<EntityType> {
        match self {
            BioTag::O => None,
            BioTag::B(t) | BioTag::I(t) => Some(t),
        }
    }

    pub fn is_outside(self) -> bool {
        self == BioTag::O
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::O => f.write_str("O"),
            BioTag::B(t) => write!(f, "B-{t}"),
            BioTag::I(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for BioTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(BioTag::O);
        }
        let unknown = || Error::UnknownLabel(s.to_string());
        let (prefix, ty) = s.split_once('-').ok_or_else(unknown)?;
        let ty: EntityType = ty.parse().map_err(|_| unknown())?;
        match prefix {
            "B" => Ok(BioTag::B(ty)),
            "I" => Ok(BioTag::I(ty)),
            _ => Err(unknown()),
        }
    }
}

impl Serialize for BioTag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BioTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanSource {
    Gold,
    Predicted,
    Corrected,
}

/// A typed, ordered set of token references on one page.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntitySpan {
    pub entity_type: EntityType,
    pub token_ids: Vec<TokenId>,
    pub source: SpanSource,
}

impl EntitySpan {
    pub fn new(entity_type: EntityType, token_ids: Vec<TokenId>, source: SpanSource) -> Self {
        EntitySpan {
            entity_type,
            token_ids,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Non-empty, duplicate-free, every id on `page`.
    pub fn validate_on(&self, page: &Page) -> Result<()> {
        if self.token_ids.is_empty() {
            return Err(Error::Schema(format!("{} span has no tokens", self.entity_type)));
        }
        let mut seen = HashSet::with_capacity(self.token_ids.len());
        for &id in &self.token_ids {
            if !seen.insert(id) {
                return Err(Error::Schema(format!(
                    "{} span repeats token {id}",
                    self.entity_type
                )));
            }
            if !page.contains_token(id) {
                return Err(Error::Integrity(format!(
                    "{} span references token {id} not on page {}",
                    self.entity_type,
                    page.page_no()
                )));
            }
        }
        Ok(())
    }

    /// Reorder token ids by reading-order rank. Ids without a rank go last,
    /// in id order.
    pub fn sort_by_rank(&mut self, order: &ReadingOrder) {
        self.token_ids
            .sort_by_key(|id| (order.rank(*id).unwrap_or(usize::MAX), *id));
    }

    pub fn first_rank(&self, order: &ReadingOrder) -> Option<usize> {
        self.token_ids.iter().filter_map(|&id| order.rank(id)).min()
    }

    pub fn last_rank(&self, order: &ReadingOrder) -> Option<usize> {
        self.token_ids.iter().filter_map(|&id| order.rank(id)).max()
    }

    pub fn token_set(&self) -> HashSet<TokenId> {
        self.token_ids.iter().copied().collect()
    }

    pub fn with_source(mut self, source: SpanSource) -> Self {
        self.source = source;
        self
    }
}

/// Member token texts joined by single spaces, in stored order.
pub fn entity_text(span: &EntitySpan, page: &Page) -> Result<String> {
    let parts = span
        .token_ids
        .iter()
        .map(|&id| page.token_text(id))
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.join(" "))
}

/// Case-folded, whitespace-collapsed text used for voting and dedup.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Total order over a page's tokens: `rank(token)` is a bijection onto
/// `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReadingOrder {
    order: Vec<TokenId>,
    rank: HashMap<TokenId, usize>,
}

impl ReadingOrder {
    pub fn from_sequence(order: Vec<TokenId>) -> Result<Self> {
        let mut rank = HashMap::with_capacity(order.len());
        for (i, &id) in order.iter().enumerate() {
            if rank.insert(id, i).is_some() {
                return Err(Error::Integrity(format!(
                    "token {id} appears twice in reading order"
                )));
            }
        }
        Ok(ReadingOrder { order, rank })
    }

    pub fn rank(&self, id: TokenId) -> Option<usize> {
        self.rank.get(&id).copied()
    }

    pub fn token_at(&self, rank: usize) -> Option<TokenId> {
        self.order.get(rank).copied()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.order
    }

    /// True when the order covers exactly the tokens of `page`.
    pub fn covers(&self, page: &Page) -> bool {
        self.order.len() == page.tokens().len()
            && page.tokens().iter().all(|t| self.rank.contains_key(&t.id))
    }
}
