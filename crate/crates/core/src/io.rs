//! JSON interchange files.
//!
//! Every artifact is a UTF-8 JSON object carrying `"schema_version": "1"`.
//! Unknown top-level fields are logged and ignored; unknown entity types or
//! tags are hard errors.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::model::{BBox, BioTag, EntitySpan, EntityType, LineId, Page, SpanSource, Token, TokenId};

pub const SCHEMA_VERSION: &str = "1";

fn check_version(version: &str, what: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "{what}: unsupported schema_version {version:?} (expected {SCHEMA_VERSION:?})"
        )));
    }
    Ok(())
}

fn warn_unknown(extra: &BTreeMap<String, Value>, what: &str) {
    for key in extra.keys() {
        log::warn!("{what}: ignoring unknown field `{key}`");
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types always serialize");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, to_json_string(value)).map_err(|e| Error::io(path, e))
}

fn parse_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
}

// ---------------------------------------------------------------------------
// OCR pages
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct PageDoc {
    schema_version: String,
    page_no: u32,
    width_px: u32,
    height_px: u32,
    lines: Vec<LineDoc>,
    tokens: Vec<TokenDoc>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LineDoc {
    id: LineId,
    bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct TokenDoc {
    id: TokenId,
    text: String,
    bbox: [f64; 4],
    line_id: LineId,
}

impl PageDoc {
    fn into_page(self) -> Result<Page> {
        check_version(&self.schema_version, "ocr page")?;
        warn_unknown(&self.extra, "ocr page");
        let lines = self
            .lines
            .into_iter()
            .map(|l| {
                BBox::from_array(l.bbox)
                    .map(|b| (l.id, b))
                    .map_err(|e| Error::Schema(format!("line {}: {e}", l.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let tokens = self
            .tokens
            .into_iter()
            .map(|t| {
                let bbox = BBox::from_array(t.bbox)
                    .map_err(|e| Error::Schema(format!("token {}: {e}", t.id)))?;
                Ok(Token {
                    id: t.id,
                    text: t.text,
                    bbox,
                    line_id: t.line_id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Page::new(self.page_no, self.width_px, self.height_px, lines, tokens)
    }

    fn from_page(page: &Page) -> Self {
        PageDoc {
            schema_version: SCHEMA_VERSION.into(),
            page_no: page.page_no(),
            width_px: page.width_px(),
            height_px: page.height_px(),
            lines: page
                .lines()
                .iter()
                .map(|l| LineDoc {
                    id: l.id,
                    bbox: l.bbox.to_array(),
                })
                .collect(),
            tokens: page
                .tokens()
                .iter()
                .map(|t| TokenDoc {
                    id: t.id,
                    text: t.text.clone(),
                    bbox: t.bbox.to_array(),
                    line_id: t.line_id,
                })
                .collect(),
            extra: BTreeMap::new(),
        }
    }
}

pub fn parse_ocr_page(text: &str) -> Result<Page> {
    parse_str::<PageDoc>(text)?.into_page()
}

pub fn read_ocr_page(path: &Path) -> Result<Page> {
    read_json::<PageDoc>(path)?
        .into_page()
        .map_err(|e| prefix_path(e, path))
}

pub fn ocr_page_to_string(page: &Page) -> String {
    to_json_string(&PageDoc::from_page(page))
}

pub fn write_ocr_page(page: &Page, path: &Path) -> Result<()> {
    write_json(path, &PageDoc::from_page(page))
}

fn prefix_path(e: Error, path: &Path) -> Error {
    let p = path.display();
    match e {
        Error::Schema(m) => Error::Schema(format!("{p}: {m}")),
        Error::Integrity(m) => Error::Integrity(format!("{p}: {m}")),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Gold annotations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationFile {
    pub page_no: u32,
    pub entities: Vec<EntitySpan>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationDoc {
    schema_version: String,
    page_no: u32,
    entities: Vec<SpanDoc>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpanDoc {
    #[serde(rename = "type")]
    entity_type: String,
    token_ids: Vec<TokenId>,
}

impl AnnotationFile {
    /// Page numbers agree and every span resolves on `page`.
    pub fn check_against(&self, page: &Page) -> Result<()> {
        if self.page_no != page.page_no() {
            return Err(Error::Integrity(format!(
                "annotations are for page {} but OCR page is {}",
                self.page_no,
                page.page_no()
            )));
        }
        self.entities.iter().try_for_each(|e| e.validate_on(page))
    }

    fn from_doc(doc: AnnotationDoc) -> Result<Self> {
        check_version(&doc.schema_version, "annotations")?;
        warn_unknown(&doc.extra, "annotations");
        let entities = doc
            .entities
            .into_iter()
            .map(|s| {
                let ty: EntityType = s.entity_type.parse()?;
                if s.token_ids.is_empty() {
                    return Err(Error::Schema(format!("{ty} annotation has no tokens")));
                }
                Ok(EntitySpan::new(ty, s.token_ids, SpanSource::Gold))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AnnotationFile {
            page_no: doc.page_no,
            entities,
        })
    }

    fn to_doc(&self) -> AnnotationDoc {
        AnnotationDoc {
            schema_version: SCHEMA_VERSION.into(),
            page_no: self.page_no,
            entities: self
                .entities
                .iter()
                .map(|e| SpanDoc {
                    entity_type: e.entity_type.to_string(),
                    token_ids: e.token_ids.clone(),
                })
                .collect(),
            extra: BTreeMap::new(),
        }
    }
}

pub fn parse_annotations(text: &str) -> Result<AnnotationFile> {
    AnnotationFile::from_doc(parse_str(text)?)
}

pub fn read_annotations(path: &Path) -> Result<AnnotationFile> {
    AnnotationFile::from_doc(read_json(path)?).map_err(|e| prefix_path(e, path))
}

pub fn annotations_to_string(ann: &AnnotationFile) -> String {
    to_json_string(&ann.to_doc())
}

pub fn write_annotations(ann: &AnnotationFile, path: &Path) -> Result<()> {
    write_json(path, &ann.to_doc())
}

// ---------------------------------------------------------------------------
// Token predictions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TokenPrediction {
    pub token_id: TokenId,
    pub tag: BioTag,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub page_no: u32,
    pub tags: Vec<TokenPrediction>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionDoc {
    schema_version: String,
    page_no: u32,
    tags: Vec<TagDoc>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TagDoc {
    token_id: TokenId,
    tag: String,
    #[serde(default = "default_confidence")]
    confidence: f64,
}

fn default_confidence() -> f64 {
    1.0
}

impl PredictionFile {
    /// Every page token appears exactly once and nothing else does.
    pub fn check_against(&self, page: &Page) -> Result<()> {
        if self.page_no != page.page_no() {
            return Err(Error::Integrity(format!(
                "predictions are for page {} but OCR page is {}",
                self.page_no,
                page.page_no()
            )));
        }
        let mut seen = HashSet::with_capacity(self.tags.len());
        for p in &self.tags {
            if !page.contains_token(p.token_id) {
                return Err(Error::Integrity(format!(
                    "prediction for token {} not on page {}",
                    p.token_id,
                    page.page_no()
                )));
            }
            seen.insert(p.token_id);
        }
        let missing: Vec<TokenId> = page
            .tokens()
            .iter()
            .map(|t| t.id)
            .filter(|id| !seen.contains(id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Schema(format!(
                "predictions for page {} miss tokens {missing:?}",
                page.page_no()
            )));
        }
        Ok(())
    }

    fn from_doc(doc: PredictionDoc) -> Result<Self> {
        check_version(&doc.schema_version, "predictions")?;
        warn_unknown(&doc.extra, "predictions");
        let mut seen = HashSet::with_capacity(doc.tags.len());
        let tags = doc
            .tags
            .into_iter()
            .map(|t| {
                if !seen.insert(t.token_id) {
                    return Err(Error::Schema(format!(
                        "token {} predicted more than once",
                        t.token_id
                    )));
                }
                if !(0.0..=1.0).contains(&t.confidence) {
                    return Err(Error::Schema(format!(
                        "token {} confidence {} outside [0,1]",
                        t.token_id, t.confidence
                    )));
                }
                Ok(TokenPrediction {
                    token_id: t.token_id,
                    tag: t.tag.parse()?,
                    confidence: t.confidence,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PredictionFile {
            page_no: doc.page_no,
            tags,
        })
    }

    fn to_doc(&self) -> PredictionDoc {
        PredictionDoc {
            schema_version: SCHEMA_VERSION.into(),
            page_no: self.page_no,
            tags: self
                .tags
                .iter()
                .map(|t| TagDoc {
                    token_id: t.token_id,
                    tag: t.tag.to_string(),
                    confidence: t.confidence,
                })
                .collect(),
            extra: BTreeMap::new(),
        }
    }
}

pub fn parse_predictions(text: &str) -> Result<PredictionFile> {
    PredictionFile::from_doc(parse_str(text)?)
}

pub fn read_predictions(path: &Path) -> Result<PredictionFile> {
    PredictionFile::from_doc(read_json(path)?).map_err(|e| prefix_path(e, path))
}

pub fn predictions_to_string(pred: &PredictionFile) -> String {
    to_json_string(&pred.to_doc())
}

pub fn write_predictions(pred: &PredictionFile, path: &Path) -> Result<()> {
    write_json(path, &pred.to_doc())
}

// ---------------------------------------------------------------------------
// Extracted entities
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedEntity {
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    pub token_ids: Vec<TokenId>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<usize>,
}

impl ExtractedEntity {
    pub fn to_span(&self, source: SpanSource) -> EntitySpan {
        EntitySpan::new(self.entity_type, self.token_ids.clone(), source)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntitiesFile {
    pub page_no: u32,
    pub entities: Vec<ExtractedEntity>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntitiesDoc {
    schema_version: String,
    page_no: u32,
    entities: Vec<Value>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

impl EntitiesFile {
    fn from_doc(doc: EntitiesDoc) -> Result<Self> {
        check_version(&doc.schema_version, "entities")?;
        warn_unknown(&doc.extra, "entities");
        let entities = doc
            .entities
            .into_iter()
            .map(|v| {
                // Surface unknown types as label errors, not generic JSON errors.
                if let Some(ty) = v.get("type").and_then(Value::as_str) {
                    ty.parse::<EntityType>()?;
                }
                serde_json::from_value::<ExtractedEntity>(v).map_err(|e| Error::Schema(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EntitiesFile {
            page_no: doc.page_no,
            entities,
        })
    }

    fn to_doc(&self) -> EntitiesDoc {
        EntitiesDoc {
            schema_version: SCHEMA_VERSION.into(),
            page_no: self.page_no,
            entities: self
                .entities
                .iter()
                .map(|e| serde_json::to_value(e).expect("entity serializes"))
                .collect(),
            extra: BTreeMap::new(),
        }
    }
}

pub fn parse_entities(text: &str) -> Result<EntitiesFile> {
    EntitiesFile::from_doc(parse_str(text)?)
}

pub fn read_entities(path: &Path) -> Result<EntitiesFile> {
    EntitiesFile::from_doc(read_json(path)?).map_err(|e| prefix_path(e, path))
}

pub fn entities_to_string(file: &EntitiesFile) -> String {
    to_json_string(&file.to_doc())
}

pub fn write_entities(file: &EntitiesFile, path: &Path) -> Result<()> {
    write_json(path, &file.to_doc())
}

// ---------------------------------------------------------------------------
// Layout groups (debug dump, also the hand-off between staged commands)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub group_id: usize,
    pub column_index: usize,
    pub bbox: [f64; 4],
    pub line_ids: Vec<LineId>,
    pub token_ids: Vec<TokenId>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupsFile {
    pub schema_version: String,
    pub page_no: u32,
    pub groups: Vec<GroupRecord>,
    pub reading_order: Vec<TokenId>,
}

pub fn read_groups(path: &Path) -> Result<GroupsFile> {
    let doc: GroupsFile = read_json(path)?;
    check_version(&doc.schema_version, "groups")?;
    Ok(doc)
}

pub fn write_groups(file: &GroupsFile, path: &Path) -> Result<()> {
    write_json(path, file)
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

pub fn report_to_string(report: &MetricsReport) -> String {
    to_json_string(report)
}

pub fn parse_report(text: &str) -> Result<MetricsReport> {
    let report: MetricsReport = parse_str(text)?;
    check_version(&report.schema_version, "report")?;
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let report: MetricsReport = read_json(path)?;
    check_version(&report.schema_version, "report")?;
    Ok(report)
}

pub fn write_report(report: &MetricsReport, path: &Path) -> Result<()> {
    write_json(path, report)
}
