//! Synthetic referral pages with gold labels.
//!
//! Pages are built row by row from small made-up vocabularies (no real
//! PHI). Every deliberate defect (label noise, prediction noise, injected
//! phone numbers, dropped filler tokens) is written to an injection record
//! so tests can check the pipeline against it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, AnnotationFile, PredictionFile};
use crate::labels::{to_bio, SpanRecord};
use crate::layout::{group_page, GroupingConfig};
use crate::model::{BBox, BioTag, EntitySpan, EntityType, LineId, Page, ReadingOrder, SpanSource, Token, TokenId};
use crate::perturb::{derive_seed, maybe_perturb, ErrorKind};
use crate::rules::RuleSet;
use crate::tagging::TagSequence;

/// Vertical distance between consecutive rows.
pub const ROW_SPACING: f64 = 0.03;
pub const LINE_HEIGHT: f64 = 0.012;
pub const CHAR_WIDTH: f64 = 0.0075;
/// Whitespace between the two columns of a two-column page.
pub const GUTTER: f64 = 0.08;

const LEFT: f64 = 0.06;
const RIGHT_EDGE: f64 = 0.96;
const FORM_VALUE_X: f64 = 0.34;
const PAGE_PX: (u32, u32) = (2550, 3300);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutKind {
    SingleColumnForm,
    TwoColumn,
    LabelAbove,
    LabelLeft,
    Mixed,
}

impl LayoutKind {
    pub const ALL: [LayoutKind; 5] = [
        LayoutKind::SingleColumnForm,
        LayoutKind::TwoColumn,
        LayoutKind::LabelAbove,
        LayoutKind::LabelLeft,
        LayoutKind::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LayoutKind::SingleColumnForm => "single-column-form",
            LayoutKind::TwoColumn => "two-column",
            LayoutKind::LabelAbove => "label-above",
            LayoutKind::LabelLeft => "label-left",
            LayoutKind::Mixed => "mixed",
        }
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayoutKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown layout {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    /// Standard deviation of per-line box displacement.
    pub jitter: f64,
    /// Probability of dropping each filler token.
    pub dropout: f64,
    /// Probability that a gold span (and, independently, a simulated
    /// prediction) carries one error.
    pub label_noise: f64,
    /// Print phone numbers after some addresses.
    pub phone_injection: bool,
    /// Start some simulated predictions with `I-`.
    pub i_start_injection: bool,
}

impl NoiseProfile {
    pub fn none() -> Self {
        NoiseProfile {
            jitter: 0.0,
            dropout: 0.0,
            label_noise: 0.0,
            phone_injection: false,
            i_start_injection: false,
        }
    }

    pub fn heavy() -> Self {
        NoiseProfile {
            jitter: 0.001,
            dropout: 0.1,
            label_noise: 0.3,
            phone_injection: true,
            i_start_injection: true,
        }
    }
}

impl Default for NoiseProfile {
    fn default() -> Self {
        NoiseProfile::none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageTemplate {
    pub layout: LayoutKind,
    pub roster: BTreeSet<EntityType>,
    pub noise: NoiseProfile,
}

impl PageTemplate {
    pub fn new(layout: LayoutKind, noise: NoiseProfile) -> Self {
        PageTemplate {
            layout,
            roster: EntityType::ALL.into_iter().collect(),
            noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.noise;
        if !(n.jitter >= 0.0 && n.jitter < ROW_SPACING / 4.0) {
            return Err(Error::Input(format!(
                "jitter {} must be in [0, {})",
                n.jitter,
                ROW_SPACING / 4.0
            )));
        }
        for (name, r) in [("dropout", n.dropout), ("label_noise", n.label_noise)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Input(format!("{name} {r} outside [0,1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhoneFormat {
    /// `(512) 555-1212`
    ParenSpace,
    /// `512-555-1212`
    Dashed,
    /// `512.555.1212`
    Dotted,
    /// `(512)555-1212`
    ParenTight,
    /// `512 555 1212`
    Spaced,
    /// `5125551212`
    Bare,
}

impl PhoneFormat {
    pub const ALL: [PhoneFormat; 6] = [
        PhoneFormat::ParenSpace,
        PhoneFormat::Dashed,
        PhoneFormat::Dotted,
        PhoneFormat::ParenTight,
        PhoneFormat::Spaced,
        PhoneFormat::Bare,
    ];

    pub fn render(self, area: u32, exchange: u32, line: u32) -> Vec<String> {
        match self {
            PhoneFormat::ParenSpace => vec![format!("({area})"), format!("{exchange}-{line:04}")],
            PhoneFormat::Dashed => vec![format!("{area}-{exchange}-{line:04}")],
            PhoneFormat::Dotted => vec![format!("{area}.{exchange}.{line:04}")],
            PhoneFormat::ParenTight => vec![format!("({area}){exchange}-{line:04}")],
            PhoneFormat::Spaced => vec![area.to_string(), exchange.to_string(), format!("{line:04}")],
            PhoneFormat::Bare => vec![format!("{area}{exchange}{line:04}")],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanInjection {
    pub kind: ErrorKind,
    pub clean: SpanRecord,
    pub noisy: SpanRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhoneInjection {
    pub address_type: EntityType,
    pub format: PhoneFormat,
    /// Context word then the phone tokens, in reading order.
    pub token_ids: Vec<TokenId>,
    /// Leading numeric / cardinal tokens of the address it follows.
    pub street_prefix: Vec<TokenId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub label_noise: Vec<SpanInjection>,
    pub prediction_noise: Vec<SpanInjection>,
    /// Predictions whose first tag was turned from `B-` into `I-`.
    pub i_starts: Vec<SpanRecord>,
    pub phones: Vec<PhoneInjection>,
    pub dropped_tokens: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionSummary {
    pub label_noise: usize,
    pub prediction_noise: usize,
    pub i_starts: usize,
    pub phones: usize,
    pub dropped_tokens: usize,
}

impl InjectionRecord {
    pub fn summary(&self) -> InjectionSummary {
        InjectionSummary {
            label_noise: self.label_noise.len(),
            prediction_noise: self.prediction_noise.len(),
            i_starts: self.i_starts.len(),
            phones: self.phones.len(),
            dropped_tokens: self.dropped_tokens,
        }
    }
}

/// One generated page with everything derived from it.
#[derive(Debug, Clone)]
pub struct GeneratedPage {
    pub layout: LayoutKind,
    pub page: Page,
    pub order: ReadingOrder,
    /// Clean gold labels.
    pub gold: AnnotationFile,
    /// Gold labels with label noise applied.
    pub raw_gold: AnnotationFile,
    /// Simulated tagger output derived from the clean gold.
    pub predictions: PredictionFile,
    pub injections: InjectionRecord,
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

const FIRST: &[&str] = &[
    "John", "Mary", "Robert", "Linda", "James", "Patricia", "Michael", "Barbara", "David", "Susan", "William",
    "Jessica", "Carlos", "Ana", "Wei", "Priya", "Ahmed", "Fatima", "Olga", "Kenji", "Grace", "Henry", "Nora",
    "Samuel",
];
const LAST: &[&str] = &[
    "Smith", "Johnson", "Garcia", "Nguyen", "Patel", "Brown", "Lee", "Martinez", "Kim", "Walker", "Hughes",
    "Rivera", "Chen", "Okafor", "Novak", "Schmidt", "Murphy", "Cohen", "Tanaka", "Silva", "Cruz", "Roe",
    "Bennett", "Fischer", "O'Brien",
];
const CREDENTIALS: &[&str] = &["MD", "DO", "NP", "PA-C", "M.D.", "D.O.", "FNP", "MBBS", "DPM"];
const STREETS: &[&str] = &[
    "Lamar", "Oak", "Maple", "Congress", "Elm", "Cedar", "Riverside", "Guadalupe", "Burnet", "Pecan", "Walnut",
    "Lakeview", "Highland", "Mesa", "Sunset", "Willow",
];
const SUFFIXES: &[&str] = &["St", "Ave", "Blvd", "Dr", "Rd", "Ln", "Way", "Ct", "Pkwy"];
const CITIES: &[(&str, &str)] = &[
    ("Austin", "TX"),
    ("Denver", "CO"),
    ("Portland", "OR"),
    ("Columbus", "OH"),
    ("Madison", "WI"),
    ("Raleigh", "NC"),
    ("Tucson", "AZ"),
    ("Boise", "ID"),
    ("Omaha", "NE"),
    ("Albany", "NY"),
];
const EXAMS: &[&str] = &[
    "MRI BRAIN W/O CONTRAST",
    "CT CHEST WITH CONTRAST",
    "XR LUMBAR SPINE 2 VIEWS",
    "US ABDOMEN COMPLETE",
    "MRI KNEE LEFT",
    "MAMMOGRAM SCREENING BILATERAL",
    "CT HEAD W/O CONTRAST",
    "ECHOCARDIOGRAM",
];
const REASONS: &[&str] = &[
    "chronic headache",
    "low back pain",
    "shortness of breath",
    "follow up lung nodule",
    "right knee pain after fall",
    "abdominal pain",
    "screening",
    "dizziness and nausea",
];
const GENDERS: &[&str] = &["Male", "Female", "M", "F"];
const PHONE_CONTEXT: &[&str] = &["Ph:", "Phone:", "Tel:", "Fax:", "Cell:"];
const HEADERS: &[&str] = &["Radiology Referral Form", "Referral Request", "Outpatient Imaging Order"];
const FOOTERS: &[&str] = &[
    "Thank you for your referral",
    "Please call with any questions",
    "Page 1 of 1",
];

fn labels_for(ty: EntityType) -> &'static [&'static str] {
    match ty {
        EntityType::PatientName => &["Patient Name:", "Name:", "Patient:"],
        EntityType::PatientDob => &["DOB:", "Date of Birth:"],
        EntityType::PatientGender => &["Sex:", "Gender:"],
        EntityType::PatientAddress => &["Address:", "Patient Address:", "Home Address:"],
        EntityType::PhysicianName => &[
            "Referring Physician:",
            "Physician:",
            "Provider:",
            "Ordering Physician:",
        ],
        EntityType::PhysicianAddress => &["Office Address:", "Physician Address:", "Provider Address:"],
        EntityType::ExamProcedure => &["Exam:", "Procedure:", "Exam Requested:"],
        EntityType::ExamReason => &["Reason:", "Indication:", "Diagnosis:"],
    }
}

const CONTINUATION_LABEL: &str = "City, State, Zip:";

// ---------------------------------------------------------------------------
// Page construction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Filler,
    Label,
    Value(usize),
    Phone(usize),
}

#[derive(Debug, Clone)]
struct Word {
    text: String,
    role: Role,
}

fn words(text: &str, role: Role) -> Vec<Word> {
    text.split_whitespace()
        .map(|t| Word {
            text: t.to_string(),
            role,
        })
        .collect()
}

fn width(ws: &[Word]) -> f64 {
    if ws.is_empty() {
        return 0.0;
    }
    let chars: usize = ws.iter().map(|w| w.text.chars().count()).sum();
    (chars + ws.len() - 1) as f64 * CHAR_WIDTH
}

#[derive(Debug, Clone)]
struct LineSpec {
    x0: f64,
    row: usize,
    words: Vec<Word>,
}

/// A field to place: label, one or two value rows, optional phone.
struct Field {
    label: Vec<Word>,
    rows: Vec<Vec<Word>>,
    phone: Vec<Word>,
}

#[derive(Debug, Clone, Copy)]
enum Style {
    /// Label and value on one row, `one_line` = a single OCR line.
    Inline { one_line: bool, gap: f64 },
    Above,
    Form,
}

struct Builder {
    lines: Vec<LineSpec>,
}

impl Builder {
    fn line(&mut self, row: usize, x0: f64, words: Vec<Word>) {
        if !words.is_empty() {
            self.lines.push(LineSpec { x0, row, words });
        }
    }

    fn inline(&mut self, row: usize, x: f64, label: &[Word], value: Vec<Word>, one_line: bool, gap: f64) {
        if one_line {
            let mut all = label.to_vec();
            all.extend(value);
            self.line(row, x, all);
        } else {
            let vx = x + width(label) + gap;
            self.line(row, x, label.to_vec());
            self.line(row, vx, value);
        }
    }

    /// Place `field` at `row`; returns the number of rows used.
    fn place(&mut self, row: usize, x: f64, field: &Field, style: Style) -> usize {
        let cont = words(CONTINUATION_LABEL, Role::Label);
        let n = field.rows.len();
        let row_words = |i: usize| {
            let mut w = field.rows[i].clone();
            if i == n - 1 {
                w.extend(field.phone.iter().cloned());
            }
            w
        };
        let mut used = 0;
        for i in 0..n {
            let label: &[Word] = if i == 0 { &field.label } else { &cont };
            match style {
                Style::Inline { one_line, gap } => {
                    self.inline(row + used, x, label, row_words(i), one_line, gap);
                    used += 1;
                }
                Style::Above => {
                    self.line(row + used, x, label.to_vec());
                    self.line(row + used + 1, x, row_words(i));
                    used += 2;
                }
                Style::Form => {
                    self.line(row + used, x, label.to_vec());
                    self.line(row + used, FORM_VALUE_X.max(x + width(label) + 0.06), row_words(i));
                    used += 1;
                }
            }
        }
        used
    }

    fn fits(x: f64, field: &Field, style: Style, edge: f64) -> bool {
        let cont_w = width(&words(CONTINUATION_LABEL, Role::Label));
        field.rows.iter().enumerate().all(|(i, r)| {
            let mut w = r.clone();
            if i == field.rows.len() - 1 {
                w.extend(field.phone.iter().cloned());
            }
            let lw = if i == 0 { width(&field.label) } else { cont_w };
            let end = match style {
                Style::Inline { gap, .. } => x + lw + gap + width(&w),
                Style::Above => x + lw.max(width(&w)),
                Style::Form => FORM_VALUE_X.max(x + lw + 0.06) + width(&w),
            };
            end <= edge
        })
    }
}

struct Content {
    /// Entity type per value index.
    types: Vec<EntityType>,
    fields: Vec<(EntityType, Field)>,
    phone_formats: Vec<(usize, PhoneFormat)>,
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &'a [&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty vocabulary")
}

fn person_name<R: Rng>(rng: &mut R) -> String {
    let first = pick(rng, FIRST);
    let last = pick(rng, LAST);
    if rng.random_bool(0.25) {
        let initial = (b'A' + rng.random_range(0..26u8)) as char;
        format!("{first} {initial}. {last}")
    } else {
        format!("{first} {last}")
    }
}

fn street<R: Rng>(rng: &mut R) -> String {
    let number = rng.random_range(1..10000u32);
    let cardinal = if rng.random_bool(0.35) {
        format!(" {}", pick(rng, &["N", "S", "E", "W"]))
    } else {
        String::new()
    };
    format!("{number}{cardinal} {} {}", pick(rng, STREETS), pick(rng, SUFFIXES))
}

fn city<R: Rng>(rng: &mut R) -> String {
    let (c, s) = CITIES.choose(rng).expect("cities");
    format!("{c}, {s} {}", rng.random_range(10000..100000u32))
}

fn build_content<R: Rng>(rng: &mut R, tpl: &PageTemplate, allow_two_row: bool) -> Content {
    let mut types = Vec::new();
    let mut fields = Vec::new();
    let mut phone_formats = Vec::new();
    let mut phone_count = 0;

    for ty in EntityType::ALL {
        if !tpl.roster.contains(&ty) {
            continue;
        }
        let copies = if ty == EntityType::ExamProcedure && rng.random_bool(0.3) { 2 } else { 1 };
        let mut used_exams = Vec::new();
        for _ in 0..copies {
            let idx = types.len();
            types.push(ty);
            let role = Role::Value(idx);
            let label = words(pick(rng, labels_for(ty)), Role::Label);
            let rows: Vec<Vec<Word>> = match ty {
                EntityType::PatientName => vec![words(&person_name(rng), role)],
                EntityType::PatientDob => {
                    let d = format!(
                        "{:02}/{:02}/{}",
                        rng.random_range(1..=12u32),
                        rng.random_range(1..=28u32),
                        rng.random_range(1930..=2010u32)
                    );
                    vec![words(&d, role)]
                }
                EntityType::PatientGender => vec![words(pick(rng, GENDERS), role)],
                EntityType::PhysicianName => {
                    let name = format!("{} {} {}", pick(rng, FIRST), pick(rng, LAST), pick(rng, CREDENTIALS));
                    vec![words(&name, role)]
                }
                EntityType::PatientAddress | EntityType::PhysicianAddress => {
                    if allow_two_row && rng.random_bool(0.5) {
                        vec![words(&street(rng), role), words(&city(rng), role)]
                    } else {
                        vec![words(&format!("{} {}", street(rng), city(rng)), role)]
                    }
                }
                EntityType::ExamProcedure => {
                    let mut e = pick(rng, EXAMS);
                    while used_exams.contains(&e) {
                        e = pick(rng, EXAMS);
                    }
                    used_exams.push(e);
                    vec![words(e, role)]
                }
                EntityType::ExamReason => vec![words(pick(rng, REASONS), role)],
            };
            let mut phone = Vec::new();
            if ty.is_address() && tpl.noise.phone_injection && rng.random_bool(0.6) {
                let pi = phone_count;
                phone_count += 1;
                let format = *PhoneFormat::ALL.choose(rng).expect("formats");
                phone.extend(words(pick(rng, PHONE_CONTEXT), Role::Phone(pi)));
                let parts = format.render(
                    rng.random_range(201..990),
                    rng.random_range(200..1000),
                    rng.random_range(0..10000),
                );
                phone.extend(parts.into_iter().map(|t| Word { text: t, role: Role::Phone(pi) }));
                phone_formats.push((idx, format));
            }
            fields.push((ty, Field { label, rows, phone }));
        }
    }
    Content {
        types,
        fields,
        phone_formats,
    }
}

fn filler(text: &str) -> Vec<Word> {
    words(text, Role::Filler)
}

fn random_inline<R: Rng>(rng: &mut R) -> Style {
    Style::Inline {
        one_line: rng.random_bool(0.5),
        gap: rng.random_range(0.008..0.015),
    }
}

fn lay_out<R: Rng>(rng: &mut R, kind: LayoutKind, content: &mut Content) -> Vec<LineSpec> {
    let mut b = Builder { lines: Vec::new() };
    let mut row = 0;
    b.line(row, LEFT, filler(pick(rng, HEADERS)));
    row += 1;
    if rng.random_bool(0.5) {
        let fax = format!(
            "Fax: ({}) {}-{:04}",
            rng.random_range(201..990),
            rng.random_range(200..1000),
            rng.random_range(0..10000)
        );
        b.line(row, LEFT, filler(&fax));
        row += 1;
    }
    row += 1;

    match kind {
        LayoutKind::TwoColumn => {
            let mid = 0.5;
            let edges = [(LEFT, mid - GUTTER / 2.0), (mid + GUTTER / 2.0, RIGHT_EDGE)];
            let mut col_rows = [row, row];
            let mut exam_fields = Vec::new();
            for (ty, field) in content.fields.iter_mut() {
                let col = match ty.category() {
                    crate::model::Category::Patient => 0,
                    crate::model::Category::Physician => 1,
                    crate::model::Category::Exam => {
                        exam_fields.push(&*field);
                        continue;
                    }
                };
                let (x, edge) = edges[col];
                let inline = random_inline(rng);
                let style = if Builder::fits(x, field, inline, edge) {
                    inline
                } else {
                    if !Builder::fits(x, field, Style::Above, edge) {
                        field.phone.clear();
                    }
                    Style::Above
                };
                col_rows[col] += b.place(col_rows[col], x, field, style);
            }
            row = col_rows[0].max(col_rows[1]) + 1;
            for field in exam_fields {
                row += b.place(row, LEFT, field, random_inline(rng));
            }
        }
        _ => {
            let mut prev_cat = None;
            for (ty, field) in content.fields.iter() {
                if prev_cat != Some(ty.category()) {
                    if prev_cat.is_some() {
                        row += 1;
                    }
                    prev_cat = Some(ty.category());
                }
                let style = match kind {
                    LayoutKind::LabelLeft => random_inline(rng),
                    LayoutKind::LabelAbove => Style::Above,
                    LayoutKind::SingleColumnForm => Style::Form,
                    _ => match rng.random_range(0..3) {
                        0 => random_inline(rng),
                        1 => Style::Above,
                        _ => Style::Form,
                    },
                };
                row += b.place(row, LEFT, field, style);
            }
        }
    }
    row += 1;
    b.line(row, LEFT, filler(pick(rng, FOOTERS)));
    b.lines
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub fn generate_page(seed: u64, page_no: u32, template: &PageTemplate) -> Result<GeneratedPage> {
    template.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, page_no as u64, 0));
    let two_row = template.layout != LayoutKind::TwoColumn;
    let mut content = build_content(&mut rng, template, two_row);
    let specs = lay_out(&mut rng, template.layout, &mut content);

    // Render: jitter, dropout, id assignment.
    let noise = template.noise;
    let normal = Normal::new(0.0, noise.jitter.max(1e-12)).expect("valid sigma");
    let y_top = 0.04 + rng.random_range(0.0..0.01);
    let mut line_ids: Vec<LineId> = (0..specs.len() as LineId).collect();
    line_ids.shuffle(&mut rng);
    let n_tokens: usize = specs.iter().map(|l| l.words.len()).sum();
    let mut token_ids: Vec<TokenId> = (0..n_tokens as TokenId).collect();
    token_ids.shuffle(&mut rng);
    let mut next_token = 0;

    let mut lines = Vec::new();
    let mut tokens = Vec::new();
    let mut roles: HashMap<TokenId, Role> = HashMap::new();
    let mut dropped = 0;
    // Vertical jitter is per row so lines sharing a row keep their x order.
    let n_rows = specs.iter().map(|l| l.row + 1).max().unwrap_or(0);
    let row_dy: Vec<f64> = (0..n_rows)
        .map(|_| if noise.jitter > 0.0 { normal.sample(&mut rng) } else { 0.0 })
        .collect();
    for (spec, &lid) in specs.iter().zip(&line_ids) {
        let dy = row_dy[spec.row];
        let dx = if noise.jitter > 0.0 { normal.sample(&mut rng) } else { 0.0 };
        let y0 = (y_top + spec.row as f64 * ROW_SPACING + dy).clamp(0.0, 1.0 - LINE_HEIGHT);
        let mut x = (spec.x0 + dx).max(0.0);
        let mut line_tokens = Vec::new();
        for w in &spec.words {
            let wdt = w.text.chars().count() as f64 * CHAR_WIDTH;
            let id = token_ids[next_token];
            next_token += 1;
            let bbox = BBox::new(round6(x), round6(y0), round6((x + wdt).min(1.0)), round6(y0 + LINE_HEIGHT))?;
            x += wdt + CHAR_WIDTH;
            if w.role == Role::Filler && noise.dropout > 0.0 && rng.random_bool(noise.dropout) {
                dropped += 1;
                continue;
            }
            roles.insert(id, w.role);
            line_tokens.push(Token {
                id,
                text: w.text.clone(),
                bbox,
                line_id: lid,
            });
        }
        if let Some(bbox) = BBox::union_all(line_tokens.iter().map(|t| &t.bbox)) {
            lines.push((lid, bbox));
            tokens.extend(line_tokens);
        }
    }
    let page = Page::new(page_no, PAGE_PX.0, PAGE_PX.1, lines, tokens)?;
    let layout = group_page(&page, &GroupingConfig::default())?;
    let order = layout.order.clone();

    // Gold spans in reading order.
    let mut value_tokens: BTreeMap<usize, Vec<TokenId>> = BTreeMap::new();
    let mut phone_tokens: BTreeMap<usize, Vec<TokenId>> = BTreeMap::new();
    for &id in order.tokens() {
        match roles[&id] {
            Role::Value(i) => value_tokens.entry(i).or_default().push(id),
            Role::Phone(i) => phone_tokens.entry(i).or_default().push(id),
            _ => {}
        }
    }
    let gold_spans: Vec<EntitySpan> = value_tokens
        .iter()
        .map(|(&i, ids)| EntitySpan::new(content.types[i], ids.clone(), SpanSource::Gold))
        .collect();
    let value_index: Vec<usize> = value_tokens.keys().copied().collect();

    let rules = RuleSet::default();
    let mut injections = InjectionRecord {
        dropped_tokens: dropped,
        ..Default::default()
    };
    for (pi, (value_idx, format)) in content.phone_formats.iter().enumerate() {
        let Some(ids) = phone_tokens.get(&pi) else { continue };
        let Some(pos) = value_index.iter().position(|v| v == value_idx) else { continue };
        let span = &gold_spans[pos];
        let street_prefix = span
            .token_ids
            .iter()
            .copied()
            .take_while(|&id| {
                let t = page.token(id).map_or("", |t| t.text.as_str());
                t.chars().all(|c| c.is_ascii_digit()) || rules.is_cardinal(t)
            })
            .collect();
        injections.phones.push(PhoneInjection {
            address_type: span.entity_type,
            format: *format,
            token_ids: ids.clone(),
            street_prefix,
        });
    }

    // Label noise on a copy of the gold.
    let mut label_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, page_no as u64, 1));
    let mut raw = Vec::with_capacity(gold_spans.len());
    for span in &gold_spans {
        match maybe_perturb(span, &page, &order, &rules, noise.label_noise, &mut label_rng) {
            Some((kind, noisy)) => {
                injections.label_noise.push(SpanInjection {
                    kind,
                    clean: span.into(),
                    noisy: (&noisy).into(),
                });
                raw.push(noisy.with_source(SpanSource::Gold));
            }
            None => raw.push(span.clone()),
        }
    }

    // Simulated predictions.
    let mut pred_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, page_no as u64, 2));
    let mut pred_spans = Vec::with_capacity(gold_spans.len());
    let mut flips = Vec::new();
    for span in &gold_spans {
        let predicted = match maybe_perturb(span, &page, &order, &rules, noise.label_noise, &mut pred_rng) {
            Some((kind, noisy)) => {
                injections.prediction_noise.push(SpanInjection {
                    kind,
                    clean: span.into(),
                    noisy: (&noisy).into(),
                });
                noisy
            }
            None => span.clone(),
        };
        let flip = noise.i_start_injection && pred_rng.random_bool(noise.label_noise.max(0.0));
        flips.push(flip);
        pred_spans.push(predicted);
    }
    let mut tags = to_bio(&page, &pred_spans, &order)?;
    for (span, flip) in pred_spans.iter().zip(flips) {
        if !flip {
            continue;
        }
        let first = span.token_ids.iter().filter_map(|&id| order.rank(id)).min().expect("resolves");
        if let BioTag::B(t) = tags[first] {
            tags[first] = BioTag::I(t);
            injections.i_starts.push(span.into());
        }
    }
    let predictions = TagSequence::new(page_no, tags).to_prediction_file(&order);

    Ok(GeneratedPage {
        layout: template.layout,
        gold: AnnotationFile {
            page_no,
            entities: gold_spans,
        },
        raw_gold: AnnotationFile { page_no, entities: raw },
        predictions,
        injections,
        page,
        order,
    })
}

// ---------------------------------------------------------------------------
// Corpora
// ---------------------------------------------------------------------------

/// Weighted set of templates a corpus draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateMix {
    pub entries: Vec<(PageTemplate, u32)>,
}

impl TemplateMix {
    pub fn uniform(noise: NoiseProfile) -> Self {
        Self::of(&LayoutKind::ALL, noise)
    }

    pub fn of(kinds: &[LayoutKind], noise: NoiseProfile) -> Self {
        TemplateMix {
            entries: kinds.iter().map(|&k| (PageTemplate::new(k, noise), 1)).collect(),
        }
    }

    fn choose<R: Rng>(&self, rng: &mut R) -> &PageTemplate {
        let total: u32 = self.entries.iter().map(|e| e.1).sum();
        let mut x = rng.random_range(0..total.max(1));
        for (t, w) in &self.entries {
            if x < *w {
                return t;
            }
            x -= w;
        }
        &self.entries[0].0
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() || self.entries.iter().all(|e| e.1 == 0) {
            return Err(Error::Input("template mix is empty".into()));
        }
        self.entries.iter().try_for_each(|e| e.0.validate())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stem: String,
    pub page_no: u32,
    pub layout: LayoutKind,
    pub seed: u64,
    pub ocr: String,
    pub gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_gold: Option<String>,
    pub predictions: String,
    pub injections: String,
    pub summary: InjectionSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub seed: u64,
    pub pages: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn layout_histogram(&self) -> BTreeMap<LayoutKind, usize> {
        let mut h = BTreeMap::new();
        for p in &self.pages {
            *h.entry(p.layout).or_default() += 1;
        }
        h
    }
}

pub fn page_stem(page_no: u32) -> String {
    format!("page_{page_no:04}")
}

/// Generate page `index` (0-based) of a corpus.
pub fn corpus_page(seed: u64, index: usize, mix: &TemplateMix) -> Result<GeneratedPage> {
    let page_seed = derive_seed(seed, index as u64, 0xC0DE);
    let mut rng = ChaCha8Rng::seed_from_u64(page_seed);
    let template = mix.choose(&mut rng).clone();
    generate_page(page_seed, index as u32 + 1, &template)
}

/// Write `n_pages` pages plus `manifest.json` into `dir`.
pub fn generate_corpus(dir: &Path, seed: u64, n_pages: usize, mix: &TemplateMix) -> Result<Manifest> {
    if n_pages == 0 {
        return Err(Error::Input("corpus needs at least one page".into()));
    }
    mix.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries = (0..n_pages)
        .into_par_iter()
        .map(|i| {
            let g = corpus_page(seed, i, mix)?;
            let page_no = i as u32 + 1;
            let stem = page_stem(page_no);
            let name = |suffix: &str| format!("{stem}.{suffix}.json");
            io::write_ocr_page(&g.page, &dir.join(name("ocr")))?;
            io::write_annotations(&g.gold, &dir.join(name("gold")))?;
            let raw_gold = if g.injections.label_noise.is_empty() && mix_label_noise(mix) == 0.0 {
                None
            } else {
                io::write_annotations(&g.raw_gold, &dir.join(name("raw-gold")))?;
                Some(name("raw-gold"))
            };
            io::write_predictions(&g.predictions, &dir.join(name("pred")))?;
            io::write_json(&dir.join(name("inject")), &g.injections)?;
            Ok(ManifestEntry {
                stem: stem.clone(),
                page_no,
                layout: g.layout,
                seed: derive_seed(seed, i as u64, 0xC0DE),
                ocr: name("ocr"),
                gold: name("gold"),
                raw_gold,
                predictions: name("pred"),
                injections: name("inject"),
                summary: g.injections.summary(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        schema_version: io::SCHEMA_VERSION.into(),
        seed,
        pages: entries,
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn mix_label_noise(mix: &TemplateMix) -> f64 {
    mix.entries.iter().map(|e| e.0.noise.label_noise).fold(0.0, f64::max)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    io::read_json(&dir.join("manifest.json"))
}
