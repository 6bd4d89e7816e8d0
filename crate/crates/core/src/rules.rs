//! Domain correction rules for referral entities.
//!
//! The same functions clean gold annotations before training and clean
//! decoded predictions at inference time. Each rule only removes tokens,
//! only prepends/appends neighbouring tokens, or retypes a patient name as a
//! physician name; no rule reorders tokens.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EntitySpan, EntityType, Page, ReadingOrder, SpanSource, TokenId};

/// A phone-number shape matched against 1–3 consecutive tokens joined by
/// single spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonePattern {
    pub regex: String,
    /// Only counts as a phone right after a context word such as `Ph:`.
    #[serde(default)]
    pub requires_context: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    /// Lower-cased stop words for every non-address entity type.
    pub stop_words: BTreeMap<EntityType, Vec<String>>,
    pub address_stop_words: Vec<String>,
    pub phone_patterns: Vec<PhonePattern>,
    pub phone_context_words: Vec<String>,
    pub credential_lexicon: Vec<String>,
    pub cardinal_letters: Vec<String>,
    pub left_extension_limit: usize,
}

const REQUIRED_ADDRESS_STOP_WORDS: [&str; 7] = ["address", "city", "state", "line", "1:", "2:", "zip"];

fn strings(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl Default for RuleConfig {
    fn default() -> Self {
        let common = [
            "name:", "name", "dob:", "sex:", "gender:", "patient", "physician", "dr.", "provider:",
            "provider", "referring", "ordering", "pt:",
        ];
        let mut stop_words = BTreeMap::new();
        for ty in EntityType::ALL.into_iter().filter(|t| !t.is_address()) {
            let mut words = strings(&common);
            match ty {
                EntityType::PatientDob => {
                    words.extend(strings(&["dob", "date", "of", "birth", "birth:", "d.o.b."]))
                }
                EntityType::PatientGender => words.extend(strings(&["sex", "gender"])),
                EntityType::ExamProcedure | EntityType::ExamReason => words.extend(strings(&[
                    "exam:", "procedure:", "requested:", "reason:", "indication:", "diagnosis:", "order:",
                ])),
                _ => {}
            }
            stop_words.insert(ty, words);
        }

        let mut address_stop_words = strings(&REQUIRED_ADDRESS_STOP_WORDS);
        address_stop_words.extend(strings(&[
            "city/state/zip", "patient", "physician", "office", "home", "mailing", "street:",
        ]));

        RuleConfig {
            stop_words,
            address_stop_words,
            phone_patterns: vec![
                PhonePattern {
                    regex: r"\(?\d{3}\)?[-. ]?\d{3}[-.]\d{4}".into(),
                    requires_context: false,
                },
                PhonePattern {
                    regex: r"\(\d{3}\) ?\d{3} \d{4}".into(),
                    requires_context: false,
                },
                PhonePattern {
                    regex: r"\d{3} \d{3} \d{4}".into(),
                    requires_context: true,
                },
                PhonePattern {
                    regex: r"\d{10}".into(),
                    requires_context: true,
                },
            ],
            phone_context_words: strings(&["ph", "phone", "fax", "tel", "cell", "office", "telephone"]),
            credential_lexicon: strings(&[
                "MD", "DO", "NP", "PA", "PA-C", "RN", "APRN", "DPM", "DC", "CNP", "FNP", "MBBS", "PhD",
            ]),
            cardinal_letters: strings(&["N", "S", "E", "W"]),
            left_extension_limit: 4,
        }
    }
}

impl RuleConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

/// Names of the individual rules, as recorded in outcomes and logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    StripStopWords,
    StripPhone,
    ReclassifyByCredentials,
    ExtendLeft,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::StripStopWords => "strip_stop_words",
            Rule::StripPhone => "strip_phone",
            Rule::ReclassifyByCredentials => "reclassify_by_credentials",
            Rule::ExtendLeft => "extend_left",
        })
    }
}

/// Result of running one or more rules over a span. `entity` is `None` when
/// the rules removed every token.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleOutcome {
    pub entity: Option<EntitySpan>,
    pub applied_rules: Vec<Rule>,
}

impl RuleOutcome {
    fn unchanged(span: &EntitySpan) -> Self {
        RuleOutcome {
            entity: Some(span.clone()),
            applied_rules: Vec::new(),
        }
    }

    fn changed(entity: Option<EntitySpan>, rule: Rule) -> Self {
        RuleOutcome {
            entity,
            applied_rules: vec![rule],
        }
    }

    pub fn is_removal(&self) -> bool {
        self.entity.is_none()
    }

    pub fn is_changed(&self) -> bool {
        !self.applied_rules.is_empty()
    }
}

/// A [`RuleConfig`] with its word lists normalized and patterns compiled.
#[derive(Debug, Clone)]
pub struct RuleSet {
    stop_words: BTreeMap<EntityType, HashSet<String>>,
    address_stop_words: HashSet<String>,
    phone_patterns: Vec<(Regex, bool)>,
    context_words: HashSet<String>,
    credentials: HashSet<String>,
    cardinals: HashSet<String>,
    left_extension_limit: usize,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet::new(&RuleConfig::default()).expect("default rule config is valid")
    }
}

fn lower_set(words: &[String]) -> HashSet<String> {
    words.iter().map(|w| w.to_lowercase()).collect()
}

fn credential_key(text: &str) -> String {
    trim_trailing(text)
        .chars()
        .filter(|&c| c != '.')
        .flat_map(char::to_uppercase)
        .collect()
}

fn trim_trailing(text: &str) -> &str {
    text.trim_end_matches([':', ',', ';', '.'])
}

fn is_numeric(text: &str) -> bool {
    let t = text.trim_end_matches(',');
    !t.is_empty() && t.chars().all(|c| c.is_ascii_digit())
}

fn is_punctuation(text: &str) -> bool {
    text.chars().all(|c| !c.is_alphanumeric())
}

impl RuleSet {
    pub fn new(cfg: &RuleConfig) -> Result<Self> {
        let address_stop_words = lower_set(&cfg.address_stop_words);
        for w in REQUIRED_ADDRESS_STOP_WORDS {
            if !address_stop_words.contains(w) {
                return Err(Error::Input(format!("address stop words must include {w:?}")));
            }
        }
        if cfg.credential_lexicon.is_empty() {
            return Err(Error::Input("credential lexicon is empty".into()));
        }
        let phone_patterns = cfg
            .phone_patterns
            .iter()
            .map(|p| {
                Regex::new(&format!("^(?:{})$", p.regex))
                    .map(|r| (r, p.requires_context))
                    .map_err(|e| Error::Input(format!("bad phone pattern {:?}: {e}", p.regex)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RuleSet {
            stop_words: cfg
                .stop_words
                .iter()
                .map(|(ty, words)| (*ty, lower_set(words)))
                .collect(),
            address_stop_words,
            phone_patterns,
            context_words: lower_set(&cfg.phone_context_words),
            credentials: cfg.credential_lexicon.iter().map(|c| credential_key(c)).collect(),
            cardinals: cfg.cardinal_letters.iter().map(|c| c.to_uppercase()).collect(),
            left_extension_limit: cfg.left_extension_limit,
        })
    }

    pub fn is_stop_word(&self, ty: EntityType, text: &str) -> bool {
        let list = if ty.is_address() {
            Some(&self.address_stop_words)
        } else {
            self.stop_words.get(&ty)
        };
        let Some(list) = list else { return false };
        let lower = text.to_lowercase();
        list.contains(&lower) || list.contains(trim_trailing(&lower))
    }

    pub fn is_credential(&self, text: &str) -> bool {
        let key = credential_key(text);
        !key.is_empty() && self.credentials.contains(&key)
    }

    pub fn is_cardinal(&self, text: &str) -> bool {
        self.cardinals.contains(&trim_trailing(text).to_uppercase())
    }

    pub fn is_context_word(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        let t = lower.trim_end_matches([':', ',', ';', '.', '#']);
        self.context_words.contains(t)
    }

    /// Length of the longest phone match starting at `texts[0]`, if any.
    /// `after_context` says whether the token before `texts[0]` is a context
    /// word.
    pub fn phone_match_len(&self, texts: &[&str], after_context: bool) -> Option<usize> {
        for len in (1..=texts.len().min(3)).rev() {
            let joined = texts[..len]
                .iter()
                .map(|t| t.trim_end_matches([',', ';']))
                .collect::<Vec<_>>()
                .join(" ");
            let hit = self
                .phone_patterns
                .iter()
                .any(|(re, needs_ctx)| (after_context || !needs_ctx) && re.is_match(&joined));
            if hit {
                return Some(len);
            }
        }
        None
    }
}

/// Token immediately before `id` in reading order, when it sits on the same
/// OCR line.
fn left_neighbor(id: TokenId, page: &Page, order: &ReadingOrder) -> Option<TokenId> {
    let rank = order.rank(id)?;
    let prev = order.token_at(rank.checked_sub(1)?)?;
    same_line(id, prev, page).then_some(prev)
}

fn right_neighbor(id: TokenId, page: &Page, order: &ReadingOrder) -> Option<TokenId> {
    let next = order.token_at(order.rank(id)? + 1)?;
    same_line(id, next, page).then_some(next)
}

fn same_line(a: TokenId, b: TokenId, page: &Page) -> bool {
    match (page.token(a), page.token(b)) {
        (Some(x), Some(y)) => x.line_id == y.line_id,
        _ => false,
    }
}

fn text_of(page: &Page, id: TokenId) -> &str {
    page.token(id).map_or("", |t| t.text.as_str())
}

fn retain(span: &EntitySpan, keep: impl Fn(TokenId) -> bool, rule: Rule) -> RuleOutcome {
    let kept: Vec<TokenId> = span.token_ids.iter().copied().filter(|&id| keep(id)).collect();
    if kept.len() == span.token_ids.len() {
        return RuleOutcome::unchanged(span);
    }
    let entity = (!kept.is_empty()).then(|| EntitySpan {
        token_ids: kept,
        ..span.clone()
    });
    RuleOutcome::changed(entity, rule)
}

/// Drop tokens that are field labels for the span's type.
pub fn strip_stop_words(span: &EntitySpan, page: &Page, rules: &RuleSet) -> RuleOutcome {
    retain(
        span,
        |id| !rules.is_stop_word(span.entity_type, text_of(page, id)),
        Rule::StripStopWords,
    )
}

/// Drop phone numbers and their context words (`Ph:`, `Fax`, ...) from an
/// address. Other types pass through unchanged.
pub fn strip_phone(span: &EntitySpan, page: &Page, order: &ReadingOrder, rules: &RuleSet) -> RuleOutcome {
    if !span.entity_type.is_address() {
        return RuleOutcome::unchanged(span);
    }
    let texts: Vec<&str> = span.token_ids.iter().map(|&id| text_of(page, id)).collect();
    let mut drop = vec![false; texts.len()];

    let mut i = 0;
    while i < texts.len() {
        let after_context = if i == 0 {
            left_neighbor(span.token_ids[0], page, order)
                .is_some_and(|prev| rules.is_context_word(text_of(page, prev)))
        } else {
            rules.is_context_word(texts[i - 1])
        };
        match rules.phone_match_len(&texts[i..], after_context) {
            Some(len) => {
                drop[i..i + len].iter_mut().for_each(|d| *d = true);
                let mut j = i;
                while j > 0 && rules.is_context_word(texts[j - 1]) {
                    drop[j - 1] = true;
                    j -= 1;
                }
                i += len;
            }
            None => i += 1,
        }
    }
    // A context word dangling at the end of an address never belongs to it.
    for k in (0..texts.len()).rev() {
        if drop[k] {
            continue;
        }
        if rules.is_context_word(texts[k]) {
            drop[k] = true;
        } else {
            break;
        }
    }

    let dropped: HashSet<TokenId> = span
        .token_ids
        .iter()
        .zip(&drop)
        .filter(|(_, d)| **d)
        .map(|(id, _)| *id)
        .collect();
    retain(span, |id| !dropped.contains(&id), Rule::StripPhone)
}

/// Retype patient names carrying a credential as physician names, and pull
/// credentials that directly follow a physician name into the span.
pub fn reclassify_by_credentials(
    span: &EntitySpan,
    page: &Page,
    order: &ReadingOrder,
    rules: &RuleSet,
) -> RuleOutcome {
    if !span.entity_type.is_name() || span.token_ids.is_empty() {
        return RuleOutcome::unchanged(span);
    }
    let mut out = span.clone();
    let first = span.token_ids[0];
    let last = *span.token_ids.last().unwrap();

    if span.entity_type == EntityType::PatientName {
        let inside = span.token_ids.iter().any(|&id| rules.is_credential(text_of(page, id)));
        let beside = [left_neighbor(first, page, order), right_neighbor(last, page, order)]
            .into_iter()
            .flatten()
            .any(|id| rules.is_credential(text_of(page, id)));
        if !(inside || beside) {
            return RuleOutcome::unchanged(span);
        }
        out.entity_type = EntityType::PhysicianName;
    }

    let mut tail = last;
    while let Some(next) = right_neighbor(tail, page, order) {
        if !rules.is_credential(text_of(page, next)) || out.token_ids.contains(&next) {
            break;
        }
        out.token_ids.push(next);
        tail = next;
    }

    if out == *span {
        RuleOutcome::unchanged(span)
    } else {
        RuleOutcome::changed(Some(out), Rule::ReclassifyByCredentials)
    }
}

/// Grow a span leftwards on its line: a single-token name takes the word
/// before it; an address takes preceding street numbers and cardinal
/// letters.
pub fn extend_left(span: &EntitySpan, page: &Page, order: &ReadingOrder, rules: &RuleSet) -> RuleOutcome {
    let Some(&first) = span.token_ids.first() else {
        return RuleOutcome::unchanged(span);
    };
    let ty = span.entity_type;
    let mut prepend = Vec::new();

    if ty.is_name() {
        if span.token_ids.len() == 1 {
            if let Some(prev) = left_neighbor(first, page, order) {
                let text = text_of(page, prev);
                let wordlike = text.chars().any(char::is_alphabetic)
                    && !text.chars().any(|c| c.is_ascii_digit());
                if wordlike
                    && !is_punctuation(text)
                    && !rules.is_stop_word(ty, text)
                    && !rules.is_credential(text)
                    && !text.ends_with(':')
                {
                    prepend.push(prev);
                }
            }
        }
    } else if ty.is_address() {
        let mut cursor = first;
        while prepend.len() < rules.left_extension_limit {
            match left_neighbor(cursor, page, order) {
                Some(prev)
                    if !span.token_ids.contains(&prev)
                        && (is_numeric(text_of(page, prev)) || rules.is_cardinal(text_of(page, prev))) =>
                {
                    prepend.push(prev);
                    cursor = prev;
                }
                _ => break,
            }
        }
    }

    if prepend.is_empty() {
        return RuleOutcome::unchanged(span);
    }
    prepend.reverse();
    prepend.extend(span.token_ids.iter().copied());
    RuleOutcome::changed(
        Some(EntitySpan {
            token_ids: prepend,
            ..span.clone()
        }),
        Rule::ExtendLeft,
    )
}

const MAX_PASSES: usize = 8;

/// Run every rule in order (stop words, phone, credentials, left extension)
/// and repeat the pass until nothing changes, so the result is a fixed
/// point.
pub fn apply_all(span: &EntitySpan, page: &Page, order: &ReadingOrder, rules: &RuleSet) -> RuleOutcome {
    let mut current = span.clone();
    let mut applied = Vec::new();
    for _ in 0..MAX_PASSES {
        let before = applied.len();
        let steps: [&dyn Fn(&EntitySpan) -> RuleOutcome; 4] = [
            &|s| strip_stop_words(s, page, rules),
            &|s| strip_phone(s, page, order, rules),
            &|s| reclassify_by_credentials(s, page, order, rules),
            &|s| extend_left(s, page, order, rules),
        ];
        for step in steps {
            let outcome = step(&current);
            applied.extend(outcome.applied_rules);
            match outcome.entity {
                Some(next) => current = next,
                None => {
                    return RuleOutcome {
                        entity: None,
                        applied_rules: applied,
                    }
                }
            }
        }
        if applied.len() == before {
            break;
        }
    }
    if applied.is_empty() {
        return RuleOutcome::unchanged(span);
    }
    current.sort_by_rank(order);
    if current.source == SpanSource::Predicted || current.source == SpanSource::Gold {
        current.source = SpanSource::Corrected;
    }
    RuleOutcome {
        entity: Some(current),
        applied_rules: applied,
    }
}
