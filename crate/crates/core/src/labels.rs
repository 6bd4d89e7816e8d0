//! Gold-label correction and BIO target construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::AnnotationFile;
use crate::model::{BioTag, EntitySpan, EntityType, Page, ReadingOrder, TokenId};
use crate::rules::{apply_all, Rule, RuleSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    pub token_ids: Vec<TokenId>,
}

impl From<&EntitySpan> for SpanRecord {
    fn from(span: &EntitySpan) -> Self {
        SpanRecord {
            entity_type: span.entity_type,
            token_ids: span.token_ids.clone(),
        }
    }
}

/// One changed annotation. `after` is `None` when the rules removed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub page_no: u32,
    pub before: SpanRecord,
    pub after: Option<SpanRecord>,
    pub applied_rules: Vec<Rule>,
}

/// Audit trail of label corrections. Only changed annotations are recorded,
/// so the corrected count is the number of entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionLog {
    pub schema_version: String,
    pub examined: usize,
    pub corrections: Vec<Correction>,
}

impl CorrectionLog {
    pub fn new() -> Self {
        CorrectionLog {
            schema_version: crate::io::SCHEMA_VERSION.into(),
            ..Default::default()
        }
    }

    pub fn corrected_count(&self) -> usize {
        self.corrections.len()
    }

    pub fn extend(&mut self, other: CorrectionLog) {
        self.examined += other.examined;
        self.corrections.extend(other.corrections);
    }
}

/// Run every rule over every gold span. Removed spans are dropped.
pub fn correct_annotations(
    page: &Page,
    annotations: &AnnotationFile,
    order: &ReadingOrder,
    rules: &RuleSet,
) -> Result<(AnnotationFile, CorrectionLog)> {
    annotations.check_against(page)?;
    let mut log = CorrectionLog::new();
    let mut entities = Vec::with_capacity(annotations.entities.len());
    for span in &annotations.entities {
        log.examined += 1;
        let outcome = apply_all(span, page, order, rules);
        if outcome.is_changed() {
            log.corrections.push(Correction {
                page_no: page.page_no(),
                before: span.into(),
                after: outcome.entity.as_ref().map(SpanRecord::from),
                applied_rules: outcome.applied_rules,
            });
        }
        if let Some(e) = outcome.entity {
            entities.push(e);
        }
    }
    Ok((
        AnnotationFile {
            page_no: annotations.page_no,
            entities,
        },
        log,
    ))
}

/// BIO tags indexed by reading-order rank.
pub fn to_bio(page: &Page, entities: &[EntitySpan], order: &ReadingOrder) -> Result<Vec<BioTag>> {
    if !order.covers(page) {
        return Err(Error::Integrity(format!(
            "reading order does not cover page {}",
            page.page_no()
        )));
    }
    let mut tags = vec![BioTag::O; order.len()];
    let mut owner: Vec<Option<usize>> = vec![None; order.len()];
    let describe = |e: &EntitySpan| format!("{}{:?}", e.entity_type, e.token_ids);

    for (ei, entity) in entities.iter().enumerate() {
        let mut ranks = entity
            .token_ids
            .iter()
            .map(|&id| {
                order
                    .rank(id)
                    .ok_or_else(|| Error::Integrity(format!("token {id} is not on page {}", page.page_no())))
            })
            .collect::<Result<Vec<_>>>()?;
        ranks.sort_unstable();
        for (k, &r) in ranks.iter().enumerate() {
            if let Some(prev) = owner[r] {
                return Err(Error::Conflict {
                    first: describe(&entities[prev]),
                    second: describe(entity),
                    token: order.token_at(r).expect("rank in range"),
                });
            }
            owner[r] = Some(ei);
            tags[r] = if k == 0 {
                BioTag::B(entity.entity_type)
            } else {
                BioTag::I(entity.entity_type)
            };
        }
    }
    Ok(tags)
}
