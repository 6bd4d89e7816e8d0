//! From token tags to one value per entity type: BIO decoding, address
//! merging, rule post-processing and per-page selection.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::EntitiesFile;
use crate::model::{entity_text, normalize_text, BioTag, EntitySpan, EntityType, Page, ReadingOrder, SpanSource};
use crate::rules::{apply_all, RuleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    /// Largest number of tokens allowed between two address fragments that
    /// still merge.
    pub address_merge_gap: usize,
    /// Let an `I-` tag with no open entity of its type start one.
    pub allow_i_start: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            address_merge_gap: 5,
            allow_i_start: true,
        }
    }
}

/// Decode tags indexed by reading-order rank into entity spans, ordered by
/// first rank.
pub fn decode_bio(tags: &[BioTag], order: &ReadingOrder, cfg: &DecodeConfig) -> Result<Vec<EntitySpan>> {
    if tags.len() != order.len() {
        return Err(Error::Input(format!(
            "{} tags for {} tokens",
            tags.len(),
            order.len()
        )));
    }
    let mut out = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (rank, &tag) in tags.iter().enumerate() {
        let id = order.token_at(rank).expect("rank in range");
        match tag {
            BioTag::O => out.extend(open.take()),
            BioTag::B(ty) => {
                out.extend(open.take());
                open = Some(EntitySpan::new(ty, vec![id], SpanSource::Predicted));
            }
            BioTag::I(ty) => match open.as_mut() {
                Some(span) if span.entity_type == ty => span.token_ids.push(id),
                _ => {
                    out.extend(open.take());
                    if cfg.allow_i_start {
                        open = Some(EntitySpan::new(ty, vec![id], SpanSource::Predicted));
                    }
                }
            },
        }
    }
    out.extend(open);
    Ok(out)
}

fn canonical_sort(entities: &mut [EntitySpan], order: &ReadingOrder) {
    for e in entities.iter_mut() {
        e.sort_by_rank(order);
    }
    entities.sort_by(|a, b| {
        (a.first_rank(order), a.entity_type, &a.token_ids).cmp(&(b.first_rank(order), b.entity_type, &b.token_ids))
    });
}

/// Join each address entity onto the previous address entity of the same
/// type when at most `address_merge_gap` tokens lie between them.
pub fn merge_addresses(entities: &[EntitySpan], order: &ReadingOrder, cfg: &DecodeConfig) -> Vec<EntitySpan> {
    let mut sorted = entities.to_vec();
    canonical_sort(&mut sorted, order);

    let mut out: Vec<EntitySpan> = Vec::with_capacity(sorted.len());
    let mut last_of_type: HashMap<EntityType, usize> = HashMap::new();
    for e in sorted {
        if e.entity_type.is_address() {
            if let Some(&idx) = last_of_type.get(&e.entity_type) {
                let prev = &out[idx];
                let between = match (prev.last_rank(order), e.first_rank(order)) {
                    (Some(prev_end), Some(start)) => Some(start.saturating_sub(prev_end + 1)),
                    _ => None,
                };
                if between.is_some_and(|b| b <= cfg.address_merge_gap) {
                    let target = &mut out[idx];
                    for id in e.token_ids {
                        if !target.token_ids.contains(&id) {
                            target.token_ids.push(id);
                        }
                    }
                    target.sort_by_rank(order);
                    continue;
                }
            }
            last_of_type.insert(e.entity_type, out.len());
        }
        out.push(e);
    }
    out
}

/// Apply the domain rules to every predicted entity.
pub fn hybrid_postprocess(
    entities: &[EntitySpan],
    page: &Page,
    order: &ReadingOrder,
    rules: &RuleSet,
) -> Vec<EntitySpan> {
    let mut out: Vec<EntitySpan> = entities
        .iter()
        .filter_map(|e| apply_all(e, page, order, rules).entity)
        .collect();
    canonical_sort(&mut out, order);
    out
}

/// A candidate value for selection.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub span: EntitySpan,
    pub text: String,
    /// Tie-break key: first-token rank, or file position when ranks are not
    /// known.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub text: String,
    pub votes: usize,
}

/// Per-page output: at most one span for single-valued types, the unique
/// values for exam types.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionResult {
    pub page_no: u32,
    pub selected: BTreeMap<EntityType, Vec<EntitySpan>>,
    pub tallies: BTreeMap<EntityType, Vec<VoteTally>>,
}

impl SelectionResult {
    pub fn get(&self, ty: EntityType) -> &[EntitySpan] {
        self.selected.get(&ty).map_or(&[], Vec::as_slice)
    }

    /// All selected spans, by type then position.
    pub fn spans(&self) -> impl Iterator<Item = &EntitySpan> {
        self.selected.values().flatten()
    }

    /// Selection over the entities of a written entities file, using the
    /// stored texts and file positions.
    pub fn from_entities_file(file: &EntitiesFile) -> Self {
        let candidates = file
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| Candidate {
                span: e.to_span(SpanSource::Predicted),
                text: e.text.clone(),
                position: i,
            })
            .collect();
        select_candidates(file.page_no, candidates)
    }
}

/// Majority vote on normalized text for single-valued types (ties go to the
/// longer span, then the earlier one); de-duplication for exam types.
pub fn select_candidates(page_no: u32, candidates: Vec<Candidate>) -> SelectionResult {
    let mut by_type: BTreeMap<EntityType, Vec<Candidate>> = BTreeMap::new();
    for c in candidates {
        by_type.entry(c.span.entity_type).or_default().push(c);
    }
    let mut result = SelectionResult {
        page_no,
        ..Default::default()
    };
    for (ty, mut cands) in by_type {
        cands.sort_by_key(|c| c.position);
        // (normalized text, votes, representative index)
        let mut groups: Vec<(String, usize, usize)> = Vec::new();
        for (i, c) in cands.iter().enumerate() {
            let key = normalize_text(&c.text);
            match groups.iter_mut().find(|g| g.0 == key) {
                Some(g) => g.1 += 1,
                None => groups.push((key, 1, i)),
            }
        }
        result.tallies.insert(
            ty,
            groups
                .iter()
                .map(|g| VoteTally {
                    text: g.0.clone(),
                    votes: g.1,
                })
                .collect(),
        );
        let chosen: Vec<EntitySpan> = if ty.is_single_valued() {
            let best = groups.iter().min_by(|a, b| {
                let (ca, cb) = (&cands[a.2], &cands[b.2]);
                b.1.cmp(&a.1)
                    .then(cb.span.len().cmp(&ca.span.len()))
                    .then(ca.position.cmp(&cb.position))
            });
            best.map(|g| cands[g.2].span.clone()).into_iter().collect()
        } else {
            groups.iter().map(|g| cands[g.2].span.clone()).collect()
        };
        result.selected.insert(ty, chosen);
    }
    result
}

/// Selection over post-processed entities of one page.
pub fn select_per_page(entities: &[EntitySpan], page: &Page, order: &ReadingOrder) -> Result<SelectionResult> {
    let candidates = entities
        .iter()
        .map(|e| {
            Ok(Candidate {
                text: entity_text(e, page)?,
                position: e.first_rank(order).ok_or_else(|| {
                    Error::Integrity(format!("{} span has tokens outside the reading order", e.entity_type))
                })?,
                span: e.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(select_candidates(page.page_no(), candidates))
}
