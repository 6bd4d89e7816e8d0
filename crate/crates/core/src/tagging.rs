//! Token taggers.
//!
//! A tagger assigns one BIO tag per token. [`FileTagger`] replays a
//! prediction file written by an external model; [`HeuristicTagger`] finds
//! field labels ("DOB:", "Patient Name:") and tags the value that follows
//! within the same layout group, or in the group to its right or below.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::decode::{decode_bio, DecodeConfig};
use crate::error::{Error, Result};
use crate::io::{PredictionFile, TokenPrediction};
use crate::labels::to_bio;
use crate::layout::Layout;
use crate::model::{BioTag, EntitySpan, EntityType, Page, ReadingOrder, TokenId};
use crate::perturb::{derive_seed, maybe_perturb};
use crate::rules::RuleSet;

/// Tags and confidences indexed by reading-order rank.
#[derive(Debug, Clone, PartialEq)]
pub struct TagSequence {
    pub page_no: u32,
    pub tags: Vec<BioTag>,
    pub confidence: Vec<f64>,
}

impl TagSequence {
    pub fn new(page_no: u32, tags: Vec<BioTag>) -> Self {
        let confidence = vec![1.0; tags.len()];
        TagSequence {
            page_no,
            tags,
            confidence,
        }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Records sorted by token id.
    pub fn to_prediction_file(&self, order: &ReadingOrder) -> PredictionFile {
        let mut tags: Vec<TokenPrediction> = self
            .tags
            .iter()
            .zip(&self.confidence)
            .enumerate()
            .map(|(rank, (&tag, &confidence))| TokenPrediction {
                token_id: order.token_at(rank).expect("rank in range"),
                tag,
                confidence,
            })
            .collect();
        tags.sort_by_key(|t| t.token_id);
        PredictionFile {
            page_no: self.page_no,
            tags,
        }
    }
}

pub trait Tagger: Send + Sync {
    fn tag(&self, page: &Page, layout: &Layout) -> Result<TagSequence>;
}

/// Replay recorded predictions. The file must name the same page and cover
/// every token.
pub fn tag_from_file(page: &Page, file: &PredictionFile, order: &ReadingOrder) -> Result<TagSequence> {
    file.check_against(page)?;
    let mut tags = vec![BioTag::O; order.len()];
    let mut confidence = vec![1.0; order.len()];
    for p in &file.tags {
        let rank = order
            .rank(p.token_id)
            .ok_or_else(|| Error::Integrity(format!("token {} not in reading order", p.token_id)))?;
        tags[rank] = p.tag;
        confidence[rank] = p.confidence;
    }
    Ok(TagSequence {
        page_no: page.page_no(),
        tags,
        confidence,
    })
}

#[derive(Debug, Clone)]
pub struct FileTagger {
    pub predictions: PredictionFile,
}

impl Tagger for FileTagger {
    fn tag(&self, page: &Page, layout: &Layout) -> Result<TagSequence> {
        tag_from_file(page, &self.predictions, &layout.order)
    }
}

/// What a field label announces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerTarget {
    Entity(EntityType),
    /// Second half of an address ("City, State, Zip:"); takes the type of
    /// the nearest preceding address label.
    AddressContinuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    /// Lower-cased token texts, matched exactly.
    pub tokens: Vec<String>,
    pub target: TriggerTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicLexicon {
    pub triggers: Vec<Trigger>,
    pub date_pattern: String,
    pub gender_values: Vec<String>,
    pub name_pattern: String,
    /// Address values stop at these (phone labels).
    pub address_stop_words: Vec<String>,
}

fn trigger(words: &str, target: TriggerTarget) -> Trigger {
    Trigger {
        tokens: words.split_whitespace().map(str::to_lowercase).collect(),
        target,
    }
}

impl Default for HeuristicLexicon {
    fn default() -> Self {
        use EntityType::*;
        use TriggerTarget::Entity as E;
        let triggers = vec![
            trigger("patient name:", E(PatientName)),
            trigger("patient:", E(PatientName)),
            trigger("name:", E(PatientName)),
            trigger("dob:", E(PatientDob)),
            trigger("d.o.b.:", E(PatientDob)),
            trigger("date of birth:", E(PatientDob)),
            trigger("sex:", E(PatientGender)),
            trigger("gender:", E(PatientGender)),
            trigger("address:", E(PatientAddress)),
            trigger("patient address:", E(PatientAddress)),
            trigger("home address:", E(PatientAddress)),
            trigger("referring physician:", E(PhysicianName)),
            trigger("ordering physician:", E(PhysicianName)),
            trigger("physician:", E(PhysicianName)),
            trigger("provider:", E(PhysicianName)),
            trigger("referring provider:", E(PhysicianName)),
            trigger("office address:", E(PhysicianAddress)),
            trigger("physician address:", E(PhysicianAddress)),
            trigger("provider address:", E(PhysicianAddress)),
            trigger("exam:", E(ExamProcedure)),
            trigger("procedure:", E(ExamProcedure)),
            trigger("exam requested:", E(ExamProcedure)),
            trigger("reason:", E(ExamReason)),
            trigger("indication:", E(ExamReason)),
            trigger("diagnosis:", E(ExamReason)),
            trigger("city, state, zip:", TriggerTarget::AddressContinuation),
        ];
        HeuristicLexicon {
            triggers,
            date_pattern: r"^\d{1,2}/\d{1,2}/\d{2,4}$".into(),
            gender_values: ["m", "f", "male", "female"].map(String::from).to_vec(),
            name_pattern: r"^[A-Z][A-Za-z'.\-]*,?$".into(),
            address_stop_words: ["ph", "phone", "fax", "tel", "cell"].map(String::from).to_vec(),
        }
    }
}

impl HeuristicLexicon {
    pub fn validate(&self) -> Result<()> {
        for t in &self.triggers {
            if t.tokens.is_empty() || t.tokens.iter().any(|w| *w != w.to_lowercase()) {
                return Err(Error::Input(format!("trigger {:?} must be non-empty lower case", t.tokens)));
            }
        }
        for ty in EntityType::ALL {
            if !self.triggers.iter().any(|t| t.target == TriggerTarget::Entity(ty)) {
                return Err(Error::Input(format!("no trigger for {ty}")));
            }
        }
        Ok(())
    }
}

/// Model-like errors injected into heuristic output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggerNoise {
    /// Probability that an entity gets one span error, and independently
    /// that it starts with `I-` instead of `B-`.
    pub rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct HeuristicTagger {
    lexicon: HeuristicLexicon,
    date: Regex,
    name: Regex,
    triggers: Vec<Trigger>,
    noise: Option<TaggerNoise>,
    rules: RuleSet,
}

impl Default for HeuristicTagger {
    fn default() -> Self {
        HeuristicTagger::new(HeuristicLexicon::default()).expect("default lexicon is valid")
    }
}

struct Hit {
    group: usize,
    start: usize,
    end: usize,
    target: TriggerTarget,
}

impl HeuristicTagger {
    pub fn new(lexicon: HeuristicLexicon) -> Result<Self> {
        lexicon.validate()?;
        let compile = |p: &str| Regex::new(p).map_err(|e| Error::Input(format!("bad pattern {p:?}: {e}")));
        let mut triggers = lexicon.triggers.clone();
        // Longest match first.
        triggers.sort_by_key(|t| std::cmp::Reverse(t.tokens.len()));
        Ok(HeuristicTagger {
            date: compile(&lexicon.date_pattern)?,
            name: compile(&lexicon.name_pattern)?,
            triggers,
            lexicon,
            noise: None,
            rules: RuleSet::default(),
        })
    }

    pub fn with_noise(mut self, noise: Option<TaggerNoise>) -> Self {
        self.noise = noise;
        self
    }

    pub fn lexicon(&self) -> &HeuristicLexicon {
        &self.lexicon
    }

    fn find_hits(&self, page: &Page, groups: &[Vec<TokenId>]) -> Vec<Hit> {
        let mut hits = Vec::new();
        for (gi, toks) in groups.iter().enumerate() {
            let lower: Vec<String> = toks
                .iter()
                .map(|&id| page.token(id).map_or(String::new(), |t| t.text.to_lowercase()))
                .collect();
            let mut i = 0;
            while i < lower.len() {
                let matched = self.triggers.iter().find(|t| {
                    lower.len() - i >= t.tokens.len() && t.tokens.iter().zip(&lower[i..]).all(|(a, b)| a == b)
                });
                match matched {
                    Some(t) => {
                        hits.push(Hit {
                            group: gi,
                            start: i,
                            end: i + t.tokens.len(),
                            target: t.target,
                        });
                        i += t.tokens.len();
                    }
                    None => i += 1,
                }
            }
        }
        hits
    }

    /// Tokens of `group` from `from` up to the next trigger in that group.
    fn region(groups: &[Vec<TokenId>], hits: &[Hit], group: usize, from: usize) -> Vec<TokenId> {
        let stop = hits
            .iter()
            .filter(|h| h.group == group && h.start >= from)
            .map(|h| h.start)
            .min()
            .unwrap_or(groups[group].len());
        groups[group][from..stop].to_vec()
    }

    /// Group holding the value for a label alone in its group: the nearest
    /// group to the right on the same row, else the nearest group below
    /// that overlaps horizontally.
    fn fallback_groups(layout: &Layout, group: usize) -> Vec<usize> {
        let g = &layout.groups[group].bbox;
        let mut right: Vec<usize> = (0..layout.groups.len())
            .filter(|&j| {
                let o = &layout.groups[j].bbox;
                j != group && o.overlaps_y(g) && o.x0 >= g.x1 - 1e-9
            })
            .collect();
        right.sort_by(|&a, &b| layout.groups[a].bbox.x0.total_cmp(&layout.groups[b].bbox.x0));
        let mut below: Vec<usize> = (0..layout.groups.len())
            .filter(|&j| {
                let o = &layout.groups[j].bbox;
                j != group && o.y0 >= g.y1 - 1e-9 && o.overlaps_x(g)
            })
            .collect();
        below.sort_by(|&a, &b| {
            let (x, y) = (&layout.groups[a].bbox, &layout.groups[b].bbox);
            x.y0.total_cmp(&y.y0).then(x.x0.total_cmp(&y.x0))
        });
        right.into_iter().take(1).chain(below.into_iter().take(1)).collect()
    }

    fn text(page: &Page, id: TokenId) -> &str {
        page.token(id).map_or("", |t| t.text.as_str())
    }

    /// The prefix of `region` that is a value of type `ty`.
    fn value(&self, ty: EntityType, region: &[TokenId], page: &Page) -> Vec<TokenId> {
        let text = |id: TokenId| Self::text(page, id);
        match ty {
            EntityType::PatientDob => region
                .first()
                .filter(|&&id| self.date.is_match(text(id)))
                .into_iter()
                .copied()
                .collect(),
            EntityType::PatientGender => region
                .first()
                .filter(|&&id| {
                    let t = text(id).trim_end_matches(['.', ',']).to_lowercase();
                    self.lexicon.gender_values.contains(&t)
                })
                .into_iter()
                .copied()
                .collect(),
            EntityType::PatientName | EntityType::PhysicianName => region
                .iter()
                .copied()
                .take_while(|&id| self.name.is_match(text(id)))
                .collect(),
            EntityType::PatientAddress | EntityType::PhysicianAddress => region
                .iter()
                .copied()
                .take_while(|&id| {
                    let t = text(id).to_lowercase();
                    let t = t.trim_end_matches([':', '.', ',']);
                    !self.lexicon.address_stop_words.iter().any(|w| w == t)
                })
                .collect(),
            EntityType::ExamProcedure | EntityType::ExamReason => region.to_vec(),
        }
    }

    fn clean_spans(&self, page: &Page, layout: &Layout) -> Vec<EntitySpan> {
        let groups: Vec<Vec<TokenId>> = layout.groups.iter().map(|g| g.token_ids().collect()).collect();
        let hits = self.find_hits(page, &groups);
        let mut taken = std::collections::HashSet::new();
        let mut spans = Vec::new();
        let mut last_address: Option<(usize, EntityType)> = None;

        for hit in &hits {
            let ty = match hit.target {
                TriggerTarget::Entity(ty) => {
                    if ty.is_address() {
                        last_address = Some((hit.group, ty));
                    }
                    ty
                }
                TriggerTarget::AddressContinuation => {
                    let same_group = hits
                        .iter()
                        .rev()
                        .filter(|h| h.group == hit.group && h.start < hit.start)
                        .filter_map(|h| match h.target {
                            TriggerTarget::Entity(t) if t.is_address() => Some(t),
                            _ => None,
                        })
                        .next();
                    match same_group.or(last_address.map(|a| a.1)) {
                        Some(t) => t,
                        None => continue,
                    }
                }
            };
            let mut region = Self::region(&groups, &hits, hit.group, hit.end);
            if region.is_empty() {
                for g in Self::fallback_groups(layout, hit.group) {
                    let r = Self::region(&groups, &hits, g, 0);
                    if !r.is_empty() && r.iter().all(|id| !taken.contains(id)) {
                        region = r;
                        break;
                    }
                }
            }
            let value = self.value(ty, &region, page);
            if value.is_empty() || value.iter().any(|id| taken.contains(id)) {
                continue;
            }
            taken.extend(value.iter().copied());
            spans.push(EntitySpan::new(ty, value, crate::model::SpanSource::Predicted));
        }
        spans
    }

    fn add_noise(&self, noise: &TaggerNoise, page: &Page, order: &ReadingOrder, tags: Vec<BioTag>) -> Result<Vec<BioTag>> {
        let spans = decode_bio(&tags, order, &DecodeConfig::default())?;
        let mut noisy = Vec::with_capacity(spans.len());
        let mut i_starts = Vec::new();
        for s in &spans {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise.seed, page.page_no() as u64, s.token_ids[0] as u64));
            let candidate = maybe_perturb(s, page, order, &self.rules, noise.rate, &mut rng)
                .map(|(_, p)| p)
                .unwrap_or_else(|| s.clone());
            let i_start = rand::Rng::random::<f64>(&mut rng) < noise.rate;
            noisy.push(candidate);
            i_starts.push(i_start);
        }
        let mut out = match to_bio(page, &noisy, order) {
            Ok(t) => t,
            Err(_) => tags,
        };
        if out.len() == order.len() {
            for (s, flip) in noisy.iter().zip(i_starts) {
                if !flip {
                    continue;
                }
                if let Some(r) = s.token_ids.iter().filter_map(|&id| order.rank(id)).min() {
                    if let BioTag::B(t) = out[r] {
                        out[r] = BioTag::I(t);
                    }
                }
            }
        }
        Ok(out)
    }
}

impl Tagger for HeuristicTagger {
    fn tag(&self, page: &Page, layout: &Layout) -> Result<TagSequence> {
        let spans = self.clean_spans(page, layout);
        let mut tags = to_bio(page, &spans, &layout.order)?;
        if let Some(noise) = &self.noise {
            tags = self.add_noise(noise, page, &layout.order, tags)?;
        }
        Ok(TagSequence::new(page.page_no(), tags))
    }
}
