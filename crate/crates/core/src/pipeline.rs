//! Page and corpus orchestration.
//!
//! Each stage has a file-level form (groups, predictions, entities,
//! report) so a staged run through intermediate files and a single
//! in-memory run go through the same functions and give identical output.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{decode_bio, hybrid_postprocess, merge_addresses, select_per_page, DecodeConfig, SelectionResult};
use crate::error::{Error, Result};
use crate::eval::{score_page, MetricsReport, MucMode, PageCounts, Scoreboard};
use crate::io::{self, AnnotationFile, EntitiesFile, ExtractedEntity, GroupsFile, PredictionFile};
use crate::layout::{group_page, GroupingConfig, Layout};
use crate::model::{entity_text, EntitySpan, Page};
use crate::rules::{RuleConfig, RuleSet};
use crate::tagging::{tag_from_file, HeuristicLexicon, HeuristicTagger, TagSequence, Tagger, TaggerNoise};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub grouping: GroupingConfig,
    pub rules: RuleConfig,
    pub decode: DecodeConfig,
    pub mode: MucMode,
    /// Apply the domain rules to decoded predictions.
    pub hybrid: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grouping: GroupingConfig::default(),
            rules: RuleConfig::default(),
            decode: DecodeConfig::default(),
            mode: MucMode::Standard,
            hybrid: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.grouping.validate()?;
        RuleSet::new(&self.rules)?;
        Ok(())
    }
}

/// Where token tags come from.
#[derive(Debug, Clone)]
pub enum TaggerChoice {
    Heuristic(Box<HeuristicTagger>),
    /// Prediction files; `{stem}` in the pattern is replaced by the page's
    /// file stem.
    File(String),
}

impl TaggerChoice {
    pub fn heuristic(noise: Option<TaggerNoise>) -> Self {
        TaggerChoice::Heuristic(Box::new(HeuristicTagger::default().with_noise(noise)))
    }

    pub fn with_lexicon(lexicon: HeuristicLexicon, noise: Option<TaggerNoise>) -> Result<Self> {
        Ok(TaggerChoice::Heuristic(Box::new(HeuristicTagger::new(lexicon)?.with_noise(noise))))
    }

    pub fn prediction_path(pattern: &str, stem: &str) -> PathBuf {
        PathBuf::from(pattern.replace("{stem}", stem))
    }

    pub fn tag(&self, page: &Page, layout: &Layout, stem: &str) -> Result<TagSequence> {
        match self {
            TaggerChoice::Heuristic(t) => t.tag(page, layout),
            TaggerChoice::File(pattern) => {
                let path = Self::prediction_path(pattern, stem);
                let file = io::read_predictions(&path)?;
                tag_from_file(page, &file, &layout.order).map_err(|e| prefix(e, &path))
            }
        }
    }
}

fn prefix(e: Error, path: &Path) -> Error {
    match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        Error::Integrity(m) => Error::Integrity(format!("{}: {m}", path.display())),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

pub fn stage_group(page: &Page, cfg: &GroupingConfig) -> Result<GroupsFile> {
    group_page(page, cfg)?.to_record(page)
}

pub fn stage_tag(page: &Page, groups: &GroupsFile, tagger: &TaggerChoice, stem: &str) -> Result<PredictionFile> {
    let layout = Layout::from_record(page, groups)?;
    Ok(tagger.tag(page, &layout, stem)?.to_prediction_file(&layout.order))
}

/// Intermediate results of decoding one page.
#[derive(Debug, Clone)]
pub struct Decoded {
    /// BIO decode plus address merge.
    pub raw: Vec<EntitySpan>,
    /// After rule post-processing (same as `raw` without hybrid).
    pub processed: Vec<EntitySpan>,
    pub selection: SelectionResult,
    pub entities: EntitiesFile,
}

pub fn decode_page(
    page: &Page,
    layout: &Layout,
    tags: &TagSequence,
    cfg: &PipelineConfig,
    rules: &RuleSet,
) -> Result<Decoded> {
    if tags.page_no != page.page_no() {
        return Err(Error::Integrity(format!(
            "tags are for page {} but OCR page is {}",
            tags.page_no,
            page.page_no()
        )));
    }
    let order = &layout.order;
    let decoded = decode_bio(&tags.tags, order, &cfg.decode)?;
    let raw = merge_addresses(&decoded, order, &cfg.decode);
    let processed = if cfg.hybrid {
        hybrid_postprocess(&raw, page, order, rules)
    } else {
        raw.clone()
    };
    let selection = select_per_page(&processed, page, order)?;
    let entities = EntitiesFile {
        page_no: page.page_no(),
        entities: selection
            .spans()
            .map(|s| {
                Ok(ExtractedEntity {
                    entity_type: s.entity_type,
                    token_ids: s.token_ids.clone(),
                    text: entity_text(s, page)?,
                    group_id: s.token_ids.first().and_then(|&t| layout.group_of(t)),
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(Decoded {
        raw,
        processed,
        selection,
        entities,
    })
}

pub fn stage_decode(
    page: &Page,
    groups: &GroupsFile,
    predictions: &PredictionFile,
    cfg: &PipelineConfig,
    rules: &RuleSet,
) -> Result<EntitiesFile> {
    let layout = Layout::from_record(page, groups)?;
    let tags = tag_from_file(page, predictions, &layout.order)?;
    Ok(decode_page(page, &layout, &tags, cfg, rules)?.entities)
}

pub fn stage_eval(entities: &EntitiesFile, gold: &AnnotationFile) -> Result<PageCounts> {
    score_page(&SelectionResult::from_entities_file(entities), gold)
}

/// Everything produced for one page in a single pass.
#[derive(Debug, Clone)]
pub struct PageOutput {
    pub layout: Layout,
    pub tags: TagSequence,
    pub decoded: Decoded,
    pub counts: Option<PageCounts>,
}

pub fn process_page(
    page: &Page,
    stem: &str,
    gold: Option<&AnnotationFile>,
    tagger: &TaggerChoice,
    cfg: &PipelineConfig,
    rules: &RuleSet,
) -> Result<PageOutput> {
    let layout = group_page(page, &cfg.grouping)?;
    let tags = tagger.tag(page, &layout, stem)?;
    let decoded = decode_page(page, &layout, &tags, cfg, rules)?;
    let counts = match gold {
        Some(g) => {
            g.check_against(page)?;
            Some(stage_eval(&decoded.entities, g)?)
        }
        None => None,
    };
    Ok(PageOutput {
        layout,
        tags,
        decoded,
        counts,
    })
}

// ---------------------------------------------------------------------------
// Corpora
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageJob {
    pub stem: String,
    pub ocr: PathBuf,
    pub gold: Option<PathBuf>,
}

/// File stem of an OCR page path: `page_0001.ocr.json` → `page_0001`.
pub fn stem_of(path: &Path) -> String {
    let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    name.strip_suffix(".ocr.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(&name)
        .to_string()
}

/// OCR pages of a directory (`*.ocr.json`, sorted), or a single file.
/// Gold files are looked up as `<gold_dir>/<stem>.gold.json`.
pub fn discover(input: &Path, gold_dir: Option<&Path>) -> Result<Vec<PageJob>> {
    let mut ocr = Vec::new();
    if input.is_dir() {
        for entry in std::fs::read_dir(input).map_err(|e| Error::io(input, e))? {
            let path = entry.map_err(|e| Error::io(input, e))?.path();
            if path.to_string_lossy().ends_with(".ocr.json") {
                ocr.push(path);
            }
        }
        ocr.sort();
    } else if input.is_file() {
        ocr.push(input.to_path_buf());
    } else {
        return Err(Error::io(input, std::io::Error::from(std::io::ErrorKind::NotFound)));
    }
    Ok(ocr
        .into_iter()
        .map(|p| {
            let stem = stem_of(&p);
            let gold = gold_dir
                .map(|d| d.join(format!("{stem}.gold.json")))
                .filter(|g| g.is_file());
            PageJob { stem, ocr: p, gold }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct PageFailure {
    pub stem: String,
    pub error: String,
    pub data_error: bool,
}

#[derive(Debug, Clone)]
pub struct CorpusRun {
    pub pages: usize,
    pub scored: Scoreboard,
    pub failures: Vec<PageFailure>,
    pub report: Option<MetricsReport>,
}

fn run_job(
    job: &PageJob,
    out_dir: Option<&Path>,
    tagger: &TaggerChoice,
    cfg: &PipelineConfig,
    rules: &RuleSet,
) -> Result<Option<PageCounts>> {
    let page = io::read_ocr_page(&job.ocr)?;
    let gold = job.gold.as_deref().map(io::read_annotations).transpose()?;
    let out = process_page(&page, &job.stem, gold.as_ref(), tagger, cfg, rules)?;
    if let Some(dir) = out_dir {
        io::write_entities(&out.decoded.entities, &dir.join(format!("{}.entities.json", job.stem)))?;
    }
    Ok(out.counts)
}

/// Process every job on the current rayon pool. With `strict`, the first
/// failing page (in job order) aborts the run.
pub fn run_corpus(
    jobs: &[PageJob],
    out_dir: Option<&Path>,
    tagger: &TaggerChoice,
    cfg: &PipelineConfig,
    strict: bool,
) -> Result<CorpusRun> {
    let rules = RuleSet::new(&cfg.rules)?;
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let results: Vec<Result<Option<PageCounts>>> = if strict {
        jobs.par_iter()
            .map(|j| run_job(j, out_dir, tagger, cfg, &rules).map_err(|e| (j.stem.clone(), e)))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|(stem, e)| match e {
                Error::Schema(m) => Error::Schema(format!("page {stem}: {m}")),
                Error::Integrity(m) => Error::Integrity(format!("page {stem}: {m}")),
                other => other,
            })?
            .into_iter()
            .map(Ok)
            .collect()
    } else {
        jobs.par_iter().map(|j| run_job(j, out_dir, tagger, cfg, &rules)).collect()
    };

    let mut scored = Scoreboard::default();
    let mut failures = Vec::new();
    let mut any_gold = false;
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(Some(c)) => {
                any_gold = true;
                scored.add_page(&c);
            }
            Ok(None) => {}
            Err(e) => failures.push(PageFailure {
                stem: job.stem.clone(),
                data_error: e.is_data_error(),
                error: e.to_string(),
            }),
        }
    }
    let report = any_gold.then(|| scored.report(cfg.mode));
    Ok(CorpusRun {
        pages: jobs.len(),
        scored,
        failures,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_page, LayoutKind, NoiseProfile, PageTemplate};

    #[test]
    fn stem_parsing() {
        assert_eq!(stem_of(Path::new("/x/page_0001.ocr.json")), "page_0001");
        assert_eq!(stem_of(Path::new("scan.json")), "scan");
    }

    #[test]
    fn staged_matches_single_pass() {
        let cfg = PipelineConfig::default();
        let rules = RuleSet::new(&cfg.rules).unwrap();
        let tagger = TaggerChoice::heuristic(None);
        for kind in LayoutKind::ALL {
            let g = generate_page(3, 1, &PageTemplate::new(kind, NoiseProfile::heavy())).unwrap();
            let one = process_page(&g.page, "p", Some(&g.gold), &tagger, &cfg, &rules).unwrap();
            let groups = stage_group(&g.page, &cfg.grouping).unwrap();
            let preds = stage_tag(&g.page, &groups, &tagger, "p").unwrap();
            let ents = stage_decode(&g.page, &groups, &preds, &cfg, &rules).unwrap();
            assert_eq!(io::entities_to_string(&ents), io::entities_to_string(&one.decoded.entities));
            assert_eq!(stage_eval(&ents, &g.gold).unwrap(), one.counts.unwrap());
        }
    }

    #[test]
    fn clean_label_left_page_fully_correct() {
        let cfg = PipelineConfig::default();
        let rules = RuleSet::new(&cfg.rules).unwrap();
        let g = generate_page(11, 1, &PageTemplate::new(LayoutKind::LabelLeft, NoiseProfile::none())).unwrap();
        let out = process_page(&g.page, "p", Some(&g.gold), &TaggerChoice::heuristic(None), &cfg, &rules).unwrap();
        let counts = out.counts.unwrap();
        for (ty, c) in &counts {
            assert_eq!(c.cor, c.possible(), "{ty}: {c:?}");
            assert_eq!(c.actual(), c.possible(), "{ty}: {c:?}");
        }
    }
}
