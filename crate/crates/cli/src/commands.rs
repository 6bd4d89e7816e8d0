//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};

use refex_core::eval::{render_tables, MetricsReport, Scoreboard};
use refex_core::io::{self, to_json_string};
use refex_core::labels::correct_annotations;
use refex_core::layout::{group_page, Layout};
use refex_core::pipeline::{self, discover, run_corpus, stem_of};
use refex_core::rules::RuleSet;
use refex_core::synth::{generate_corpus, LayoutKind, NoiseProfile, TemplateMix};

use crate::config::ConfigArgs;
use crate::{Command, NoiseLevel, UsageError};

pub(crate) fn dispatch(command: Command, args: &ConfigArgs) -> Result<()> {
    match command {
        Command::Synth {
            seed,
            pages,
            out,
            layout,
            noise,
            jobs,
        } => synth(seed, pages, &out, &layout, noise, jobs),
        Command::Group { page, out } => group(args, &page, out.as_deref()),
        Command::Tag { page, groups, out } => tag(args, &page, &groups, out.as_deref()),
        Command::Decode { page, groups, pred, out } => decode(args, &page, &groups, &pred, out.as_deref()),
        Command::Eval { pred, gold, out } => eval(args, &pred, &gold, out.as_deref()),
        Command::Run {
            input,
            gold,
            out,
            report,
            jobs,
            strict,
        } => run(args, &input, gold.as_deref(), &out, report, jobs, strict),
        Command::Correct {
            page,
            annotations,
            out,
            log,
        } => correct(args, &page, &annotations, &out, log.as_deref()),
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    match jobs {
        Some(0) => return Err(UsageError("--jobs must be at least 1".into()).into()),
        Some(n) => builder = builder.num_threads(n),
        None => {}
    }
    Ok(builder.build()?)
}

/// Write `text` to `out`, or to stdout without one.
fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{}", text.trim_end()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn synth(seed: u64, pages: usize, out: &Path, layouts: &[LayoutKind], noise: NoiseLevel, jobs: Option<usize>) -> Result<()> {
    if pages == 0 {
        return Err(UsageError("--pages must be at least 1".into()).into());
    }
    let profile = match noise {
        NoiseLevel::None => NoiseProfile::none(),
        NoiseLevel::Heavy => NoiseProfile::heavy(),
    };
    let mix = if layouts.is_empty() {
        TemplateMix::uniform(profile)
    } else {
        TemplateMix::of(layouts, profile)
    };
    let manifest = pool(jobs)?.install(|| generate_corpus(out, seed, pages, &mix))?;
    let hist: Vec<String> = manifest
        .layout_histogram()
        .iter()
        .map(|(k, n)| format!("{}={n}", k.as_str()))
        .collect();
    println!("wrote {} pages to {} ({})", manifest.pages.len(), out.display(), hist.join(", "));
    Ok(())
}

fn group(args: &ConfigArgs, page: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = args.resolve()?;
    let page = io::read_ocr_page(page)?;
    let groups = pipeline::stage_group(&page, &cfg.pipeline.grouping)?;
    emit(&to_json_string(&groups), out)
}

fn tag(args: &ConfigArgs, page_path: &Path, groups: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = args.resolve()?;
    let page = io::read_ocr_page(page_path)?;
    let groups = io::read_groups(groups)?;
    let preds = pipeline::stage_tag(&page, &groups, &cfg.tagger, &stem_of(page_path))?;
    emit(&io::predictions_to_string(&preds), out)
}

fn decode(args: &ConfigArgs, page: &Path, groups: &Path, pred: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = args.resolve()?;
    let rules = RuleSet::new(&cfg.pipeline.rules)?;
    let page = io::read_ocr_page(page)?;
    let groups = io::read_groups(groups)?;
    let preds = io::read_predictions(pred)?;
    let entities = pipeline::stage_decode(&page, &groups, &preds, &cfg.pipeline, &rules)?;
    emit(&io::entities_to_string(&entities), out)
}

/// `(stem, entities, gold)` triples to score.
fn eval_pairs(pred: &Path, gold: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if pred.is_file() && gold.is_file() {
        return Ok(vec![(stem_of(pred), pred.to_path_buf(), gold.to_path_buf())]);
    }
    if !(pred.is_dir() && gold.is_dir()) {
        return Err(UsageError("--pred and --gold must both be files or both be directories".into()).into());
    }
    let mut pairs = Vec::new();
    for entry in std::fs::read_dir(pred).with_context(|| format!("reading {}", pred.display()))? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let Some(stem) = name.strip_suffix(".entities.json") else {
            continue;
        };
        let g = gold.join(format!("{stem}.gold.json"));
        if g.is_file() {
            pairs.push((stem.to_string(), path, g));
        } else {
            warn!("no gold for {stem}; skipped");
        }
    }
    pairs.sort();
    Ok(pairs)
}

fn print_report(name: &str, report: &MetricsReport) {
    print!("{}", render_tables(&[(name, report)]));
    let o = &report.overall;
    println!(
        "overall ({}, {} pages): P={:.4} R={:.4} F1={:.4}",
        report.mode, report.pages, o.precision, o.recall, o.f1
    );
}

fn eval(args: &ConfigArgs, pred: &Path, gold: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = args.resolve()?;
    let pairs = eval_pairs(pred, gold)?;
    if pairs.is_empty() {
        bail!("no entity files with matching gold under {}", pred.display());
    }
    let mut board = Scoreboard::default();
    for (stem, p, g) in &pairs {
        let counts = pipeline::stage_eval(&io::read_entities(p)?, &io::read_annotations(g)?)
            .with_context(|| format!("page {stem}"))?;
        board.add_page(&counts);
    }
    let report = board.report(cfg.pipeline.mode);
    match out {
        Some(path) => {
            emit(&io::report_to_string(&report), Some(path))?;
            print_report("eval", &report);
        }
        None => emit(&io::report_to_string(&report), None)?,
    }
    Ok(())
}

fn run(
    args: &ConfigArgs,
    input: &Path,
    gold: Option<&Path>,
    out: &Path,
    report_path: Option<PathBuf>,
    jobs: Option<usize>,
    strict: bool,
) -> Result<()> {
    let cfg = args.resolve()?;
    if let Some(g) = gold.filter(|g| !g.is_dir()) {
        return Err(UsageError(format!("gold directory {} does not exist", g.display())).into());
    }
    let jobs_list = discover(input, gold)?;
    if jobs_list.is_empty() {
        bail!("no *.ocr.json pages under {}", input.display());
    }
    info!("{} pages", jobs_list.len());
    let result = pool(jobs)?.install(|| run_corpus(&jobs_list, Some(out), &cfg.tagger, &cfg.pipeline, strict))?;
    if let Some(report) = &result.report {
        let path = report_path.unwrap_or_else(|| out.join("report.json"));
        emit(&io::report_to_string(report), Some(&path))?;
        print_report("run", report);
    }
    if !result.failures.is_empty() {
        for f in &result.failures {
            eprintln!("{}: {}", f.stem, f.error);
        }
        let stems: Vec<&str> = result.failures.iter().map(|f| f.stem.as_str()).collect();
        bail!("{} of {} pages failed: {}", stems.len(), result.pages, stems.join(", "));
    }
    Ok(())
}

fn correct(args: &ConfigArgs, page: &Path, annotations: &Path, out: &Path, log_path: Option<&Path>) -> Result<()> {
    let cfg = args.resolve()?;
    let rules = RuleSet::new(&cfg.pipeline.rules)?;
    let page = io::read_ocr_page(page)?;
    let ann = io::read_annotations(annotations)?;
    let layout: Layout = group_page(&page, &cfg.pipeline.grouping)?;
    let (fixed, log) = correct_annotations(&page, &ann, &layout.order, &rules)?;
    emit(&io::annotations_to_string(&fixed), Some(out))?;
    if let Some(p) = log_path {
        emit(&to_json_string(&log), Some(p))?;
    }
    println!("{} of {} spans corrected", log.corrected_count(), log.examined);
    Ok(())
}
