//! Acceptance gate. Runs every primary criterion and prints one PASS/FAIL
//! line each; exits non-zero if any fails.

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use refex_core::decode::{decode_bio, merge_addresses, DecodeConfig, SelectionResult};
use refex_core::eval::{metrics, score_page, MetricsReport, MucCounts, MucMode, Scoreboard};
use refex_core::labels::to_bio;
use refex_core::layout::{cluster_rows, dbscan_points, group_page, GroupingConfig};
use refex_core::model::{BBox, BioTag, EntitySpan, EntityType, Page, ReadingOrder, SpanSource, Token, TokenId};
use refex_core::perturb::{apply_error, ErrorKind};
use refex_core::pipeline::{process_page, PipelineConfig, TaggerChoice};
use refex_core::rules::{apply_all, RuleSet};
use refex_core::synth::{corpus_page, GeneratedPage, LayoutKind, NoiseProfile, TemplateMix};
use refex_core::tagging::TaggerNoise;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn pages(seed: u64, n: usize, mix: &TemplateMix) -> Vec<GeneratedPage> {
    (0..n).map(|i| corpus_page(seed, i, mix).expect("generator")).collect()
}

fn heavy_mix() -> TemplateMix {
    TemplateMix::uniform(NoiseProfile::heavy())
}

// ---------------------------------------------------------------------------

fn dbscan_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xDB5C);
    let start = Instant::now();
    for case in 0..200 {
        let dim = rng.random_range(1..=2);
        let n = rng.random_range(0..=50);
        let eps = rng.random_range(1..=10) as f64 / 100.0;
        let min_pts = *[1, 3].choose(&mut rng).unwrap();
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(0.0..0.4)).collect())
            .collect();
        let got = dbscan_points(&points, eps, min_pts).map_err(|e| e.to_string())?;
        check(got == oracle::dbscan(&points, eps, min_pts), format!("instance {case} differs"))?;
    }
    let took = start.elapsed();
    check(took < Duration::from_secs(5), format!("took {took:?}"))?;
    Ok(format!("200/200 instances match, {took:.2?}"))
}

fn grouping_invariants() -> Outcome {
    let mut corpus = pages(101, 250, &heavy_mix());
    corpus.extend(pages(102, 250, &TemplateMix::uniform(NoiseProfile::none())));
    let cfg = GroupingConfig::default();
    let mut violations = 0;
    let mut split_lines = 0;
    for g in &corpus {
        let layout = group_page(&g.page, &cfg).map_err(|e| e.to_string())?;
        let mut owner: std::collections::HashMap<TokenId, usize> = Default::default();
        for (gi, group) in layout.groups.iter().enumerate() {
            for t in group.token_ids() {
                if owner.insert(t, gi).is_some() {
                    violations += 1;
                }
            }
            let intervals: Vec<(f64, f64)> = group
                .token_ids()
                .map(|t| g.page.token(t).unwrap().bbox)
                .map(|b| (b.x0, b.x1))
                .collect();
            if oracle::widest_gap(&intervals) >= cfg.column_gap {
                violations += 1;
            }
        }
        if owner.len() != g.page.tokens().len() {
            violations += 1;
        }
        for line in g.page.lines() {
            let groups: std::collections::BTreeSet<usize> = line.token_ids.iter().map(|t| owner[t]).collect();
            if groups.len() > 1 {
                split_lines += 1;
                let intervals: Vec<(f64, f64)> = line
                    .token_ids
                    .iter()
                    .map(|&t| g.page.token(t).unwrap().bbox)
                    .map(|b| (b.x0, b.x1))
                    .collect();
                if oracle::widest_gap(&intervals) < cfg.column_gap {
                    violations += 1;
                }
            }
        }
        let mut ranks: Vec<usize> = g.page.tokens().iter().filter_map(|t| layout.order.rank(t.id)).collect();
        ranks.sort_unstable();
        if ranks != (0..g.page.tokens().len()).collect::<Vec<_>>() {
            violations += 1;
        }
        let lines: Vec<_> = g.page.lines().iter().collect();
        let rows: Vec<usize> = [0.003, 0.006, 0.012]
            .iter()
            .map(|&eps_y| cluster_rows(&lines, &GroupingConfig { eps_y, ..cfg }).unwrap().len())
            .collect();
        if rows.windows(2).any(|w| w[1] > w[0]) {
            violations += 1;
        }
    }
    check(violations == 0, format!("{violations} violations"))?;
    Ok(format!("500 pages, 0 violations ({split_lines} lines cut at column bands)"))
}

/// Contiguous spans along the reading order; same-type spans never touch.
fn random_spans(order: &ReadingOrder, rng: &mut ChaCha8Rng, separate: bool) -> Vec<EntitySpan> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    let mut pos = rng.random_range(0..4);
    for _ in 0..rng.random_range(0..24) {
        let ty = EntityType::ALL[rng.random_range(0..8)];
        let len = rng.random_range(1..5);
        let mut gap = rng.random_range(0..4);
        if separate && gap == 0 && spans.last().is_some_and(|s| s.entity_type == ty) {
            gap = 1;
        }
        let start = pos + gap;
        if start + len > order.len() {
            break;
        }
        let ids = (start..start + len).map(|r| order.token_at(r).unwrap()).collect();
        spans.push(EntitySpan::new(ty, ids, SpanSource::Predicted));
        pos = start + len;
    }
    spans
}

/// A one-line page of `n` tokens whose reading order is the id order.
fn strip_page(n: usize) -> (Page, ReadingOrder) {
    let tokens: Vec<Token> = (0..n)
        .map(|i| Token {
            id: i as TokenId,
            text: format!("w{i}"),
            bbox: BBox::new(0.01 * i as f64, 0.1, 0.01 * i as f64 + 0.008, 0.11).unwrap(),
            line_id: 0,
        })
        .collect();
    let line = BBox::new(0.0, 0.1, 0.01 * (n - 1) as f64 + 0.008, 0.11).unwrap();
    let page = Page::new(1, 100, 100, vec![(0, line)], tokens).unwrap();
    (page, ReadingOrder::from_sequence((0..n as TokenId).collect()).unwrap())
}

fn bio_round_trip() -> Outcome {
    let corpus = pages(201, 100, &heavy_mix());
    let mut rng = ChaCha8Rng::seed_from_u64(0xB10);
    let cfg = DecodeConfig::default();
    let key = |s: &[EntitySpan]| s.iter().map(|e| (e.entity_type, e.token_ids.clone())).collect::<Vec<_>>();
    let mut entities = 0;
    for i in 0..1000 {
        let g = &corpus[i % corpus.len()];
        let spans = random_spans(&g.order, &mut rng, true);
        entities += spans.len();
        let tags = to_bio(&g.page, &spans, &g.order).map_err(|e| e.to_string())?;
        let back = decode_bio(&tags, &g.order, &cfg).map_err(|e| e.to_string())?;
        check(key(&back) == key(&spans), format!("set {i} does not round-trip"))?;
    }

    use BioTag::*;
    use EntityType::*;
    let decode = |tags: &[BioTag]| {
        let (_, o) = strip_page(tags.len());
        decode_bio(tags, &o, &cfg).unwrap().iter().map(|e| (e.entity_type, e.token_ids.clone())).collect::<Vec<_>>()
    };
    check(
        decode(&[B(PatientName), I(PatientName), O, B(PatientDob)]) == vec![(PatientName, vec![0, 1]), (PatientDob, vec![3])],
        "B I O B example",
    )?;
    check(decode(&[I(PatientAddress), I(PatientAddress)]) == vec![(PatientAddress, vec![0, 1])], "I-start example")?;
    check(
        decode(&[B(PatientName), B(PatientName)]) == vec![(PatientName, vec![0]), (PatientName, vec![1])],
        "B B example",
    )?;
    Ok(format!("1000 sets ({entities} entities) round-trip; 3 decode examples exact"))
}

fn address_merge() -> Outcome {
    let (_, order) = strip_page(40);
    let cfg = DecodeConfig::default();
    let span = |ty, r: std::ops::Range<u32>| EntitySpan::new(ty, r.collect(), SpanSource::Predicted);
    let merged = |a: EntitySpan, b: EntitySpan| merge_addresses(&[a, b], &order, &cfg).len() == 1;
    use EntityType::*;
    check(merged(span(PatientAddress, 0..3), span(PatientAddress, 8..10)), "gap 5 must merge")?;
    check(!merged(span(PatientAddress, 0..3), span(PatientAddress, 9..11)), "gap 6 must not merge")?;
    check(merged(span(PatientAddress, 0..3), span(PatientAddress, 7..9)), "gap 4 must merge")?;
    check(!merged(span(PatientAddress, 0..3), span(PhysicianAddress, 5..7)), "types must match")?;

    let corpus = pages(301, 50, &heavy_mix());
    let mut rng = ChaCha8Rng::seed_from_u64(0x3E76);
    for i in 0..500 {
        let g = &corpus[i % corpus.len()];
        let cfg = DecodeConfig { address_merge_gap: rng.random_range(0..8), ..Default::default() };
        let spans = random_spans(&g.order, &mut rng, false);
        let once = merge_addresses(&spans, &g.order, &cfg);
        check(merge_addresses(&once, &g.order, &cfg) == once, format!("layout {i} not idempotent"))?;
        let mut shuffled = spans.clone();
        shuffled.shuffle(&mut rng);
        check(merge_addresses(&shuffled, &g.order, &cfg) == once, format!("layout {i} order-sensitive"))?;
    }
    Ok("gap 5 merges, gap 6 does not; 500 layouts idempotent".into())
}

fn rule_idempotence() -> Outcome {
    let rules = RuleSet::default();
    let mut spans = 0;
    let mut corrected = 0;
    let mut index = 0;
    while spans < 1000 {
        let g = corpus_page(401, index, &heavy_mix()).map_err(|e| e.to_string())?;
        index += 1;
        for clean in &g.gold.entities {
            for kind in ErrorKind::ALL {
                let Some(noisy) = apply_error(kind, clean, &g.page, &g.order, &rules) else {
                    continue;
                };
                spans += 1;
                let once = apply_all(&noisy, &g.page, &g.order, &rules);
                if let Some(e) = &once.entity {
                    check(!apply_all(e, &g.page, &g.order, &rules).is_changed(), format!("{kind:?} not idempotent"))?;
                    if e.entity_type == clean.entity_type && e.token_ids == clean.token_ids {
                        corrected += 1;
                    }
                }
            }
        }
    }
    check(corrected == spans, format!("{corrected}/{spans} injected errors undone"))?;

    let mut phones = 0;
    let mut removed = 0;
    let mut prefixes = 0;
    let mut prefixes_kept = 0;
    let mut index = 0;
    while phones < 500 {
        let g = corpus_page(402, index, &heavy_mix()).map_err(|e| e.to_string())?;
        index += 1;
        for inj in &g.injections.phones {
            let Some(clean) = g.gold.entities.iter().find(|e| e.entity_type == inj.address_type) else {
                return Err("phone injected without an address".into());
            };
            let mut ids = clean.token_ids.clone();
            ids.extend(&inj.token_ids);
            let absorbed = EntitySpan::new(inj.address_type, ids, SpanSource::Predicted);
            let fixed = apply_all(&absorbed, &g.page, &g.order, &rules).entity.unwrap_or(absorbed);
            phones += 1;
            removed += usize::from(inj.token_ids.iter().all(|t| !fixed.token_ids.contains(t)));
            prefixes += inj.street_prefix.len();
            prefixes_kept += inj.street_prefix.iter().filter(|t| fixed.token_ids.contains(t)).count();
        }
    }
    check(removed == phones, format!("{removed}/{phones} phones removed"))?;
    check(prefixes_kept == prefixes, format!("{} street-number tokens removed", prefixes - prefixes_kept))?;
    Ok(format!(
        "{spans} noisy spans idempotent and restored; {phones} phones removed 100%, {prefixes} street tokens removed 0%"
    ))
}

fn muc_arithmetic(reports: &[MetricsReport]) -> Outcome {
    let c = MucCounts { cor: 2, par: 1, inc: 1, mis: 2, spu: 0 };
    let paper = metrics(c, MucMode::Paper);
    let standard = metrics(c, MucMode::Standard);
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    check(close(paper.precision, 2.5 / 6.0) && close(paper.recall, 0.625), format!("paper {paper:?}"))?;
    check(close(standard.precision, 0.625) && close(standard.recall, 2.5 / 6.0), format!("standard {standard:?}"))?;

    let mut board = Scoreboard::default();
    for g in pages(501, 100, &heavy_mix()) {
        let mut sel = SelectionResult { page_no: g.page.page_no(), ..Default::default() };
        for e in &g.gold.entities {
            sel.selected.entry(e.entity_type).or_default().push(e.clone());
        }
        board.add_page(&score_page(&sel, &g.gold).map_err(|e| e.to_string())?);
    }
    for mode in [MucMode::Standard, MucMode::Paper] {
        let o = board.report(mode).overall;
        check((o.precision, o.recall, o.f1) == (1.0, 1.0, 1.0), format!("perfect corpus in {mode}: {o:?}"))?;
    }
    let bad = reports.iter().filter(|r| !r.identities_hold()).count();
    check(bad == 0, format!("{bad} reports break the count identities"))?;
    Ok(format!(
        "worked example within 1e-9; perfect corpus P=R=F1=1 in both modes; identities hold on {} reports",
        reports.len()
    ))
}

fn zero_noise_end_to_end(reports: &mut Vec<MetricsReport>) -> Outcome {
    let mix = TemplateMix::of(&[LayoutKind::LabelLeft, LayoutKind::LabelAbove], NoiseProfile::none());
    let corpus = pages(601, 100, &mix);
    let cfg = PipelineConfig::default();
    let rules = RuleSet::new(&cfg.rules).map_err(|e| e.to_string())?;
    let tagger = TaggerChoice::heuristic(None);
    let start = Instant::now();
    let mut board = Scoreboard::default();
    for g in &corpus {
        let out = process_page(&g.page, "p", Some(&g.gold), &tagger, &cfg, &rules).map_err(|e| e.to_string())?;
        board.add_page(&out.counts.unwrap());
    }
    let took = start.elapsed();
    let mut present = 0;
    for (ty, c) in &board.per_type {
        if ty.is_single_valued() {
            present += c.possible();
            check(c.cor == c.possible() && c.actual() == c.possible(), format!("{ty}: {c:?}"))?;
        }
    }
    check(took < Duration::from_secs(10), format!("took {took:?}"))?;
    reports.push(board.report(MucMode::Standard));
    Ok(format!("{present}/{present} Patient/Physician entities COR over 100 pages, {took:.2?}"))
}

fn hybrid_uplift(reports: &mut Vec<MetricsReport>) -> Outcome {
    let corpus = pages(701, 200, &heavy_mix());
    let mut lines = Vec::new();
    let taggers = [
        ("file", None),
        ("heuristic+noise", Some(TaggerChoice::heuristic(Some(TaggerNoise { rate: 0.3, seed: 7 })))),
    ];
    for (name, tagger) in taggers {
        let mut result = Vec::new();
        for hybrid in [false, true] {
            let cfg = PipelineConfig { hybrid, ..Default::default() };
            let rules = RuleSet::new(&cfg.rules).map_err(|e| e.to_string())?;
            let mut board = Scoreboard::default();
            for g in &corpus {
                let counts = match &tagger {
                    Some(t) => process_page(&g.page, "p", Some(&g.gold), t, &cfg, &rules).map(|o| o.counts.unwrap()),
                    None => file_page(g, &cfg, &rules),
                }
                .map_err(|e| e.to_string())?;
                board.add_page(&counts);
            }
            let report = board.report(MucMode::Standard);
            result.push(report.overall);
            reports.push(report);
        }
        let (base, hyb) = (result[0], result[1]);
        let uplift = hyb.precision / base.precision - 1.0;
        check(hyb.precision >= base.precision, format!("{name}: precision fell"))?;
        check(hyb.f1 >= base.f1, format!("{name}: F1 fell"))?;
        check(uplift >= 0.10, format!("{name}: precision uplift {:.1}% < 10%", 100.0 * uplift))?;
        lines.push(format!(
            "{name}: P {:.3}->{:.3} (+{:.1}%), F1 {:.3}->{:.3}",
            base.precision,
            hyb.precision,
            100.0 * uplift,
            base.f1,
            hyb.f1
        ));
    }
    Ok(lines.join("; "))
}

/// Score one page using the generator's recorded predictions.
fn file_page(
    g: &GeneratedPage,
    cfg: &PipelineConfig,
    rules: &RuleSet,
) -> refex_core::Result<refex_core::eval::PageCounts> {
    let layout = group_page(&g.page, &cfg.grouping)?;
    let tags = refex_core::tagging::tag_from_file(&g.page, &g.predictions, &layout.order)?;
    let decoded = refex_core::pipeline::decode_page(&g.page, &layout, &tags, cfg, rules)?;
    refex_core::pipeline::stage_eval(&decoded.entities, &g.gold)
}

// ---------------------------------------------------------------------------

fn refex(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_refex"))
        .args(args)
        .env_remove("REFEX_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("refex {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn staged_vs_monolithic(reports: &mut Vec<MetricsReport>) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = tmp.path().join("corpus");
    refex(&["synth", "--seed", "42", "--pages", "12", "--noise", "heavy", "--out", path(&corpus)])?;
    let pred_pattern = format!("file:{}/{{stem}}.pred.json", path(&corpus));
    let variants: [(&str, Vec<&str>); 2] = [
        ("heuristic", vec!["--tagger", "heuristic", "--tagger-noise", "0.3", "--tagger-seed", "5"]),
        ("file", vec!["--tagger", &pred_pattern, "--muc5-mode", "paper", "--merge-gap", "3"]),
    ];
    for (name, flags) in &variants {
        let mono = tmp.path().join(format!("mono-{name}"));
        let staged = tmp.path().join(format!("staged-{name}"));
        let mut args = vec!["run", path(&corpus), "--gold", path(&corpus), "--out", path(&mono)];
        args.extend(flags.iter().copied());
        refex(&args)?;

        for i in 1..=12 {
            let stem = format!("page_{i:04}");
            let ocr = corpus.join(format!("{stem}.ocr.json"));
            let groups = staged.join(format!("{stem}.groups.json"));
            let pred = staged.join(format!("{stem}.pred.json"));
            let ents = staged.join(format!("{stem}.entities.json"));
            let mut a = vec!["group", path(&ocr), "--out", path(&groups)];
            a.extend(flags.iter().copied());
            refex(&a)?;
            let mut a = vec!["tag", path(&ocr), "--groups", path(&groups), "--out", path(&pred)];
            a.extend(flags.iter().copied());
            refex(&a)?;
            let mut a = vec!["decode", path(&ocr), "--groups", path(&groups), "--pred", path(&pred), "--out", path(&ents)];
            a.extend(flags.iter().copied());
            refex(&a)?;
            let same = std::fs::read(&ents).ok() == std::fs::read(mono.join(format!("{stem}.entities.json"))).ok();
            check(same, format!("{name}: {stem} entities differ"))?;
        }
        let report = staged.join("report.json");
        let mut a = vec!["eval", "--pred", path(&staged), "--gold", path(&corpus), "--out", path(&report)];
        a.extend(flags.iter().copied());
        refex(&a)?;
        let a = std::fs::read(&report).map_err(|e| e.to_string())?;
        let b = std::fs::read(mono.join("report.json")).map_err(|e| e.to_string())?;
        check(a == b, format!("{name}: reports differ"))?;
        reports.push(refex_core::io::read_report(&report).map_err(|e| e.to_string())?);
    }
    Ok("reports and entity files byte-identical for 2 configurations x 12 pages".into())
}

fn main() {
    let mut reports = Vec::new();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("DBSCAN oracle equivalence", dbscan_oracle()),
        ("Grouping invariants", grouping_invariants()),
        ("BIO round trip", bio_round_trip()),
        ("Address merge boundary", address_merge()),
        ("Rule idempotence", rule_idempotence()),
    ];
    results.push(("Zero-noise end-to-end", zero_noise_end_to_end(&mut reports)));
    results.push(("Hybrid uplift direction", hybrid_uplift(&mut reports)));
    results.push(("Staged-vs-monolithic CLI equivalence", staged_vs_monolithic(&mut reports)));
    results.push(("MUC-5 arithmetic", muc_arithmetic(&reports)));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
