mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use refex_core::io::{annotations_to_string, ocr_page_to_string, parse_ocr_page};
use refex_core::labels::correct_annotations;
use refex_core::model::{EntitySpan, SpanSource};
use refex_core::rules::{apply_all, RuleSet};
use refex_core::synth::{generate_corpus, LayoutKind, NoiseProfile, TemplateMix};
use sha2::{Digest, Sha256};
use support::generated_page;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pages_pass_ingestion(g in generated_page()) {
        let back = parse_ocr_page(&ocr_page_to_string(&g.page)).unwrap();
        prop_assert_eq!(&back, &g.page);
        g.gold.check_against(&g.page).unwrap();
        g.raw_gold.check_against(&g.page).unwrap();
        g.predictions.check_against(&g.page).unwrap();
        prop_assert!(g.order.covers(&g.page));
    }

    #[test]
    fn label_correction_recovers_clean_gold(g in generated_page()) {
        let rules = RuleSet::default();
        let (fixed, log) = correct_annotations(&g.page, &g.raw_gold, &g.order, &rules).unwrap();
        prop_assert_eq!(annotations_to_string(&fixed), annotations_to_string(&g.gold));
        prop_assert_eq!(log.corrected_count(), g.injections.label_noise.len());
    }

    #[test]
    fn injected_phones_are_stripped(g in generated_page()) {
        let rules = RuleSet::default();
        for inj in &g.injections.phones {
            let clean = g
                .gold
                .entities
                .iter()
                .find(|e| e.entity_type == inj.address_type)
                .expect("phone follows an address");
            let mut ids = clean.token_ids.clone();
            ids.extend(&inj.token_ids);
            let absorbed = EntitySpan::new(inj.address_type, ids, SpanSource::Predicted);
            let fixed = apply_all(&absorbed, &g.page, &g.order, &rules).entity.unwrap();
            prop_assert!(inj.token_ids.iter().all(|t| !fixed.token_ids.contains(t)));
            prop_assert!(inj.street_prefix.iter().all(|t| fixed.token_ids.contains(t)));
            prop_assert_eq!(&fixed.token_ids, &clean.token_ids);
        }
    }
}

fn digest(dir: &std::path::Path) -> String {
    let mut names: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let mut h = Sha256::new();
    for p in names {
        h.update(p.file_name().unwrap().to_string_lossy().as_bytes());
        h.update(std::fs::read(&p).unwrap());
    }
    format!("{:x}", h.finalize())
}

#[test]
fn corpus_is_deterministic() {
    let mix = TemplateMix::uniform(NoiseProfile::heavy());
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_corpus(a.path(), 42, 20, &mix).unwrap();
    generate_corpus(b.path(), 42, 20, &mix).unwrap();
    assert_eq!(digest(a.path()), digest(b.path()));
    let c = tempfile::tempdir().unwrap();
    generate_corpus(c.path(), 43, 20, &mix).unwrap();
    assert_ne!(digest(a.path()), digest(c.path()));
}

#[test]
fn mixed_corpus_covers_every_layout() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_corpus(dir.path(), 5, 200, &TemplateMix::uniform(NoiseProfile::none())).unwrap();
    let kinds: BTreeSet<LayoutKind> = manifest.layout_histogram().into_keys().collect();
    assert_eq!(kinds.len(), LayoutKind::ALL.len());
    assert_eq!(manifest.pages.len(), 200);
}
