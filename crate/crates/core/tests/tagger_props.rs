mod support;

use proptest::prelude::*;
use refex_core::layout::{group_page, GroupingConfig};
use refex_core::model::{BBox, EntityType, Page};
use refex_core::synth::{generate_page, GeneratedPage, LayoutKind, NoiseProfile, PageTemplate};
use refex_core::tagging::{tag_from_file, FileTagger, HeuristicTagger, Tagger, TaggerNoise};
use support::generated_page;

fn check_one_tag_per_token(tagger: &dyn Tagger, g: &GeneratedPage) -> Result<(), TestCaseError> {
    let layout = group_page(&g.page, &GroupingConfig::default()).unwrap();
    let seq = tagger.tag(&g.page, &layout).unwrap();
    prop_assert_eq!(seq.len(), g.page.tokens().len());
    prop_assert_eq!(seq.confidence.len(), seq.len());
    let file = seq.to_prediction_file(&layout.order);
    file.check_against(&g.page).unwrap();
    prop_assert_eq!(tag_from_file(&g.page, &file, &layout.order).unwrap(), seq);
    Ok(())
}

/// Move every token of `line` to a new row at the bottom-left of the page.
fn move_line_to_bottom(page: &Page, line: u32) -> Page {
    let dy = 0.97 - page.line(line).unwrap().bbox.y0;
    let dx = 0.01 - page.line(line).unwrap().bbox.x0;
    let shift = |b: BBox| BBox::new(b.x0 + dx, b.y0 + dy, b.x1 + dx, (b.y1 + dy).min(1.0)).unwrap();
    let lines = page
        .lines()
        .iter()
        .map(|l| (l.id, if l.id == line { shift(l.bbox) } else { l.bbox }))
        .collect();
    let tokens = page
        .tokens()
        .iter()
        .map(|t| {
            let mut t = t.clone();
            if t.line_id == line {
                t.bbox = shift(t.bbox);
            }
            t
        })
        .collect();
    Page::new(page.page_no(), page.width_px(), page.height_px(), lines, tokens).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heuristic_one_tag_per_token(g in generated_page(), noisy in any::<bool>()) {
        let noise = noisy.then_some(TaggerNoise { rate: 0.5, seed: 3 });
        check_one_tag_per_token(&HeuristicTagger::default().with_noise(noise), &g)?;
    }

    #[test]
    fn file_one_tag_per_token(g in generated_page()) {
        check_one_tag_per_token(&FileTagger { predictions: g.predictions.clone() }, &g)?;
    }

    #[test]
    fn heuristic_is_deterministic(g in generated_page()) {
        let t = HeuristicTagger::default().with_noise(Some(TaggerNoise { rate: 0.3, seed: 9 }));
        let layout = group_page(&g.page, &GroupingConfig::default()).unwrap();
        prop_assert_eq!(t.tag(&g.page, &layout).unwrap(), t.tag(&g.page, &layout).unwrap());
    }

    #[test]
    fn moving_the_trigger_removes_its_effect(seed in any::<u64>()) {
        let g = generate_page(seed, 1, &PageTemplate::new(LayoutKind::LabelLeft, NoiseProfile::none())).unwrap();
        let dob = g.gold.entities.iter().find(|e| e.entity_type == EntityType::PatientDob).unwrap();
        let first = dob.token_ids[0];
        let label = g.order.token_at(g.order.rank(first).unwrap() - 1).unwrap();
        let label_line = g.page.token(label).unwrap().line_id;
        prop_assume!(label_line != g.page.token(first).unwrap().line_id);

        let tagger = HeuristicTagger::default();
        let tagged_dob = |page: &Page| {
            let layout = group_page(page, &GroupingConfig::default()).unwrap();
            let seq = tagger.tag(page, &layout).unwrap();
            let rank = layout.order.rank(first).unwrap();
            seq.tags[rank].entity_type() == Some(EntityType::PatientDob)
        };
        prop_assert!(tagged_dob(&g.page));
        prop_assert!(!tagged_dob(&move_line_to_bottom(&g.page, label_line)));
    }
}
