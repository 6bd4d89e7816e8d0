mod support;

use proptest::prelude::*;
use refex_core::model::{EntitySpan, EntityType, SpanSource, TokenId};
use refex_core::perturb::{apply_error, ErrorKind};
use refex_core::rules::{apply_all, extend_left, reclassify_by_credentials, strip_phone, strip_stop_words, RuleSet};
use refex_core::synth::GeneratedPage;
use support::generated_page;

/// A contiguous reading-order window of a generated page with any type.
fn window() -> impl Strategy<Value = (GeneratedPage, EntitySpan)> {
    (generated_page(), 0usize..8, any::<prop::sample::Index>(), 1usize..8).prop_map(|(g, ti, start, len)| {
        let n = g.order.len();
        let s = start.index(n);
        let ids: Vec<TokenId> = (s..(s + len).min(n)).map(|r| g.order.token_at(r).unwrap()).collect();
        let span = EntitySpan::new(EntityType::ALL[ti], ids, SpanSource::Gold);
        (g, span)
    })
}

fn is_subsequence(short: &[TokenId], long: &[TokenId]) -> bool {
    let mut it = long.iter();
    short.iter().all(|t| it.any(|x| x == t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn apply_all_idempotent((g, span) in window()) {
        let rules = RuleSet::default();
        let once = apply_all(&span, &g.page, &g.order, &rules);
        if let Some(e) = &once.entity {
            let twice = apply_all(e, &g.page, &g.order, &rules);
            prop_assert!(!twice.is_changed(), "{:?} -> {:?} -> {:?}", span, e, twice);
        }
    }

    #[test]
    fn individual_rule_shapes((g, span) in window()) {
        let rules = RuleSet::default();
        let (p, o) = (&g.page, &g.order);
        for out in [strip_stop_words(&span, p, &rules), strip_phone(&span, p, o, &rules)] {
            if let Some(e) = out.entity {
                prop_assert_eq!(e.entity_type, span.entity_type);
                prop_assert!(is_subsequence(&e.token_ids, &span.token_ids));
            }
        }
        if let Some(e) = extend_left(&span, p, o, &rules).entity {
            prop_assert_eq!(e.entity_type, span.entity_type);
            prop_assert!(e.token_ids.ends_with(&span.token_ids));
        }
        if let Some(e) = reclassify_by_credentials(&span, p, o, &rules).entity {
            prop_assert!(e.token_ids.starts_with(&span.token_ids));
            for &t in &e.token_ids[span.len()..] {
                prop_assert!(rules.is_credential(&g.page.token(t).unwrap().text));
            }
            if e.entity_type != span.entity_type {
                prop_assert_eq!(span.entity_type, EntityType::PatientName);
                prop_assert_eq!(e.entity_type, EntityType::PhysicianName);
            }
        }
    }

    #[test]
    fn injected_errors_are_undone(g in generated_page()) {
        let rules = RuleSet::default();
        for clean in &g.gold.entities {
            let fixed_point = apply_all(clean, &g.page, &g.order, &rules);
            prop_assert!(!fixed_point.is_changed(), "clean span moved: {:?}", clean);
            for kind in ErrorKind::ALL {
                if let Some(noisy) = apply_error(kind, clean, &g.page, &g.order, &rules) {
                    let fixed = apply_all(&noisy, &g.page, &g.order, &rules).entity;
                    let fixed = fixed.map(|e| (e.entity_type, e.token_ids));
                    prop_assert_eq!(fixed, Some((clean.entity_type, clean.token_ids.clone())), "{:?}", kind);
                }
            }
        }
    }
}
