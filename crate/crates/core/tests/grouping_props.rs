mod support;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use refex_core::layout::{cluster_rows, group_page, GroupingConfig};
use refex_core::model::{LineId, TokenId};
use refex_core::synth::GeneratedPage;
use support::{generated_page, oracle};

fn check_partition(g: &GeneratedPage, cfg: &GroupingConfig) -> Result<(), TestCaseError> {
    let layout = group_page(&g.page, cfg).unwrap();
    let mut seen: BTreeMap<TokenId, usize> = BTreeMap::new();
    let mut line_groups: BTreeMap<LineId, BTreeSet<usize>> = BTreeMap::new();
    for (gi, group) in layout.groups.iter().enumerate() {
        for f in &group.fragments {
            line_groups.entry(f.line_id).or_default().insert(gi);
            for &t in &f.token_ids {
                prop_assert_eq!(g.page.token(t).unwrap().line_id, f.line_id);
                prop_assert!(seen.insert(t, gi).is_none(), "token {} in two groups", t);
            }
        }
        // No group straddles a column band.
        let intervals: Vec<(f64, f64)> = group
            .token_ids()
            .map(|t| g.page.token(t).unwrap().bbox)
            .map(|b| (b.x0, b.x1))
            .collect();
        prop_assert!(oracle::widest_gap(&intervals) < cfg.column_gap);
    }
    prop_assert_eq!(seen.len(), g.page.tokens().len());
    for line in g.page.lines() {
        let groups = &line_groups[&line.id];
        if groups.len() > 1 {
            // Only a column band may cut a line.
            let intervals: Vec<(f64, f64)> = line
                .token_ids
                .iter()
                .map(|&t| g.page.token(t).unwrap().bbox)
                .map(|b| (b.x0, b.x1))
                .collect();
            prop_assert!(oracle::widest_gap(&intervals) >= cfg.column_gap);
        }
    }
    // Reading order is a bijection onto the page tokens.
    let mut ranked: Vec<TokenId> = layout.order.tokens().to_vec();
    prop_assert_eq!(ranked.len(), g.page.tokens().len());
    ranked.sort_unstable();
    ranked.dedup();
    prop_assert_eq!(ranked.len(), g.page.tokens().len());
    for (rank, &t) in layout.order.tokens().iter().enumerate() {
        prop_assert_eq!(layout.order.rank(t), Some(rank));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_and_bands(g in generated_page()) {
        check_partition(&g, &GroupingConfig::default())?;
    }

    #[test]
    fn partition_under_other_parameters(g in generated_page(), eps_y in 0.002f64..0.02, eps_x in 0.005f64..0.1, gap in 0.01f64..0.2) {
        let cfg = GroupingConfig { eps_y, eps_x, column_gap: gap, ..Default::default() };
        check_partition(&g, &cfg)?;
    }

    #[test]
    fn deterministic(g in generated_page()) {
        let cfg = GroupingConfig::default();
        prop_assert_eq!(group_page(&g.page, &cfg).unwrap(), group_page(&g.page, &cfg).unwrap());
    }

    #[test]
    fn row_count_monotone_in_eps_y(g in generated_page(), a in 0.001f64..0.05, b in 0.001f64..0.05) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let lines: Vec<_> = g.page.lines().iter().collect();
        let rows = |eps_y| cluster_rows(&lines, &GroupingConfig { eps_y, ..Default::default() }).unwrap().len();
        prop_assert!(rows(hi) <= rows(lo));
    }

    #[test]
    fn groups_survive_record_round_trip(g in generated_page()) {
        let layout = group_page(&g.page, &GroupingConfig::default()).unwrap();
        let record = layout.to_record(&g.page).unwrap();
        let back = refex_core::layout::Layout::from_record(&g.page, &record).unwrap();
        prop_assert_eq!(back.order, layout.order);
        prop_assert_eq!(back.groups.len(), layout.groups.len());
    }
}
