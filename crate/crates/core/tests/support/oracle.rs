//! Brute-force reference implementations, written without reference to the
//! library code they check.

#![allow(dead_code)]

use refex_core::eval::{MucCounts, MucMode};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// DBSCAN by density-reachability closure over the full distance matrix.
///
/// Core points are those with at least `min_pts` points within `eps`
/// (themselves included). Clusters are the connected components of the
/// core-core `eps` graph, numbered by their smallest core index. A border
/// point takes the smallest cluster number among its core neighbors.
pub fn dbscan(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let near = |i: usize, j: usize| dist(&points[i], &points[j]) <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();

    // Transitive closure on core points by repeated relaxation.
    let mut comp: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if core[i] && core[j] && near(i, j) && comp[j] < comp[i] {
                    comp[i] = comp[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i]).map(|i| comp[i]).collect();
    roots.sort_unstable();
    roots.dedup();
    let label_of = |root: usize| roots.iter().position(|&r| r == root).unwrap();

    (0..n)
        .map(|i| {
            if core[i] {
                Some(label_of(comp[i]))
            } else {
                (0..n).filter(|&j| core[j] && near(i, j)).map(|j| label_of(comp[j])).min()
            }
        })
        .collect()
}

/// Widest empty gap inside the union of the intervals, 0 when connected.
pub fn widest_gap(intervals: &[(f64, f64)]) -> f64 {
    let mut v = intervals.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut reach = f64::NEG_INFINITY;
    let mut widest: f64 = 0.0;
    for (a, b) in v {
        if reach.is_finite() && a > reach {
            widest = widest.max(a - reach);
        }
        reach = reach.max(b);
    }
    widest
}

/// Precision, recall and F1 straight from the scoring formulas.
pub fn muc(c: MucCounts, mode: MucMode) -> (f64, f64, f64) {
    let credit = c.cor as f64 + 0.5 * c.par as f64;
    let possible = (c.cor + c.par + c.inc + c.mis) as f64;
    let actual = (c.cor + c.par + c.inc + c.spu) as f64;
    let (p_den, r_den) = match mode {
        MucMode::Standard => (actual, possible),
        MucMode::Paper => (possible, actual),
    };
    let p = credit / p_den;
    let r = credit / r_den;
    (p, r, 2.0 * p * r / (p + r))
}
