//! Density-based clustering (DBSCAN).
//!
//! A point is a core point when at least `min_pts` points (itself included)
//! lie within `eps` of it. Core points within `eps` of each other share a
//! cluster; a non-core point within `eps` of a core point is a border point
//! and joins the earliest-discovered such cluster. Everything else is noise.
//!
//! Clusters are numbered in order of their lowest-index core point, so the
//! labeling is a deterministic function of the input order.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Cluster label per point; `None` marks noise.
pub type Labels = Vec<Option<usize>>;

/// Anything that can answer "which points lie within `eps` of point `i`".
pub trait Neighborhood {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Indices within `eps` of `i`, including `i` itself.
    fn neighbors(&self, i: usize, eps: f64) -> Vec<usize>;
}

/// Dense coordinates with Euclidean distance.
#[derive(Debug, Clone)]
pub struct Points<'a> {
    coords: &'a [Vec<f64>],
}

impl<'a> Points<'a> {
    pub fn new(coords: &'a [Vec<f64>]) -> Result<Self> {
        let dim = coords.first().map_or(0, Vec::len);
        for (i, p) in coords.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::Input(format!(
                    "point {i} has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Input(format!("point {i} has a non-finite coordinate")));
            }
        }
        Ok(Points { coords })
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl Neighborhood for Points<'_> {
    fn len(&self) -> usize {
        self.coords.len()
    }

    fn neighbors(&self, i: usize, eps: f64) -> Vec<usize> {
        let p = &self.coords[i];
        (0..self.coords.len())
            .filter(|&j| euclidean(p, &self.coords[j]) <= eps)
            .collect()
    }
}

/// Precomputed symmetric distance matrix, stored row-major.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Input(format!(
                "distance matrix has {} entries, expected {}",
                data.len(),
                n * n
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let d = data[i * n + j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Input(format!("distance ({i},{j}) = {d} is invalid")));
                }
                if d != data[j * n + i] {
                    return Err(Error::Input(format!("distance matrix asymmetric at ({i},{j})")));
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

impl Neighborhood for DistanceMatrix {
    fn len(&self) -> usize {
        self.n
    }

    fn neighbors(&self, i: usize, eps: f64) -> Vec<usize> {
        (0..self.n).filter(|&j| i == j || self.get(i, j) <= eps).collect()
    }
}

/// Distance matrix where absent entries are infinitely far apart.
#[derive(Debug, Clone)]
pub struct SparseDistances {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SparseDistances {
    pub fn new(n: usize) -> Self {
        SparseDistances {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Record a symmetric finite distance between `i` and `j`.
    pub fn insert(&mut self, i: usize, j: usize, d: f64) -> Result<()> {
        let n = self.adjacency.len();
        if i >= n || j >= n {
            return Err(Error::Input(format!("entry ({i},{j}) outside {n}x{n} matrix")));
        }
        if !d.is_finite() || d < 0.0 {
            return Err(Error::Input(format!("distance ({i},{j}) = {d} is invalid")));
        }
        if i != j {
            self.adjacency[i].push((j, d));
            self.adjacency[j].push((i, d));
        }
        Ok(())
    }

    pub fn entries(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }
}

impl Neighborhood for SparseDistances {
    fn len(&self) -> usize {
        self.adjacency.len()
    }

    fn neighbors(&self, i: usize, eps: f64) -> Vec<usize> {
        let mut out = vec![i];
        out.extend(
            self.adjacency[i]
                .iter()
                .filter(|&&(_, d)| d <= eps)
                .map(|&(j, _)| j),
        );
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn check_params(eps: f64, min_pts: usize) -> Result<()> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(Error::Input(format!("eps must be positive and finite, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::Input("min_pts must be at least 1".into()));
    }
    Ok(())
}

/// Cluster every point of `space`.
pub fn dbscan<N: Neighborhood + ?Sized>(space: &N, eps: f64, min_pts: usize) -> Result<Labels> {
    check_params(eps, min_pts)?;
    let n = space.len();
    let mut labels: Labels = vec![None; n];
    let mut visited = vec![false; n];
    let mut next_cluster = 0;

    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let seeds = space.neighbors(start, eps);
        if seeds.len() < min_pts {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[start] = Some(cluster);

        let mut queue: VecDeque<usize> = seeds.into();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let reach = space.neighbors(j, eps);
            if reach.len() >= min_pts {
                queue.extend(reach);
            }
        }
    }
    Ok(labels)
}

/// Convenience wrapper over raw coordinates.
pub fn dbscan_points(points: &[Vec<f64>], eps: f64, min_pts: usize) -> Result<Labels> {
    dbscan(&Points::new(points)?, eps, min_pts)
}

/// Number of distinct clusters in a labeling (noise excluded).
pub fn cluster_count(labels: &Labels) -> usize {
    labels.iter().flatten().max().map_or(0, |m| m + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn separated_points_split() {
        let labels = dbscan_points(&one_d(&[0.10, 0.11, 0.50]), 0.02, 1).unwrap();
        assert_eq!(labels, vec![Some(0), Some(0), Some(1)]);
    }

    #[test]
    fn empty_input_gives_empty_labels() {
        assert!(dbscan_points(&[], 0.1, 1).unwrap().is_empty());
    }

    #[test]
    fn min_pts_one_has_no_noise() {
        let labels = dbscan_points(&one_d(&[0.0, 0.5, 0.9]), 0.01, 1).unwrap();
        assert!(labels.iter().all(Option::is_some));
        assert_eq!(cluster_count(&labels), 3);
    }

    #[test]
    fn border_point_and_noise() {
        // 0.00/0.01/0.02 are core with min_pts 3, 0.03 is a border point,
        // 0.5 is noise.
        let labels = dbscan_points(&one_d(&[0.0, 0.01, 0.02, 0.03, 0.5]), 0.015, 3).unwrap();
        assert_eq!(labels, vec![Some(0), Some(0), Some(0), Some(0), None]);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(dbscan_points(&one_d(&[0.0, f64::NAN]), 0.1, 1).is_err());
        assert!(dbscan_points(&one_d(&[0.0]), 0.0, 1).is_err());
        assert!(dbscan_points(&one_d(&[0.0]), 0.1, 0).is_err());
    }

    #[test]
    fn sparse_chain_links_through_adjacent_entries_only() {
        // A path 0-1-2-3-4 with every edge 0.02; ends are 0.7 apart but
        // adjacency carries the chain.
        let mut m = SparseDistances::new(5);
        for i in 0..4 {
            m.insert(i, i + 1, 0.02).unwrap();
        }
        let labels = dbscan(&m, 0.03, 1).unwrap();
        assert_eq!(labels, vec![Some(0); 5]);
    }

    #[test]
    fn dense_matrix_validation() {
        assert!(DistanceMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(DistanceMatrix::new(2, vec![0.0, -1.0, -1.0, 0.0]).is_err());
        let m = DistanceMatrix::new(2, vec![0.0, 0.05, 0.05, 0.0]).unwrap();
        assert_eq!(dbscan(&m, 0.1, 1).unwrap(), vec![Some(0), Some(0)]);
    }
}
