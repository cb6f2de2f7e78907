//! Dynamic k-means: grow the cluster count until no cluster is "loose".
//!
//! Start with one cluster. After every k-means pass, each cluster whose
//! smallest pairwise distance is below `e` times its mean pairwise distance
//! bumps the cluster count by one, and the pass is repeated. Clusters smaller
//! than `min_split_size` never vote (a duplicate pair has distance 0 and would
//! otherwise force splits forever), and the count is capped at `ceil(p / 2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Tightness factor in `(0, 1]`.
    pub e: f64,
    pub max_kmeans_iters: usize,
    pub min_split_size: usize,
    pub seed: u64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            e: 0.4,
            max_kmeans_iters: 100,
            min_split_size: 3,
            seed: 0,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.e > 0.0 && self.e <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tightness e must lie in (0, 1], got {}",
                self.e
            )));
        }
        if self.min_split_size < 3 {
            return Err(Error::InvalidParameter(format!(
                "min_split_size must be at least 3, got {}",
                self.min_split_size
            )));
        }
        if self.max_kmeans_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_kmeans_iters must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centers: Vec<Vec<f64>>,
    /// `labels[i]` indexes `centers`.
    pub labels: Vec<usize>,
    /// k-means passes run.
    pub passes: usize,
}

impl Clustering {
    pub fn n_clusters(&self) -> usize {
        self.centers.len()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centers.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairwise Euclidean distances, computed once per clustering level.
struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    fn new(points: &[&[f64]]) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = sq_dist(points[i], points[j]).sqrt();
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    /// `(R_min, R_avg)` over all pairs of `members`.
    fn min_avg(&self, members: &[usize]) -> (f64, f64) {
        let mut min = f64::INFINITY;
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let v = self.get(i, j);
                min = min.min(v);
                sum += v;
                pairs += 1;
            }
        }
        (min, sum / pairs as f64)
    }
}

pub fn dynamic_kmeans(points: &[&[f64]], params: &ClusterParams) -> Result<Clustering> {
    params.validate()?;
    if points.is_empty() {
        return Err(Error::InvalidParameter("cannot cluster zero points".into()));
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::dimension(dim, bad.len()));
    }
    let cap = points.len().div_ceil(2).max(1);
    let dist = DistanceMatrix::new(points);
    let mut n = 1;
    let mut passes = 0;
    loop {
        let clustering = kmeans(points, n, params, passes as u64)?;
        passes += 1;
        let mut next = n;
        for members in clustering.members() {
            if members.len() < params.min_split_size {
                continue;
            }
            let (r_min, r_avg) = dist.min_avg(&members);
            if r_min < params.e * r_avg {
                next += 1;
            }
        }
        let next = next.min(cap);
        if next == n {
            return Ok(Clustering {
                passes,
                ..clustering
            });
        }
        n = next;
    }
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are dropped, so
/// fewer than `k` clusters may come back when points coincide.
pub fn kmeans(
    points: &[&[f64]],
    k: usize,
    params: &ClusterParams,
    pass: u64,
) -> Result<Clustering> {
    if k == 0 || points.is_empty() {
        return Err(Error::InvalidParameter(
            "k-means needs k >= 1 and points".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ pass.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut centers = kmeans_pp(points, k, &mut rng);
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..params.max_kmeans_iters {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = nearest(p, &centers);
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        centers = means(points, &labels, centers.len(), dim_of(points));
    }
    // drop empty clusters and recompute exact means
    let mut remap = vec![usize::MAX; centers.len()];
    let mut next = 0;
    for &l in &labels {
        if remap[l] == usize::MAX {
            remap[l] = next;
            next += 1;
        }
    }
    // relabel in order of first appearance for determinism
    let labels: Vec<usize> = labels.iter().map(|&l| remap[l]).collect();
    let centers = means(points, &labels, next, dim_of(points));
    Ok(Clustering {
        centers,
        labels,
        passes: 1,
    })
}

fn dim_of(points: &[&[f64]]) -> usize {
    points[0].len()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn means(points: &[&[f64]], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            let inv = 1.0 / c as f64;
            s.iter_mut().for_each(|x| *x *= inv);
        }
    }
    sums
}

fn kmeans_pp(points: &[&[f64]], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..points.len());
    let mut centers = vec![points[first].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, w) in d2.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            if target < *w {
                pick = i;
                break;
            }
            target -= w;
        }
        if d2[pick] <= 0.0 {
            pick = d2
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
        }
        let c = points[pick].to_vec();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}
