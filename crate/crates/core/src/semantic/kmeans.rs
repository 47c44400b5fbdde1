use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

const MAX_ITER: usize = 300;
const SHIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    /// Converged once no centroid moves farther than this.
    pub tol: f64,
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KmeansConfig {
            k,
            seed,
            restarts: 10,
            max_iter: MAX_ITER,
            tol: SHIFT_TOL,
        }
    }

    pub fn restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub inertia: f64,
    /// Mean silhouette; `None` when undefined (k < 2, k = N, or all
    /// points coincide).
    pub silhouette: Option<f64>,
    pub seed: u64,
    /// Inertia after every Lloyd iteration, one trace per restart.
    #[serde(skip)]
    pub inertia_traces: Vec<Vec<f64>>,
}

impl ClusteringResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Best-of-`restarts` Lloyd's algorithm with k-means++ seeding.
pub fn kmeans(points: &[Vec<f64>], cfg: &KmeansConfig) -> Result<ClusteringResult> {
    let n = points.len();
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::invalid(format!("k = {} must lie in [1, {n}]", cfg.k)));
    }
    let restarts = cfg.restarts.max(1);
    let mut best: Option<(f64, Vec<usize>, Vec<Vec<f64>>)> = None;
    let mut traces = Vec::with_capacity(restarts);
    for r in 0..restarts {
        let (assign, cents, inertia, trace) = lloyd(points, cfg, r as u64);
        traces.push(trace);
        if best.as_ref().is_none_or(|b| inertia < b.0) {
            best = Some((inertia, assign, cents));
        }
    }
    let (inertia, assignments, centroids) = best.expect("at least one restart");
    let silhouette = if cfg.k >= 2 && cfg.k < n {
        silhouette_score(points, &assignments).ok()
    } else {
        None
    };
    Ok(ClusteringResult {
        k: cfg.k,
        assignments,
        centroids,
        inertia,
        silhouette,
        seed: cfg.seed,
        inertia_traces: traces,
    })
}

type LloydRun = (Vec<usize>, Vec<Vec<f64>>, f64, Vec<f64>);

fn lloyd(points: &[Vec<f64>], cfg: &KmeansConfig, restart: u64) -> LloydRun {
    let n = points.len();
    let k = cfg.k;
    let mut rng = seeded(cfg.seed, restart);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assign = vec![usize::MAX; n];
    let mut trace = Vec::new();

    for _ in 0..cfg.max_iter.max(1) {
        // assignment; ties keep the current cluster
        for (i, p) in points.iter().enumerate() {
            let mut best = assign[i];
            let mut best_d = if best == usize::MAX {
                f64::INFINITY
            } else {
                squared_distance(p, &centroids[best])
            };
            for (c, cent) in centroids.iter().enumerate() {
                let d = squared_distance(p, cent);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assign[i] = best;
        }
        repair_empty_clusters(points, &centroids, &mut assign, k);

        let updated = centroid_means(points, &assign, k);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        trace.push(inertia_of(points, &assign, &centroids));
        if shift < cfg.tol {
            break;
        }
    }
    let inertia = *trace.last().expect("at least one iteration");
    (assign, centroids, inertia, trace)
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d <= 0.0 {
                    continue;
                }
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // rounding can land on an already-chosen zero-weight tail
            if d2[pick] <= 0.0 {
                pick = d2
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
            }
            pick
        } else {
            // every point coincides with a chosen centroid
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Moves the point farthest from its centroid (taken from a cluster with
/// more than one member) into each empty cluster.
fn repair_empty_clusters(points: &[Vec<f64>], centroids: &[Vec<f64>], assign: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assign.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| sizes[assign[i]] > 1)
            .max_by(|&a, &b| {
                let da = squared_distance(&points[a], &centroids[assign[a]]);
                let db = squared_distance(&points[b], &centroids[assign[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            });
        match donor {
            Some(i) => assign[i] = empty,
            None => return,
        }
    }
}

fn centroid_means(points: &[Vec<f64>], assign: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assign) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, c) in sums.iter_mut().zip(&counts) {
        if *c > 0 {
            for x in s.iter_mut() {
                *x /= *c as f64;
            }
        }
    }
    sums
}

fn inertia_of(points: &[Vec<f64>], assign: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assign)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

fn distance_matrix(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = squared_distance(&points[i], &points[j]).sqrt();
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Mean silhouette over all points (Euclidean). Members of singleton
/// clusters score 0.
pub fn silhouette_score(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    if points.len() != assignments.len() {
        return Err(Error::invalid("assignments length differs from point count"));
    }
    silhouette_from_distances(&distance_matrix(points), assignments)
}

fn silhouette_from_distances(dist: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    let n = dist.len();
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    let occupied = sizes.iter().filter(|&&s| s > 0).count();
    if occupied < 2 || occupied >= n {
        return Err(Error::invalid(format!(
            "silhouette needs 2..{} non-empty clusters, got {occupied}",
            n.saturating_sub(1)
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[assignments[j]] += dist[i][j];
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Runs k-means for every k in `[k_min, k_max]` and keeps the k with the
/// highest mean silhouette; ties go to the smaller k.
pub fn select_k(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    seed: u64,
    restarts: usize,
) -> Result<(usize, ClusteringResult)> {
    let n = points.len();
    if k_min < 2 || k_max < k_min {
        return Err(Error::invalid(format!("empty k range [{k_min}, {k_max}]")));
    }
    if k_max > n.saturating_sub(1) {
        return Err(Error::invalid(format!("k_max = {k_max} exceeds N - 1 = {}", n.saturating_sub(1))));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(Error::Numerical("degenerate geometry: all points identical".into()));
    }
    let dist = distance_matrix(points);
    let mut best: Option<(f64, ClusteringResult)> = None;
    for k in k_min..=k_max {
        let cfg = KmeansConfig::new(k, seed).restarts(restarts);
        let mut res = kmeans(points, &cfg)?;
        let s = silhouette_from_distances(&dist, &res.assignments).unwrap_or(f64::NEG_INFINITY);
        res.silhouette = s.is_finite().then_some(s);
        if best.as_ref().is_none_or(|b| s > b.0) {
            best = Some((s, res));
        }
    }
    let (_, res) = best.expect("non-empty k range");
    Ok((res.k, res))
}
