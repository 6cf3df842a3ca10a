//! Partition update: k-means over the vectorized precision matrices.
//!
//! For a fixed set of matrices, the pairwise fusion sum of a block divided by
//! its size equals the within-block sum of squares around the block mean, so
//! minimizing the fusion term over partitions is a k-means problem on the C
//! points `vec(Ω_c)` in `R^{p^2}`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Partition, PrecisionSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansResult {
    pub partition: Partition,
    pub wcss: f64,
    /// Winning restart; `n_starts` when the incumbent partition won.
    pub start_index: usize,
}

/// Fusion objective `Σ_q card(D_q)^-1 Σ_{c<m in D_q} ||Ω_c - Ω_m||_F^2`.
pub fn partition_objective(omegas: &PrecisionSet, part: &Partition) -> f64 {
    part.blocks()
        .iter()
        .map(|block| {
            let mut s = 0.0;
            for (i, &c) in block.iter().enumerate() {
                for &m in &block[i + 1..] {
                    s += linalg::frobenius_dist_sq(&omegas[c], &omegas[m]);
                }
            }
            s / block.len() as f64
        })
        .sum()
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Lloyd<'a> {
    points: &'a [Vec<f64>],
    q: usize,
}

impl Lloyd<'_> {
    fn centroids(&self, labels: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
        let d = self.points[0].len();
        let mut sums = vec![vec![0.0; d]; self.q];
        let mut counts = vec![0usize; self.q];
        for (x, &l) in self.points.iter().zip(labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x) {
                *s += v;
            }
        }
        for (s, &n) in sums.iter_mut().zip(&counts) {
            if n > 0 {
                s.iter_mut().for_each(|v| *v /= n as f64);
            }
        }
        (sums, counts)
    }

    fn wcss(&self, labels: &[usize]) -> f64 {
        let (cent, _) = self.centroids(labels);
        self.points.iter().zip(labels).map(|(x, &l)| dist_sq(x, &cent[l])).sum()
    }

    /// Moves the point farthest from its centroid into each empty cluster.
    fn repair_empty(&self, labels: &mut [usize]) {
        loop {
            let (cent, counts) = self.centroids(labels);
            let Some(empty) = counts.iter().position(|&n| n == 0) else { return };
            let donor = (0..labels.len())
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&i, &j| {
                    let di = dist_sq(&self.points[i], &cent[labels[i]]);
                    let dj = dist_sq(&self.points[j], &cent[labels[j]]);
                    di.total_cmp(&dj).then(j.cmp(&i))
                })
                .expect("q <= number of points");
            labels[donor] = empty;
        }
    }

    fn run(&self, labels: &mut [usize]) -> f64 {
        self.repair_empty(labels);
        let mut prev = self.wcss(labels);
        loop {
            let (cent, _) = self.centroids(labels);
            let mut changed = false;
            for (i, x) in self.points.iter().enumerate() {
                let cur = labels[i];
                let mut best = cur;
                let mut best_d = dist_sq(x, &cent[cur]);
                for (l, c) in cent.iter().enumerate() {
                    let d = dist_sq(x, c);
                    if d < best_d {
                        best = l;
                        best_d = d;
                    }
                }
                if best != cur {
                    labels[i] = best;
                    changed = true;
                }
            }
            self.repair_empty(labels);
            let cur = self.wcss(labels);
            debug_assert!(cur <= prev * (1.0 + 1e-12) + 1e-12, "Lloyd step increased WCSS");
            if !changed || cur >= prev {
                prev = prev.min(cur);
                break;
            }
            prev = cur;
        }
        self.hartigan(labels, prev)
    }

    /// Single-point transfers that lower the WCSS, accounting for the change
    /// in cluster sizes. Ends at a partition stable under any single move.
    fn hartigan(&self, labels: &mut [usize], wcss: f64) -> f64 {
        let scale = 1e-12 * (1.0 + wcss);
        loop {
            let mut moved = false;
            for i in 0..labels.len() {
                let (cent, counts) = self.centroids(labels);
                let a = labels[i];
                if counts[a] <= 1 {
                    continue;
                }
                let na = counts[a] as f64;
                let remove = na / (na - 1.0) * dist_sq(&self.points[i], &cent[a]);
                let mut best = None;
                let mut best_delta = -scale;
                for b in (0..self.q).filter(|&b| b != a) {
                    let nb = counts[b] as f64;
                    let delta = nb / (nb + 1.0) * dist_sq(&self.points[i], &cent[b]) - remove;
                    if delta < best_delta {
                        best = Some(b);
                        best_delta = delta;
                    }
                }
                if let Some(b) = best {
                    labels[i] = b;
                    moved = true;
                }
            }
            if !moved {
                return self.wcss(labels);
            }
        }
    }

    /// k-means++ seeding followed by nearest-seed assignment.
    fn seed(&self, rng: &mut impl Rng) -> Vec<usize> {
        let n = self.points.len();
        let mut seeds = vec![rng.random_range(0..n)];
        while seeds.len() < self.q {
            let weights: Vec<f64> = self
                .points
                .iter()
                .map(|x| seeds.iter().map(|&s| dist_sq(x, &self.points[s])).fold(f64::MAX, f64::min))
                .collect();
            let total: f64 = weights.iter().sum();
            let next = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = n - 1;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                pick
            } else {
                let rest: Vec<usize> = (0..n).filter(|i| !seeds.contains(i)).collect();
                rest[rng.random_range(0..rest.len())]
            };
            seeds.push(next);
        }
        self.points
            .iter()
            .map(|x| {
                let mut best = 0;
                let mut best_d = f64::MAX;
                for (l, &s) in seeds.iter().enumerate() {
                    let d = dist_sq(x, &self.points[s]);
                    if d < best_d {
                        best = l;
                        best_d = d;
                    }
                }
                best
            })
            .collect()
    }
}

fn vectorize(omegas: &PrecisionSet) -> Vec<Vec<f64>> {
    omegas.iter().map(|m: &DMatrix<f64>| m.as_slice().to_vec()).collect()
}

/// Multi-start k-means on `vec(Ω_c)`; deterministic in `rng_seed`.
pub fn kmeans_partition(
    omegas: &PrecisionSet,
    q: usize,
    n_starts: usize,
    rng_seed: u64,
) -> Result<KmeansResult> {
    kmeans_partition_from(omegas, q, n_starts, rng_seed, None)
}

/// As [`kmeans_partition`], additionally refining `incumbent` and keeping it
/// unless a restart does strictly better. The result is then never worse than
/// the incumbent.
pub fn kmeans_partition_from(
    omegas: &PrecisionSet,
    q: usize,
    n_starts: usize,
    rng_seed: u64,
    incumbent: Option<&Partition>,
) -> Result<KmeansResult> {
    let c = omegas.len();
    if q == 0 || q > c {
        return Err(Error::Parameter(format!("Q must lie in 1..={c}, got {q}")));
    }
    if n_starts == 0 {
        return Err(Error::Parameter("need at least one k-means start".into()));
    }
    if let Some(inc) = incumbent {
        if inc.n_classes() != c || inc.n_blocks() != q {
            return Err(Error::Shape("incumbent partition does not match".into()));
        }
    }
    if q == c {
        return Ok(KmeansResult { partition: Partition::singletons(c), wcss: 0.0, start_index: 0 });
    }
    let points = vectorize(omegas);
    let lloyd = Lloyd { points: &points, q };
    if q == 1 {
        let labels = vec![0; c];
        let wcss = lloyd.wcss(&labels);
        return Ok(KmeansResult { partition: Partition::single(c), wcss, start_index: 0 });
    }

    let mut runs: Vec<(usize, Vec<usize>, f64)> = (0..n_starts)
        .into_par_iter()
        .map(|start| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(start as u64);
            let mut labels = lloyd.seed(&mut rng);
            let wcss = lloyd.run(&mut labels);
            (start, labels, wcss)
        })
        .collect();
    if let Some(inc) = incumbent {
        let mut labels = inc.labels().to_vec();
        let wcss = lloyd.run(&mut labels);
        runs.push((n_starts, labels, wcss));
    }
    let (start_index, labels, wcss) = runs
        .into_iter()
        .reduce(|best, run| if run.2 < best.2 { run } else { best })
        .expect("at least one start");
    Ok(KmeansResult { partition: Partition::new(labels, q)?.canonical(), wcss, start_index })
}
