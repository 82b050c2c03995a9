use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::embed::dot;

/// Inverted-file index: k-means centroids over unit vectors, each entry
/// filed under its nearest centroid. Queries scan the `nprobe` closest
/// lists.
#[derive(Clone, Debug)]
pub struct IvfIndex {
    centroids: Vec<Vec<f32>>,
    lists: Vec<Vec<usize>>,
    indexed: usize,
}

fn nearest(centroids: &[Vec<f32>], v: &[f32]) -> usize {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let s = dot(c, v);
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

impl IvfIndex {
    /// Builds over `vectors`; `nlist` of zero picks `sqrt(n)`.
    pub fn build(vectors: &[&[f32]], nlist: usize, iterations: usize, seed: u64) -> Self {
        let n = vectors.len();
        if n == 0 {
            return Self { centroids: Vec::new(), lists: Vec::new(), indexed: 0 };
        }
        let k = if nlist == 0 { (n as f64).sqrt().round() as usize } else { nlist }.clamp(1, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centroids: Vec<Vec<f32>> = sample(&mut rng, n, k).into_iter().map(|i| vectors[i].to_vec()).collect();
        let dim = vectors[0].len();
        for _ in 0..iterations {
            let assign: Vec<usize> = vectors.par_iter().map(|v| nearest(&centroids, v)).collect();
            let mut sums = vec![vec![0f32; dim]; k];
            let mut counts = vec![0usize; k];
            for (v, &a) in vectors.iter().zip(&assign) {
                counts[a] += 1;
                for (s, x) in sums[a].iter_mut().zip(v.iter()) {
                    *s += x;
                }
            }
            for (c, (sum, count)) in centroids.iter_mut().zip(sums.into_iter().zip(counts)) {
                let norm = dot(&sum, &sum).sqrt();
                // Empty clusters keep their previous centroid.
                if count > 0 && norm > 0.0 {
                    *c = sum.into_iter().map(|x| x / norm).collect();
                }
            }
        }
        // File entries against the final centroids, not the ones the last
        // iteration started from.
        let assign: Vec<usize> = vectors.par_iter().map(|v| nearest(&centroids, v)).collect();
        let mut lists = vec![Vec::new(); k];
        for (i, a) in assign.into_iter().enumerate() {
            lists[a].push(i);
        }
        Self { centroids, lists, indexed: n }
    }

    /// Number of leading entries covered by the index.
    pub fn indexed(&self) -> usize {
        self.indexed
    }

    pub fn nlist(&self) -> usize {
        self.centroids.len()
    }

    /// Entry ids in the `nprobe` lists closest to the query.
    pub fn candidates(&self, query: &[f32], nprobe: usize) -> Vec<usize> {
        let mut order: Vec<(usize, f32)> = self.centroids.iter().enumerate().map(|(i, c)| (i, dot(c, query))).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1));
        order.into_iter().take(nprobe.max(1)).flat_map(|(i, _)| self.lists[i].iter().copied()).collect()
    }
}
