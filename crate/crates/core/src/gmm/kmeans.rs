//! k-means++ seeding and Lloyd refinement on complex vectors (Euclidean
//! distance on the stacked real/imaginary parts).

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn dist_sqr(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// D^2-weighted seeding. `data` is row-major `n x dim`.
pub(super) fn plus_plus(data: &[Complex64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Complex64>> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let first = rng.random_range(0..n);
    let mut centroids = vec![row(first).to_vec()];
    let mut d2: Vec<f64> = (0..n).into_par_iter().map(|i| dist_sqr(row(i), row(first))).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    acc > target
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            let nd = dist_sqr(row(i), &c);
            if nd < *d {
                *d = nd;
            }
        });
        centroids.push(c);
    }
    centroids
}

/// Runs `iters` Lloyd iterations and returns the final assignment.
/// Empty clusters keep their previous centroid.
pub(super) fn lloyd(data: &[Complex64], dim: usize, centroids: &mut [Vec<Complex64>], iters: usize) -> Vec<usize> {
    let n = data.len() / dim;
    let k = centroids.len();
    let assign = |cents: &[Vec<Complex64>]| -> Vec<usize> {
        data.par_chunks(dim)
            .map(|x| {
                let mut best = (f64::INFINITY, 0);
                for (j, c) in cents.iter().enumerate() {
                    let d = dist_sqr(x, c);
                    if d < best.0 {
                        best = (d, j);
                    }
                }
                best.1
            })
            .collect()
    };
    let mut labels = assign(centroids);
    for _ in 0..iters {
        let mut sums = vec![vec![Complex64::new(0.0, 0.0); dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let l = labels[i];
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(&data[i * dim..(i + 1) * dim]) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                centroids[j] = sums[j].iter().map(|s| s * inv).collect();
            }
        }
        let next = assign(centroids);
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}
