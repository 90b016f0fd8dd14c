//! Seeded synthetic inputs shared by the self-test, the CLI samples and the
//! browser demo.

use std::f64::consts::PI;

use crate::model::{linear_model, LinearModel};
use crate::rng::{self, Rng};
use crate::svd::{SpectralFactors, SvdMode, SvdTriple};
use crate::tensor::{ImageTensor, RealMatrix};

/// Uniform `[0, 1)` image.
pub fn random_image(shape: (usize, usize, usize), seed: u64, stream: u64) -> ImageTensor {
    let mut r = rng::seeded(seed, stream);
    let (c, h, w) = shape;
    ImageTensor::new(c, h, w, rng::uniform_vec(&mut r, c * h * w, 0.0, 1.0)).expect("finite")
}

/// Smooth profile `1 + 0.5 cos(2π f t / n + φ)` with a random low
/// frequency `f ∈ {1, 2}` and phase.
fn smooth_vector(n: usize, r: &mut rng::SeededRng) -> Vec<f64> {
    let f = r.random_range(1..=2) as f64;
    let phase = r.random_range(0.0..2.0 * PI);
    (0..n)
        .map(|t| 1.0 + 0.5 * (2.0 * PI * f * t as f64 / n as f64 + phase).cos())
        .collect()
}

/// Smooth rank-2 structure plus white noise of standard deviation
/// `noise_std`, one channel per entry of `channels`.
pub fn smooth_rank2_plus_noise(
    channels: usize,
    height: usize,
    width: usize,
    noise_std: f64,
    seed: u64,
) -> ImageTensor {
    let mut r = rng::seeded(seed, 0x5eed);
    let mut data = Vec::with_capacity(channels * height * width);
    for _ in 0..channels {
        let (a1, b1) = (smooth_vector(height, &mut r), smooth_vector(width, &mut r));
        let (a2, b2) = (smooth_vector(height, &mut r), smooth_vector(width, &mut r));
        let k2 = r.random_range(0.3..0.6);
        for i in 0..height {
            for j in 0..width {
                let s = a1[i] * b1[j] + k2 * a2[i] * b2[j];
                data.push(s + noise_std * rng::normal(&mut r));
            }
        }
    }
    ImageTensor::new(channels, height, width, data).expect("finite")
}

/// Bundled structured sample: smooth structure plus mild noise, rescaled
/// into `[0, 1]`.
pub fn structured_sample(channels: usize, height: usize, width: usize, seed: u64) -> ImageTensor {
    let raw = smooth_rank2_plus_noise(channels, height, width, 0.05, seed);
    let (lo, hi) = raw
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    raw.map(|v| (v - lo) / (hi - lo))
}

/// Linear scorer on a single-channel `side × side` grid with `informative`
/// positive weights in `[0.5, 1.5)` and zeros elsewhere, plus an input in
/// `[0, 1)`.
pub struct SparseLinearTask {
    pub model: LinearModel,
    pub input: ImageTensor,
    pub baseline: ImageTensor,
    /// `|w|` per pixel, row-major.
    pub true_importance: Vec<f64>,
}

pub fn sparse_linear_task(side: usize, informative: usize, seed: u64) -> SparseLinearTask {
    let mut r = rng::seeded(seed, 0x11ea);
    let n = side * side;
    let mut idx: Vec<usize> = (0..n).collect();
    // Partial Fisher-Yates for the informative set.
    for i in 0..informative.min(n) {
        let j = r.random_range(i..n);
        idx.swap(i, j);
    }
    let mut w = vec![0.0; n];
    for &p in &idx[..informative.min(n)] {
        w[p] = r.random_range(0.5..1.5);
    }
    let input =
        ImageTensor::new(1, side, side, rng::uniform_vec(&mut r, n, 0.0, 1.0)).expect("finite");
    let weights = ImageTensor::new(1, side, side, w.clone()).expect("finite");
    SparseLinearTask {
        model: linear_model(weights, 0.0),
        input,
        baseline: ImageTensor::zeros(1, side, side),
        true_importance: w.iter().map(|v| v.abs()).collect(),
    }
}

/// `k` orthonormal columns of length `n` from Gram-Schmidt on Gaussians.
pub fn random_orthonormal(n: usize, k: usize, r: &mut rng::SeededRng) -> RealMatrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v = rng::normal_vec(r, n);
        for _ in 0..2 {
            for c in &cols {
                let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    RealMatrix::from_fn(n, k, |i, j| cols[j][i])
}

/// A difference matrix with singular values `[2, 1, 1]` and the same
/// matrix expressed in a second factor basis whose two trailing components
/// are rotated by a random angle.
pub fn degenerate_pair(rows: usize, cols: usize, seed: u64) -> (SpectralFactors, SpectralFactors) {
    let mut r = rng::seeded(seed, 0xde9);
    let u = random_orthonormal(rows, 3, &mut r);
    let v = random_orthonormal(cols, 3, &mut r);
    let sigma = vec![2.0, 1.0, 1.0];
    let theta = r.random_range(0.0..2.0 * PI);
    let (c, s) = (theta.cos(), theta.sin());
    let rotate = |m: &RealMatrix| {
        RealMatrix::from_fn(m.rows(), 3, |i, j| match j {
            1 => c * m.get(i, 1) + s * m.get(i, 2),
            2 => -s * m.get(i, 1) + c * m.get(i, 2),
            _ => m.get(i, 0),
        })
    };
    let wrap = |u: RealMatrix, v: RealMatrix| SpectralFactors {
        mode: SvdMode::PerChannel,
        triples: vec![SvdTriple {
            u,
            sigma: sigma.clone(),
            v,
        }],
        channels: 1,
        height: rows,
        width: cols,
    };
    let rotated = wrap(rotate(&u), rotate(&v));
    (wrap(u, v), rotated)
}
