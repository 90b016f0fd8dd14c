//! Fixed-basis multi-scale decompositions used by the alternative path
//! families: separable Gaussian blur, orthonormal 2-D DCT-II and a Laplacian
//! pyramid.

use crate::tensor::RealMatrix;

/// Mirror index with the edge sample repeated (`… 1 0 | 0 1 … n-1 | n-1 …`).
/// Periodic with period `2n`, so arbitrarily wide kernels are handled.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        period as usize - 1 - m
    }
}

/// Normalised Gaussian taps for standard deviation `sigma`, radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

fn convolve_rows(data: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[r * cols + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * row[reflect(c as isize + k as isize - radius, cols)])
                .sum();
        }
    }
    out
}

fn convolve_cols(data: &[f64], rows: usize, cols: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * data[reflect(r as isize + k as isize - radius, rows) * cols + c])
                .sum();
        }
    }
    out
}

/// Separable Gaussian blur of one channel. `sigma <= 0` returns the input.
pub fn gaussian_blur(channel: &[f64], rows: usize, cols: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return channel.to_vec();
    }
    let k = gaussian_kernel(sigma);
    convolve_cols(&convolve_rows(channel, rows, cols, &k), rows, cols, &k)
}

/// Orthonormal DCT-II basis: row `k` holds frequency `k`.
pub fn dct_matrix(n: usize) -> RealMatrix {
    let nf = n as f64;
    RealMatrix::from_fn(n, n, |k, i| {
        let scale = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos()
    })
}

/// 2-D DCT-II coefficients of an `H×W` matrix.
pub fn dct2(m: &RealMatrix) -> RealMatrix {
    let ch = dct_matrix(m.rows());
    let cw = dct_matrix(m.cols());
    ch.matmul(m)
        .and_then(|t| t.matmul(&cw.transpose()))
        .expect("dct dimensions agree")
}

/// Inverse of [`dct2`].
pub fn idct2(coef: &RealMatrix) -> RealMatrix {
    let ch = dct_matrix(coef.rows());
    let cw = dct_matrix(coef.cols());
    ch.transpose()
        .matmul(coef)
        .and_then(|t| t.matmul(&cw))
        .expect("dct dimensions agree")
}

/// Binomial 5-tap smoothing kernel used for REDUCE/EXPAND.
const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Blur then decimate by two (output size `ceil(n/2)` per axis).
fn reduce(m: &RealMatrix) -> RealMatrix {
    let (rows, cols) = (m.rows(), m.cols());
    let blurred = convolve_cols(
        &convolve_rows(m.as_slice(), rows, cols, &BINOMIAL5),
        rows,
        cols,
        &BINOMIAL5,
    );
    let (r2, c2) = (rows.div_ceil(2), cols.div_ceil(2));
    RealMatrix::from_fn(r2, c2, |r, c| blurred[2 * r * cols + 2 * c])
}

/// One axis of EXPAND: each output sample is the kernel-weighted mean of the
/// coarse samples that land on it, renormalised at the borders.
fn expand_axis(coarse: &[f64], fine_len: usize) -> Vec<f64> {
    (0..fine_len)
        .map(|i| {
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (t, w) in BINOMIAL5.iter().enumerate() {
                let off = i as isize + t as isize - 2;
                if off < 0 || off % 2 != 0 {
                    continue;
                }
                let j = (off / 2) as usize;
                if j < coarse.len() {
                    acc += w * coarse[j];
                    wsum += w;
                }
            }
            acc / wsum
        })
        .collect()
}

/// Upsample to `rows × cols`.
fn expand(m: &RealMatrix, rows: usize, cols: usize) -> RealMatrix {
    let horiz: Vec<Vec<f64>> = (0..m.rows())
        .map(|r| expand_axis(&m.as_slice()[r * m.cols()..(r + 1) * m.cols()], cols))
        .collect();
    let mut out = RealMatrix::zeros(rows, cols);
    for c in 0..cols {
        let column: Vec<f64> = horiz.iter().map(|row| row[c]).collect();
        for (r, v) in expand_axis(&column, rows).into_iter().enumerate() {
            out.set(r, c, v);
        }
    }
    out
}

/// Number of pyramid levels for an `rows × cols` grid:
/// `floor(log2(min(rows, cols)))`, at least 1. The last level is the
/// low-pass residual.
pub fn pyramid_levels(rows: usize, cols: usize) -> usize {
    let n = rows.min(cols).max(1);
    ((usize::BITS - 1 - n.leading_zeros()) as usize).max(1)
}

/// Laplacian pyramid: band-pass levels finest first, low-pass residual last.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPyramid {
    pub levels: Vec<RealMatrix>,
}

impl LaplacianPyramid {
    pub fn decompose(m: &RealMatrix) -> Self {
        let n_levels = pyramid_levels(m.rows(), m.cols());
        let mut levels = Vec::with_capacity(n_levels);
        let mut current = m.clone();
        for _ in 1..n_levels {
            let coarse = reduce(&current);
            let up = expand(&coarse, current.rows(), current.cols());
            levels.push(current.sub(&up).expect("expand restores shape"));
            current = coarse;
        }
        levels.push(current);
        Self { levels }
    }

    /// Recomposes with per-level weights; all-ones weights give back the
    /// decomposed matrix up to rounding.
    pub fn recompose(&self, weights: &[f64]) -> RealMatrix {
        assert_eq!(weights.len(), self.levels.len(), "one weight per level");
        let last = self.levels.len() - 1;
        let mut acc = self.levels[last].scale(weights[last]);
        for k in (0..last).rev() {
            let band = &self.levels[k];
            let up = expand(&acc, band.rows(), band.cols());
            acc = RealMatrix::from_fn(band.rows(), band.cols(), |r, c| {
                weights[k] * band.get(r, c) + up.get(r, c)
            });
        }
        acc
    }

    /// Root-mean-square value of each level.
    pub fn level_rms(&self) -> Vec<f64> {
        self.levels
            .iter()
            .map(|l| {
                (l.as_slice().iter().map(|v| v * v).sum::<f64>() / l.as_slice().len() as f64).sqrt()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random(rows: usize, cols: usize, seed: u64) -> RealMatrix {
        let mut r = rng::seeded(seed, 0);
        RealMatrix::new(rows, cols, rng::normal_vec(&mut r, rows * cols)).unwrap()
    }

    #[test]
    fn reflect_wraps_wide_offsets() {
        let got: Vec<usize> = (-4..7).map(|i| reflect(i, 3)).collect();
        assert_eq!(got, vec![2, 2, 1, 0, 0, 1, 2, 2, 1, 0, 0]);
    }

    #[test]
    fn blur_preserves_constants_and_mass() {
        let flat = vec![0.25; 35];
        for v in gaussian_blur(&flat, 5, 7, 2.3) {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let mut impulse = vec![0.0; 16 * 16];
        impulse[5 * 16 + 9] = 1.0;
        let out = gaussian_blur(&impulse, 16, 16, 35.0);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(out.iter().all(|&v| v > 0.0));
        assert_eq!(gaussian_blur(&impulse, 16, 16, 0.0), impulse);
    }

    #[test]
    fn dct_is_orthonormal_and_invertible() {
        for n in [1, 2, 5, 8] {
            let c = dct_matrix(n);
            let p = c.matmul(&c.transpose()).unwrap();
            assert!(p.sub(&RealMatrix::identity(n)).unwrap().max_abs() < 1e-13);
        }
        let m = random(6, 9, 1);
        assert!(idct2(&dct2(&m)).sub(&m).unwrap().max_abs() < 1e-12);
        // Constant input has only a DC coefficient.
        let coef = dct2(&RealMatrix::from_fn(4, 4, |_, _| 2.0));
        assert!((coef.get(0, 0) - 8.0).abs() < 1e-12);
        assert!(coef.as_slice()[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pyramid_level_counts() {
        assert_eq!(pyramid_levels(1, 5), 1);
        assert_eq!(pyramid_levels(2, 2), 1);
        assert_eq!(pyramid_levels(3, 9), 1);
        assert_eq!(pyramid_levels(8, 8), 3);
        assert_eq!(pyramid_levels(16, 12), 3);
        assert_eq!(pyramid_levels(32, 64), 5);
    }

    #[test]
    fn pyramid_round_trip_odd_sizes() {
        for (r, c) in [(8, 8), (7, 11), (13, 5), (1, 4)] {
            let m = random(r, c, (r * c) as u64);
            let p = LaplacianPyramid::decompose(&m);
            assert_eq!(p.levels.len(), pyramid_levels(r, c));
            let back = p.recompose(&vec![1.0; p.levels.len()]);
            assert!(back.sub(&m).unwrap().max_abs() < 1e-12, "{r}x{c}");
            let half = p.recompose(&vec![0.5; p.levels.len()]);
            assert!(half.sub(&m.scale(0.5)).unwrap().max_abs() < 1e-12);
        }
    }
}
