//! Frequency-domain diagnostics of path points.

use num_complex::Complex64;

use crate::io::fmt_f64;
use crate::path::Path;
use crate::tensor::{ImageTensor, RealMatrix};

/// Differences with `‖·‖_∞` below this count as zero in traces.
const ZERO_DIFF: f64 = 1e-12;

/// DFT magnitude with the zero frequency moved to `(H/2, W/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMap {
    pub magnitude: RealMatrix,
    pub log_scaled: bool,
}

impl SpectrumMap {
    /// Magnitude scaled into `[0, 1]` by its maximum, as a one-channel image.
    pub fn normalized_image(&self) -> ImageTensor {
        let m = &self.magnitude;
        let max = m.max_abs();
        let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
        ImageTensor::new(
            1,
            m.rows(),
            m.cols(),
            m.as_slice().iter().map(|v| v * scale).collect(),
        )
        .expect("spectrum is finite")
    }
}

/// Twiddle table `exp(-2πi k/n)` for `k < n`.
fn twiddles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect()
}

fn dft_in_place(line: &mut [Complex64], table: &[Complex64], scratch: &mut Vec<Complex64>) {
    let n = line.len();
    scratch.clear();
    scratch.extend((0..n).map(|k| {
        line.iter()
            .enumerate()
            .map(|(j, v)| v * table[(j * k) % n])
            .sum::<Complex64>()
    }));
    line.copy_from_slice(scratch);
}

/// Unshifted 2-D DFT by direct separable transforms.
pub fn dft2(m: &RealMatrix) -> Vec<Complex64> {
    let (rows, cols) = (m.rows(), m.cols());
    let mut data: Vec<Complex64> = m
        .as_slice()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let mut scratch = Vec::new();
    let tw = twiddles(cols);
    for r in 0..rows {
        dft_in_place(&mut data[r * cols..(r + 1) * cols], &tw, &mut scratch);
    }
    let th = twiddles(rows);
    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = data[r * cols + c];
        }
        dft_in_place(&mut column, &th, &mut scratch);
        for r in 0..rows {
            data[r * cols + c] = column[r];
        }
    }
    data
}

/// `|DFT2(m)|`, DC-centred, optionally `log(1 + |·|)`.
pub fn dft2_magnitude(m: &RealMatrix, log_scale: bool) -> SpectrumMap {
    let (rows, cols) = (m.rows(), m.cols());
    let f = dft2(m);
    let mut out = RealMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let mag = f[r * cols + c].norm();
            let v = if log_scale { mag.ln_1p() } else { mag };
            out.set((r + rows / 2) % rows, (c + cols / 2) % cols, v);
        }
    }
    SpectrumMap {
        magnitude: out,
        log_scaled: log_scale,
    }
}

/// Signed frequency of DFT bin `k` on an `n`-point grid, in cycles/sample.
fn signed_freq(k: usize, n: usize) -> f64 {
    let k = if k > n / 2 {
        k as f64 - n as f64
    } else {
        k as f64
    };
    k / n as f64
}

/// Radius of bin `(kr, kc)` in units of the per-axis Nyquist frequency.
fn nyquist_radius(kr: usize, kc: usize, rows: usize, cols: usize) -> f64 {
    let fr = 2.0 * signed_freq(kr, rows);
    let fc = 2.0 * signed_freq(kc, cols);
    (fr * fr + fc * fc).sqrt()
}

/// Share of non-DC spectral energy above `cutoff` (fraction of the Nyquist
/// radius). Zero for matrices with no non-DC energy.
pub fn high_freq_fraction(m: &RealMatrix, cutoff: f64) -> f64 {
    let (rows, cols) = (m.rows(), m.cols());
    let f = dft2(m);
    let (mut high, mut total) = (0.0, 0.0);
    for r in 0..rows {
        for c in 0..cols {
            if r == 0 && c == 0 {
                continue;
            }
            let e = f[r * cols + c].norm_sqr();
            total += e;
            if nyquist_radius(r, c, rows, cols) > cutoff {
                high += e;
            }
        }
    }
    // Pure-DC inputs leave only rounding noise in the other bins.
    let dc = f[0].norm_sqr();
    if total <= 1e-24 * dc.max(f64::MIN_POSITIVE) || total == 0.0 {
        return 0.0;
    }
    high / total
}

/// Mean power per integer-radius ring on the centred grid. Entry `k`
/// covers pixel radius `k` (nearest integer); the matching normalised
/// radius is `k / k_max`.
pub fn radial_power_profile(m: &RealMatrix) -> Vec<f64> {
    let (rows, cols) = (m.rows(), m.cols());
    let f = dft2(m);
    let radius = |r: usize, c: usize| {
        let dr = signed_freq(r, rows) * rows as f64;
        let dc = signed_freq(c, cols) * cols as f64;
        (dr * dr + dc * dc).sqrt().round() as usize
    };
    let max_bin = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| radius(r, c))
        .max()
        .unwrap_or(0);
    let mut sums = vec![0.0; max_bin + 1];
    let mut counts = vec![0usize; max_bin + 1];
    for r in 0..rows {
        for c in 0..cols {
            let b = radius(r, c);
            sums[b] += f[r * cols + c].norm_sqr();
            counts[b] += 1;
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrace {
    pub alphas: Vec<f64>,
    pub hf_fraction: Vec<f64>,
    pub cutoff: f64,
}

impl FrequencyTrace {
    /// `alpha,hf_fraction` CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,hf_fraction\n");
        for (a, v) in self.alphas.iter().zip(&self.hf_fraction) {
            s.push_str(&format!("{},{}\n", fmt_f64(*a), fmt_f64(*v)));
        }
        s
    }

    /// Value at the grid point nearest to `alpha`.
    pub fn at(&self, alpha: f64) -> f64 {
        let i = self
            .alphas
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - alpha).abs().total_cmp(&(b.1 - alpha).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.hf_fraction[i]
    }
}

/// Channel-averaged high-frequency fraction of `point − reference`.
pub fn difference_hf_fraction(point: &ImageTensor, reference: &ImageTensor, cutoff: f64) -> f64 {
    let d = point.sub(reference).expect("path points share one shape");
    if d.max_abs() < ZERO_DIFF {
        return 0.0;
    }
    let c = d.channels();
    (0..c)
        .map(|ch| high_freq_fraction(&d.channel_matrix(ch), cutoff))
        .sum::<f64>()
        / c as f64
}

/// High-frequency fraction of every path point's departure from `baseline`.
pub fn path_frequency_trace(path: &Path, baseline: &ImageTensor, cutoff: f64) -> FrequencyTrace {
    FrequencyTrace {
        alphas: path.alphas.clone(),
        hf_fraction: path
            .points
            .iter()
            .map(|p| difference_hf_fraction(p, baseline, cutoff))
            .collect(),
        cutoff,
    }
}

/// DC-centred spectrum of the channel-mean difference `point − baseline`.
pub fn difference_spectrum(
    point: &ImageTensor,
    baseline: &ImageTensor,
    log_scale: bool,
) -> SpectrumMap {
    let d = point.sub(baseline).expect("path points share one shape");
    let (c, h, w) = d.shape();
    let mean = RealMatrix::from_fn(h, w, |r, col| {
        (0..c).map(|ch| d.get(ch, r, col)).sum::<f64>() / c as f64
    });
    dft2_magnitude(&mean, log_scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::f64::consts::PI;

    fn random(rows: usize, cols: usize, seed: u64) -> RealMatrix {
        let mut r = rng::seeded(seed, 0);
        RealMatrix::new(rows, cols, rng::normal_vec(&mut r, rows * cols)).unwrap()
    }

    #[test]
    fn constant_has_only_dc() {
        let m = RealMatrix::from_fn(4, 6, |_, _| -1.5);
        let s = dft2_magnitude(&m, false);
        for r in 0..4 {
            for c in 0..6 {
                let v = s.magnitude.get(r, c);
                if (r, c) == (2, 3) {
                    assert!((v - 1.5 * 24.0).abs() < 1e-12);
                } else {
                    assert!(v < 1e-12);
                }
            }
        }
        assert_eq!(high_freq_fraction(&m, 0.5), 0.0);
    }

    #[test]
    fn cosine_gives_symmetric_peaks() {
        let (u, v) = (1usize, 2usize);
        let m = RealMatrix::from_fn(8, 8, |r, c| {
            (2.0 * PI * (u as f64 * r as f64 / 8.0 + v as f64 * c as f64 / 8.0)).cos()
        });
        let s = dft2_magnitude(&m, false);
        let peaks: Vec<(usize, usize)> = (0..8)
            .flat_map(|r| (0..8).map(move |c| (r, c)))
            .filter(|&(r, c)| s.magnitude.get(r, c) > 1.0)
            .collect();
        assert_eq!(peaks, vec![(4 - u, 4 - v), (4 + u, 4 + v)]);
    }

    #[test]
    fn parseval_and_point_symmetry() {
        for (rows, cols) in [(8, 8), (5, 7), (6, 9)] {
            let m = random(rows, cols, (rows * cols) as u64);
            let s = dft2_magnitude(&m, false);
            let spec: f64 = s.magnitude.as_slice().iter().map(|v| v * v).sum();
            let space: f64 = m.as_slice().iter().map(|v| v * v).sum();
            assert!((spec - (rows * cols) as f64 * space).abs() <= 1e-8 * spec);
            let (cr, cc) = (rows / 2, cols / 2);
            for r in 0..rows {
                for c in 0..cols {
                    let rr = (2 * cr + rows - r) % rows;
                    let rc = (2 * cc + cols - c) % cols;
                    assert!((s.magnitude.get(r, c) - s.magnitude.get(rr, rc)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn checkerboard_is_all_high_frequency() {
        let m = RealMatrix::from_fn(8, 8, |r, c| if (r + c) % 2 == 0 { 1.0 } else { -1.0 });
        assert!((high_freq_fraction(&m, 0.5) - 1.0).abs() < 1e-12);
        assert_eq!(high_freq_fraction(&RealMatrix::zeros(4, 4), 0.5), 0.0);
    }

    #[test]
    fn noise_raises_high_frequency_share() {
        let mut r = rng::seeded(17, 0);
        let smooth =
            RealMatrix::from_fn(16, 16, |i, j| (i as f64 / 15.0) * (0.5 + j as f64 / 30.0));
        let noise = rng::normal_vec(&mut r, 256);
        let noisy = RealMatrix::from_fn(16, 16, |i, j| smooth.get(i, j) + 0.05 * noise[i * 16 + j]);
        assert!(high_freq_fraction(&noisy, 0.5) > high_freq_fraction(&smooth, 0.5));
    }

    #[test]
    fn radial_profile_of_constant() {
        let p = radial_power_profile(&RealMatrix::from_fn(4, 4, |_, _| 1.0));
        assert!((p[0] - 256.0).abs() < 1e-9);
        assert!(p[1..].iter().all(|v| v.abs() < 1e-20));
    }
}
