//! Singular value decomposition by one-sided (Hestenes) Jacobi rotations,
//! low-rank reconstruction, and SVD of image differences.

use crate::error::{invalid, Result};
use crate::tensor::{ImageTensor, RealMatrix};

/// Off-diagonal convergence threshold, relative to the column norms.
const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
/// Singular values at or below `RANK_TOL * sigma_1` get left singular
/// vectors from orthonormal completion instead of normalisation.
const RANK_TOL: f64 = 1e-12;
/// Entries at or below this magnitude are skipped when fixing signs.
const SIGN_TOL: f64 = 1e-12;

/// Thin SVD `m = u · diag(sigma) · vᵀ` with `R = min(rows, cols)` components.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriple {
    /// `rows × R`, orthonormal columns.
    pub u: RealMatrix,
    /// Non-increasing, non-negative.
    pub sigma: Vec<f64>,
    /// `cols × R`, orthonormal columns.
    pub v: RealMatrix,
}

impl SvdTriple {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn leading(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    /// `Σ_i weights_i · σ_i · u_i v_iᵀ`.
    pub fn reconstruct(&self, weights: &[f64]) -> Result<RealMatrix> {
        if weights.len() != self.rank() {
            return Err(invalid(format!(
                "expected {} weights, got {}",
                self.rank(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("weights must be finite"));
        }
        let (rows, cols) = (self.u.rows(), self.v.rows());
        let mut out = vec![0.0; rows * cols];
        for (i, (&w, &s)) in weights.iter().zip(&self.sigma).enumerate() {
            let k = w * s;
            if k == 0.0 {
                continue;
            }
            for r in 0..rows {
                let a = k * self.u.get(r, i);
                if a == 0.0 {
                    continue;
                }
                let row = &mut out[r * cols..(r + 1) * cols];
                for (c, o) in row.iter_mut().enumerate() {
                    *o += a * self.v.get(c, i);
                }
            }
        }
        Ok(RealMatrix::from_raw(rows, cols, out))
    }

    /// Best rank-`k` approximation: the first `k` components at full weight.
    pub fn truncate(&self, k: usize) -> Result<RealMatrix> {
        if k > self.rank() {
            return Err(invalid(format!("rank {k} exceeds {}", self.rank())));
        }
        let weights: Vec<f64> = (0..self.rank())
            .map(|i| if i < k { 1.0 } else { 0.0 })
            .collect();
        self.reconstruct(&weights)
    }
}

/// Free-function form of [`SvdTriple::reconstruct`].
pub fn reconstruct(f: &SvdTriple, weights: &[f64]) -> Result<RealMatrix> {
    f.reconstruct(weights)
}

/// Free-function form of [`SvdTriple::truncate`].
pub fn truncate(f: &SvdTriple, k: usize) -> Result<RealMatrix> {
    f.truncate(k)
}

/// Deterministic thin SVD.
///
/// Sign convention: each `(u_i, v_i)` pair is flipped so that the first entry
/// of `u_i` with magnitude above `1e-12` is positive.
pub fn svd(m: &RealMatrix) -> Result<SvdTriple> {
    if m.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(invalid("svd input contains non-finite values"));
    }
    if m.rows() >= m.cols() {
        Ok(jacobi_tall(m))
    } else {
        let t = jacobi_tall(&m.transpose());
        // m = (v Σ uᵀ)ᵀ; signs are re-fixed against the new u.
        let mut out = SvdTriple {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
        fix_signs(&mut out);
        Ok(out)
    }
}

/// One-sided Jacobi on a matrix with `rows >= cols`.
fn jacobi_tall(m: &RealMatrix) -> SvdTriple {
    let (rows, n) = (m.rows(), m.cols());
    // Column-major working copies.
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = a.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = a.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable: equal singular values keep their column order.
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let leading = sigma.first().copied().unwrap_or(0.0);

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        if sigma[k] > RANK_TOL * leading && sigma[k] > 0.0 {
            u_cols.push(a[j].iter().map(|x| x / sigma[k]).collect());
        } else {
            u_cols.push(Vec::new());
            pending.push(k);
        }
    }
    complete_basis(&mut u_cols, &pending, rows);

    let u = RealMatrix::from_fn(rows, n, |r, k| u_cols[k][r]);
    let vm = RealMatrix::from_fn(n, n, |r, k| v[order[k]][r]);
    let mut out = SvdTriple { u, sigma, v: vm };
    fix_signs(&mut out);
    out
}

/// Fills the `pending` columns with unit vectors orthogonal to all others,
/// drawn from the standard basis in index order.
fn complete_basis(cols: &mut [Vec<f64>], pending: &[usize], dim: usize) {
    let mut candidate = 0usize;
    for &k in pending {
        loop {
            assert!(
                candidate < dim,
                "orthonormal completion ran out of candidates"
            );
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            // Two Gram-Schmidt passes against every filled column.
            for _ in 0..2 {
                for (i, col) in cols.iter().enumerate() {
                    if i == k || col.is_empty() {
                        continue;
                    }
                    let proj = dot(&e, col);
                    for (x, y) in e.iter_mut().zip(col) {
                        *x -= proj * y;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 0.5 {
                cols[k] = e.into_iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}

fn fix_signs(f: &mut SvdTriple) {
    for i in 0..f.rank() {
        let first = (0..f.u.rows())
            .map(|r| f.u.get(r, i))
            .find(|x| x.abs() > SIGN_TOL);
        if matches!(first, Some(x) if x < 0.0) {
            for r in 0..f.u.rows() {
                f.u.set(r, i, -f.u.get(r, i));
            }
            for r in 0..f.v.rows() {
                f.v.set(r, i, -f.v.get(r, i));
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (p, q) = (*a, *b);
        *a = c * p - s * q;
        *b = s * p + c * q;
    }
}

/// How colour channels are arranged before decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvdMode {
    /// One `H×W` SVD per channel.
    #[default]
    PerChannel,
    /// A single SVD of the channel-stacked `(C·H)×W` matrix.
    Joint,
}

impl SvdMode {
    pub fn name(self) -> &'static str {
        match self {
            SvdMode::PerChannel => "per-channel",
            SvdMode::Joint => "joint",
        }
    }
}

impl std::str::FromStr for SvdMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-channel" => Ok(SvdMode::PerChannel),
            "joint" => Ok(SvdMode::Joint),
            _ => Err(invalid(format!("unknown svd mode '{s}'"))),
        }
    }
}

/// SVD factors of an input-minus-baseline difference.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFactors {
    pub mode: SvdMode,
    /// `C` triples in per-channel mode, exactly one in joint mode.
    pub triples: Vec<SvdTriple>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl SpectralFactors {
    /// Rebuilds a tensor from per-triple component weights
    /// (`weights[t]` has one entry per component of triple `t`).
    pub fn reconstruct(&self, weights: &[Vec<f64>]) -> Result<ImageTensor> {
        if weights.len() != self.triples.len() {
            return Err(invalid("one weight vector per triple required"));
        }
        let mut data = Vec::with_capacity(self.channels * self.height * self.width);
        for (t, w) in self.triples.iter().zip(weights) {
            data.extend(t.reconstruct(w)?.into_vec());
        }
        Ok(ImageTensor::from_raw(
            self.channels,
            self.height,
            self.width,
            data,
        ))
    }
}

/// SVD of `x − baseline`, per channel or jointly.
pub fn decompose_difference(
    x: &ImageTensor,
    baseline: &ImageTensor,
    mode: SvdMode,
) -> Result<SpectralFactors> {
    let delta = x.sub(baseline)?;
    let (c, h, w) = delta.shape();
    let triples = match mode {
        SvdMode::PerChannel => (0..c)
            .map(|ch| svd(&delta.channel_matrix(ch)))
            .collect::<Result<Vec<_>>>()?,
        SvdMode::Joint => {
            let stacked = RealMatrix::from_raw(c * h, w, delta.into_vec());
            vec![svd(&stacked)?]
        }
    };
    Ok(SpectralFactors {
        mode,
        triples,
        channels: c,
        height: h,
        width: w,
    })
}
