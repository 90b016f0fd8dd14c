//! Path-integrated attributions, Gradient×Input, and heatmap reduction.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::ScalarField;
use crate::path::{generate_path, Path, PathFamily, PathSpec};
use crate::tensor::{ImageTensor, SpatialTransform};

/// How an attribution map was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Discrete path integral along the given path.
    Path(PathSpec),
    GradientXInput,
}

impl Method {
    /// Short tag as used on the command line.
    pub fn tag(&self) -> &'static str {
        match self {
            Method::GradientXInput => "gxi",
            Method::Path(spec) => match spec.family {
                PathFamily::Linear => "ig",
                PathFamily::Spectral => "sig",
                PathFamily::Blur => "blur",
                PathFamily::Dct => "dct",
                PathFamily::Laplacian => "laplacian",
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributionResult {
    /// Signed per-feature attribution, same shape as the input.
    pub map: ImageTensor,
    pub score_input: f64,
    /// Score at the path start (the blurred input for the blur family,
    /// `f(0)` for Gradient×Input).
    pub score_baseline: f64,
    /// `|Σ map − (score_input − score_baseline)|`.
    pub completeness_residual: f64,
    pub method: Method,
}

impl AttributionResult {
    fn new(map: ImageTensor, score_input: f64, score_baseline: f64, method: Method) -> Self {
        let completeness_residual = (map.sum() - (score_input - score_baseline)).abs();
        Self {
            map,
            score_input,
            score_baseline,
            completeness_residual,
            method,
        }
    }
}

/// Gradients at every path point except the last, in path order.
pub(crate) fn path_gradients(model: &dyn ScalarField, path: &Path) -> Result<Vec<ImageTensor>> {
    let m = path.steps();
    let results: Vec<Result<ImageTensor>> = path.points[..m]
        .par_iter()
        .enumerate()
        .map(|(step, p)| {
            let g = model.gradient(p)?;
            if g.has_non_finite() {
                return Err(Error::NumericalFailure {
                    step,
                    detail: "gradient contains NaN or infinity".into(),
                });
            }
            Ok(g)
        })
        .collect();
    // Report the earliest failing step regardless of scheduling.
    results.into_iter().collect()
}

/// Left-endpoint Riemann sum along an already generated path:
/// `A = Σ_m ∇f(points[m]) ⊙ (points[m+1] − points[m])`.
pub fn integrate_path(
    model: &dyn ScalarField,
    path: &Path,
    method: Method,
) -> Result<AttributionResult> {
    let grads = path_gradients(model, path)?;
    let start = path.start();
    let mut acc = vec![0.0; start.len()];
    // Fixed-order reduction keeps the sum bitwise reproducible.
    for (m, g) in grads.iter().enumerate() {
        let (here, next) = (path.points[m].as_slice(), path.points[m + 1].as_slice());
        for (i, a) in acc.iter_mut().enumerate() {
            *a += g.as_slice()[i] * (next[i] - here[i]);
        }
    }
    let (c, h, w) = start.shape();
    let map = ImageTensor::from_raw(c, h, w, acc);
    if map.has_non_finite() {
        return Err(Error::NumericalFailure {
            step: path.steps(),
            detail: "accumulated attribution is not finite".into(),
        });
    }
    let score_input = model.forward(path.end())?;
    let score_baseline = model.forward(start)?;
    Ok(AttributionResult::new(
        map,
        score_input,
        score_baseline,
        method,
    ))
}

/// Attribution of `model` at `x` relative to `baseline` along `spec`'s path.
pub fn attribute(
    model: &dyn ScalarField,
    x: &ImageTensor,
    baseline: &ImageTensor,
    spec: &PathSpec,
) -> Result<AttributionResult> {
    x.ensure_same_shape(baseline, "baseline")?;
    let path = generate_path(baseline, x, spec)?;
    integrate_path(model, &path, Method::Path(*spec))
}

/// `∇f(x) ⊙ x`. The residual is reported against `f(0)`; this method is not
/// complete in general.
pub fn gradient_x_input(model: &dyn ScalarField, x: &ImageTensor) -> Result<AttributionResult> {
    let g = model.gradient(x)?;
    if g.has_non_finite() {
        return Err(Error::NumericalFailure {
            step: 0,
            detail: "gradient contains NaN or infinity".into(),
        });
    }
    let map = g.hadamard(x)?;
    let (c, h, w) = x.shape();
    let score_input = model.forward(x)?;
    let score_zero = model.forward(&ImageTensor::zeros(c, h, w))?;
    Ok(AttributionResult::new(
        map,
        score_input,
        score_zero,
        Method::GradientXInput,
    ))
}

/// Non-negative `H×W` importance map.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    /// Row-major, each in `[0, 1]`.
    pub values: Vec<f64>,
    /// Raw value mapped to 1.0 (0 for an all-zero map).
    pub clip_value: f64,
    pub clip_percentile: f64,
}

impl Heatmap {
    /// Builds a heatmap from raw non-negative values without normalising.
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(invalid("heatmap size does not match dimensions"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("heatmap values must be finite and non-negative"));
        }
        Ok(Self {
            height,
            width,
            values,
            clip_value: 1.0,
            clip_percentile: 100.0,
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn to_tensor(&self) -> ImageTensor {
        ImageTensor::from_raw(1, self.height, self.width, self.values.clone())
    }
}

/// Percentile of sorted data with linear interpolation between ranks.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Sums `|map|` over channels, clips at the given percentile of the nonzero
/// pixel values and rescales so the clip value maps to 1.
pub fn to_heatmap(result: &AttributionResult, clip_percentile: f64) -> Result<Heatmap> {
    map_to_heatmap(&result.map, clip_percentile)
}

pub fn map_to_heatmap(map: &ImageTensor, clip_percentile: f64) -> Result<Heatmap> {
    if !(clip_percentile > 50.0 && clip_percentile <= 100.0) {
        return Err(invalid(format!(
            "clip percentile must lie in (50, 100], got {clip_percentile}"
        )));
    }
    let (c, h, w) = map.shape();
    let mut raw = vec![0.0; h * w];
    for ch in 0..c {
        for (r, v) in raw.iter_mut().zip(map.channel(ch)) {
            *r += v.abs();
        }
    }
    let mut nonzero: Vec<f64> = raw.iter().copied().filter(|&v| v > 0.0).collect();
    if nonzero.is_empty() {
        return Ok(Heatmap {
            height: h,
            width: w,
            values: raw,
            clip_value: 0.0,
            clip_percentile,
        });
    }
    nonzero.sort_by(f64::total_cmp);
    let clip = percentile(&nonzero, clip_percentile);
    let values = raw.iter().map(|&v| (v.min(clip) / clip).min(1.0)).collect();
    Ok(Heatmap {
        height: h,
        width: w,
        values,
        clip_value: clip,
        clip_percentile,
    })
}

/// Tolerance on `|f(Tx) − f(x)|` before a model counts as non-invariant.
const SYMMETRY_TOL: f64 = 1e-8;

/// `‖attribute(Tx', Tx) − T·attribute(x', x)‖_∞` for a model invariant
/// under `T`.
pub fn symmetry_check(
    model: &dyn ScalarField,
    x: &ImageTensor,
    baseline: &ImageTensor,
    spec: &PathSpec,
    t: SpatialTransform,
) -> Result<f64> {
    let tx = x.transform(t)?;
    let tb = baseline.transform(t)?;
    for (orig, moved, what) in [(x, &tx, "input"), (baseline, &tb, "baseline")] {
        let gap = (model.forward(moved)? - model.forward(orig)?).abs();
        if gap > SYMMETRY_TOL {
            return Err(Error::Precondition(format!(
                "model is not invariant under {} at the {what} (|f(Tx) - f(x)| = {gap:e})",
                t.name()
            )));
        }
    }
    let direct = attribute(model, x, baseline, spec)?.map.transform(t)?;
    let moved = attribute(model, &tx, &tb, spec)?.map;
    Ok(moved.max_abs_diff(&direct))
}
