//! Integration paths from a baseline to an input.
//!
//! Every family produces `M + 1` points on the equal-spaced grid
//! `α_m = m / M`. Apart from the plain linear interpolation, each family
//! splits the difference `Δ = x − x'` into components, gives each component
//! an activation window sized by its relative importance, and rebuilds
//! `x' + Σ_i φ_i(α) · component_i` at every step:
//!
//! | family      | components                   | importance           |
//! |-------------|------------------------------|----------------------|
//! | `spectral`  | rank-one SVD terms           | singular value       |
//! | `dct`       | single DCT-II coefficients   | coefficient magnitude|
//! | `laplacian` | Laplacian pyramid levels     | level RMS            |
//!
//! The `blur` family instead walks from a heavily blurred copy of the input
//! back to the input and ignores the supplied baseline.

pub mod gating;
pub mod multiscale;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::svd::{decompose_difference, SpectralFactors, SvdMode};
use crate::tensor::{ImageTensor, RealMatrix};

pub use gating::{activation_window, gate, ActivationWindow, GateSchedule};
use multiscale::{dct2, gaussian_blur, idct2, LaplacianPyramid};

/// Which curve connects baseline and input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathFamily {
    Linear,
    Spectral,
    Blur,
    Dct,
    Laplacian,
}

impl PathFamily {
    pub const ALL: [PathFamily; 5] = [
        PathFamily::Linear,
        PathFamily::Spectral,
        PathFamily::Blur,
        PathFamily::Dct,
        PathFamily::Laplacian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PathFamily::Linear => "linear",
            PathFamily::Spectral => "spectral",
            PathFamily::Blur => "blur",
            PathFamily::Dct => "dct",
            PathFamily::Laplacian => "laplacian",
        }
    }
}

impl std::str::FromStr for PathFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PathFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| invalid(format!("unknown path family '{s}'")))
    }
}

/// Full description of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    pub family: PathFamily,
    /// Number of integration steps `M`.
    pub steps: usize,
    /// Overlap `ω ∈ (0, 1]`; `1` makes every gated family linear.
    pub overlap: f64,
    pub schedule: GateSchedule,
    pub svd_mode: SvdMode,
    /// Blur standard deviation at `α = 0` (blur family only).
    pub blur_sigma_max: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self {
            family: PathFamily::Spectral,
            steps: 200,
            overlap: 0.4,
            schedule: GateSchedule::Linear,
            svd_mode: SvdMode::PerChannel,
            blur_sigma_max: 35.0,
        }
    }
}

impl PathSpec {
    pub fn new(family: PathFamily, steps: usize) -> Self {
        Self {
            family,
            steps,
            ..Self::default()
        }
    }

    pub fn with_overlap(mut self, overlap: f64) -> Self {
        self.overlap = overlap;
        self
    }

    pub fn with_schedule(mut self, schedule: GateSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_svd_mode(mut self, mode: SvdMode) -> Self {
        self.svd_mode = mode;
        self
    }

    pub fn with_blur_sigma(mut self, sigma: f64) -> Self {
        self.blur_sigma_max = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(invalid("steps must be at least 1"));
        }
        if !(self.overlap > 0.0 && self.overlap <= 1.0) {
            return Err(invalid(format!(
                "overlap must lie in (0, 1], got {}",
                self.overlap
            )));
        }
        if self.family == PathFamily::Blur
            && !(self.blur_sigma_max > 0.0 && self.blur_sigma_max.is_finite())
        {
            return Err(invalid("blur sigma must be positive and finite"));
        }
        Ok(())
    }
}

/// Discretised path: `points[m]` sits at `alphas[m] = m / M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub alphas: Vec<f64>,
    pub points: Vec<ImageTensor>,
}

impl Path {
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    /// Start of the path. For the blur family this is the blurred input,
    /// not the caller's baseline.
    pub fn start(&self) -> &ImageTensor {
        &self.points[0]
    }

    pub fn end(&self) -> &ImageTensor {
        &self.points[self.points.len() - 1]
    }
}

/// `x' + α (x − x')`.
pub fn linear_point(
    baseline: &ImageTensor,
    input: &ImageTensor,
    alpha: f64,
) -> Result<ImageTensor> {
    baseline.zip_with(input, |b, x| b + alpha * (x - b))
}

/// Point on the spectral path: each rank-one component of `Δ` is scaled by
/// its gate at `alpha`; σ_max is the leading singular value of its own triple.
pub fn spectral_point(
    baseline: &ImageTensor,
    factors: &SpectralFactors,
    alpha: f64,
    omega: f64,
    schedule: GateSchedule,
) -> Result<ImageTensor> {
    if (factors.channels, factors.height, factors.width) != baseline.shape() {
        return Err(invalid("factors do not match baseline shape"));
    }
    let weights = factors
        .triples
        .iter()
        .map(|t| gating::gate_all(&t.sigma, t.leading(), alpha, omega, schedule))
        .collect::<Result<Vec<_>>>()?;
    baseline.add(&factors.reconstruct(&weights)?)
}

/// Input blurred with standard deviation `(1 − α) · sigma_max`.
pub fn blur_point(input: &ImageTensor, alpha: f64, sigma_max: f64) -> ImageTensor {
    let sigma = (1.0 - alpha) * sigma_max;
    if alpha >= 1.0 || sigma <= 0.0 {
        return input.clone();
    }
    let (c, h, w) = input.shape();
    let mut data = Vec::with_capacity(input.len());
    for ch in 0..c {
        data.extend(gaussian_blur(input.channel(ch), h, w, sigma));
    }
    ImageTensor::from_raw(c, h, w, data)
}

/// Point on the DCT path: every DCT-II coefficient of each channel of `Δ`
/// is gated by its magnitude relative to the channel's largest coefficient.
pub fn dct_point(
    baseline: &ImageTensor,
    input: &ImageTensor,
    alpha: f64,
    omega: f64,
    schedule: GateSchedule,
) -> Result<ImageTensor> {
    PathPlan::dct(baseline, input)?.point(alpha, omega, schedule)
}

/// Point on the Laplacian-pyramid path: pyramid levels of each channel of
/// `Δ` are gated by their RMS relative to the strongest level.
pub fn laplacian_point(
    baseline: &ImageTensor,
    input: &ImageTensor,
    alpha: f64,
    omega: f64,
    schedule: GateSchedule,
) -> Result<ImageTensor> {
    PathPlan::laplacian(baseline, input)?.point(alpha, omega, schedule)
}

/// Precomputed decomposition shared by all points of one path.
enum PathPlan<'a> {
    Constant(&'a ImageTensor),
    Linear {
        baseline: &'a ImageTensor,
        input: &'a ImageTensor,
    },
    Spectral {
        baseline: &'a ImageTensor,
        factors: SpectralFactors,
    },
    Blur {
        input: &'a ImageTensor,
        sigma_max: f64,
    },
    Dct {
        baseline: &'a ImageTensor,
        coefficients: Vec<RealMatrix>,
    },
    Laplacian {
        baseline: &'a ImageTensor,
        pyramids: Vec<LaplacianPyramid>,
    },
}

impl<'a> PathPlan<'a> {
    fn dct(baseline: &'a ImageTensor, input: &'a ImageTensor) -> Result<Self> {
        let delta = input.sub(baseline)?;
        let coefficients = (0..delta.channels())
            .map(|c| dct2(&delta.channel_matrix(c)))
            .collect();
        Ok(PathPlan::Dct {
            baseline,
            coefficients,
        })
    }

    fn laplacian(baseline: &'a ImageTensor, input: &'a ImageTensor) -> Result<Self> {
        let delta = input.sub(baseline)?;
        let pyramids = (0..delta.channels())
            .map(|c| LaplacianPyramid::decompose(&delta.channel_matrix(c)))
            .collect();
        Ok(PathPlan::Laplacian { baseline, pyramids })
    }

    fn build(baseline: &'a ImageTensor, input: &'a ImageTensor, spec: &PathSpec) -> Result<Self> {
        baseline.ensure_same_shape(input, "path endpoints")?;
        if spec.family == PathFamily::Blur {
            return Ok(PathPlan::Blur {
                input,
                sigma_max: spec.blur_sigma_max,
            });
        }
        if baseline == input {
            return Ok(PathPlan::Constant(baseline));
        }
        match spec.family {
            PathFamily::Linear => Ok(PathPlan::Linear { baseline, input }),
            PathFamily::Spectral => Ok(PathPlan::Spectral {
                baseline,
                factors: decompose_difference(input, baseline, spec.svd_mode)?,
            }),
            PathFamily::Dct => Self::dct(baseline, input),
            PathFamily::Laplacian => Self::laplacian(baseline, input),
            PathFamily::Blur => unreachable!(),
        }
    }

    fn point(&self, alpha: f64, omega: f64, schedule: GateSchedule) -> Result<ImageTensor> {
        match self {
            PathPlan::Constant(b) => Ok((*b).clone()),
            PathPlan::Linear { baseline, input } => linear_point(baseline, input, alpha),
            PathPlan::Spectral { baseline, factors } => {
                spectral_point(baseline, factors, alpha, omega, schedule)
            }
            PathPlan::Blur { input, sigma_max } => Ok(blur_point(input, alpha, *sigma_max)),
            PathPlan::Dct {
                baseline,
                coefficients,
            } => {
                let (c, h, w) = baseline.shape();
                let mut data = Vec::with_capacity(baseline.len());
                for coef in coefficients {
                    let mags: Vec<f64> = coef.as_slice().iter().map(|v| v.abs()).collect();
                    let max = mags.iter().cloned().fold(0.0, f64::max);
                    let gates = gating::gate_all(&mags, max, alpha, omega, schedule)?;
                    let gated = RealMatrix::from_raw(
                        h,
                        w,
                        coef.as_slice()
                            .iter()
                            .zip(&gates)
                            .map(|(v, g)| v * g)
                            .collect(),
                    );
                    data.extend(idct2(&gated).into_vec());
                }
                baseline.add(&ImageTensor::from_raw(c, h, w, data))
            }
            PathPlan::Laplacian { baseline, pyramids } => {
                let (c, h, w) = baseline.shape();
                let mut data = Vec::with_capacity(baseline.len());
                for p in pyramids {
                    let rms = p.level_rms();
                    let max = rms.iter().cloned().fold(0.0, f64::max);
                    let gates = gating::gate_all(&rms, max, alpha, omega, schedule)?;
                    data.extend(p.recompose(&gates).into_vec());
                }
                baseline.add(&ImageTensor::from_raw(c, h, w, data))
            }
        }
    }
}

/// Builds the `M + 1` points of a path. `points[0]` is the exact start
/// (the baseline, or the blurred input for the blur family) and
/// `points[M]` is the exact input.
pub fn generate_path(baseline: &ImageTensor, input: &ImageTensor, spec: &PathSpec) -> Result<Path> {
    spec.validate()?;
    let plan = PathPlan::build(baseline, input, spec)?;
    let m = spec.steps;
    let alphas: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
    let points: Vec<Result<ImageTensor>> = alphas
        .par_iter()
        .enumerate()
        .map(|(i, &a)| {
            if i == m {
                Ok(input.clone())
            } else if i == 0 && spec.family != PathFamily::Blur {
                Ok(baseline.clone())
            } else {
                plan.point(a, spec.overlap, spec.schedule)
            }
        })
        .collect();
    let mut points = points.into_iter().collect::<Result<Vec<_>>>()?;
    if spec.family == PathFamily::Blur {
        // Keep the start bitwise equal to what blur_point reports for α = 0.
        points[0] = blur_point(input, 0.0, spec.blur_sigma_max);
    }
    Ok(Path { alphas, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::svd::svd;

    fn random_tensor(c: usize, h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut r = rng::seeded(seed, 0);
        ImageTensor::new(c, h, w, rng::uniform_vec(&mut r, c * h * w, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn linear_point_examples() {
        let b = ImageTensor::zeros(1, 2, 2);
        let x = ImageTensor::filled(1, 2, 2, 1.0);
        assert_eq!(linear_point(&b, &x, 0.0).unwrap(), b);
        assert_eq!(linear_point(&b, &x, 1.0).unwrap(), x);
        assert_eq!(
            linear_point(&b, &x, 0.5).unwrap(),
            ImageTensor::filled(1, 2, 2, 0.5)
        );
        assert!(linear_point(&b, &ImageTensor::zeros(1, 2, 3), 0.5).is_err());
    }

    #[test]
    fn spectral_point_endpoints_and_collapse() {
        let x = random_tensor(3, 6, 5, 1);
        let b = random_tensor(3, 6, 5, 2);
        for mode in [SvdMode::PerChannel, SvdMode::Joint] {
            let f = decompose_difference(&x, &b, mode).unwrap();
            for s in GateSchedule::ALL {
                assert_eq!(spectral_point(&b, &f, 0.0, 0.4, s).unwrap(), b);
                assert!(
                    spectral_point(&b, &f, 1.0, 0.4, s)
                        .unwrap()
                        .max_abs_diff(&x)
                        < 1e-8
                );
            }
            for a in [0.1, 0.37, 0.8] {
                let p = spectral_point(&b, &f, a, 1.0, GateSchedule::Linear).unwrap();
                let l = linear_point(&b, &x, a).unwrap();
                assert!(p.max_abs_diff(&l) < 1e-10);
            }
        }
    }

    #[test]
    fn zero_channel_contributes_nothing() {
        let mut x = random_tensor(2, 4, 4, 3);
        x.channel_mut(1).fill(0.0);
        let b = ImageTensor::zeros(2, 4, 4);
        let f = decompose_difference(&x, &b, SvdMode::PerChannel).unwrap();
        let p = spectral_point(&b, &f, 0.5, 0.4, GateSchedule::Linear).unwrap();
        assert!(p.channel(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blur_point_examples() {
        let x = random_tensor(2, 7, 9, 4);
        assert_eq!(blur_point(&x, 1.0, 35.0), x);
        let flat = ImageTensor::filled(3, 5, 5, 0.3);
        for a in [0.0, 0.5, 0.9] {
            assert!(blur_point(&flat, a, 10.0).max_abs_diff(&flat) < 1e-15);
        }
        let mut impulse = ImageTensor::zeros(1, 12, 12);
        impulse.set(0, 3, 8, 2.0);
        let blurred = blur_point(&impulse, 0.0, 35.0);
        assert!((blurred.sum() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn multiscale_points_endpoints_and_collapse() {
        let x = random_tensor(2, 8, 6, 5);
        let b = random_tensor(2, 8, 6, 6);
        type PointFn =
            fn(&ImageTensor, &ImageTensor, f64, f64, GateSchedule) -> Result<ImageTensor>;
        for point in [dct_point as PointFn, laplacian_point as PointFn] {
            assert!(
                point(&b, &x, 0.0, 0.4, GateSchedule::Cosine)
                    .unwrap()
                    .max_abs_diff(&b)
                    < 1e-12
            );
            assert!(
                point(&b, &x, 1.0, 0.4, GateSchedule::Cosine)
                    .unwrap()
                    .max_abs_diff(&x)
                    < 1e-6
            );
            for a in [0.2, 0.5, 0.9] {
                let p = point(&b, &x, a, 1.0, GateSchedule::Linear).unwrap();
                assert!(p.max_abs_diff(&linear_point(&b, &x, a).unwrap()) < 1e-8);
            }
        }
    }

    #[test]
    fn generate_path_examples() {
        let x = random_tensor(3, 5, 5, 7);
        let b = ImageTensor::zeros(3, 5, 5);
        for fam in PathFamily::ALL {
            let p = generate_path(&b, &x, &PathSpec::new(fam, 1)).unwrap();
            assert_eq!(p.points.len(), 2);
            assert_eq!(p.alphas, vec![0.0, 1.0]);
            assert_eq!(p.end(), &x);
            if fam != PathFamily::Blur {
                assert_eq!(p.start(), &b);
            }
        }
        let sig = generate_path(
            &b,
            &x,
            &PathSpec::new(PathFamily::Spectral, 10).with_overlap(1.0),
        )
        .unwrap();
        let lin = generate_path(&b, &x, &PathSpec::new(PathFamily::Linear, 10)).unwrap();
        for (p, q) in sig.points.iter().zip(&lin.points) {
            assert!(p.max_abs_diff(q) < 1e-10);
        }
        let flat = generate_path(&x, &x, &PathSpec::new(PathFamily::Spectral, 4)).unwrap();
        assert!(flat.points.iter().all(|p| p == &x));
    }

    #[test]
    fn invalid_specs() {
        let x = random_tensor(1, 3, 3, 8);
        let b = ImageTensor::zeros(1, 3, 3);
        assert!(generate_path(&b, &x, &PathSpec::new(PathFamily::Linear, 0)).is_err());
        assert!(generate_path(&b, &x, &PathSpec::default().with_overlap(0.0)).is_err());
        assert!(generate_path(&b, &x, &PathSpec::default().with_overlap(1.2)).is_err());
        assert!(generate_path(&b, &ImageTensor::zeros(1, 3, 4), &PathSpec::default()).is_err());
    }

    #[test]
    fn step_schedule_approaches_truncated_svd() {
        // Distinct σ ratios; with a tiny overlap and hard steps the path sits
        // on baseline + rank-k truncation between component midpoints.
        let mut r = rng::seeded(21, 0);
        let delta = RealMatrix::new(5, 4, rng::normal_vec(&mut r, 20)).unwrap();
        let f = svd(&delta).unwrap();
        let x = ImageTensor::new(1, 5, 4, delta.as_slice().to_vec()).unwrap();
        let b = ImageTensor::zeros(1, 5, 4);
        let factors = decompose_difference(&x, &b, SvdMode::PerChannel).unwrap();
        let omega = 1e-6;
        let mids: Vec<f64> = f
            .sigma
            .iter()
            .map(|&s| {
                let w = activation_window(s, f.sigma[0], omega).unwrap();
                0.5 * (w.start + w.end)
            })
            .collect();
        for k in 1..f.rank() {
            let alpha = 0.5 * (mids[k - 1] + mids[k]);
            let p = spectral_point(&b, &factors, alpha, omega, GateSchedule::Step).unwrap();
            let want = f.truncate(k).unwrap();
            let diff = p
                .as_slice()
                .iter()
                .zip(want.as_slice())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff < 1e-6, "k = {k}: {diff}");
        }
    }
}
