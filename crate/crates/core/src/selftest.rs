//! Invariant suite run by `spectral-attr selftest`.
//!
//! Every check is seeded from one master seed, and the report holds no
//! timings, so the same seed always yields the same text.

use crate::attribution::Heatmap;
use crate::attribution::{attribute, map_to_heatmap, symmetry_check};
use crate::error::Result;
use crate::fixtures;
use crate::metrics::{deletion_curve, diff_id, insertion_curve};
use crate::model::{
    fd_gradient, linear_model, symmetrize, tiny_mlp, ModelWeights, ScalarField, TargetMode,
};
use crate::path::{generate_path, spectral_point, GateSchedule, PathFamily, PathSpec};
use crate::rng;
use crate::spectrum::path_frequency_trace;
use crate::svd::{decompose_difference, svd, SvdMode};
use crate::tensor::{ImageTensor, RealMatrix, SpatialTransform};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTestReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl SelfTestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Fixed-width pass/fail table.
    pub fn render(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut s = format!("selftest seed={}\n", self.seed);
        for c in &self.checks {
            s.push_str(&format!(
                "{}  {:<width$}  {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        s.push_str(&format!("{passed}/{} checks passed\n", self.checks.len()));
        s
    }
}

fn outcome(name: &'static str, result: Result<(bool, String)>) -> CheckOutcome {
    match result {
        Ok((passed, detail)) => CheckOutcome {
            name,
            passed,
            detail,
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

const SHAPE: (usize, usize, usize) = (3, 8, 8);

fn mlp(seed: u64) -> Result<crate::model::TinyMlp> {
    tiny_mlp(ModelWeights::reference(seed), TargetMode::probability(0))
}

/// Runs every check. `extra_model` (a loaded weights file) is added to the
/// finite-difference check when given.
pub fn run(seed: u64, extra_model: Option<&ModelWeights>) -> SelfTestReport {
    let s = |k: u64| seed.wrapping_mul(1_000_003).wrapping_add(k);
    let checks = vec![
        outcome("svd_reconstruction", svd_reconstruction(s(1))),
        outcome("eckart_young", eckart_young(s(2), 50)),
        outcome("fd_gradients", fd_gradients(s(3), extra_model)),
        outcome("omega_one_collapse", omega_one(s(4))),
        outcome("completeness_linear", completeness_linear(s(5))),
        outcome("completeness_convergence", completeness_convergence(s(6))),
        outcome("symmetry_equivariance", symmetry(s(7))),
        outcome("sensitivity_b", sensitivity(s(8))),
        outcome("metric_endpoints", metric_endpoints(s(9))),
        outcome("diffid_separation", diffid_separation(s(10))),
        outcome("frequency_monte_carlo", frequency_mc(s(11))),
        outcome("degenerate_subspace", degenerate(s(12))),
    ];
    SelfTestReport { seed, checks }
}

fn svd_reconstruction(seed: u64) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (i, (r, c)) in [(5, 7), (8, 8), (12, 4), (1, 9)].into_iter().enumerate() {
        let mut g = rng::seeded(seed, i as u64);
        let m = RealMatrix::new(r, c, rng::normal_vec(&mut g, r * c))?;
        let f = svd(&m)?;
        let rec = f.reconstruct(&vec![1.0; f.rank()])?;
        worst = worst.max(rec.sub(&m)?.frobenius_norm() / m.frobenius_norm());
    }
    Ok((worst <= 1e-8, format!("max rel err {worst:.3e}")))
}

/// Error of `m − c·a` with the least-squares optimal scale `c`.
pub fn best_scaled_error(m: &RealMatrix, a: &RealMatrix) -> f64 {
    let ma: f64 = m
        .as_slice()
        .iter()
        .zip(a.as_slice())
        .map(|(x, y)| x * y)
        .sum();
    let aa: f64 = a.as_slice().iter().map(|x| x * x).sum();
    let c = if aa > 0.0 { ma / aa } else { 0.0 };
    m.sub(&a.scale(c)).expect("same shape").frobenius_norm()
}

fn eckart_young(seed: u64, matrices: usize) -> Result<(bool, String)> {
    let mut failures = 0;
    for i in 0..matrices {
        let mut g = rng::seeded(seed, i as u64);
        let m = RealMatrix::new(5, 7, rng::normal_vec(&mut g, 35))?;
        let f = svd(&m)?;
        for k in 1..=3 {
            let best = m.sub(&f.truncate(k)?)?.frobenius_norm();
            for _ in 0..1000 {
                let a = RealMatrix::new(5, k, rng::normal_vec(&mut g, 5 * k))?;
                let b = RealMatrix::new(k, 7, rng::normal_vec(&mut g, 7 * k))?;
                if best_scaled_error(&m, &a.matmul(&b)?) < best - 1e-12 {
                    failures += 1;
                }
            }
        }
    }
    Ok((
        failures == 0,
        format!("{matrices} matrices x k=1..3 x 1000 candidates, {failures} beaten"),
    ))
}

/// `‖∇f − ∇_fd f‖ / ‖∇f‖` at `x`.
fn rel_fd_error(model: &dyn ScalarField, x: &ImageTensor) -> Result<f64> {
    let g = model.gradient(x)?;
    let fd = fd_gradient(model, x, 1e-4)?;
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let g_norm = norm(g.as_slice());
    let err = norm(g.sub(&fd)?.as_slice());
    Ok(if g_norm > 0.0 { err / g_norm } else { err })
}

fn fd_gradients(seed: u64, extra: Option<&ModelWeights>) -> Result<(bool, String)> {
    let mut models: Vec<(&str, Box<dyn ScalarField>)> = vec![
        (
            "linear",
            Box::new(linear_model(
                fixtures::random_image(SHAPE, seed, 99).map(|v| v - 0.5),
                0.2,
            )),
        ),
        ("mlp-prob", Box::new(mlp(seed)?)),
        (
            "mlp-logit",
            Box::new(tiny_mlp(
                ModelWeights::reference(seed),
                TargetMode::logit(1),
            )?),
        ),
        (
            "mlp-sym",
            Box::new(symmetrize(mlp(seed)?, SpatialTransform::Rot90)?),
        ),
    ];
    if let Some(w) = extra {
        models.push((
            "weights-file",
            Box::new(tiny_mlp(w.clone(), TargetMode::probability(0))?),
        ));
    }
    let mut worst: f64 = 0.0;
    for (_, m) in &models {
        let shape = m.input_shape().unwrap_or(SHAPE);
        for p in 0..20 {
            worst = worst.max(rel_fd_error(
                m.as_ref(),
                &fixtures::random_image(shape, seed, p),
            )?);
        }
    }
    Ok((
        worst <= 1e-5,
        format!(
            "{} models x 20 points, max rel err {worst:.3e}",
            models.len()
        ),
    ))
}

fn omega_one(seed: u64) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    let zero = ImageTensor::zeros(3, 8, 8);
    for i in 0..20 {
        let m = mlp(seed + i)?;
        let x = fixtures::random_image(SHAPE, seed, i);
        let sig = attribute(
            &m,
            &x,
            &zero,
            &PathSpec::new(PathFamily::Spectral, 200).with_overlap(1.0),
        )?;
        let ig = attribute(&m, &x, &zero, &PathSpec::new(PathFamily::Linear, 200))?;
        worst = worst.max(sig.map.max_abs_diff(&ig.map));
    }
    Ok((
        worst <= 1e-10,
        format!("20 instances, max |SIG - IG| {worst:.3e}"),
    ))
}

fn completeness_linear(seed: u64) -> Result<(bool, String)> {
    let w = fixtures::random_image(SHAPE, seed, 0).map(|v| v - 0.5);
    let model = linear_model(w, -0.3);
    let x = fixtures::random_image(SHAPE, seed, 1);
    let b = fixtures::random_image(SHAPE, seed, 2).scale(0.2);
    let mut worst: f64 = 0.0;
    for fam in PathFamily::ALL {
        for steps in [1, 3, 50, 200] {
            worst = worst
                .max(attribute(&model, &x, &b, &PathSpec::new(fam, steps))?.completeness_residual);
        }
    }
    Ok((
        worst <= 1e-12,
        format!("all families, M in {{1,3,50,200}}, max residual {worst:.3e}"),
    ))
}

fn completeness_convergence(seed: u64) -> Result<(bool, String)> {
    let zero = ImageTensor::zeros(3, 8, 8);
    let (mut coarse, mut fine) = (0.0, 0.0);
    for i in 0..20 {
        let m = mlp(seed + i)?;
        let x = fixtures::random_image(SHAPE, seed, i);
        coarse += attribute(&m, &x, &zero, &PathSpec::new(PathFamily::Spectral, 100))?
            .completeness_residual;
        fine += attribute(&m, &x, &zero, &PathSpec::new(PathFamily::Spectral, 1600))?
            .completeness_residual;
    }
    let (coarse, fine) = (coarse / 20.0, fine / 20.0);
    Ok((
        fine <= 0.5 * coarse,
        format!("mean residual M=100 {coarse:.3e}, M=1600 {fine:.3e}"),
    ))
}

fn symmetry(seed: u64) -> Result<(bool, String)> {
    let zero = ImageTensor::zeros(3, 8, 8);
    let spec = PathSpec::new(PathFamily::Spectral, 32);
    let mut worst: f64 = 0.0;
    for t in [
        SpatialTransform::HFlip,
        SpatialTransform::VFlip,
        SpatialTransform::Rot90,
    ] {
        for i in 0..10 {
            let m = symmetrize(mlp(seed + i)?, t)?;
            let x = fixtures::random_image(SHAPE, seed, i);
            worst = worst.max(symmetry_check(&m, &x, &zero, &spec, t)?);
        }
    }
    Ok((
        worst <= 1e-8,
        format!("hflip/vflip/rot90 x 10, max discrepancy {worst:.3e}"),
    ))
}

fn sensitivity(seed: u64) -> Result<(bool, String)> {
    let mut weights = ModelWeights::reference(seed);
    let dead = [0usize, 17, 64 + 9, 191];
    for &i in &dead {
        weights.zero_input_feature(i);
    }
    let m = tiny_mlp(weights, TargetMode::probability(0))?;
    let x = fixtures::random_image(SHAPE, seed, 0);
    let b = fixtures::random_image(SHAPE, seed, 1).scale(0.1);
    let mut worst: f64 = 0.0;
    for fam in PathFamily::ALL {
        let r = attribute(&m, &x, &b, &PathSpec::new(fam, 50))?;
        for &i in &dead {
            worst = worst.max(r.map.as_slice()[i].abs());
        }
    }
    Ok((
        worst <= 1e-12,
        format!("4 dead features x 5 families, max |A| {worst:.3e}"),
    ))
}

fn metric_endpoints(seed: u64) -> Result<(bool, String)> {
    let m = mlp(seed)?;
    let x = fixtures::random_image(SHAPE, seed, 0);
    let b = ImageTensor::zeros(3, 8, 8);
    let r = attribute(&m, &x, &b, &PathSpec::new(PathFamily::Spectral, 50))?;
    let h = map_to_heatmap(&r.map, 99.0)?;
    let ins = insertion_curve(&m, &x, &b, &h, 101)?;
    let del = deletion_curve(&m, &x, &b, &h, 101)?;
    let (fx, fb) = (m.forward(&x)?, m.forward(&b)?);
    let n = ins.scores.len() - 1;
    let gap = [
        (ins.scores[0] - fb).abs(),
        (ins.scores[n] - fx).abs(),
        (del.scores[0] - fx).abs(),
        (del.scores[n] - fb).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok((gap <= 1e-12, format!("max endpoint gap {gap:.3e}")))
}

fn diffid_separation(seed: u64) -> Result<(bool, String)> {
    let mut wins = 0;
    for i in 0..100 {
        let task = fixtures::sparse_linear_task(8, 10, seed + i);
        let truth = Heatmap::from_values(8, 8, task.true_importance.clone())?;
        let mut g = rng::seeded(seed + i, 0xa11);
        let random = Heatmap::from_values(8, 8, rng::uniform_vec(&mut g, 64, 0.0, 1.0))?;
        let d_true = diff_id(&task.model, &task.input, &task.baseline, &truth, 101)?;
        let d_rand = diff_id(&task.model, &task.input, &task.baseline, &random, 101)?;
        if d_true > d_rand {
            wins += 1;
        }
    }
    Ok((wins >= 95, format!("true-weight heatmap wins {wins}/100")))
}

fn frequency_mc(seed: u64) -> Result<(bool, String)> {
    let zero = ImageTensor::zeros(1, 16, 16);
    let sig = PathSpec::new(PathFamily::Spectral, 20).with_overlap(0.4);
    let lin = PathSpec::new(PathFamily::Linear, 20);
    let mut wins = 0;
    let mut linear_spread: f64 = 0.0;
    for i in 0..100 {
        let delta = fixtures::smooth_rank2_plus_noise(1, 16, 16, 0.05, seed + i);
        let t = path_frequency_trace(&generate_path(&zero, &delta, &sig)?, &zero, 0.5);
        if t.at(0.25) < t.at(1.0) {
            wins += 1;
        }
        let t = path_frequency_trace(&generate_path(&zero, &delta, &lin)?, &zero, 0.5);
        let end = t.at(1.0);
        for v in &t.hf_fraction[1..] {
            linear_spread = linear_spread.max((v - end).abs());
        }
    }
    Ok((
        wins >= 90 && linear_spread <= 1e-10,
        format!("SIG coarse-to-fine in {wins}/100, linear trace spread {linear_spread:.3e}"),
    ))
}

fn degenerate(seed: u64) -> Result<(bool, String)> {
    let b = ImageTensor::zeros(1, 6, 5);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let (orig, rotated) = fixtures::degenerate_pair(6, 5, seed + i);
        let x = b.add(&orig.reconstruct(&[vec![1.0; 3]])?)?;
        let computed = decompose_difference(&x, &b, SvdMode::PerChannel)?;
        for s in GateSchedule::ALL {
            // Off the step schedule's switch points, where a 1-ulp change
            // in σ flips the gate.
            for a in [0.1, 0.35, 0.45, 0.65, 0.9] {
                let p = spectral_point(&b, &orig, a, 0.4, s)?;
                worst = worst.max(p.max_abs_diff(&spectral_point(&b, &rotated, a, 0.4, s)?));
                worst = worst.max(p.max_abs_diff(&spectral_point(&b, &computed, a, 0.4, s)?));
            }
        }
    }
    Ok((
        worst <= 1e-6,
        format!("20 rotations, max point gap {worst:.3e}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_error_uses_optimal_coefficient() {
        let m = RealMatrix::new(1, 2, vec![2.0, 0.0]).unwrap();
        let a = RealMatrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        // best c = 1 -> residual (1, -1)
        assert!((best_scaled_error(&m, &a) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cheap_checks_pass() {
        for (name, r) in [
            ("svd", svd_reconstruction(1)),
            ("ey", eckart_young(1, 3)),
            ("lin", completeness_linear(1)),
            ("sens", sensitivity(1)),
            ("ends", metric_endpoints(1)),
            ("degenerate", degenerate(1)),
        ] {
            let (ok, detail) = r.unwrap();
            assert!(ok, "{name}: {detail}");
        }
    }
}
