//! Activation windows and gating schedules for per-component path scaling.

use crate::error::{Error, Result};

/// Steepness of the logistic schedule over the normalised window.
const SIGMOID_STEEPNESS: f64 = 10.0;

/// Shape of the ramp a component follows inside its activation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateSchedule {
    #[default]
    Linear,
    Cosine,
    Sigmoid,
    /// Hard switch at the window midpoint.
    Step,
}

impl GateSchedule {
    pub const ALL: [GateSchedule; 4] = [
        GateSchedule::Linear,
        GateSchedule::Cosine,
        GateSchedule::Sigmoid,
        GateSchedule::Step,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateSchedule::Linear => "linear",
            GateSchedule::Cosine => "cosine",
            GateSchedule::Sigmoid => "sigmoid",
            GateSchedule::Step => "step",
        }
    }
}

impl std::str::FromStr for GateSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GateSchedule::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown schedule '{s}'")))
    }
}

/// Interval `[start, end]` of path progress over which a component ramps
/// from absent to fully present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationWindow {
    pub start: f64,
    pub end: f64,
}

/// Window for a component of importance `sigma_i` relative to the largest
/// importance `sigma_max`: `s = (1−ω)(1 − σ_i/σ_max)`, `e = s + ω`.
pub fn activation_window(sigma_i: f64, sigma_max: f64, omega: f64) -> Result<ActivationWindow> {
    if sigma_max.is_nan() || sigma_max <= 0.0 || sigma_max.is_infinite() {
        return Err(Error::Degenerate(format!(
            "leading importance must be positive, got {sigma_max}"
        )));
    }
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "overlap must lie in (0, 1], got {omega}"
        )));
    }
    if !(0.0..=sigma_max).contains(&sigma_i) {
        return Err(Error::InvalidInput(format!(
            "component importance {sigma_i} outside [0, {sigma_max}]"
        )));
    }
    let start = (1.0 - omega) * (1.0 - sigma_i / sigma_max);
    Ok(ActivationWindow {
        start,
        end: start + omega,
    })
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Gate value in `[0, 1]` at progress `alpha`. Every schedule is 0 for
/// `alpha <= start` and 1 for `alpha >= end`.
pub fn gate(alpha: f64, w: ActivationWindow, schedule: GateSchedule) -> f64 {
    if alpha <= w.start {
        return 0.0;
    }
    if alpha >= w.end {
        return 1.0;
    }
    let t = ((alpha - w.start) / (w.end - w.start)).clamp(0.0, 1.0);
    match schedule {
        GateSchedule::Linear => t,
        GateSchedule::Cosine => (1.0 - (std::f64::consts::PI * t).cos()) / 2.0,
        GateSchedule::Sigmoid => {
            let lo = logistic(-0.5 * SIGMOID_STEEPNESS);
            let hi = logistic(0.5 * SIGMOID_STEEPNESS);
            ((logistic((t - 0.5) * SIGMOID_STEEPNESS) - lo) / (hi - lo)).clamp(0.0, 1.0)
        }
        GateSchedule::Step => {
            if alpha < 0.5 * (w.start + w.end) {
                0.0
            } else {
                1.0
            }
        }
    }
}

/// Gate values for a list of component importances sharing one maximum.
/// Returns all zeros when `importance_max` is zero.
pub(crate) fn gate_all(
    importances: &[f64],
    importance_max: f64,
    alpha: f64,
    omega: f64,
    schedule: GateSchedule,
) -> Result<Vec<f64>> {
    if importance_max == 0.0 {
        return Ok(vec![0.0; importances.len()]);
    }
    importances
        .iter()
        .map(|&s| {
            // Rounding can push a ratio a hair past 1.
            let s = s.min(importance_max);
            Ok(gate(
                alpha,
                activation_window(s, importance_max, omega)?,
                schedule,
            ))
        })
        .collect()
}
