//! Browser bindings for the interactive demo page in `www/`.
//!
//! Everything works on one seeded grayscale sample and a small seeded MLP.
//! Images cross the boundary as flat row-major `Float64Array`s in `[0, 1]`.

use spectral_attr::spectrum::path_frequency_trace;
use spectral_attr::{
    activation_window, attribute, decompose_difference, gate, generate_path, gradient_x_input,
    map_to_heatmap, tiny_mlp, GateSchedule, ImageTensor, ModelWeights, PathFamily, PathSpec,
    Result, SvdMode, TargetMode, TinyMlp,
};
use wasm_bindgen::prelude::*;

pub const SIDE: usize = 16;
const HIDDEN: usize = 16;
const CLASSES: usize = 3;

pub struct Scene {
    pub input: ImageTensor,
    pub baseline: ImageTensor,
    pub model: TinyMlp,
}

impl Scene {
    pub fn new(seed: u64) -> Result<Self> {
        let input = spectral_attr::fixtures::structured_sample(1, SIDE, SIDE, seed);
        let weights = ModelWeights::random((1, SIDE, SIDE), HIDDEN, CLASSES, seed);
        Ok(Scene {
            input,
            baseline: ImageTensor::zeros(1, SIDE, SIDE),
            model: tiny_mlp(weights, TargetMode::probability(0))?,
        })
    }

    /// `frames` evenly spaced points of the spectral path, concatenated.
    pub fn path_frames(
        &self,
        omega: f64,
        schedule: GateSchedule,
        frames: usize,
    ) -> Result<Vec<f64>> {
        let steps = frames.max(2) - 1;
        let spec = PathSpec::new(PathFamily::Spectral, steps)
            .with_overlap(omega)
            .with_schedule(schedule);
        let path = generate_path(&self.baseline, &self.input, &spec)?;
        Ok(path
            .points
            .iter()
            .flat_map(|p| p.as_slice().iter().map(|v| v.clamp(0.0, 1.0)))
            .collect())
    }

    /// High-frequency fraction along the path of `family`, one value per
    /// point.
    pub fn frequency_trace(
        &self,
        family: PathFamily,
        omega: f64,
        schedule: GateSchedule,
        steps: usize,
    ) -> Result<Vec<f64>> {
        let spec = PathSpec::new(family, steps)
            .with_overlap(omega)
            .with_schedule(schedule);
        let path = generate_path(&self.baseline, &self.input, &spec)?;
        Ok(path_frequency_trace(&path, path.start(), 0.5).hf_fraction)
    }

    /// Normalised heatmap for `method` (a CLI method tag) followed by the
    /// completeness residual.
    pub fn heatmap(&self, method: &str, omega: f64, steps: usize) -> Result<Vec<f64>> {
        let result = if method == "gxi" {
            gradient_x_input(&self.model, &self.input)?
        } else {
            let family = match method {
                "sig" => PathFamily::Spectral,
                "ig" => PathFamily::Linear,
                other => other.parse()?,
            };
            let spec = PathSpec::new(family, steps).with_overlap(omega);
            attribute(&self.model, &self.input, &self.baseline, &spec)?
        };
        let mut out = map_to_heatmap(&result.map, 99.0)?.values;
        out.push(result.completeness_residual);
        Ok(out)
    }

    /// Gate value of every singular component at `samples` evenly spaced
    /// `α`, component-major, preceded by the normalised singular values.
    pub fn gate_curves(
        &self,
        omega: f64,
        schedule: GateSchedule,
        samples: usize,
    ) -> Result<Vec<f64>> {
        let factors = decompose_difference(&self.input, &self.baseline, SvdMode::PerChannel)?;
        let t = &factors.triples[0];
        let max = t.leading();
        let n = samples.max(2);
        let mut out: Vec<f64> = t.sigma.iter().map(|s| s / max).collect();
        for &s in &t.sigma {
            let w = activation_window(s.min(max), max, omega)?;
            out.extend((0..n).map(|i| gate(i as f64 / (n - 1) as f64, w, schedule)));
        }
        Ok(out)
    }
}

fn js(e: spectral_attr::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn schedule(name: &str) -> std::result::Result<GateSchedule, JsError> {
    name.parse().map_err(js)
}

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> std::result::Result<Demo, JsError> {
        Ok(Demo {
            scene: Scene::new(seed as u64).map_err(js)?,
        })
    }

    pub fn side(&self) -> usize {
        SIDE
    }

    #[wasm_bindgen(js_name = pathFrames)]
    pub fn path_frames(
        &self,
        omega: f64,
        schedule_name: &str,
        frames: usize,
    ) -> std::result::Result<Vec<f64>, JsError> {
        self.scene
            .path_frames(omega, schedule(schedule_name)?, frames)
            .map_err(js)
    }

    #[wasm_bindgen(js_name = frequencyTrace)]
    pub fn frequency_trace(
        &self,
        family: &str,
        omega: f64,
        schedule_name: &str,
        steps: usize,
    ) -> std::result::Result<Vec<f64>, JsError> {
        let family: PathFamily = family.parse().map_err(js)?;
        self.scene
            .frequency_trace(family, omega, schedule(schedule_name)?, steps)
            .map_err(js)
    }

    pub fn heatmap(
        &self,
        method: &str,
        omega: f64,
        steps: usize,
    ) -> std::result::Result<Vec<f64>, JsError> {
        self.scene.heatmap(method, omega, steps).map_err(js)
    }

    #[wasm_bindgen(js_name = gateCurves)]
    pub fn gate_curves(
        &self,
        omega: f64,
        schedule_name: &str,
        samples: usize,
    ) -> std::result::Result<Vec<f64>, JsError> {
        self.scene
            .gate_curves(omega, schedule(schedule_name)?, samples)
            .map_err(js)
    }
}
