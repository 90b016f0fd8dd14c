//! Differentiable scalar models.
//!
//! [`ScalarField`] is the only thing the attribution engine needs from a
//! model: a score and its input gradient. The built-in fields are small and
//! analytic so every gradient can be checked against [`fd_gradient`].

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::tensor::{ImageTensor, SpatialTransform};

/// A scalar function of an image together with its input gradient.
pub trait ScalarField: Send + Sync {
    /// Expected input shape `(C, H, W)`, if the field is shape-specific.
    fn input_shape(&self) -> Option<(usize, usize, usize)> {
        None
    }

    fn forward(&self, x: &ImageTensor) -> Result<f64>;

    /// `∂ forward / ∂ x`, same shape as `x`.
    fn gradient(&self, x: &ImageTensor) -> Result<ImageTensor>;
}

impl<T: ScalarField + ?Sized> ScalarField for Box<T> {
    fn input_shape(&self) -> Option<(usize, usize, usize)> {
        (**self).input_shape()
    }

    fn forward(&self, x: &ImageTensor) -> Result<f64> {
        (**self).forward(x)
    }

    fn gradient(&self, x: &ImageTensor) -> Result<ImageTensor> {
        (**self).gradient(x)
    }
}

fn check_shape(expected: (usize, usize, usize), x: &ImageTensor) -> Result<()> {
    if x.shape() == expected {
        Ok(())
    } else {
        Err(invalid(format!(
            "model expects input {:?}, got {:?}",
            expected,
            x.shape()
        )))
    }
}

/// `f(x) = Σ w ⊙ x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: ImageTensor,
    pub bias: f64,
}

pub fn linear_model(weights: ImageTensor, bias: f64) -> LinearModel {
    LinearModel { weights, bias }
}

impl ScalarField for LinearModel {
    fn input_shape(&self) -> Option<(usize, usize, usize)> {
        Some(self.weights.shape())
    }

    fn forward(&self, x: &ImageTensor) -> Result<f64> {
        check_shape(self.weights.shape(), x)?;
        Ok(self.weights.hadamard(x)?.sum() + self.bias)
    }

    fn gradient(&self, x: &ImageTensor) -> Result<ImageTensor> {
        check_shape(self.weights.shape(), x)?;
        Ok(self.weights.clone())
    }
}

/// Which output of a multi-class model is explained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetKind {
    /// Post-softmax class probability.
    #[default]
    Probability,
    Logit,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Probability => "prob",
            TargetKind::Logit => "logit",
        }
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prob" | "probability" => Ok(TargetKind::Probability),
            "logit" => Ok(TargetKind::Logit),
            _ => Err(invalid(format!("unknown target '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TargetMode {
    pub kind: TargetKind,
    pub class_index: usize,
}

impl TargetMode {
    pub fn probability(class_index: usize) -> Self {
        Self {
            kind: TargetKind::Probability,
            class_index,
        }
    }

    pub fn logit(class_index: usize) -> Self {
        Self {
            kind: TargetKind::Logit,
            class_index,
        }
    }
}

/// Parameters of `flatten → dense(d, hidden) → tanh → dense(hidden, classes)`.
///
/// `w1` is `hidden × d` row-major, `w2` is `classes × hidden` row-major.
/// On disk the arrays follow the header in the order `w1 b1 w2 b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub hidden: usize,
    pub classes: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ModelWeights {
    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_height * self.in_width
    }

    pub fn zeros(shape: (usize, usize, usize), hidden: usize, classes: usize) -> Self {
        let d = shape.0 * shape.1 * shape.2;
        Self {
            in_channels: shape.0,
            in_height: shape.1,
            in_width: shape.2,
            hidden,
            classes,
            w1: vec![0.0; hidden * d],
            b1: vec![0.0; hidden],
            w2: vec![0.0; classes * hidden],
            b2: vec![0.0; classes],
        }
    }

    /// Weights drawn uniformly from `[-0.5, 0.5)`.
    pub fn random(shape: (usize, usize, usize), hidden: usize, classes: usize, seed: u64) -> Self {
        let mut w = Self::zeros(shape, hidden, classes);
        let mut r = rng::seeded(seed, 0);
        for arr in [&mut w.w1, &mut w.b1, &mut w.w2, &mut w.b2] {
            *arr = rng::uniform_vec(&mut r, arr.len(), -0.5, 0.5);
        }
        w
    }

    /// The 3×8×8 → 32 → 4 reference network.
    pub fn reference(seed: u64) -> Self {
        Self::random((3, 8, 8), 32, 4, seed)
    }

    /// Zeroes the first-layer column for flat input index `i`, making the
    /// network independent of that feature.
    pub fn zero_input_feature(&mut self, i: usize) {
        let d = self.input_len();
        for h in 0..self.hidden {
            self.w1[h * d + i] = 0.0;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_len();
        if d == 0 || self.hidden == 0 || self.classes == 0 {
            return Err(invalid("model dimensions must be positive"));
        }
        let expect = [
            ("w1", self.w1.len(), self.hidden * d),
            ("b1", self.b1.len(), self.hidden),
            ("w2", self.w2.len(), self.classes * self.hidden),
            ("b2", self.b2.len(), self.classes),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(invalid(format!(
                    "{name}: expected {want} values, got {got}"
                )));
            }
        }
        let all = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(invalid("weights must be finite"));
        }
        Ok(())
    }

    /// Text form: `arch tinymlp C H W hidden classes` then one weight per
    /// line with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "arch tinymlp {} {} {} {} {}\n",
            self.in_channels, self.in_height, self.in_width, self.hidden, self.classes
        );
        for v in self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
        {
            s.push_str(&crate::io::fmt_f64(*v));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = crate::io::Tokens::new(text);
        for want in ["arch", "tinymlp"] {
            let (off, tok) = tokens.next_token().ok_or(Error::Parse {
                offset: text.len(),
                message: "missing weights header".into(),
            })?;
            if tok != want {
                return Err(Error::Parse {
                    offset: off,
                    message: format!("expected '{want}', found '{tok}'"),
                });
            }
        }
        let mut dims = [0usize; 5];
        for d in dims.iter_mut() {
            *d = tokens.parse_usize()?;
        }
        let [c, h, w, hidden, classes] = dims;
        let mut m = Self::zeros((c, h, w), hidden, classes);
        for arr in [&mut m.w1, &mut m.b1, &mut m.w2, &mut m.b2] {
            for v in arr.iter_mut() {
                *v = tokens.parse_f64()?;
            }
        }
        if let Some((off, tok)) = tokens.next_token() {
            return Err(Error::Parse {
                offset: off,
                message: format!("trailing data '{tok}' after weights"),
            });
        }
        m.validate()?;
        Ok(m)
    }
}

/// Tiny two-layer perceptron with a hand-written backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyMlp {
    weights: ModelWeights,
    target: TargetMode,
}

struct Activations {
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

pub fn tiny_mlp(weights: ModelWeights, target: TargetMode) -> Result<TinyMlp> {
    TinyMlp::new(weights, target)
}

impl TinyMlp {
    pub fn new(weights: ModelWeights, target: TargetMode) -> Result<Self> {
        weights.validate()?;
        if target.class_index >= weights.classes {
            return Err(invalid(format!(
                "class {} out of range for {} classes",
                target.class_index, weights.classes
            )));
        }
        Ok(Self { weights, target })
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn target(&self) -> TargetMode {
        self.target
    }

    fn shape(&self) -> (usize, usize, usize) {
        (
            self.weights.in_channels,
            self.weights.in_height,
            self.weights.in_width,
        )
    }

    fn run(&self, x: &ImageTensor) -> Result<Activations> {
        check_shape(self.shape(), x)?;
        let w = &self.weights;
        let d = w.input_len();
        let xs = x.as_slice();
        let hidden: Vec<f64> = (0..w.hidden)
            .map(|h| {
                let row = &w.w1[h * d..(h + 1) * d];
                (row.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>() + w.b1[h]).tanh()
            })
            .collect();
        let logits = (0..w.classes)
            .map(|k| {
                let row = &w.w2[k * w.hidden..(k + 1) * w.hidden];
                row.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>() + w.b2[k]
            })
            .collect();
        Ok(Activations { hidden, logits })
    }

    /// Class logits for `x`.
    pub fn logits(&self, x: &ImageTensor) -> Result<Vec<f64>> {
        Ok(self.run(x)?.logits)
    }

    /// Softmax over all classes.
    pub fn probabilities(&self, x: &ImageTensor) -> Result<Vec<f64>> {
        Ok(softmax(&self.run(x)?.logits))
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl ScalarField for TinyMlp {
    fn input_shape(&self) -> Option<(usize, usize, usize)> {
        Some(self.shape())
    }

    fn forward(&self, x: &ImageTensor) -> Result<f64> {
        let act = self.run(x)?;
        let k = self.target.class_index;
        Ok(match self.target.kind {
            TargetKind::Logit => act.logits[k],
            TargetKind::Probability => softmax(&act.logits)[k],
        })
    }

    fn gradient(&self, x: &ImageTensor) -> Result<ImageTensor> {
        let act = self.run(x)?;
        let w = &self.weights;
        let k = self.target.class_index;

        // d score / d logits
        let g_logits: Vec<f64> = match self.target.kind {
            TargetKind::Logit => (0..w.classes)
                .map(|j| if j == k { 1.0 } else { 0.0 })
                .collect(),
            TargetKind::Probability => {
                let p = softmax(&act.logits);
                (0..w.classes)
                    .map(|j| p[k] * (if j == k { 1.0 } else { 0.0 } - p[j]))
                    .collect()
            }
        };
        // back through dense(hidden, classes) and tanh
        let g_pre: Vec<f64> = (0..w.hidden)
            .map(|h| {
                let g: f64 = (0..w.classes)
                    .map(|j| g_logits[j] * w.w2[j * w.hidden + h])
                    .sum();
                g * (1.0 - act.hidden[h] * act.hidden[h])
            })
            .collect();
        // back through dense(d, hidden)
        let d = w.input_len();
        let mut g_x = vec![0.0; d];
        for (h, &g) in g_pre.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (o, &wv) in g_x.iter_mut().zip(&w.w1[h * d..(h + 1) * d]) {
                *o += g * wv;
            }
        }
        let (c, hh, ww) = self.shape();
        Ok(ImageTensor::from_raw(c, hh, ww, g_x))
    }
}

/// Orbit average of an inner field over the cyclic group generated by a
/// spatial transform, which makes the result exactly invariant under it.
pub struct Symmetrized<F> {
    inner: F,
    group: Vec<SpatialTransform>,
}

pub fn symmetrize<F: ScalarField>(inner: F, generator: SpatialTransform) -> Result<Symmetrized<F>> {
    if let Some((_, h, w)) = inner.input_shape() {
        if matches!(
            generator,
            SpatialTransform::Rot90 | SpatialTransform::Rot270
        ) && h != w
        {
            return Err(invalid(format!(
                "rotation symmetry needs square input, got {h}x{w}"
            )));
        }
    }
    Ok(Symmetrized {
        inner,
        group: generator.orbit(),
    })
}

impl<F> Symmetrized<F> {
    pub fn inner(&self) -> &F {
        &self.inner
    }

    pub fn group(&self) -> &[SpatialTransform] {
        &self.group
    }
}

impl<F: ScalarField> ScalarField for Symmetrized<F> {
    fn input_shape(&self) -> Option<(usize, usize, usize)> {
        self.inner.input_shape()
    }

    fn forward(&self, x: &ImageTensor) -> Result<f64> {
        let mut total = 0.0;
        for &t in &self.group {
            total += self.inner.forward(&x.transform(t)?)?;
        }
        Ok(total / self.group.len() as f64)
    }

    // ∇ = (1/|G|) Σ_k T_k⁻¹ ∇f(T_k x)
    fn gradient(&self, x: &ImageTensor) -> Result<ImageTensor> {
        let mut acc = vec![0.0; x.len()];
        for &t in &self.group {
            let g = self
                .inner
                .gradient(&x.transform(t)?)?
                .transform(t.inverse())?;
            for (a, v) in acc.iter_mut().zip(g.as_slice()) {
                *a += v;
            }
        }
        let n = self.group.len() as f64;
        let (c, h, w) = x.shape();
        Ok(ImageTensor::from_raw(
            c,
            h,
            w,
            acc.into_iter().map(|v| v / n).collect(),
        ))
    }
}

/// Central finite-difference gradient with step `h`.
pub fn fd_gradient(f: &dyn ScalarField, x: &ImageTensor, h: f64) -> Result<ImageTensor> {
    if h.is_nan() || h <= 0.0 {
        return Err(invalid("finite-difference step must be positive"));
    }
    let (c, hh, w) = x.shape();
    let mut probe = x.as_slice().to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f.forward(&ImageTensor::from_raw(c, hh, w, probe.clone()))?;
        probe[i] = orig - h;
        let minus = f.forward(&ImageTensor::from_raw(c, hh, w, probe.clone()))?;
        probe[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(ImageTensor::from_raw(c, hh, w, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tensor(shape: (usize, usize, usize), seed: u64, lo: f64, hi: f64) -> ImageTensor {
        let mut r = rng::seeded(seed, 1);
        ImageTensor::new(
            shape.0,
            shape.1,
            shape.2,
            rng::uniform_vec(&mut r, shape.0 * shape.1 * shape.2, lo, hi),
        )
        .unwrap()
    }

    struct SumOfSquares;

    impl ScalarField for SumOfSquares {
        fn forward(&self, x: &ImageTensor) -> Result<f64> {
            Ok(x.as_slice().iter().map(|v| v * v).sum())
        }
        fn gradient(&self, x: &ImageTensor) -> Result<ImageTensor> {
            Ok(x.scale(2.0))
        }
    }

    fn max_rel_err(analytic: &ImageTensor, fd: &ImageTensor, floor: f64) -> f64 {
        analytic
            .as_slice()
            .iter()
            .zip(fd.as_slice())
            .filter(|(a, _)| a.abs() > floor)
            .map(|(a, f)| (a - f).abs() / a.abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn linear_model_examples() {
        let shape = (2, 3, 3);
        let x = random_tensor(shape, 1, 0.0, 1.0);
        let m = linear_model(ImageTensor::zeros(2, 3, 3), 3.0);
        assert_eq!(m.forward(&x).unwrap(), 3.0);
        assert_eq!(m.gradient(&x).unwrap(), ImageTensor::zeros(2, 3, 3));

        let m = linear_model(x.clone(), 0.0);
        let want: f64 = x.as_slice().iter().map(|v| v * v).sum();
        assert!((m.forward(&x).unwrap() - want).abs() < 1e-14);
        assert!(m.forward(&ImageTensor::zeros(1, 3, 3)).is_err());
    }

    #[test]
    fn fd_oracle_examples() {
        let shape = (1, 4, 4);
        let w = random_tensor(shape, 2, -1.0, 1.0);
        let x = random_tensor(shape, 3, 0.0, 1.0);
        let lin = linear_model(w.clone(), 0.7);
        assert!(fd_gradient(&lin, &x, 1e-4).unwrap().max_abs_diff(&w) < 1e-10);
        let q = fd_gradient(&SumOfSquares, &x, 1e-4).unwrap();
        assert!(q.max_abs_diff(&x.scale(2.0)) < 1e-8);
        assert!(fd_gradient(&lin, &x, 0.0).is_err());
    }

    #[test]
    fn zero_mlp_is_uniform() {
        let m = tiny_mlp(
            ModelWeights::zeros((3, 8, 8), 32, 4),
            TargetMode::probability(2),
        )
        .unwrap();
        let x = random_tensor((3, 8, 8), 4, 0.0, 1.0);
        assert!((m.forward(&x).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(m.gradient(&x).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn softmax_normalises() {
        let m = tiny_mlp(ModelWeights::reference(5), TargetMode::probability(0)).unwrap();
        for s in 0..10 {
            let x = random_tensor((3, 8, 8), 100 + s, 0.0, 1.0);
            let p = m.probabilities(&x).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let f = m.forward(&x).unwrap();
            assert!(f > 0.0 && f < 1.0);
        }
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        for kind in [TargetKind::Probability, TargetKind::Logit] {
            for seed in 0..5 {
                let m = tiny_mlp(
                    ModelWeights::reference(seed),
                    TargetMode {
                        kind,
                        class_index: 1,
                    },
                )
                .unwrap();
                let x = random_tensor((3, 8, 8), 50 + seed, 0.0, 1.0);
                let g = m.gradient(&x).unwrap();
                let fd = fd_gradient(&m, &x, 1e-4).unwrap();
                assert!(max_rel_err(&g, &fd, 1e-6) <= 1e-5, "{kind:?} seed {seed}");
            }
        }
    }

    #[test]
    fn bad_weights_and_class() {
        let mut w = ModelWeights::reference(1);
        w.b2.pop();
        assert!(tiny_mlp(w, TargetMode::default()).is_err());
        assert!(tiny_mlp(ModelWeights::reference(1), TargetMode::probability(4)).is_err());
    }

    #[test]
    fn weights_text_round_trip_is_bit_exact() {
        let w = ModelWeights::random((2, 3, 4), 5, 3, 9);
        let text = w.to_text();
        assert!(text.starts_with("arch tinymlp 2 3 4 5 3\n"));
        let back = ModelWeights::from_text(&text).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn weights_text_errors() {
        assert!(matches!(
            ModelWeights::from_text(""),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            ModelWeights::from_text("arch convnet 1 1 1 1 1"),
            Err(Error::Parse { offset: 5, .. })
        ));
        let short = "arch tinymlp 1 1 1 1 1\n0.5\n";
        assert!(matches!(
            ModelWeights::from_text(short),
            Err(Error::Parse { .. })
        ));
        let mut long = ModelWeights::zeros((1, 1, 1), 1, 1).to_text();
        long.push_str("9\n");
        assert!(ModelWeights::from_text(&long).is_err());
        let bad = "arch tinymlp 1 1 1 1 1\n0 0 zz 0";
        assert!(matches!(
            ModelWeights::from_text(bad),
            Err(Error::Parse { offset: 27, .. })
        ));
    }

    #[test]
    fn symmetrized_invariance_and_equivariance() {
        let inner = tiny_mlp(ModelWeights::reference(3), TargetMode::probability(0)).unwrap();
        let x = random_tensor((3, 8, 8), 7, 0.0, 1.0);
        for t in [
            SpatialTransform::HFlip,
            SpatialTransform::VFlip,
            SpatialTransform::Rot90,
        ] {
            let s = symmetrize(inner.clone(), t).unwrap();
            let tx = x.transform(t).unwrap();
            assert!((s.forward(&tx).unwrap() - s.forward(&x).unwrap()).abs() <= 1e-12);
            let lhs = s.gradient(&tx).unwrap();
            let rhs = s.gradient(&x).unwrap().transform(t).unwrap();
            assert!(lhs.max_abs_diff(&rhs) <= 1e-10, "{t:?}");
            let fd = fd_gradient(&s, &x, 1e-4).unwrap();
            assert!(max_rel_err(&s.gradient(&x).unwrap(), &fd, 1e-6) <= 1e-5);
        }
        let constant = symmetrize(
            linear_model(ImageTensor::zeros(3, 8, 8), 2.5),
            SpatialTransform::Rot90,
        )
        .unwrap();
        assert_eq!(constant.forward(&x).unwrap(), 2.5);
        let wide = tiny_mlp(
            ModelWeights::random((1, 2, 3), 4, 2, 1),
            TargetMode::default(),
        )
        .unwrap();
        assert!(symmetrize(wide.clone(), SpatialTransform::Rot90).is_err());
        assert!(symmetrize(wide, SpatialTransform::HFlip).is_ok());
    }
}
