//! Dense real containers: `C×H×W` image tensors and row-major matrices.

use crate::error::{invalid, Result};

/// A `C×H×W` tensor of finite reals stored in row-major `(c, h, w)` order.
///
/// Inputs, baselines, path points, gradients and attribution maps all share
/// this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(invalid(format!(
                "tensor dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(invalid(format!(
                "tensor {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite tensor value at index {i}")));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Builds a tensor without the finiteness check. Callers that need to
    /// detect NaN themselves (gradient accumulation) use this.
    pub(crate) fn from_raw(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty tensor");
        Self::from_raw(
            channels,
            height,
            width,
            vec![value; channels * height * width],
        )
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for h in 0..height {
                for w in 0..width {
                    data.push(f(c, h, w));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    /// Stacks single-channel matrices (all `H×W`) into a tensor.
    pub fn from_channels(channels: &[RealMatrix]) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| invalid("at least one channel required"))?;
        let (h, w) = (first.rows(), first.cols());
        let mut data = Vec::with_capacity(channels.len() * h * w);
        for m in channels {
            if m.rows() != h || m.cols() != w {
                return Err(invalid("channel matrices differ in shape"));
            }
            data.extend_from_slice(m.as_slice());
        }
        Self::new(channels.len(), h, w, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, h: usize, w: usize) -> usize {
        (c * self.height + h) * self.width + w
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, h: usize, w: usize, value: f64) {
        let i = self.index(c, h, w);
        self.data[i] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn channel_matrix(&self, c: usize) -> RealMatrix {
        RealMatrix::from_raw(self.height, self.width, self.channel(c).to_vec())
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &ImageTensor, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(invalid(format!(
                "{what}: shape {:?} does not match {:?}",
                other.shape(),
                self.shape()
            )))
        }
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageTensor {
        Self::from_raw(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Elementwise combination of two equally shaped tensors.
    pub fn zip_with(
        &self,
        other: &ImageTensor,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<ImageTensor> {
        self.ensure_same_shape(other, "elementwise operation")?;
        Ok(Self::from_raw(
            self.channels,
            self.height,
            self.width,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn sub(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn hadamard(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> ImageTensor {
        self.map(|v| v * k)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self − other|`, or infinity when shapes differ.
    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        if !self.same_shape(other) {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Per-channel mean image (each channel filled with its own mean).
    pub fn channel_mean_image(&self) -> ImageTensor {
        let mut out = self.clone();
        for c in 0..self.channels {
            let ch = out.channel_mut(c);
            let mean = ch.iter().sum::<f64>() / ch.len() as f64;
            ch.fill(mean);
        }
        out
    }

    /// Applies a spatial transform independently to every channel.
    pub fn transform(&self, t: SpatialTransform) -> Result<ImageTensor> {
        let (c, h, w) = self.shape();
        match t {
            SpatialTransform::Identity => Ok(self.clone()),
            SpatialTransform::HFlip => Ok(Self::from_raw(c, h, w, {
                let mut d = Vec::with_capacity(self.len());
                for ci in 0..c {
                    for hi in 0..h {
                        for wi in 0..w {
                            d.push(self.get(ci, hi, w - 1 - wi));
                        }
                    }
                }
                d
            })),
            SpatialTransform::VFlip => Ok(Self::from_raw(c, h, w, {
                let mut d = Vec::with_capacity(self.len());
                for ci in 0..c {
                    for hi in 0..h {
                        for wi in 0..w {
                            d.push(self.get(ci, h - 1 - hi, wi));
                        }
                    }
                }
                d
            })),
            SpatialTransform::Rot90 | SpatialTransform::Rot180 | SpatialTransform::Rot270 => {
                if h != w {
                    return Err(invalid(format!(
                        "rotation requires square spatial dims, got {h}x{w}"
                    )));
                }
                let n = h;
                let mut d = Vec::with_capacity(self.len());
                for ci in 0..c {
                    for i in 0..n {
                        for j in 0..n {
                            // Counter-clockwise rotation by 90, 180, 270 degrees.
                            let v = match t {
                                SpatialTransform::Rot90 => self.get(ci, j, n - 1 - i),
                                SpatialTransform::Rot180 => self.get(ci, n - 1 - i, n - 1 - j),
                                _ => self.get(ci, n - 1 - j, i),
                            };
                            d.push(v);
                        }
                    }
                }
                Ok(Self::from_raw(c, h, w, d))
            }
        }
    }
}

/// Spatial symmetry operations acting on the `H×W` plane of every channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpatialTransform {
    Identity,
    HFlip,
    VFlip,
    Rot90,
    Rot180,
    Rot270,
}

impl SpatialTransform {
    pub fn inverse(self) -> SpatialTransform {
        match self {
            SpatialTransform::Rot90 => SpatialTransform::Rot270,
            SpatialTransform::Rot270 => SpatialTransform::Rot90,
            other => other,
        }
    }

    /// Cyclic group generated by `self`, identity first.
    pub fn orbit(self) -> Vec<SpatialTransform> {
        use SpatialTransform::*;
        match self {
            Identity => vec![Identity],
            HFlip => vec![Identity, HFlip],
            VFlip => vec![Identity, VFlip],
            Rot180 => vec![Identity, Rot180],
            Rot90 | Rot270 => vec![Identity, self, Rot180, self.inverse()],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpatialTransform::Identity => "identity",
            SpatialTransform::HFlip => "hflip",
            SpatialTransform::VFlip => "vflip",
            SpatialTransform::Rot90 => "rot90",
            SpatialTransform::Rot180 => "rot180",
            SpatialTransform::Rot270 => "rot270",
        }
    }
}

impl std::str::FromStr for SpatialTransform {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "identity" => SpatialTransform::Identity,
            "hflip" => SpatialTransform::HFlip,
            "vflip" => SpatialTransform::VFlip,
            "rot90" => SpatialTransform::Rot90,
            "rot180" => SpatialTransform::Rot180,
            "rot270" => SpatialTransform::Rot270,
            _ => return Err(invalid(format!("unknown transform '{s}'"))),
        })
    }
}

/// Row-major dense matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite matrix value at index {i}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> RealMatrix {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn matmul(&self, other: &RealMatrix) -> Result<RealMatrix> {
        if self.cols != other.rows {
            return Err(invalid(format!(
                "matmul: {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let row = &mut out[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_raw(self.rows, other.cols, out))
    }

    pub fn sub(&self, other: &RealMatrix) -> Result<RealMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(invalid("matrix shapes differ"));
        }
        Ok(Self::from_raw(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub fn scale(&self, k: f64) -> RealMatrix {
        Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * k).collect(),
        )
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
