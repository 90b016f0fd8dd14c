//! Path-integral feature attribution with coarse-to-fine integration paths.
//!
//! The spectral path splits `Δ = x − x'` into rank-one SVD components and
//! switches them on in order of singular value, each ramping over an
//! activation window whose width is the overlap `ω`. With `ω = 1` every
//! window covers the whole path and the spectral path is the straight line
//! of Integrated Gradients; as `ω → 0` it approaches the piecewise
//! truncated-SVD path.
//!
//! ```
//! use spectral_attr::{attribute, fixtures, tiny_mlp, ImageTensor, ModelWeights, PathSpec, TargetMode};
//!
//! let model = tiny_mlp(ModelWeights::reference(0), TargetMode::probability(0)).unwrap();
//! let x = fixtures::random_image((3, 8, 8), 1, 0);
//! let baseline = ImageTensor::zeros(3, 8, 8);
//! let result = attribute(&model, &x, &baseline, &PathSpec::default()).unwrap();
//! assert_eq!(result.map.shape(), x.shape());
//! ```

pub mod attribution;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod metrics;
pub mod model;
pub mod path;
pub mod rng;
pub mod selftest;
pub mod spectrum;
pub mod svd;
pub mod tensor;

pub use attribution::{
    attribute, gradient_x_input, integrate_path, map_to_heatmap, symmetry_check, to_heatmap,
    AttributionResult, Heatmap, Method,
};
pub use error::{Error, Result};
pub use metrics::{
    auc, deletion_curve, diff_id, diff_id_report, insertion_curve, pointing_game, topmass_iou,
    LocalizationTarget, PerturbationCurve,
};
pub use model::{
    fd_gradient, linear_model, symmetrize, tiny_mlp, LinearModel, ModelWeights, ScalarField,
    TargetKind, TargetMode, TinyMlp,
};
pub use path::{
    activation_window, blur_point, dct_point, gate, generate_path, laplacian_point, linear_point,
    spectral_point, ActivationWindow, GateSchedule, Path, PathFamily, PathSpec,
};
pub use spectrum::{
    dft2_magnitude, high_freq_fraction, path_frequency_trace, FrequencyTrace, SpectrumMap,
};
pub use svd::{
    decompose_difference, reconstruct, svd, truncate, SpectralFactors, SvdMode, SvdTriple,
};
pub use tensor::{ImageTensor, RealMatrix, SpatialTransform};
