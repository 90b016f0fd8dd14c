//! Writes the bundled CLI samples: `cargo run --example make_samples -- <dir>`.

use std::path::PathBuf;

use spectral_attr::fixtures::structured_sample;
use spectral_attr::io::{write_atomic, write_image, ImageFormat};
use spectral_attr::{ImageTensor, ModelWeights};

fn main() -> spectral_attr::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "samples".into()));
    std::fs::create_dir_all(&dir)?;

    let rgb = structured_sample(3, 16, 16, 7);
    write_image(&rgb, dir.join("structured_16.ppm"), ImageFormat::Ppm)?;
    let gray = structured_sample(1, 16, 16, 8);
    write_image(&gray, dir.join("structured_16.pgm"), ImageFormat::Pgm)?;

    let weights = ModelWeights::random((3, 16, 16), 8, 4, 7);
    write_atomic(
        &dir.join("tinymlp_3x16x16.weights"),
        weights.to_text().as_bytes(),
    )?;

    // Central 6x6 block as a localization mask.
    let mask = ImageTensor::from_fn(1, 16, 16, |_, r, c| {
        if (5..11).contains(&r) && (5..11).contains(&c) {
            1.0
        } else {
            0.0
        }
    })?;
    write_image(&mask, dir.join("mask_16.pgm"), ImageFormat::Pgm)?;
    Ok(())
}
