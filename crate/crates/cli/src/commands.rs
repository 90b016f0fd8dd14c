use std::path::Path as FsPath;

use spectral_attr::io::{encode_image, read_file, read_image, ImageFormat, ResultDocument};
use spectral_attr::metrics::{diff_id_report, LocalizationTarget};
use spectral_attr::spectrum::difference_spectrum;
use spectral_attr::{
    attribute as run_attribution, blur_point, generate_path, gradient_x_input, map_to_heatmap,
    path_frequency_trace, pointing_game, selftest as checks, tiny_mlp, topmass_iou,
    AttributionResult, Error, GateSchedule, Heatmap, ImageTensor, Method, ModelWeights, PathFamily,
    PathSpec, Result, ScalarField, SvdMode, TargetKind, TargetMode, TinyMlp,
};

use crate::stage::Staged;
use crate::{AnalyzeArgs, AttributeArgs, EvaluateArgs, MethodArg, RunArgs, SelftestArgs};

const DEFAULT_HIDDEN: usize = 32;
const DEFAULT_CLASSES: usize = 4;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn read_weights(path: &FsPath) -> Result<ModelWeights> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
        offset: e.valid_up_to(),
        message: "weights file is not ASCII text".into(),
    })?;
    ModelWeights::from_text(text)
}

fn load_model(run: &RunArgs, shape: (usize, usize, usize)) -> Result<TinyMlp> {
    let weights = match &run.model {
        Some(p) => read_weights(p)?,
        None => ModelWeights::random(shape, DEFAULT_HIDDEN, DEFAULT_CLASSES, run.seed),
    };
    let model_shape = (weights.in_channels, weights.in_height, weights.in_width);
    if model_shape != shape {
        return Err(invalid(format!(
            "model expects input {}x{}x{}, image is {}x{}x{}",
            model_shape.0, model_shape.1, model_shape.2, shape.0, shape.1, shape.2
        )));
    }
    let target = TargetMode {
        kind: run.target.into(),
        class_index: run.class,
    };
    tiny_mlp(weights, target)
}

fn load_baseline(spec: &str, x: &ImageTensor, blur_sigma: f64) -> Result<ImageTensor> {
    let (c, h, w) = x.shape();
    match spec {
        "zero" => Ok(ImageTensor::zeros(c, h, w)),
        "mean" => Ok(x.channel_mean_image()),
        "blur" => {
            if !(blur_sigma.is_finite() && blur_sigma > 0.0) {
                return Err(invalid("blur sigma must be positive"));
            }
            Ok(blur_point(x, 0.0, blur_sigma))
        }
        path => {
            let b = read_image(path)?;
            if b.shape() != x.shape() {
                return Err(invalid("baseline image shape differs from input"));
            }
            Ok(b)
        }
    }
}

fn path_spec(run: &RunArgs) -> Option<PathSpec> {
    let family = match run.method {
        MethodArg::Sig => PathFamily::Spectral,
        MethodArg::Ig => PathFamily::Linear,
        MethodArg::Blur => PathFamily::Blur,
        MethodArg::Dct => PathFamily::Dct,
        MethodArg::Laplacian => PathFamily::Laplacian,
        MethodArg::Gxi => return None,
    };
    Some(
        PathSpec::new(family, run.steps)
            .with_overlap(run.overlap)
            .with_schedule(run.schedule.into())
            .with_svd_mode(run.svd_mode.into())
            .with_blur_sigma(run.blur_sigma),
    )
}

struct Prepared {
    model: TinyMlp,
    input: ImageTensor,
    baseline: ImageTensor,
}

fn prepare(run: &RunArgs) -> Result<Prepared> {
    if let Some(spec) = path_spec(run) {
        spec.validate()?;
    }
    if !(run.clip > 50.0 && run.clip <= 100.0) {
        return Err(invalid(format!(
            "clip percentile must lie in (50, 100], got {}",
            run.clip
        )));
    }
    let input = read_image(&run.input)?;
    let baseline = load_baseline(&run.baseline, &input, run.blur_sigma)?;
    let model = load_model(run, input.shape())?;
    Ok(Prepared {
        model,
        input,
        baseline,
    })
}

fn compute(run: &RunArgs, p: &Prepared) -> Result<AttributionResult> {
    let r = match path_spec(run) {
        Some(spec) => run_attribution(&p.model, &p.input, &p.baseline, &spec)?,
        None => gradient_x_input(&p.model, &p.input)?,
    };
    ensure_finite(
        &[r.score_input, r.score_baseline, r.completeness_residual],
        &r.map,
    )?;
    Ok(r)
}

fn ensure_finite(values: &[f64], map: &ImageTensor) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) || map.has_non_finite() {
        return Err(Error::NumericalFailure {
            step: 0,
            detail: "model output is NaN or infinite".into(),
        });
    }
    Ok(())
}

/// Fields every result document carries.
fn run_document(command: &str, run: &RunArgs, input: &ImageTensor) -> ResultDocument {
    let (c, h, w) = input.shape();
    let mut d = ResultDocument::new();
    d.insert("command", command);
    d.insert("method", format!("{:?}", run.method).to_lowercase());
    d.insert("steps", run.steps);
    d.insert("overlap", run.overlap);
    d.insert("schedule", GateSchedule::from(run.schedule).name());
    d.insert("svd_mode", SvdMode::from(run.svd_mode).name());
    d.insert("target", TargetKind::from(run.target).name());
    d.insert("class", run.class);
    d.insert("baseline", run.baseline.as_str());
    d.insert(
        "model",
        run.model.as_ref().map_or_else(
            || "builtin-tinymlp".to_string(),
            |p| p.display().to_string(),
        ),
    );
    d.insert("input_shape", format!("{c}x{h}x{w}"));
    d.insert("seed", run.seed);
    d
}

fn heatmap_pgm(h: &Heatmap) -> Result<String> {
    encode_image(&h.to_tensor(), ImageFormat::Pgm)
}

fn add_attribution_fields(d: &mut ResultDocument, r: &AttributionResult, h: &Heatmap) {
    d.insert("score_input", r.score_input);
    d.insert("score_baseline", r.score_baseline);
    d.insert("completeness_residual", r.completeness_residual);
    d.insert("attribution_sum", r.map.sum());
    d.insert("clip_percentile", h.clip_percentile);
    d.insert("clip_value", h.clip_value);
    // The blur path starts at the blurred input, not at the chosen baseline.
    let reference = match r.method {
        Method::Path(spec) if spec.family == PathFamily::Blur => "blurred-input",
        Method::GradientXInput => "zero-input",
        Method::Path(_) => "baseline",
    };
    d.insert("completeness_reference", reference);
}

pub fn attribute(args: &AttributeArgs) -> Result<u8> {
    let run = &args.run;
    let p = prepare(run)?;
    let r = compute(run, &p)?;
    let h = map_to_heatmap(&r.map, run.clip)?;
    let mut doc = run_document("attribute", run, &p.input);
    add_attribution_fields(&mut doc, &r, &h);

    let mut out = Staged::new();
    out.add(
        "attribution.tensor",
        encode_image(&r.map, ImageFormat::TensorText)?,
    );
    out.add("heatmap.pgm", heatmap_pgm(&h)?);
    out.add_result("result.json", &doc)?;
    out.commit(&run.out)?;
    println!(
        "wrote {} (completeness residual {:.3e})",
        run.out.display(),
        r.completeness_residual
    );
    Ok(0)
}

fn localization_target(args: &EvaluateArgs) -> Result<Option<LocalizationTarget>> {
    if let Some(m) = &args.mask {
        return LocalizationTarget::mask_from_image(&read_image(m)?).map(Some);
    }
    args.bbox
        .as_deref()
        .map(LocalizationTarget::parse_bbox)
        .transpose()
}

pub fn evaluate(args: &EvaluateArgs) -> Result<u8> {
    let run = &args.run;
    if args.fractions < 2 {
        return Err(invalid("at least two curve points are required"));
    }
    if !(args.mass > 0.0 && args.mass < 1.0) {
        return Err(invalid("mass fraction must lie in (0, 1)"));
    }
    let target = localization_target(args)?;
    let p = prepare(run)?;
    let mut doc = run_document("evaluate", run, &p.input);
    let map = match &args.attribution {
        Some(path) => {
            let m = read_image(path)?;
            if m.shape() != p.input.shape() {
                return Err(invalid("attribution shape differs from input"));
            }
            doc.insert("attribution", path.display().to_string());
            m
        }
        None => {
            let r = compute(run, &p)?;
            let h = map_to_heatmap(&r.map, run.clip)?;
            add_attribution_fields(&mut doc, &r, &h);
            r.map
        }
    };
    let h = map_to_heatmap(&map, run.clip)?;
    let report = diff_id_report(&p.model, &p.input, &p.baseline, &h, args.fractions)?;
    let mut all_scores = report.insertion.scores.clone();
    all_scores.extend(&report.deletion.scores);
    all_scores.push(report.diff_id);
    ensure_finite(&all_scores, &map)?;

    doc.insert("fractions", args.fractions);
    doc.insert("insertion_auc", report.insertion_auc);
    doc.insert("deletion_auc", report.deletion_auc);
    doc.insert("diff_id", report.diff_id);
    if let Some(t) = &target {
        doc.insert("pointing_game", pointing_game(&h, t)?);
        doc.insert("topmass_iou", topmass_iou(&h, t, args.mass)?);
        doc.insert("topmass_fraction", args.mass);
    }

    let mut out = Staged::new();
    out.add("insertion.csv", report.insertion.to_csv());
    out.add("deletion.csv", report.deletion.to_csv());
    out.add_result("result.json", &doc)?;
    out.commit(&run.out)?;
    println!("wrote {} (DiffID {:.6})", run.out.display(), report.diff_id);
    Ok(0)
}

/// `k` evenly spaced indices in `0..=m`, rounded, deduplicated.
fn frame_indices(m: usize, k: usize) -> Vec<usize> {
    if k == 1 {
        return vec![m];
    }
    let mut v: Vec<usize> = (0..k)
        .map(|i| ((i * m) as f64 / (k - 1) as f64).round() as usize)
        .collect();
    v.dedup();
    v
}

fn image_format(t: &ImageTensor) -> ImageFormat {
    ImageFormat::for_channels(t.channels()).unwrap_or(ImageFormat::TensorText)
}

pub fn analyze(args: &AnalyzeArgs) -> Result<u8> {
    let run = &args.run;
    let spec = path_spec(run).ok_or_else(|| invalid("analyze needs a path method, not gxi"))?;
    if args.frames == 0 || args.frames > run.steps + 1 {
        return Err(invalid(format!("frames must lie in 1..={}", run.steps + 1)));
    }
    if !(args.cutoff > 0.0 && args.cutoff.is_finite()) {
        return Err(invalid("cutoff must be positive"));
    }
    let p = prepare(run)?;
    let path = generate_path(&p.baseline, &p.input, &spec)?;
    let start = path.start().clone();
    let trace = path_frequency_trace(&path, &start, args.cutoff);
    let frames = frame_indices(run.steps, args.frames);

    let mut out = Staged::new();
    let mut contributions = Vec::with_capacity(frames.len());
    for &m in &frames {
        let point = &path.points[m];
        let fmt = image_format(point);
        out.add(
            format!("frames/point_{m:04}.{}", fmt.extension()),
            encode_image(point, fmt)?,
        );
        let spectrum = difference_spectrum(point, &start, true).normalized_image();
        out.add(
            format!("spectrum/point_{m:04}.pgm"),
            encode_image(&spectrum, ImageFormat::Pgm)?,
        );
        // Step m covers the segment to the next point; the last frame
        // reuses the final segment.
        let s = m.min(run.steps - 1);
        let g = p.model.gradient(&path.points[s])?;
        let delta = path.points[s + 1].sub(&path.points[s])?;
        let contrib = g.hadamard(&delta)?.map(f64::abs);
        ensure_finite(&[], &contrib)?;
        contributions.push(contrib.sum());
        let h = map_to_heatmap(&contrib, run.clip)?;
        out.add(format!("steps/step_{s:04}.pgm"), heatmap_pgm(&h)?);
    }
    ensure_finite(&trace.hf_fraction, &start)?;

    let mut doc = run_document("analyze", run, &p.input);
    doc.insert("cutoff", args.cutoff);
    doc.insert(
        "frame_indices",
        frames.iter().map(|&m| m as f64).collect::<Vec<f64>>(),
    );
    doc.insert("frame_contribution_l1", contributions);
    doc.insert("hf_fraction_alpha_0_25", trace.at(0.25));
    doc.insert("hf_fraction_alpha_0_5", trace.at(0.5));
    doc.insert("hf_fraction_alpha_1", trace.at(1.0));
    out.add("frequency_trace.csv", trace.to_csv());
    out.add_result("result.json", &doc)?;
    let count = out.names().count();
    out.commit(&run.out)?;
    println!("wrote {count} files to {}", run.out.display());
    Ok(0)
}

pub fn selftest(args: &SelftestArgs) -> Result<u8> {
    let extra = args.model.as_deref().map(read_weights).transpose()?;
    if let Some(w) = &extra {
        // Fail fast on weights that cannot even be evaluated.
        let m = tiny_mlp(w.clone(), TargetMode::probability(0))?;
        let x = ImageTensor::zeros(w.in_channels, w.in_height, w.in_width);
        if !m.forward(&x)?.is_finite() {
            return Err(Error::NumericalFailure {
                step: 0,
                detail: "weights file produces non-finite output".into(),
            });
        }
    }
    let report = checks::run(args.seed, extra.as_ref());
    print!("{}", report.render());
    Ok(if report.all_passed() { 0 } else { 3 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_indices_cover_both_ends() {
        assert_eq!(
            frame_indices(200, 9),
            vec![0, 25, 50, 75, 100, 125, 150, 175, 200]
        );
        assert_eq!(frame_indices(2, 5), vec![0, 1, 2]);
        assert_eq!(frame_indices(7, 1), vec![7]);
    }
}
