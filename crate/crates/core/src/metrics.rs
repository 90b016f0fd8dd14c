//! Faithfulness and localisation metrics for heatmaps.
//!
//! Pixel order is always descending heatmap value with ties broken by the
//! smaller row-major index, so every metric except [`topmass_iou`] depends
//! only on the ranking of the heatmap.

use rayon::prelude::*;

use crate::attribution::Heatmap;
use crate::error::{invalid, Result};
use crate::io::fmt_f64;
use crate::model::ScalarField;
use crate::tensor::ImageTensor;

/// Default number of curve points (100 equal steps).
pub const DEFAULT_FRACTIONS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Start at the baseline and copy in input pixels.
    Insertion,
    /// Start at the input and replace pixels by the baseline.
    Deletion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationCurve {
    /// `0 = p_0 < … < p_N = 1`.
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
    pub direction: Direction,
}

impl PerturbationCurve {
    /// `fraction,score` CSV with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fraction,score\n");
        for (p, v) in self.fractions.iter().zip(&self.scores) {
            s.push_str(&fmt_f64(*p));
            s.push(',');
            s.push_str(&fmt_f64(*v));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str, direction: Direction) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("fraction,score") {
            return Err(invalid("curve CSV must start with 'fraction,score'"));
        }
        let (mut fractions, mut scores) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let (a, b) = line
                .split_once(',')
                .ok_or_else(|| invalid(format!("curve CSV row {}: expected two fields", i + 1)))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("curve CSV row {}: bad number '{s}'", i + 1)))
            };
            fractions.push(parse(a)?);
            scores.push(parse(b)?);
        }
        let curve = Self {
            fractions,
            scores,
            direction,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.len() != self.scores.len() || self.fractions.len() < 2 {
            return Err(invalid(
                "curve needs at least two matching fraction/score pairs",
            ));
        }
        if !self.fractions.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("curve fractions must be strictly increasing"));
        }
        Ok(())
    }
}

/// Pixel indices in attribution order.
pub fn pixel_ranking(heatmap: &Heatmap) -> Vec<usize> {
    let mut order: Vec<usize> = (0..heatmap.values.len()).collect();
    order.sort_by(|&a, &b| {
        heatmap.values[b]
            .total_cmp(&heatmap.values[a])
            .then(a.cmp(&b))
    });
    order
}

fn perturbation_curve(
    model: &dyn ScalarField,
    x: &ImageTensor,
    baseline: &ImageTensor,
    heatmap: &Heatmap,
    n_fractions: usize,
    direction: Direction,
) -> Result<PerturbationCurve> {
    x.ensure_same_shape(baseline, "baseline")?;
    if (heatmap.height, heatmap.width) != (x.height(), x.width()) {
        return Err(invalid(format!(
            "heatmap {}x{} does not match image {}x{}",
            heatmap.height,
            heatmap.width,
            x.height(),
            x.width()
        )));
    }
    if n_fractions < 2 {
        return Err(invalid("at least two curve points are required"));
    }
    let order = pixel_ranking(heatmap);
    let n_pixels = x.pixels();
    let steps = n_fractions - 1;
    let (start, fill) = match direction {
        Direction::Deletion => (x, baseline),
        Direction::Insertion => (baseline, x),
    };
    let fractions: Vec<f64> = (0..n_fractions).map(|j| j as f64 / steps as f64).collect();
    let scores = (0..n_fractions)
        .into_par_iter()
        .map(|j| {
            // floor(p · H · W) in exact integer arithmetic
            let k = j * n_pixels / steps;
            let mut img = start.clone();
            for &p in &order[..k] {
                for c in 0..x.channels() {
                    let i = c * n_pixels + p;
                    img.channel_mut(c)[p] = fill.as_slice()[i];
                }
            }
            model.forward(&img)
        })
        .collect::<Vec<Result<f64>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(PerturbationCurve {
        fractions,
        scores,
        direction,
    })
}

/// Scores while the top-ranked pixels are progressively replaced by the
/// baseline across all channels.
pub fn deletion_curve(
    model: &dyn ScalarField,
    x: &ImageTensor,
    baseline: &ImageTensor,
    heatmap: &Heatmap,
    n_fractions: usize,
) -> Result<PerturbationCurve> {
    perturbation_curve(
        model,
        x,
        baseline,
        heatmap,
        n_fractions,
        Direction::Deletion,
    )
}

/// Scores while the top-ranked input pixels are progressively copied onto
/// the baseline.
pub fn insertion_curve(
    model: &dyn ScalarField,
    x: &ImageTensor,
    baseline: &ImageTensor,
    heatmap: &Heatmap,
    n_fractions: usize,
) -> Result<PerturbationCurve> {
    perturbation_curve(
        model,
        x,
        baseline,
        heatmap,
        n_fractions,
        Direction::Insertion,
    )
}

/// Trapezoidal area under a curve.
pub fn auc(curve: &PerturbationCurve) -> f64 {
    curve
        .fractions
        .windows(2)
        .zip(curve.scores.windows(2))
        .map(|(p, s)| 0.5 * (p[1] - p[0]) * (s[0] + s[1]))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffIdReport {
    pub insertion: PerturbationCurve,
    pub deletion: PerturbationCurve,
    pub insertion_auc: f64,
    pub deletion_auc: f64,
    pub diff_id: f64,
}

/// Both curves, their AUCs and `DiffID = AUC(insertion) − AUC(deletion)`.
pub fn diff_id_report(
    model: &dyn ScalarField,
    x: &ImageTensor,
    baseline: &ImageTensor,
    heatmap: &Heatmap,
    n_fractions: usize,
) -> Result<DiffIdReport> {
    let insertion = insertion_curve(model, x, baseline, heatmap, n_fractions)?;
    let deletion = deletion_curve(model, x, baseline, heatmap, n_fractions)?;
    let insertion_auc = auc(&insertion);
    let deletion_auc = auc(&deletion);
    Ok(DiffIdReport {
        insertion,
        deletion,
        insertion_auc,
        deletion_auc,
        diff_id: insertion_auc - deletion_auc,
    })
}

pub fn diff_id(
    model: &dyn ScalarField,
    x: &ImageTensor,
    baseline: &ImageTensor,
    heatmap: &Heatmap,
    n_fractions: usize,
) -> Result<f64> {
    Ok(diff_id_report(model, x, baseline, heatmap, n_fractions)?.diff_id)
}

/// Region of interest for localisation metrics.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalizationTarget {
    /// Row-major `H×W` membership.
    Mask {
        height: usize,
        width: usize,
        mask: Vec<bool>,
    },
    /// Inclusive pixel box `(x0, y0)–(x1, y1)`; `x` is the column.
    BBox {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
    },
}

impl LocalizationTarget {
    pub fn mask(height: usize, width: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != height * width {
            return Err(invalid("mask size does not match dimensions"));
        }
        if !mask.iter().any(|&m| m) {
            return Err(invalid("mask must select at least one pixel"));
        }
        Ok(LocalizationTarget::Mask {
            height,
            width,
            mask,
        })
    }

    /// Mask from an image: pixels with any channel above one half.
    pub fn mask_from_image(img: &ImageTensor) -> Result<Self> {
        let mask = (0..img.pixels())
            .map(|p| (0..img.channels()).any(|c| img.channel(c)[p] > 0.5))
            .collect();
        Self::mask(img.height(), img.width(), mask)
    }

    pub fn bbox(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x0 > x1 || y0 > y1 {
            return Err(invalid(format!("empty bbox ({x0},{y0})-({x1},{y1})")));
        }
        Ok(LocalizationTarget::BBox { x0, y0, x1, y1 })
    }

    /// Parses `x0,y0,x1,y1`.
    pub fn parse_bbox(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                invalid(format!(
                    "bbox must be four non-negative integers, got '{s}'"
                ))
            })?;
        match parts[..] {
            [x0, y0, x1, y1] => Self::bbox(x0, y0, x1, y1),
            _ => Err(invalid(format!(
                "bbox must have four coordinates, got '{s}'"
            ))),
        }
    }

    /// Membership grid for an `height × width` image.
    pub fn to_mask(&self, height: usize, width: usize) -> Result<Vec<bool>> {
        match self {
            LocalizationTarget::Mask {
                height: h,
                width: w,
                mask,
            } => {
                if (*h, *w) != (height, width) {
                    return Err(invalid(format!(
                        "mask {h}x{w} does not match image {height}x{width}"
                    )));
                }
                Ok(mask.clone())
            }
            LocalizationTarget::BBox { x0, y0, x1, y1 } => {
                if *x1 >= width || *y1 >= height {
                    return Err(invalid(format!(
                        "bbox ({x0},{y0})-({x1},{y1}) exceeds image {height}x{width}"
                    )));
                }
                Ok((0..height * width)
                    .map(|p| {
                        let (r, c) = (p / width, p % width);
                        (*y0..=*y1).contains(&r) && (*x0..=*x1).contains(&c)
                    })
                    .collect())
            }
        }
    }
}

/// Whether the heatmap's argmax (smallest row-major index on ties) falls
/// inside the target.
pub fn pointing_game(heatmap: &Heatmap, target: &LocalizationTarget) -> Result<bool> {
    let mask = target.to_mask(heatmap.height, heatmap.width)?;
    let top = pixel_ranking(heatmap)[0];
    Ok(mask[top])
}

/// IoU between the target and the smallest top-ranked pixel set that holds
/// at least `mass_fraction` of the total heatmap value.
pub fn topmass_iou(
    heatmap: &Heatmap,
    target: &LocalizationTarget,
    mass_fraction: f64,
) -> Result<f64> {
    if !(mass_fraction > 0.0 && mass_fraction < 1.0) {
        return Err(invalid(format!(
            "mass fraction must lie in (0, 1), got {mass_fraction}"
        )));
    }
    let mask = target.to_mask(heatmap.height, heatmap.width)?;
    let total: f64 = heatmap.values.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let goal = mass_fraction * total;
    // Absorb summation rounding so e.g. 15 × 0.01 counts as 0.15.
    let slack = 1e-12 * total;
    let mut selected = vec![false; mask.len()];
    let mut cum = 0.0;
    for p in pixel_ranking(heatmap) {
        selected[p] = true;
        cum += heatmap.values[p];
        if cum >= goal - slack {
            break;
        }
    }
    let inter = selected
        .iter()
        .zip(&mask)
        .filter(|(s, m)| **s && **m)
        .count();
    let union = selected
        .iter()
        .zip(&mask)
        .filter(|(s, m)| **s || **m)
        .count();
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::linear_model;
    use crate::rng;

    fn heat(h: usize, w: usize, values: Vec<f64>) -> Heatmap {
        Heatmap::from_values(h, w, values).unwrap()
    }

    fn setup() -> (ImageTensor, ImageTensor) {
        let mut r = rng::seeded(3, 0);
        let x = ImageTensor::new(2, 4, 4, rng::uniform_vec(&mut r, 32, 0.2, 1.0)).unwrap();
        (x, ImageTensor::zeros(2, 4, 4))
    }

    #[test]
    fn curve_endpoints() {
        let (x, b) = setup();
        let mut r = rng::seeded(4, 0);
        let w = ImageTensor::new(2, 4, 4, rng::normal_vec(&mut r, 32)).unwrap();
        let m = linear_model(w, 0.3);
        let h = heat(4, 4, rng::uniform_vec(&mut r, 16, 0.0, 1.0));
        let fx = m.forward(&x).unwrap();
        let fb = m.forward(&b).unwrap();
        let del = deletion_curve(&m, &x, &b, &h, 5).unwrap();
        assert_eq!(del.fractions, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!((del.scores[0], del.scores[4]), (fx, fb));
        let ins = insertion_curve(&m, &x, &b, &h, 5).unwrap();
        assert_eq!((ins.scores[0], ins.scores[4]), (fb, fx));
        assert!(deletion_curve(&m, &x, &b, &h, 1).is_err());
        assert!(deletion_curve(&m, &x, &b, &heat(2, 8, vec![0.0; 16]), 5).is_err());
    }

    #[test]
    fn uniform_heatmap_removes_in_row_major_order() {
        let (x, b) = setup();
        assert_eq!(
            pixel_ranking(&heat(4, 4, vec![0.5; 16])),
            (0..16).collect::<Vec<_>>()
        );
        // Unit weight on pixel 5 only: the drop happens once 6 pixels are gone.
        let mut w = ImageTensor::zeros(2, 4, 4);
        w.set(0, 1, 1, 1.0);
        let m = linear_model(w, 0.0);
        let del = deletion_curve(&m, &x, &b, &heat(4, 4, vec![0.5; 16]), 17).unwrap();
        for (j, s) in del.scores.iter().enumerate() {
            let want = if j >= 6 { 0.0 } else { x.get(0, 1, 1) };
            assert_eq!(*s, want, "fraction index {j}");
        }
    }

    #[test]
    fn peaked_heatmap_drops_at_first_fraction() {
        let (x, b) = setup();
        let mut w = ImageTensor::zeros(2, 4, 4);
        w.set(1, 2, 3, 2.5);
        let m = linear_model(w, 0.1);
        let mut values = vec![0.0; 16];
        values[2 * 4 + 3] = 1.0;
        let h = heat(4, 4, values);
        let del = deletion_curve(&m, &x, &b, &h, 17).unwrap();
        let drop = del.scores[0] - del.scores[1];
        assert!((drop - 2.5 * (x.get(1, 2, 3) - 0.0)).abs() < 1e-12);
        let ins = insertion_curve(&m, &x, &b, &h, 17).unwrap();
        let rise = ins.scores[1] - ins.scores[0];
        assert!((rise - 2.5 * x.get(1, 2, 3)).abs() < 1e-12);
    }

    #[test]
    fn auc_examples() {
        let c = |f: Vec<f64>, s: Vec<f64>| PerturbationCurve {
            fractions: f,
            scores: s,
            direction: Direction::Insertion,
        };
        assert!((auc(&c(vec![0.0, 0.3, 1.0], vec![0.7; 3])) - 0.7).abs() < 1e-15);
        assert!((auc(&c(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0])) - 0.5).abs() < 1e-15);
        assert!((auc(&c(vec![0.0, 0.5, 1.0], vec![0.2, 0.8, 0.4])) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn auc_reflection_symmetry() {
        let mut r = rng::seeded(8, 0);
        let mut f = rng::uniform_vec(&mut r, 9, 0.0, 1.0);
        f.push(0.0);
        f.push(1.0);
        f.sort_by(f64::total_cmp);
        let s = rng::uniform_vec(&mut r, f.len(), -1.0, 1.0);
        let a = PerturbationCurve {
            fractions: f.clone(),
            scores: s.clone(),
            direction: Direction::Deletion,
        };
        let reflected = PerturbationCurve {
            fractions: f.iter().rev().map(|p| 1.0 - p).collect(),
            scores: s.iter().rev().copied().collect(),
            direction: Direction::Deletion,
        };
        assert!((auc(&a) - auc(&reflected)).abs() < 1e-14);
    }

    #[test]
    fn diff_id_examples() {
        let (x, b) = setup();
        let constant = linear_model(ImageTensor::zeros(2, 4, 4), 0.4);
        let mut r = rng::seeded(5, 0);
        let h = heat(4, 4, rng::uniform_vec(&mut r, 16, 0.0, 1.0));
        assert_eq!(diff_id(&constant, &x, &b, &h, 11).unwrap(), 0.0);

        let mut w = ImageTensor::zeros(2, 4, 4);
        for (p, v) in [(1, 3.0), (6, 2.0), (11, 1.0)] {
            w.channel_mut(0)[p] = v;
        }
        let m = linear_model(w.clone(), 0.0);
        let truth: Vec<f64> = (0..16).map(|p| w.channel(0)[p].abs()).collect();
        let reversed: Vec<f64> = truth.iter().map(|v| 3.0 - v).collect();
        let good = diff_id(&m, &x, &b, &heat(4, 4, truth.clone()), 17).unwrap();
        let bad = diff_id(&m, &x, &b, &heat(4, 4, reversed), 17).unwrap();
        assert!(good > bad);

        let scaled: Vec<f64> = truth.iter().map(|v| v * 10.0).collect();
        assert_eq!(good, diff_id(&m, &x, &b, &heat(4, 4, scaled), 17).unwrap());
    }

    #[test]
    fn pointing_game_examples() {
        let mut v = vec![0.0; 25];
        v[2 * 5 + 2] = 1.0;
        let bbox = LocalizationTarget::bbox(1, 1, 3, 3).unwrap();
        assert!(pointing_game(&heat(5, 5, v), &bbox).unwrap());
        assert!(!pointing_game(&heat(5, 5, vec![0.0; 25]), &bbox).unwrap());
        let mut edge = vec![0.0; 25];
        edge[3 * 5 + 3] = 1.0;
        assert!(pointing_game(&heat(5, 5, edge), &bbox).unwrap());
        let outside = LocalizationTarget::bbox(1, 1, 5, 3).unwrap();
        assert!(pointing_game(&heat(5, 5, vec![0.0; 25]), &outside).is_err());
    }

    #[test]
    fn bbox_parsing() {
        assert_eq!(
            LocalizationTarget::parse_bbox("0, 1,2,3").unwrap(),
            LocalizationTarget::BBox {
                x0: 0,
                y0: 1,
                x1: 2,
                y1: 3
            }
        );
        assert!(LocalizationTarget::parse_bbox("0,1,2").is_err());
        assert!(LocalizationTarget::parse_bbox("3,1,2,4").is_err());
        assert!(LocalizationTarget::parse_bbox("a,1,2,4").is_err());
    }

    #[test]
    fn topmass_examples() {
        let mut mask = vec![false; 16];
        for p in [0, 1, 4, 5] {
            mask[p] = true;
        }
        let target = LocalizationTarget::mask(4, 4, mask).unwrap();
        let mut v = vec![0.0; 16];
        v[0] = 5.0;
        v[5] = 1.0;
        // 0.5 of the mass is covered by pixel 0 alone.
        let iou = topmass_iou(&heat(4, 4, v.clone()), &target, 0.5).unwrap();
        assert_eq!(iou, 1.0 / 4.0);

        let mut far = vec![0.0; 16];
        far[15] = 1.0;
        assert_eq!(topmass_iou(&heat(4, 4, far), &target, 0.5).unwrap(), 0.0);
        assert_eq!(
            topmass_iou(&heat(4, 4, vec![0.0; 16]), &target, 0.5).unwrap(),
            0.0
        );
        assert!(topmass_iou(&heat(4, 4, v), &target, 1.0).is_err());

        let mask15: Vec<bool> = (0..100).map(|p| p < 15).collect();
        let t15 = LocalizationTarget::mask(10, 10, mask15).unwrap();
        assert_eq!(
            topmass_iou(&heat(10, 10, vec![0.01; 100]), &t15, 0.15).unwrap(),
            1.0
        );
    }

    #[test]
    fn csv_round_trip() {
        let (x, b) = setup();
        let m = linear_model(x.clone(), 0.0);
        let h = heat(4, 4, (0..16).map(|v| v as f64).collect());
        let curve = insertion_curve(&m, &x, &b, &h, 9).unwrap();
        let csv = curve.to_csv();
        assert!(csv.starts_with("fraction,score\n"));
        assert_eq!(csv.lines().count(), 10);
        assert_eq!(
            PerturbationCurve::from_csv(&csv, Direction::Insertion).unwrap(),
            curve
        );
        assert!(PerturbationCurve::from_csv("a,b\n", Direction::Insertion).is_err());
    }

    #[test]
    fn monotone_and_scale_invariance() {
        let mut r = rng::seeded(41, 0);
        let v = rng::uniform_vec(&mut r, 36, 0.0, 1.0);
        let h = Heatmap::from_values(6, 6, v.clone()).unwrap();
        let cubed = Heatmap::from_values(6, 6, v.iter().map(|x| x.powi(3)).collect()).unwrap();
        let scaled = Heatmap::from_values(6, 6, v.iter().map(|x| 7.5 * x).collect()).unwrap();
        let target = LocalizationTarget::bbox(1, 1, 3, 4).unwrap();
        let model = linear_model(
            ImageTensor::new(1, 6, 6, rng::uniform_vec(&mut r, 36, -1.0, 1.0)).unwrap(),
            0.0,
        );
        let x = ImageTensor::new(1, 6, 6, rng::uniform_vec(&mut r, 36, 0.0, 1.0)).unwrap();
        let b = ImageTensor::zeros(1, 6, 6);

        // Rank-based metrics ignore any strictly increasing transform.
        assert_eq!(pixel_ranking(&h), pixel_ranking(&cubed));
        assert_eq!(
            pointing_game(&h, &target).unwrap(),
            pointing_game(&cubed, &target).unwrap()
        );
        assert_eq!(
            diff_id(&model, &x, &b, &h, 13).unwrap(),
            diff_id(&model, &x, &b, &cubed, 13).unwrap()
        );
        // Top-mass IoU depends on mass, so only positive scaling is safe.
        assert_eq!(
            topmass_iou(&h, &target, 0.4).unwrap(),
            topmass_iou(&scaled, &target, 0.4).unwrap()
        );
    }
}
