//! Robustness protocol: JPEG re-encoding and hue rotation of test images,
//! followed by re-featurization and re-evaluation.

use std::fmt;

use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use serde::{Deserialize, Serialize};

use crate::classify::{ConfusionMatrix, Evaluation, Model, ProbabilisticClassifier};
use crate::corpus::{decode_rgb8, load_image, CorpusManifest, LabeledImage};
use crate::error::{Error, Result};
use crate::features::Extractor;
use crate::par;

/// Baseline JPEG, 4:2:0 chroma subsampling, IJG quality scaling of the
/// Annex K tables.
pub fn encode_jpeg(pixels: &[u8], width: u32, height: u32, quality: u8) -> Result<Vec<u8>> {
    if !(1..=100).contains(&quality) {
        return Err(Error::arg(format!("JPEG quality must be in 1..=100, got {quality}")));
    }
    let (w, h) = match (u16::try_from(width), u16::try_from(height)) {
        (Ok(w), Ok(h)) => (w, h),
        _ => return Err(Error::Encode(format!("{width}x{height} exceeds the JPEG size limit"))),
    };
    let mut buf = Vec::new();
    let mut encoder = Encoder::new(&mut buf, quality);
    encoder.set_sampling_factor(SamplingFactor::R_4_2_0);
    encoder
        .encode(pixels, w, h, ColorType::Rgb)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(buf)
}

/// Encodes to JPEG at `quality` and decodes back.
pub fn jpeg_recompress(image: &LabeledImage, quality: u8) -> Result<LabeledImage> {
    let bytes = encode_jpeg(image.pixels(), image.width(), image.height(), quality)?;
    let (w, h, rgb) = decode_rgb8(&bytes).map_err(|message| Error::Decode {
        path: image.source.clone(),
        message,
    })?;
    if (w, h) != (image.width(), image.height()) {
        return Err(Error::Decode {
            path: image.source.clone(),
            message: format!("decoded {w}x{h}, expected {}x{}", image.width(), image.height()),
        });
    }
    image.with_pixels(rgb)
}

/// Hexcone RGB → HSV with H in [0, 360), S and V in [0, 1]. Returns `None`
/// for achromatic pixels, whose hue is undefined.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> Option<(f64, f64, f64)> {
    let [r, g, b] = rgb.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    if chroma == 0.0 {
        return None;
    }
    let h = if max == r {
        60.0 * ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / chroma + 2.0)
    } else {
        60.0 * ((r - g) / chroma + 4.0)
    };
    Some((wrap_degrees(h), chroma / max, max))
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = wrap_degrees(h) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|ch| ((ch + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

fn wrap_degrees(h: f64) -> f64 {
    let w = h.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

pub fn hue_shift_pixel(rgb: [u8; 3], delta_degrees: f64) -> [u8; 3] {
    match rgb_to_hsv(rgb) {
        Some((h, s, v)) => hsv_to_rgb(h + delta_degrees, s, v),
        None => rgb,
    }
}

/// Rotates the hue of every pixel by `delta_degrees`; gray pixels are left
/// untouched.
pub fn hue_shift(image: &LabeledImage, delta_degrees: f64) -> Result<LabeledImage> {
    if !delta_degrees.is_finite() {
        return Err(Error::arg("hue delta must be finite"));
    }
    let pixels = image
        .pixels()
        .chunks_exact(3)
        .flat_map(|p| hue_shift_pixel([p[0], p[1], p[2]], delta_degrees))
        .collect();
    image.with_pixels(pixels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Identity,
    Jpeg { quality: u8 },
    Hue { degrees: f64 },
}

impl Perturbation {
    pub fn apply(&self, image: &LabeledImage) -> Result<LabeledImage> {
        match *self {
            Perturbation::Identity => Ok(image.clone()),
            Perturbation::Jpeg { quality } => jpeg_recompress(image, quality),
            Perturbation::Hue { degrees } => hue_shift(image, degrees),
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Identity => write!(f, "base"),
            Perturbation::Jpeg { quality } => write!(f, "jpeg-q{quality}"),
            Perturbation::Hue { degrees } => write!(f, "hue{degrees:+}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub jpeg_qualities: Vec<u8>,
    pub hue_deltas_degrees: Vec<f64>,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            jpeg_qualities: vec![80, 60, 40, 20],
            hue_deltas_degrees: vec![-10.0, 10.0, -20.0, 20.0],
        }
    }
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.jpeg_qualities.iter().find(|q| !(1..=100).contains(*q)) {
            return Err(Error::arg(format!("JPEG quality {q} outside 1..=100")));
        }
        if self.hue_deltas_degrees.iter().any(|d| !d.is_finite()) {
            return Err(Error::arg("hue deltas must be finite"));
        }
        Ok(())
    }

    /// Base (identity) first, then JPEG qualities, then hue deltas.
    pub fn perturbations(&self) -> Vec<Perturbation> {
        std::iter::once(Perturbation::Identity)
            .chain(self.jpeg_qualities.iter().map(|&quality| Perturbation::Jpeg { quality }))
            .chain(self.hue_deltas_degrees.iter().map(|&degrees| Perturbation::Hue { degrees }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub perturbation: String,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// `accuracy - base accuracy`.
    pub delta_accuracy: f64,
    pub evaluated: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessTable {
    pub rows: Vec<RobustnessRow>,
    /// Images that could not be loaded at all.
    pub load_errors: u64,
}

impl RobustnessTable {
    pub fn base(&self) -> &RobustnessRow {
        &self.rows[0]
    }

    pub fn row(&self, id: &str) -> Option<&RobustnessRow> {
        self.rows.iter().find(|r| r.perturbation == id)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("perturbation,accuracy,balanced_accuracy,delta_accuracy\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.perturbation, r.accuracy, r.balanced_accuracy, r.delta_accuracy
            ));
        }
        out
    }
}

/// Evaluates `model` on the unperturbed test images and on every
/// perturbation in `spec`. Per-image failures are counted, not fatal.
pub fn robustness_sweep(
    model: &Model,
    manifest: &CorpusManifest,
    extractor: Extractor,
    spec: &PerturbationSpec,
) -> Result<RobustnessTable> {
    spec.validate()?;
    model.check_compatible(extractor.schema(), &manifest.class_names)?;
    let perturbations = spec.perturbations();

    // per entry: None if unloadable, else one prediction result per perturbation
    let outcomes: Vec<Option<Vec<Option<usize>>>> = par::map(&manifest.entries, |_, entry| {
        let image = match load_image(manifest, entry) {
            Ok(img) => img,
            Err(e) => {
                log::warn!("sweep: {e}");
                return None;
            }
        };
        let preds = perturbations
            .iter()
            .map(|p| {
                let perturbed = p.apply(&image)?;
                let fv = extractor.extract(&perturbed)?;
                model.predict(&fv.values).map(|(c, _)| c)
            })
            .map(|r| r.map_err(|e| log::warn!("sweep {}: {e}", entry.path)).ok())
            .collect();
        Some(preds)
    });

    let load_errors = outcomes.iter().filter(|o| o.is_none()).count() as u64;
    let mut rows = Vec::with_capacity(perturbations.len());
    for (k, p) in perturbations.iter().enumerate() {
        let mut confusion = ConfusionMatrix::new(model.n_classes());
        let mut errors = 0;
        for (entry, outcome) in manifest.entries.iter().zip(&outcomes) {
            match outcome.as_ref().map(|preds| preds[k]) {
                Some(Some(pred)) => confusion.record(entry.label, pred)?,
                Some(None) => errors += 1,
                None => {}
            }
        }
        let evaluated = confusion.total();
        let eval = Evaluation::from_confusion(confusion, &model.class_names);
        rows.push(RobustnessRow {
            perturbation: p.to_string(),
            accuracy: eval.accuracy,
            balanced_accuracy: eval.balanced_accuracy,
            delta_accuracy: 0.0,
            evaluated,
            errors,
        });
    }
    let base = rows[0].accuracy;
    rows.iter_mut().for_each(|r| r.delta_accuracy = r.accuracy - base);
    Ok(RobustnessTable { rows, load_errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gradient(w: u32, h: u32) -> LabeledImage {
        let mut px = Vec::new();
        for y in 0..h {
            for x in 0..w {
                px.extend([(x * 2).min(255) as u8, (y * 2).min(255) as u8, 128]);
            }
        }
        LabeledImage::from_rgb(px, w, h).unwrap()
    }

    #[test]
    fn primary_rotation() {
        assert_eq!(hue_shift_pixel([255, 0, 0], 120.0), [0, 255, 0]);
        assert_eq!(hue_shift_pixel([255, 0, 0], 240.0), [0, 0, 255]);
        assert_eq!(hue_shift_pixel([255, 0, 0], -120.0), [0, 0, 255]);
        assert_eq!(hue_shift_pixel([0, 255, 0], 120.0), [0, 0, 255]);
    }

    #[test]
    fn gray_is_fixed() {
        for d in [-20.0, 10.0, 77.7, 360.0] {
            assert_eq!(hue_shift_pixel([128, 128, 128], d), [128, 128, 128]);
        }
    }

    #[test]
    fn hsv_matches_textbook_values() {
        let (h, s, v) = rgb_to_hsv([255, 255, 0]).unwrap();
        assert_eq!((h, s, v), (60.0, 1.0, 1.0));
        let (h, _, _) = rgb_to_hsv([255, 0, 255]).unwrap();
        assert_eq!(h, 300.0);
        assert_eq!(hsv_to_rgb(300.0, 1.0, 1.0), [255, 0, 255]);
        assert_eq!(hsv_to_rgb(359.999_999, 0.0, 0.5), [128, 128, 128]);
    }

    #[test]
    fn non_finite_delta_rejected() {
        assert!(hue_shift(&LabeledImage::solid(1, 1, [1, 2, 3]), f64::NAN).is_err());
    }

    #[test]
    fn jpeg_preserves_dimensions_and_is_close_at_q100() {
        for (w, h) in [(16, 16), (33, 17), (224, 224), (9, 40)] {
            let img = gradient(w, h);
            let out = jpeg_recompress(&img, 100).unwrap();
            assert_eq!((out.width(), out.height()), (w, h));
            let max_dev = img.pixels().iter().zip(out.pixels()).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
            assert!(max_dev <= 6, "{w}x{h}: max deviation {max_dev}");
        }
    }

    #[test]
    fn jpeg_rejects_bad_quality() {
        let img = LabeledImage::solid(8, 8, [0, 0, 0]);
        assert!(jpeg_recompress(&img, 0).is_err());
        assert!(jpeg_recompress(&img, 101).is_err());
    }

    #[test]
    fn perturbation_ids() {
        let ids: Vec<String> = PerturbationSpec::default().perturbations().iter().map(|p| p.to_string()).collect();
        assert_eq!(ids, ["base", "jpeg-q80", "jpeg-q60", "jpeg-q40", "jpeg-q20", "hue-10", "hue+10", "hue-20", "hue+20"]);
        assert_eq!(Perturbation::Hue { degrees: 2.5 }.to_string(), "hue+2.5");
    }

    proptest! {
        #[test]
        fn hue_round_trip_within_two(r in any::<u8>(), g in any::<u8>(), b in any::<u8>(), d in -180.0f64..180.0) {
            let back = hue_shift_pixel(hue_shift_pixel([r, g, b], d), -d);
            for (x, y) in back.iter().zip([r, g, b]) {
                prop_assert!(x.abs_diff(y) <= 2, "{:?} -> {:?} with {}", [r, g, b], back, d);
            }
        }

        #[test]
        fn full_turn_and_null_shift_are_identity(r in any::<u8>(), g in any::<u8>(), b in any::<u8>()) {
            for d in [0.0, 360.0, -360.0] {
                let out = hue_shift_pixel([r, g, b], d);
                for (x, y) in out.iter().zip([r, g, b]) {
                    prop_assert!(x.abs_diff(y) <= 1);
                }
            }
        }
    }
}
