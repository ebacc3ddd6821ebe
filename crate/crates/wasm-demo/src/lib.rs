//! WebAssembly bindings for the browser demo. Pixels cross the boundary as
//! canvas `ImageData` buffers (RGBA, row-major); alpha is ignored on input
//! and set opaque on output.

use patchaudit::corpus::LabeledImage;
use patchaudit::features::{color_histogram, mean_rgb};
use patchaudit::forensics::{blockiness, clipping_stats, BlockinessCalibration};
use patchaudit::perturb;
use wasm_bindgen::prelude::*;

fn from_rgba(rgba: &[u8], width: u32, height: u32) -> Result<LabeledImage, String> {
    if rgba.len() != width as usize * height as usize * 4 {
        return Err(format!("expected {}x{} RGBA pixels, got {} bytes", width, height, rgba.len()));
    }
    let rgb = rgba.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect();
    LabeledImage::from_rgb(rgb, width, height).map_err(|e| e.to_string())
}

fn to_rgba(image: &LabeledImage) -> Vec<u8> {
    image.pixels().chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

pub fn hue_shift_impl(rgba: &[u8], width: u32, height: u32, degrees: f64) -> Result<Vec<u8>, String> {
    let image = from_rgba(rgba, width, height)?;
    let shifted = perturb::hue_shift(&image, degrees).map_err(|e| e.to_string())?;
    Ok(to_rgba(&shifted))
}

/// Rotates every pixel's hue by `degrees`.
#[wasm_bindgen]
pub fn hue_shift(rgba: &[u8], width: u32, height: u32, degrees: f64) -> Result<Vec<u8>, JsError> {
    hue_shift_impl(rgba, width, height, degrees).map_err(js)
}

#[wasm_bindgen]
pub struct JpegReport {
    rgba: Vec<u8>,
    before: f64,
    after: f64,
    band_before: String,
    band_after: String,
}

#[wasm_bindgen]
impl JpegReport {
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// Blockiness of the input; NaN when the image is under 16×16.
    #[wasm_bindgen(getter)]
    pub fn before(&self) -> f64 {
        self.before
    }

    #[wasm_bindgen(getter)]
    pub fn after(&self) -> f64 {
        self.after
    }

    #[wasm_bindgen(getter)]
    pub fn band_before(&self) -> String {
        self.band_before.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn band_after(&self) -> String {
        self.band_after.clone()
    }
}

fn score(image: &LabeledImage, cal: &BlockinessCalibration) -> (f64, String) {
    match blockiness(image, cal.grid) {
        Ok(s) => (s, cal.band(s).to_string()),
        Err(_) => (f64::NAN, "n/a".into()),
    }
}

pub fn jpeg_recompress_impl(rgba: &[u8], width: u32, height: u32, quality: u8) -> Result<JpegReport, String> {
    let image = from_rgba(rgba, width, height)?;
    let out = perturb::jpeg_recompress(&image, quality).map_err(|e| e.to_string())?;
    let cal = BlockinessCalibration::standard();
    let (before, band_before) = score(&image, cal);
    let (after, band_after) = score(&out, cal);
    Ok(JpegReport {
        rgba: to_rgba(&out),
        before,
        after,
        band_before,
        band_after,
    })
}

/// Re-encodes as 4:2:0 baseline JPEG at `quality` and scores blockiness
/// before and after.
#[wasm_bindgen]
pub fn jpeg_recompress(rgba: &[u8], width: u32, height: u32, quality: u8) -> Result<JpegReport, JsError> {
    jpeg_recompress_impl(rgba, width, height, quality).map_err(js)
}

/// Thresholds the quality bands use: severe, moderate and minor minimums.
#[wasm_bindgen]
pub fn band_thresholds() -> Vec<f64> {
    let cal = BlockinessCalibration::standard();
    vec![cal.severe_min, cal.moderate_min, cal.minor_min]
}

#[wasm_bindgen]
pub struct ColorReport {
    histogram: Vec<f64>,
    mean: Vec<f64>,
    at_max: Vec<f64>,
    clipped: bool,
}

#[wasm_bindgen]
impl ColorReport {
    /// Normalized per-channel histogram, R then G then B blocks.
    #[wasm_bindgen(getter)]
    pub fn histogram(&self) -> Vec<f64> {
        self.histogram.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn mean(&self) -> Vec<f64> {
        self.mean.clone()
    }

    /// Fraction of pixels at 255, per channel.
    #[wasm_bindgen(getter)]
    pub fn at_max(&self) -> Vec<f64> {
        self.at_max.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn clipped(&self) -> bool {
        self.clipped
    }
}

pub fn color_report_impl(
    rgba: &[u8],
    width: u32,
    height: u32,
    bins: usize,
    saturation_threshold: f64,
) -> Result<ColorReport, String> {
    let image = from_rgba(rgba, width, height)?;
    let clip = clipping_stats(&image, saturation_threshold);
    Ok(ColorReport {
        histogram: color_histogram(&image, bins).map_err(|e| e.to_string())?.values,
        mean: mean_rgb(&image).values,
        at_max: clip.at_max.to_vec(),
        clipped: clip.corrupted,
    })
}

/// Histogram, mean color and clipping statistics.
#[wasm_bindgen]
pub fn color_report(
    rgba: &[u8],
    width: u32,
    height: u32,
    bins: usize,
    saturation_threshold: f64,
) -> Result<ColorReport, JsError> {
    color_report_impl(rgba, width, height, bins, saturation_threshold).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solid(w: u32, h: u32, rgb: [u8; 3]) -> Vec<u8> {
        [rgb[0], rgb[1], rgb[2], 7].repeat((w * h) as usize)
    }

    #[test]
    fn red_rotates_to_green() {
        let out = hue_shift_impl(&solid(2, 3, [255, 0, 0]), 2, 3, 120.0).unwrap();
        assert_eq!(out, [0, 255, 0, 255].repeat(6));
    }

    #[test]
    fn wrong_buffer_length_is_reported() {
        assert!(hue_shift_impl(&[0; 15], 2, 2, 0.0).is_err());
        assert!(color_report_impl(&[0; 16], 2, 2, 0, 0.05).is_err());
    }

    #[test]
    fn jpeg_report_on_flat_and_tiny_images() {
        let r = jpeg_recompress_impl(&solid(32, 32, [90, 90, 90]), 32, 32, 20).unwrap();
        assert_eq!(r.rgba.len(), 32 * 32 * 4);
        assert_eq!(r.before, 0.0);
        assert_eq!(r.band_before, "none");
        let tiny = jpeg_recompress_impl(&solid(4, 4, [1, 2, 3]), 4, 4, 50).unwrap();
        assert!(tiny.before.is_nan());
        assert_eq!(tiny.band_after, "n/a");
        assert!(jpeg_recompress_impl(&solid(4, 4, [1, 2, 3]), 4, 4, 0).is_err());
    }

    #[test]
    fn color_report_of_saturated_blue() {
        let r = color_report_impl(&solid(4, 4, [0, 0, 255]), 4, 4, 4, 0.05).unwrap();
        assert!(r.clipped);
        assert_eq!(r.at_max, vec![0.0, 0.0, 1.0]);
        assert_eq!(r.mean, vec![0.0, 0.0, 255.0]);
        assert_eq!(r.histogram, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(band_thresholds().len(), 3);
    }
}
