//! Detectors for dataset defects that let a classifier shortcut the task:
//! class-specific color signatures, JPEG block artifacts whose strength
//! varies by class, and dynamic-range clipping.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{map_images, CorpusManifest, LabeledImage, LoadPolicy, Split};
use crate::error::{Error, Result};
use crate::features::{color_histogram, mean_rgb, FeatureSchema, FeatureTable};
use crate::perturb::jpeg_recompress;
use crate::rng::{self, domain};
use crate::synth::wave_texture;
use crate::FORMAT_VERSION;

/// Guards the blockiness ratio against division by zero on flat interiors.
pub const BLOCKINESS_EPS: f64 = 1e-6;
pub const DEFAULT_GRID: u32 = 8;
pub const DEFAULT_SATURATION_THRESHOLD: f64 = 0.05;

// ---------------------------------------------------------------------------
// Color audit

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColorAuditEntry {
    pub class: usize,
    pub class_name: String,
    /// Mean of the per-image mean-RGB vectors.
    pub centroid: [f64; 3],
    /// Mean of the per-image normalized histograms, R, G, B blocks.
    pub histogram: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDistance {
    pub a: String,
    pub b: String,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassShift {
    pub class: String,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColorAudit {
    pub train: Vec<ColorAuditEntry>,
    pub test: Vec<ColorAuditEntry>,
    /// L1 distance between average training histograms of each class pair.
    pub pairwise: Vec<ClassDistance>,
    /// L1 distance between a class's average train and test histograms.
    pub train_test_shift: Vec<ClassShift>,
    pub warnings: Vec<String>,
}

/// Histogram and mean-RGB tables describing the same images, row for row.
#[derive(Debug, Clone, Copy)]
pub struct ColorTables<'a> {
    pub histograms: &'a FeatureTable,
    pub mean_rgb: &'a FeatureTable,
}

impl ColorTables<'_> {
    fn check(&self) -> Result<usize> {
        let bins = match self.histograms.schema {
            FeatureSchema::Histogram { bins } => bins,
            other => return Err(Error::arg(format!("color audit needs histogram features, got {other}"))),
        };
        if self.mean_rgb.schema != FeatureSchema::MeanRgb {
            return Err(Error::arg(format!("color audit needs mean-rgb-3 features, got {}", self.mean_rgb.schema)));
        }
        if self.histograms.len() != self.mean_rgb.len()
            || self.histograms.class_names != self.mean_rgb.class_names
            || self.histograms.rows.iter().zip(&self.mean_rgb.rows).any(|(a, b)| a.label != b.label)
        {
            return Err(Error::arg("histogram and mean-rgb tables do not describe the same images"));
        }
        Ok(bins)
    }
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn class_entries(tables: ColorTables<'_>, bins: usize, split_name: &str, warnings: &mut Vec<String>) -> Vec<ColorAuditEntry> {
    let n_classes = tables.histograms.n_classes();
    let mut hist_sum = vec![vec![0.0; 3 * bins]; n_classes];
    let mut rgb_sum = vec![[0.0; 3]; n_classes];
    let mut count = vec![0usize; n_classes];
    for (h, m) in tables.histograms.rows.iter().zip(&tables.mean_rgb.rows) {
        let c = h.label;
        count[c] += 1;
        hist_sum[c].iter_mut().zip(&h.values).for_each(|(s, v)| *s += v);
        rgb_sum[c].iter_mut().zip(&m.values).for_each(|(s, v)| *s += v);
    }
    let mut entries = Vec::new();
    for c in 0..n_classes {
        let name = &tables.histograms.class_names[c];
        if count[c] == 0 {
            let msg = format!("class {name} has no {split_name} images; omitted from the color audit");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        let n = count[c] as f64;
        entries.push(ColorAuditEntry {
            class: c,
            class_name: name.clone(),
            centroid: rgb_sum[c].map(|s| s / n),
            histogram: hist_sum[c].iter().map(|s| s / n).collect(),
            samples: count[c],
        });
    }
    entries
}

pub fn color_audit(train: ColorTables<'_>, test: Option<ColorTables<'_>>) -> Result<ColorAudit> {
    let bins = train.check()?;
    let mut warnings = Vec::new();
    let train_entries = class_entries(train, bins, "train", &mut warnings);

    let mut pairwise = Vec::new();
    for (i, a) in train_entries.iter().enumerate() {
        for b in &train_entries[i + 1..] {
            pairwise.push(ClassDistance {
                a: a.class_name.clone(),
                b: b.class_name.clone(),
                l1: l1(&a.histogram, &b.histogram),
            });
        }
    }

    let mut test_entries = Vec::new();
    let mut shift = Vec::new();
    if let Some(test) = test {
        if test.check()? != bins || test.histograms.class_names != train.histograms.class_names {
            return Err(Error::arg("train and test tables must share schema and class list"));
        }
        test_entries = class_entries(test, bins, "test", &mut warnings);
        for t in &test_entries {
            if let Some(tr) = train_entries.iter().find(|e| e.class == t.class) {
                shift.push(ClassShift {
                    class: t.class_name.clone(),
                    l1: l1(&tr.histogram, &t.histogram),
                });
            }
        }
    }
    Ok(ColorAudit {
        train: train_entries,
        test: test_entries,
        pairwise,
        train_test_shift: shift,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Blockiness

fn luminance(image: &LabeledImage) -> Vec<f64> {
    image
        .pixels()
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect()
}

/// Ratio of luminance discontinuity across `grid`-aligned block boundaries
/// to discontinuity between all other neighbouring pixels.
///
/// Horizontal neighbours `(x, x+1)` straddle a boundary when
/// `x ≡ grid-1 (mod grid)`; vertical neighbours likewise in `y`. Both the
/// boundary and the interior term are the sum of the horizontal and the
/// vertical mean absolute difference. About 1 means no grid signature; a
/// flat image scores 0.
pub fn blockiness(image: &LabeledImage, grid: u32) -> Result<f64> {
    if grid < 2 {
        return Err(Error::arg("grid must be at least 2"));
    }
    let (w, h) = (image.width() as usize, image.height() as usize);
    let g = grid as usize;
    if w < 2 * g || h < 2 * g {
        return Err(Error::arg(format!(
            "blockiness needs at least {}x{} pixels, image is {w}x{h}",
            2 * g,
            2 * g
        )));
    }
    let y = luminance(image);

    // [edge sum, edge count, interior sum, interior count] per direction
    let mut horiz = [0.0f64; 4];
    let mut vert = [0.0f64; 4];
    for row in 0..h {
        let line = &y[row * w..(row + 1) * w];
        for x in 0..w - 1 {
            let d = (line[x] - line[x + 1]).abs();
            let k = if x % g == g - 1 { 0 } else { 2 };
            horiz[k] += d;
            horiz[k + 1] += 1.0;
        }
    }
    for row in 0..h - 1 {
        let k = if row % g == g - 1 { 0 } else { 2 };
        let (a, b) = (&y[row * w..(row + 1) * w], &y[(row + 1) * w..(row + 2) * w]);
        vert[k] += a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>();
        vert[k + 1] += w as f64;
    }
    let edge = horiz[0] / horiz[1] + vert[0] / vert[1];
    let interior = horiz[2] / horiz[3] + vert[2] / vert[3];
    if edge == 0.0 {
        return Ok(0.0);
    }
    Ok(edge / (interior + BLOCKINESS_EPS))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityBand {
    Severe,
    Moderate,
    Minor,
    None,
}

impl QualityBand {
    pub const ALL: [QualityBand; 4] = [QualityBand::Severe, QualityBand::Moderate, QualityBand::Minor, QualityBand::None];
}

impl fmt::Display for QualityBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QualityBand::Severe => "severe",
            QualityBand::Moderate => "moderate",
            QualityBand::Minor => "minor",
            QualityBand::None => "none",
        })
    }
}

/// Blockiness thresholds measured on a synthetic recompression corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockinessCalibration {
    pub grid: u32,
    pub seed: u64,
    pub images: usize,
    pub image_size: u32,
    pub texture: CalibrationTexture,
    pub median_q30: f64,
    pub median_q60: f64,
    pub median_q85: f64,
    pub median_lossless: f64,
    /// Scores at or above this are `severe` (midpoint of q30 and q60 medians).
    pub severe_min: f64,
    /// Midpoint of the q60 and q85 medians.
    pub moderate_min: f64,
    /// Midpoint of the q85 and lossless medians.
    pub minor_min: f64,
}

pub const CALIBRATION_QUALITIES: [u8; 3] = [30, 60, 85];

/// Parameters of the smooth textures the calibration is measured on.
/// Pure per-pixel noise is a poor stand-in for tissue: at high quality the
/// codec mostly removes noise and the score drops below its lossless value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTexture {
    pub amplitude: f64,
    pub waves: usize,
    pub grain_sigma: f64,
}

impl Default for CalibrationTexture {
    fn default() -> Self {
        Self {
            amplitude: 40.0,
            waves: 8,
            grain_sigma: 5.0,
        }
    }
}

/// Median with linear interpolation; `values` need not be sorted.
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// One calibration image: a random mean color under a smooth wave texture.
pub fn calibration_image(seed: u64, index: usize, size: u32, texture: CalibrationTexture) -> LabeledImage {
    use rand::Rng;
    let mut rng = rng::stream(seed, &[domain::CALIBRATION, index as u64]);
    let mean = [(); 3].map(|_| rng.random_range(80..180u8));
    wave_texture(mean, texture.amplitude, texture.waves, texture.grain_sigma, size, size, &mut rng)
}

impl BlockinessCalibration {
    pub fn measure(seed: u64, images: usize, image_size: u32, texture: CalibrationTexture, grid: u32) -> Result<Self> {
        if images == 0 {
            return Err(Error::arg("calibration needs at least one image"));
        }
        let mut by_quality = vec![Vec::with_capacity(images); CALIBRATION_QUALITIES.len()];
        let mut lossless = Vec::with_capacity(images);
        for i in 0..images {
            let img = calibration_image(seed, i, image_size, texture);
            lossless.push(blockiness(&img, grid)?);
            for (k, &q) in CALIBRATION_QUALITIES.iter().enumerate() {
                by_quality[k].push(blockiness(&jpeg_recompress(&img, q)?, grid)?);
            }
        }
        let [m30, m60, m85] = [0, 1, 2].map(|k| median(&by_quality[k]));
        let ml = median(&lossless);
        Ok(Self {
            grid,
            seed,
            images,
            image_size,
            texture,
            median_q30: m30,
            median_q60: m60,
            median_q85: m85,
            median_lossless: ml,
            severe_min: (m30 + m60) / 2.0,
            moderate_min: (m60 + m85) / 2.0,
            minor_min: (m85 + ml) / 2.0,
        })
    }

    /// The calibration used when none is supplied: 32 default-texture
    /// images of 128×128, seed 0, 8×8 grid. Computed once per process.
    pub fn standard() -> &'static BlockinessCalibration {
        static CAL: OnceLock<BlockinessCalibration> = OnceLock::new();
        CAL.get_or_init(|| {
            Self::measure(0, 32, 128, CalibrationTexture::default(), DEFAULT_GRID).expect("standard calibration parameters are valid")
        })
    }

    pub fn band(&self, score: f64) -> QualityBand {
        if score >= self.severe_min {
            QualityBand::Severe
        } else if score >= self.moderate_min {
            QualityBand::Moderate
        } else if score >= self.minor_min {
            QualityBand::Minor
        } else {
            QualityBand::None
        }
    }
}

pub fn quality_band(image: &LabeledImage, calibration: &BlockinessCalibration) -> Result<QualityBand> {
    Ok(calibration.band(blockiness(image, calibration.grid)?))
}

// ---------------------------------------------------------------------------
// Clipping

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClippingStats {
    /// Fraction of pixels at 0, per channel.
    pub at_zero: [f64; 3],
    /// Fraction of pixels at 255, per channel.
    pub at_max: [f64; 3],
    pub corrupted: bool,
}

/// Flags the image when any channel has at least `saturation_threshold`
/// of its pixels at 255.
pub fn clipping_stats(image: &LabeledImage, saturation_threshold: f64) -> ClippingStats {
    let mut zero = [0u64; 3];
    let mut max = [0u64; 3];
    for p in image.pixels().chunks_exact(3) {
        for c in 0..3 {
            zero[c] += (p[c] == 0) as u64;
            max[c] += (p[c] == 255) as u64;
        }
    }
    let n = image.pixel_count() as f64;
    let at_max = max.map(|m| m as f64 / n);
    ClippingStats {
        at_zero: zero.map(|z| z as f64 / n),
        at_max,
        corrupted: at_max.iter().any(|&f| f >= saturation_threshold),
    }
}

// ---------------------------------------------------------------------------
// Corpus audit

#[derive(Debug, Clone, PartialEq)]
pub struct AuditParams {
    pub bins: usize,
    pub saturation_threshold: f64,
    pub calibration: BlockinessCalibration,
    pub policy: LoadPolicy,
}

impl Default for AuditParams {
    fn default() -> Self {
        Self {
            bins: 16,
            saturation_threshold: DEFAULT_SATURATION_THRESHOLD,
            calibration: BlockinessCalibration::standard().clone(),
            policy: LoadPolicy::SkipWithWarning,
        }
    }
}

/// Everything measured on one image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageRecord {
    pub path: String,
    pub label: usize,
    pub split: Split,
    pub mean_rgb: [f64; 3],
    pub histogram: Vec<f64>,
    /// `None` when the image is smaller than two grid cells.
    pub blockiness: Option<f64>,
    pub band: Option<QualityBand>,
    pub clipping: ClippingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub iqr: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let q1 = quantile(values, 0.25);
        let q3 = quantile(values, 0.75);
        Some(Self {
            n: values.len(),
            min: quantile(values, 0.0),
            q1,
            median: quantile(values, 0.5),
            q3,
            max: quantile(values, 1.0),
            iqr: q3 - q1,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandCounts {
    pub severe: usize,
    pub moderate: usize,
    pub minor: usize,
    pub none: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassBlockiness {
    pub class: String,
    pub split: Split,
    pub scores: Option<Summary>,
    pub bands: BandCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockinessSection {
    pub calibration: BlockinessCalibration,
    pub per_class: Vec<ClassBlockiness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassClipping {
    pub class: String,
    pub split: Split,
    pub images: usize,
    pub flagged: usize,
    pub saturation_threshold: f64,
    /// Mean fraction of blue-channel pixels at 255.
    pub mean_blue_at_max: f64,
    /// Mean histogram mass in the top blue bin.
    pub blue_top_bin_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub class_names: Vec<String>,
    pub train_images: Vec<usize>,
    pub test_images: Vec<usize>,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub format_version: u32,
    pub corpus: CorpusSummary,
    pub color_audit: ColorAudit,
    pub blockiness: BlockinessSection,
    pub clipping: Vec<ClassClipping>,
    pub train_test_shift: Vec<ClassShift>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub images: Vec<ImageRecord>,
}

fn measure_image(image: &LabeledImage, params: &AuditParams) -> Result<ImageRecord> {
    let m = mean_rgb(image).values;
    let blockiness = blockiness(image, params.calibration.grid).ok();
    Ok(ImageRecord {
        path: image.source.clone(),
        label: image.label,
        split: image.split,
        mean_rgb: [m[0], m[1], m[2]],
        histogram: color_histogram(image, params.bins)?.values,
        band: blockiness.map(|s| params.calibration.band(s)),
        blockiness,
        clipping: clipping_stats(image, params.saturation_threshold),
    })
}

fn tables_for(records: &[&ImageRecord], class_names: &[String], bins: usize) -> Result<(FeatureTable, FeatureTable)> {
    let mut hist = FeatureTable::new(FeatureSchema::Histogram { bins }, class_names.to_vec());
    let mut means = FeatureTable::new(FeatureSchema::MeanRgb, class_names.to_vec());
    for r in records {
        hist.push(r.label, r.split, r.histogram.clone())?;
        means.push(r.label, r.split, r.mean_rgb.to_vec())?;
    }
    Ok((hist, means))
}

/// Runs every detector over a training manifest and, optionally, a test
/// manifest with the same class list.
pub fn audit_corpus(train: &CorpusManifest, test: Option<&CorpusManifest>, params: &AuditParams) -> Result<AuditReport> {
    if params.bins == 0 {
        return Err(Error::arg("histogram bin count must be at least 1"));
    }
    if let Some(t) = test {
        if t.class_names != train.class_names {
            return Err(Error::arg(format!(
                "train classes [{}] differ from test classes [{}]",
                train.class_names.join(","),
                t.class_names.join(",")
            )));
        }
    }
    let class_names = &train.class_names;
    let mut warnings: Vec<String> = train.warnings.clone();
    let mut images = Vec::new();
    let mut skipped = 0;
    for manifest in std::iter::once(train).chain(test) {
        let results = map_images(manifest, params.policy, |img| measure_image(&img, params))?;
        skipped += results.skipped();
        warnings.extend(results.warnings);
        images.extend(results.items.into_iter().flatten());
    }
    if test.is_some() {
        warnings.extend(test.unwrap().warnings.iter().cloned());
    }
    let small = images.iter().filter(|r| r.blockiness.is_none()).count();
    if small > 0 {
        warnings.push(format!("{small} images too small for blockiness analysis"));
    }

    let of_split = |s: Split| images.iter().filter(move |r| r.split == s).collect::<Vec<_>>();
    let train_records = of_split(Split::Train);
    let test_records = of_split(Split::Test);
    let (train_hist, train_mean) = tables_for(&train_records, class_names, params.bins)?;
    let (test_hist, test_mean) = tables_for(&test_records, class_names, params.bins)?;
    let color = color_audit(
        ColorTables {
            histograms: &train_hist,
            mean_rgb: &train_mean,
        },
        (!test_records.is_empty()).then_some(ColorTables {
            histograms: &test_hist,
            mean_rgb: &test_mean,
        }),
    )?;
    warnings.extend(color.warnings.iter().cloned());

    let mut per_class = Vec::new();
    let mut clipping = Vec::new();
    let bins = params.bins;
    for (split, records) in [(Split::Train, &train_records), (Split::Test, &test_records)] {
        if records.is_empty() {
            continue;
        }
        for (c, name) in class_names.iter().enumerate() {
            let rs: Vec<&&ImageRecord> = records.iter().filter(|r| r.label == c).collect();
            if rs.is_empty() {
                continue;
            }
            let scores: Vec<f64> = rs.iter().filter_map(|r| r.blockiness).collect();
            let count = |b: QualityBand| rs.iter().filter(|r| r.band == Some(b)).count();
            per_class.push(ClassBlockiness {
                class: name.clone(),
                split,
                scores: Summary::of(&scores),
                bands: BandCounts {
                    severe: count(QualityBand::Severe),
                    moderate: count(QualityBand::Moderate),
                    minor: count(QualityBand::Minor),
                    none: count(QualityBand::None),
                },
            });
            let n = rs.len() as f64;
            clipping.push(ClassClipping {
                class: name.clone(),
                split,
                images: rs.len(),
                flagged: rs.iter().filter(|r| r.clipping.corrupted).count(),
                saturation_threshold: params.saturation_threshold,
                mean_blue_at_max: rs.iter().map(|r| r.clipping.at_max[2]).sum::<f64>() / n,
                blue_top_bin_mass: rs.iter().map(|r| r.histogram[3 * bins - 1]).sum::<f64>() / n,
            });
        }
    }

    let per_split_counts = |s: Split| {
        let mut v = vec![0; class_names.len()];
        images.iter().filter(|r| r.split == s).for_each(|r| v[r.label] += 1);
        v
    };
    Ok(AuditReport {
        format_version: FORMAT_VERSION,
        corpus: CorpusSummary {
            class_names: class_names.clone(),
            train_images: per_split_counts(Split::Train),
            test_images: per_split_counts(Split::Test),
            skipped,
        },
        train_test_shift: color.train_test_shift.clone(),
        color_audit: color,
        blockiness: BlockinessSection {
            calibration: params.calibration.clone(),
            per_class,
        },
        clipping,
        warnings,
        images,
    })
}

impl AuditReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Average histograms as `class,channel,bin,frequency` rows.
    pub fn histogram_csv(&self, split: Split) -> String {
        let entries = match split {
            Split::Train => &self.color_audit.train,
            Split::Test => &self.color_audit.test,
        };
        let mut out = String::from("class,channel,bin,frequency\n");
        for e in entries {
            let bins = e.histogram.len() / 3;
            for (c, channel) in ["R", "G", "B"].iter().enumerate() {
                for b in 0..bins {
                    out.push_str(&format!("{},{channel},{b},{}\n", e.class_name, e.histogram[c * bins + b]));
                }
            }
        }
        out
    }

    /// Per-image mean RGB as `class,r,g,b` rows, for scatter plots.
    pub fn mean_rgb_csv(&self, split: Split) -> String {
        let mut out = String::from("class,r,g,b\n");
        for r in self.images.iter().filter(|r| r.split == split) {
            let [red, green, blue] = r.mean_rgb;
            out.push_str(&format!("{},{red},{green},{blue}\n", self.corpus.class_names[r.label]));
        }
        out
    }

    /// Per-image blockiness as `class,split,path,score,band` rows.
    pub fn blockiness_csv(&self) -> String {
        let mut out = String::from("class,split,path,score,band\n");
        for r in &self.images {
            if let (Some(s), Some(b)) = (r.blockiness, r.band) {
                out.push_str(&format!("{},{},{},{s},{b}\n", self.corpus.class_names[r.label], r.split, csv_field(&r.path)));
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
