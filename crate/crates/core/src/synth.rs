//! Synthetic corpora with planted shortcuts.
//!
//! Every image is a flat class color plus independent, clamped Gaussian
//! noise per pixel and channel. A class may additionally carry a JPEG
//! quality (the image is stored as a JPEG at that quality) and a blue-clip
//! fraction (that share of pixels gets its blue channel forced to 255).
//! Output depends only on the `SynthSpec`, including its master seed.

use std::fs;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{decode_rgb8, write_manifest, CorpusManifest, LabeledImage, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::features::{Extractor, FeatureTable};
use crate::perturb::encode_jpeg;
use crate::rng::{self, domain};
use crate::par;

/// Tissue class abbreviations used by the nine-class presets.
pub const TISSUE_CLASSES: [&str; 9] = ["ADI", "BACK", "DEB", "LYM", "MUC", "MUS", "NORM", "STR", "TUM"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthClass {
    pub name: String,
    pub mean: [u8; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jpeg_quality: Option<u8>,
    #[serde(default)]
    pub blue_clip_fraction: f64,
}

impl SynthClass {
    pub fn plain(name: impl Into<String>, mean: [u8; 3]) -> Self {
        Self {
            name: name.into(),
            mean,
            jpeg_quality: None,
            blue_clip_fraction: 0.0,
        }
    }
}

fn default_size() -> u32 {
    224
}

fn default_sigma() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<SynthClass>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    #[serde(default = "default_size")]
    pub width: u32,
    #[serde(default = "default_size")]
    pub height: u32,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    /// Nine classes whose mean colors are at least 50 apart in every
    /// pair (Chebyshev distance), so color alone separates them.
    pub fn color_signatures(train_per_class: usize, test_per_class: usize) -> Self {
        let classes = TISSUE_CLASSES
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let (r, g) = ((i % 3) as u8, (i / 3) as u8);
                SynthClass::plain(*name, [90 + 50 * r, 80 + 50 * g, 170])
            })
            .collect();
        Self {
            classes,
            train_per_class,
            test_per_class,
            width: default_size(),
            height: default_size(),
            noise_sigma: default_sigma(),
            seed: 0,
        }
    }

    /// Nine classes that share one mean color; nothing separates them.
    pub fn identical_means(train_per_class: usize, test_per_class: usize) -> Self {
        let mut spec = Self::color_signatures(train_per_class, test_per_class);
        spec.classes.iter_mut().for_each(|c| c.mean = [150, 110, 170]);
        spec
    }

    pub fn with_size(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn per_class(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_per_class,
            Split::Test => self.test_per_class,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::arg("synthetic spec has no classes"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::arg("image size must be positive"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::arg("noise sigma must be finite and non-negative"));
        }
        let mut names: Vec<&str> = self.classes.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::arg("class names must be unique"));
        }
        for c in &self.classes {
            if c.name.is_empty() || c.name.starts_with('.') || c.name.contains(['/', '\\', ',', '\n']) {
                return Err(Error::arg(format!("invalid class name {:?}", c.name)));
            }
            if let Some(q) = c.jpeg_quality {
                if !(1..=100).contains(&q) {
                    return Err(Error::arg(format!("class {}: JPEG quality must be in 1..=100", c.name)));
                }
            }
            if !(0.0..=1.0).contains(&c.blue_clip_fraction) {
                return Err(Error::arg(format!("class {}: blue clip fraction must be in [0, 1]", c.name)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// `mean` plus N(0, sigma²) noise per pixel and channel, rounded and
/// clamped to [0, 255].
pub fn textured_image<R: Rng>(mean: [u8; 3], sigma: f64, width: u32, height: u32, rng: &mut R) -> LabeledImage {
    let n = width as usize * height as usize;
    let mut px = Vec::with_capacity(n * 3);
    match Normal::new(0.0, sigma) {
        Ok(noise) if sigma > 0.0 => {
            for _ in 0..n {
                for m in mean {
                    px.push((m as f64 + noise.sample(rng)).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        _ => (0..n).for_each(|_| px.extend(mean)),
    }
    LabeledImage::from_rgb(px, width, height).expect("buffer sized to dimensions")
}

/// Smooth random texture: `mean` plus `waves` plane waves with random
/// frequency (0.01 to 0.12 cycles per pixel), orientation, phase and
/// per-channel weight, scaled to roughly `amplitude`, plus Gaussian grain.
pub fn wave_texture<R: Rng>(
    mean: [u8; 3],
    amplitude: f64,
    waves: usize,
    grain_sigma: f64,
    width: u32,
    height: u32,
    rng: &mut R,
) -> LabeledImage {
    use std::f64::consts::TAU;
    let components: Vec<([f64; 3], [f64; 3])> = (0..waves)
        .map(|_| {
            let freq = rng.random_range(0.01..0.12) * TAU;
            let angle = rng.random_range(0.0..TAU);
            let phase = rng.random_range(0.0..TAU);
            let weight = [(); 3].map(|_| rng.random_range(-1.0..1.0));
            ([freq * angle.cos(), freq * angle.sin(), phase], weight)
        })
        .collect();
    let scale = if waves == 0 { 0.0 } else { amplitude / (waves as f64).sqrt() };
    let grain = Normal::new(0.0, grain_sigma).ok().filter(|_| grain_sigma > 0.0);
    let mut px = Vec::with_capacity(width as usize * height as usize * 3);
    for y in 0..height {
        for x in 0..width {
            let mut v = mean.map(f64::from);
            for ([fx, fy, phase], weight) in &components {
                let s = scale * (fx * x as f64 + fy * y as f64 + phase).sin();
                v.iter_mut().zip(weight).for_each(|(c, w)| *c += s * w);
            }
            for c in v {
                let g = grain.map_or(0.0, |n| n.sample(rng));
                px.push((c + g).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    LabeledImage::from_rgb(px, width, height).expect("buffer sized to dimensions")
}

/// Encoded bytes of one image and its file extension.
pub struct EncodedImage {
    pub bytes: Vec<u8>,
    pub extension: &'static str,
}

fn split_code(split: Split) -> u64 {
    match split {
        Split::Train => 0,
        Split::Test => 1,
    }
}

fn encode_png(image: &LabeledImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    PngEncoder::new(&mut buf)
        .write_image(image.pixels(), image.width(), image.height(), ExtendedColorType::Rgb8)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(buf)
}

/// Image `index` of `class` in `split` before any encoding.
fn raw_image(spec: &SynthSpec, split: Split, class: usize, index: usize) -> Result<LabeledImage> {
    let c = &spec.classes[class];
    let mut rng = rng::stream(spec.seed, &[domain::SYNTH, split_code(split), class as u64, index as u64]);
    let img = textured_image(c.mean, spec.noise_sigma, spec.width, spec.height, &mut rng);
    if c.blue_clip_fraction == 0.0 {
        return Ok(img);
    }
    let n = img.pixel_count();
    let k = ((c.blue_clip_fraction * n as f64).round() as usize).min(n);
    let mut px = img.into_pixels();
    for i in rand::seq::index::sample(&mut rng, n, k) {
        px[i * 3 + 2] = 255;
    }
    LabeledImage::from_rgb(px, spec.width, spec.height)
}

/// Generates and encodes image `index` of `class` in `split`.
pub fn encode_image(spec: &SynthSpec, split: Split, class: usize, index: usize) -> Result<EncodedImage> {
    let img = raw_image(spec, split, class, index)?;
    Ok(match spec.classes[class].jpeg_quality {
        Some(q) => EncodedImage {
            bytes: encode_jpeg(img.pixels(), img.width(), img.height(), q)?,
            extension: "jpg",
        },
        None => EncodedImage {
            bytes: encode_png(&img)?,
            extension: "png",
        },
    })
}

/// The image exactly as a reader of the written corpus would decode it.
/// PNG is lossless, so only JPEG classes go through the codec.
pub fn generate_image(spec: &SynthSpec, split: Split, class: usize, index: usize) -> Result<LabeledImage> {
    let mut img = raw_image(spec, split, class, index)?;
    if let Some(q) = spec.classes[class].jpeg_quality {
        let bytes = encode_jpeg(img.pixels(), img.width(), img.height(), q)?;
        let (w, h, px) = decode_rgb8(&bytes).map_err(Error::Encode)?;
        img = LabeledImage::from_rgb(px, w, h)?;
    }
    img.label = class;
    img.split = split;
    img.source = format!("{}/{}/{}", split, spec.classes[class].name, file_stem(index));
    Ok(img)
}

fn file_stem(index: usize) -> String {
    format!("img_{index:05}")
}

/// Every image of `spec` in manifest order (split, class, index),
/// generated in memory.
pub fn generate_images(spec: &SynthSpec) -> Result<Vec<LabeledImage>> {
    spec.validate()?;
    par::map(&coordinates(spec), |_, &(split, class, index)| generate_image(spec, split, class, index))
        .into_iter()
        .collect()
}

/// Features of every image of `spec`, generated in memory and discarded
/// one at a time. Row order matches [`generate_images`].
pub fn feature_table(spec: &SynthSpec, extractor: Extractor) -> Result<FeatureTable> {
    spec.validate()?;
    let rows = par::map(&coordinates(spec), |_, &(split, class, index)| {
        generate_image(spec, split, class, index).and_then(|img| extractor.extract(&img))
    });
    let mut table = FeatureTable::new(extractor.schema(), spec.class_names());
    for ((split, class, _), row) in coordinates(spec).into_iter().zip(rows) {
        table.push(class, split, row?.values)?;
    }
    Ok(table)
}

fn coordinates(spec: &SynthSpec) -> Vec<(Split, usize, usize)> {
    let mut out = Vec::new();
    for split in [Split::Train, Split::Test] {
        for class in 0..spec.classes.len() {
            out.extend((0..spec.per_class(split)).map(|i| (split, class, i)));
        }
    }
    out
}

/// Writes `out/{train,test}/<class>/img_NNNNN.{png,jpg}`, the `SynthSpec` as
/// `out/synth.json` and the manifest as `out/manifest.csv`.
pub fn generate_corpus(spec: &SynthSpec, out: &Path) -> Result<CorpusManifest> {
    spec.validate()?;
    for split in [Split::Train, Split::Test] {
        for c in &spec.classes {
            let dir = out.join(split.as_str()).join(&c.name);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
    }
    let entries = par::map(&coordinates(spec), |_, &(split, class, index)| -> Result<ManifestEntry> {
        let encoded = encode_image(spec, split, class, index)?;
        let rel = format!(
            "{}/{}/{}.{}",
            split,
            spec.classes[class].name,
            file_stem(index),
            encoded.extension
        );
        let path = out.join(&rel);
        fs::write(&path, &encoded.bytes).map_err(|e| Error::io(&path, e))?;
        Ok(ManifestEntry { path: rel, label: class, split })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut manifest = CorpusManifest::new(out, spec.class_names())?;
    manifest.entries = entries;
    let spec_path = out.join("synth.json");
    fs::write(&spec_path, serde_json::to_string_pretty(spec)? + "\n").map_err(|e| Error::io(&spec_path, e))?;
    write_manifest(&manifest, &out.join("manifest.csv"))?;
    Ok(manifest)
}
