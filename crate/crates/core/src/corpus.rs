//! Corpus ingestion: directory-per-class scanning, manifest CSV files and
//! image decoding to 8-bit RGB.
//!
//! A corpus root looks like
//!
//! ```text
//! root/
//!   ADI/  a.tif  b.tif
//!   BACK/ c.tif
//! ```
//!
//! Class indices follow the lexicographic order of the directory names so
//! that label numbering is identical on every machine.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{write_file, Error, Result};
use crate::par;

const IMAGE_EXTENSIONS: [&str; 5] = ["tif", "tiff", "jpg", "jpeg", "png"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::arg(format!("unknown split `{other}` (expected train or test)"))),
        }
    }
}

/// A decoded 8-bit RGB patch with its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pixels: Vec<u8>,
    width: u32,
    height: u32,
    pub label: usize,
    pub split: Split,
    pub source: String,
}

impl LabeledImage {
    /// Builds an image from row-major RGB triples.
    pub fn new(
        pixels: Vec<u8>,
        width: u32,
        height: u32,
        label: usize,
        split: Split,
        source: impl Into<String>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg(format!("image dimensions must be positive, got {width}x{height}")));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::arg(format!(
                "pixel buffer holds {} bytes, expected {expected} for {width}x{height} RGB",
                pixels.len()
            )));
        }
        Ok(Self {
            pixels,
            width,
            height,
            label,
            split,
            source: source.into(),
        })
    }

    /// Unlabeled image, handy for tools that only look at pixels.
    pub fn from_rgb(pixels: Vec<u8>, width: u32, height: u32) -> Result<Self> {
        Self::new(pixels, width, height, 0, Split::Test, "")
    }

    pub fn solid(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width as usize * height as usize * 3).collect();
        Self::from_rgb(pixels, width, height).expect("solid image dimensions must be positive")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Same label, split and source with new pixels of identical dimensions.
    pub fn with_pixels(&self, pixels: Vec<u8>) -> Result<Self> {
        Self::new(pixels, self.width, self.height, self.label, self.split, self.source.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path relative to the manifest root, `/`-separated.
    pub path: String,
    pub label: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub class_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    /// Non-fatal findings from scanning, e.g. empty class directories.
    pub warnings: Vec<String>,
}

impl CorpusManifest {
    pub fn new(root: impl Into<PathBuf>, class_names: Vec<String>) -> Result<Self> {
        validate_class_names(&class_names)?;
        Ok(Self {
            root: root.into(),
            class_names,
            entries: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn split(&self, split: Split) -> CorpusManifest {
        CorpusManifest {
            root: self.root.clone(),
            class_names: self.class_names.clone(),
            entries: self.entries.iter().filter(|e| e.split == split).cloned().collect(),
            warnings: self.warnings.clone(),
        }
    }

    /// Checks every structural invariant: unique class names, labels in
    /// range and no duplicate paths.
    pub fn validate(&self) -> Result<()> {
        validate_class_names(&self.class_names)?;
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.label >= self.class_names.len() {
                return Err(Error::arg(format!(
                    "entry {} has label {} but only {} classes exist",
                    e.path,
                    e.label,
                    self.class_names.len()
                )));
            }
            if !seen.insert(e.path.as_str()) {
                return Err(Error::arg(format!("duplicate manifest path {}", e.path)));
            }
        }
        Ok(())
    }

    fn sort_entries(&mut self) {
        self.entries
            .sort_by(|a, b| (a.split, a.label, &a.path).cmp(&(b.split, b.label, &b.path)));
    }
}

fn validate_class_names(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if n.is_empty() || n.contains([',', '\n', '\r']) {
            return Err(Error::arg(format!("invalid class name {n:?}")));
        }
        if !seen.insert(n.as_str()) {
            return Err(Error::arg(format!("duplicate class name {n}")));
        }
    }
    Ok(())
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn is_hidden(name: &str) -> bool {
    name.starts_with('.')
}

/// Scans a directory-per-class corpus. Only files directly inside each class
/// directory are considered.
pub fn scan_corpus(root: &Path, split: Split) -> Result<CorpusManifest> {
    let meta = fs::metadata(root).map_err(|e| Error::io(root, e))?;
    if !meta.is_dir() {
        return Err(Error::arg(format!("corpus root {} is not a directory", root.display())));
    }

    let mut classes = Vec::new();
    for dirent in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let dirent = dirent.map_err(|e| Error::io(root, e))?;
        let file_type = dirent.file_type().map_err(|e| Error::io(dirent.path(), e))?;
        let name = dirent.file_name().to_string_lossy().into_owned();
        if (file_type.is_dir() || dirent.path().is_dir()) && !is_hidden(&name) {
            classes.push(name);
        }
    }
    classes.sort();

    let mut manifest = CorpusManifest::new(root, classes)?;
    for (label, class) in manifest.class_names.clone().iter().enumerate() {
        let dir = root.join(class);
        let mut files = Vec::new();
        for dirent in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let dirent = dirent.map_err(|e| Error::io(&dir, e))?;
            let path = dirent.path();
            let name = dirent.file_name().to_string_lossy().into_owned();
            if path.is_file() && !is_hidden(&name) && is_image_file(&path) {
                files.push(name);
            }
        }
        if files.is_empty() {
            let msg = format!("class directory {class} contains no images");
            log::warn!("{msg}");
            manifest.warnings.push(msg);
        }
        manifest.entries.extend(files.into_iter().map(|name| ManifestEntry {
            path: format!("{class}/{name}"),
            label,
            split,
        }));
    }
    manifest.sort_entries();
    Ok(manifest)
}

/// Joins two manifests with the same class list, typically a train and a
/// test scan. Entries of `b` are rebased onto `a`'s root when roots differ.
pub fn merge_manifests(a: &CorpusManifest, b: &CorpusManifest) -> Result<CorpusManifest> {
    if a.class_names != b.class_names {
        return Err(Error::arg(format!(
            "class lists differ: [{}] vs [{}]",
            a.class_names.join(","),
            b.class_names.join(",")
        )));
    }
    let mut merged = a.clone();
    if a.root == b.root {
        merged.entries.extend(b.entries.iter().cloned());
    } else {
        let base = absolute(&a.root);
        for e in &b.entries {
            let full = absolute(&b.root).join(&e.path);
            let rel = pathdiff::diff_paths(&full, &base).unwrap_or(full);
            merged.entries.push(ManifestEntry {
                path: to_slash(&rel),
                ..e.clone()
            });
        }
    }
    merged.warnings.extend(b.warnings.iter().cloned());
    merged.sort_entries();
    merged.validate()?;
    Ok(merged)
}

fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path)
        .or_else(|_| std::path::absolute(path))
        .unwrap_or_else(|_| path.to_path_buf())
}

fn to_slash(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn manifest_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub(crate) fn write_comment_header(out: &mut String, key: &str, value: &str) {
    out.push_str("# ");
    out.push_str(key);
    out.push_str(": ");
    out.push_str(value);
    out.push('\n');
}

/// Serializes a manifest into CSV text. Entry paths are rewritten to be
/// relative to `dir`.
pub fn manifest_to_csv(manifest: &CorpusManifest, dir: &Path) -> Result<String> {
    manifest.validate()?;
    let rebase = absolute(&manifest.root) != absolute(dir);
    let base_abs = absolute(dir);
    let root_abs = absolute(&manifest.root);

    let mut out = String::new();
    write_comment_header(&mut out, "classes", &manifest.class_names.join(","));
    for w in &manifest.warnings {
        write_comment_header(&mut out, "warning", &w.replace(['\n', '\r'], " "));
    }

    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    writer
        .write_record(["path", "label", "split"])
        .map_err(|e| Error::arg(e.to_string()))?;
    for e in &manifest.entries {
        let path = if rebase {
            let target = root_abs.join(&e.path);
            let rel = pathdiff::diff_paths(&target, &base_abs).unwrap_or(target);
            to_slash(&rel)
        } else {
            e.path.clone()
        };
        writer
            .write_record([path.as_str(), manifest.class_names[e.label].as_str(), e.split.as_str()])
            .map_err(|e| Error::arg(e.to_string()))?;
    }
    let body = writer.into_inner().map_err(|e| Error::arg(e.to_string()))?;
    out.push_str(&String::from_utf8(body).expect("csv output of UTF-8 input is UTF-8"));
    Ok(out)
}

pub fn write_manifest(manifest: &CorpusManifest, path: &Path) -> Result<()> {
    let dir = manifest_dir(path);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let text = manifest_to_csv(manifest, &dir)?;
    write_file(path, text)
}

/// Leading `# key: value` lines of a CSV document, with the 1-based line
/// number at which the CSV body starts.
pub(crate) fn split_comment_header(text: &str) -> (Vec<(String, String)>, usize, &str) {
    let mut meta = Vec::new();
    let mut offset = 0;
    let mut lines = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end_matches(['\n', '\r']);
        let Some(comment) = trimmed.strip_prefix('#') else {
            break;
        };
        let comment = comment.trim_start();
        if let Some((k, v)) = comment.split_once(':') {
            meta.push((k.trim().to_string(), v.strip_prefix(' ').unwrap_or(v).to_string()));
        }
        offset += line.len();
        lines += 1;
    }
    (meta, lines, &text[offset..])
}

pub(crate) fn parse_class_list(value: &str) -> Vec<String> {
    if value.trim().is_empty() {
        Vec::new()
    } else {
        value.split(',').map(str::to_string).collect()
    }
}

/// Parses manifest CSV text; `dir` becomes the manifest root.
pub fn manifest_from_csv(text: &str, dir: &Path, file: &str) -> Result<CorpusManifest> {
    let (meta, header_lines, body) = split_comment_header(text);
    let classes = meta
        .iter()
        .find(|(k, _)| k == "classes")
        .map(|(_, v)| parse_class_list(v))
        .ok_or_else(|| Error::parse(file, 1, "missing `# classes:` header line"))?;
    validate_class_names(&classes).map_err(|e| Error::parse(file, 1, e.to_string()))?;
    let warnings = meta.iter().filter(|(k, _)| k == "warning").map(|(_, v)| v.clone()).collect();

    let mut manifest = CorpusManifest {
        root: dir.to_path_buf(),
        class_names: classes,
        entries: Vec::new(),
        warnings,
    };

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let line_of = |pos: Option<&csv::Position>| pos.map(|p| p.line()).unwrap_or(0) + header_lines as u64;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(file, line_of(e.position()), e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "label", "split"] {
        return Err(Error::parse(file, header_lines as u64 + 1, "expected header `path,label,split`"));
    }

    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(file, line_of(e.position()), e.to_string()))?;
        let line = line_of(record.position());
        if record.len() != 3 {
            return Err(Error::parse(file, line, format!("expected 3 fields, found {}", record.len())));
        }
        let path = record[0].to_string();
        if path.is_empty() {
            return Err(Error::parse(file, line, "empty path"));
        }
        let label = manifest
            .class_names
            .iter()
            .position(|c| c == &record[1])
            .ok_or_else(|| Error::parse(file, line, format!("unknown class `{}`", &record[1])))?;
        let split = record[2].parse::<Split>().map_err(|e| Error::parse(file, line, e.to_string()))?;
        if !seen.insert(path.clone()) {
            return Err(Error::parse(file, line, format!("duplicate path {path}")));
        }
        manifest.entries.push(ManifestEntry { path, label, split });
    }
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    manifest_from_csv(&text, &manifest_dir(path), &path.display().to_string())
}

/// Decodes an encoded TIFF, JPEG or PNG to `(width, height, rgb)`.
///
/// Grayscale is replicated across channels, alpha is dropped and 16-bit
/// samples are right-shifted to 8 bits.
pub fn decode_rgb8(bytes: &[u8]) -> std::result::Result<(u32, u32, Vec<u8>), String> {
    let img = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| e.to_string())?
        .decode()
        .map_err(|e| e.to_string())?;
    let (w, h) = (img.width(), img.height());
    let rgb = match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img.to_rgb16().into_raw().into_iter().map(|v| (v >> 8) as u8).collect(),
        other => other.to_rgb8().into_raw(),
    };
    Ok((w, h, rgb))
}

/// Decodes one manifest entry.
pub fn load_image(manifest: &CorpusManifest, entry: &ManifestEntry) -> Result<LabeledImage> {
    let path = manifest.resolve(entry);
    let source = path.display().to_string();
    if entry.label >= manifest.n_classes() {
        return Err(Error::arg(format!("{source}: label {} out of range", entry.label)));
    }
    let bytes = fs::read(&path).map_err(|e| Error::Decode {
        path: source.clone(),
        message: e.to_string(),
    })?;
    let (w, h, rgb) = decode_rgb8(&bytes).map_err(|message| Error::Decode {
        path: source.clone(),
        message,
    })?;
    LabeledImage::new(rgb, w, h, entry.label, entry.split, source)
}

/// What to do when a single corpus file cannot be processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadPolicy {
    #[default]
    SkipWithWarning,
    Abort,
}

impl LoadPolicy {
    pub fn from_strict(strict: bool) -> Self {
        if strict {
            LoadPolicy::Abort
        } else {
            LoadPolicy::SkipWithWarning
        }
    }
}

/// Results of a per-entry map over a manifest. `items[i]` corresponds to
/// `manifest.entries[i]` and is `None` when that entry was skipped.
#[derive(Debug)]
pub struct EntryResults<T> {
    pub items: Vec<Option<T>>,
    pub warnings: Vec<String>,
}

impl<T> EntryResults<T> {
    pub fn skipped(&self) -> usize {
        self.items.iter().filter(|i| i.is_none()).count()
    }
}

/// Loads every entry and applies `f`, possibly in parallel. Output order
/// always matches manifest order.
pub fn map_images<T, F>(manifest: &CorpusManifest, policy: LoadPolicy, f: F) -> Result<EntryResults<T>>
where
    T: Send,
    F: Fn(LabeledImage) -> Result<T> + Sync + Send,
{
    let results = par::map(&manifest.entries, |_, entry| load_image(manifest, entry).and_then(&f));
    let mut items = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for r in results {
        match r {
            Ok(v) => items.push(Some(v)),
            Err(e) if policy == LoadPolicy::SkipWithWarning => {
                let msg = format!("skipped: {e}");
                log::warn!("{msg}");
                warnings.push(msg);
                items.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(EntryResults { items, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, Luma, Rgb};
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn write_png(path: &Path, w: u32, h: u32, rgb: [u8; 3]) {
        let img = ImageBuffer::from_pixel(w, h, Rgb(rgb));
        img.save(path).unwrap();
    }

    fn make_corpus(root: &Path, classes: &[(&str, usize)]) {
        for (class, n) in classes {
            let dir = root.join(class);
            fs::create_dir_all(&dir).unwrap();
            for i in 0..*n {
                write_png(&dir.join(format!("img{i}.png")), 2, 2, [i as u8, 0, 0]);
            }
        }
    }

    #[test]
    fn merge_rebases_separate_roots() {
        let dir = tempdir().unwrap();
        make_corpus(&dir.path().join("tr"), &[("A", 2), ("B", 1)]);
        make_corpus(&dir.path().join("te"), &[("A", 1), ("B", 1)]);
        let train = scan_corpus(&dir.path().join("tr"), Split::Train).unwrap();
        let test = scan_corpus(&dir.path().join("te"), Split::Test).unwrap();
        let merged = merge_manifests(&train, &test).unwrap();
        assert_eq!(merged.entries.len(), 5);
        assert_eq!(merged.entries[3].path, "../te/A/img0.png");
        assert_eq!(merged.entries[3].split, Split::Test);
        for e in &merged.entries {
            assert!(load_image(&merged, e).is_ok(), "{}", e.path);
        }
    }

    #[test]
    fn scan_orders_classes_lexicographically() {
        let dir = tempdir().unwrap();
        make_corpus(dir.path(), &[("BACK", 2), ("ADI", 2)]);
        fs::write(dir.path().join("ADI").join("notes.txt"), "x").unwrap();
        let m = scan_corpus(dir.path(), Split::Train).unwrap();
        assert_eq!(m.class_names, vec!["ADI", "BACK"]);
        assert_eq!(m.entries.len(), 4);
        assert_eq!(m.entries[0].path, "ADI/img0.png");
        assert_eq!(m.entries[3].label, 1);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn scan_nine_tissue_classes() {
        let dir = tempdir().unwrap();
        let names = ["TUM", "ADI", "BACK", "DEB", "LYM", "MUC", "MUS", "NORM", "STR"];
        let spec: Vec<_> = names.iter().map(|n| (*n, 1)).collect();
        make_corpus(dir.path(), &spec);
        let m = scan_corpus(dir.path(), Split::Test).unwrap();
        assert_eq!(m.class_names, ["ADI", "BACK", "DEB", "LYM", "MUC", "MUS", "NORM", "STR", "TUM"]);
        assert!(m.entries.iter().all(|e| e.split == Split::Test));
    }

    #[test]
    fn scan_empty_root_and_empty_class() {
        let dir = tempdir().unwrap();
        let m = scan_corpus(dir.path(), Split::Train).unwrap();
        assert_eq!(m.n_classes(), 0);
        assert!(m.entries.is_empty());

        fs::create_dir(dir.path().join("EMPTY")).unwrap();
        let m = scan_corpus(dir.path(), Split::Train).unwrap();
        assert_eq!(m.class_names, ["EMPTY"]);
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn scan_missing_root_is_fatal() {
        let dir = tempdir().unwrap();
        assert!(matches!(scan_corpus(&dir.path().join("nope"), Split::Train), Err(Error::Io { .. })));
    }

    #[test]
    fn extensions_are_case_insensitive() {
        assert!(is_image_file(Path::new("a/B.TIF")));
        assert!(is_image_file(Path::new("a.JpEg")));
        assert!(!is_image_file(Path::new("a.bmp")));
        assert!(!is_image_file(Path::new("tif")));
    }

    #[test]
    fn load_solid_png() {
        let dir = tempdir().unwrap();
        make_corpus(dir.path(), &[("A", 0)]);
        write_png(&dir.path().join("A/x.png"), 2, 2, [10, 20, 30]);
        let m = scan_corpus(dir.path(), Split::Train).unwrap();
        let img = load_image(&m, &m.entries[0]).unwrap();
        assert_eq!(img.pixels(), [10, 20, 30].repeat(4).as_slice());
        assert_eq!((img.width(), img.height(), img.label), (2, 2, 0));
    }

    #[test]
    fn grayscale_is_replicated() {
        let dir = tempdir().unwrap();
        fs::create_dir(dir.path().join("G")).unwrap();
        ImageBuffer::from_pixel(1, 1, Luma([77u8])).save(dir.path().join("G/g.png")).unwrap();
        let m = scan_corpus(dir.path(), Split::Train).unwrap();
        assert_eq!(load_image(&m, &m.entries[0]).unwrap().pixels(), [77, 77, 77]);
    }

    #[test]
    fn sixteen_bit_is_right_shifted() {
        let dir = tempdir().unwrap();
        fs::create_dir(dir.path().join("H")).unwrap();
        let img: ImageBuffer<Rgb<u16>, _> = ImageBuffer::from_pixel(1, 1, Rgb([0x12ff, 0x0080, 0xffff]));
        img.save(dir.path().join("H/h.tif")).unwrap();
        let m = scan_corpus(dir.path(), Split::Train).unwrap();
        assert_eq!(load_image(&m, &m.entries[0]).unwrap().pixels(), [0x12, 0x00, 0xff]);
    }

    #[test]
    fn rgba_alpha_is_dropped() {
        let (w, h, rgb) = {
            let img = ImageBuffer::from_pixel(1, 1, image::Rgba([1u8, 2, 3, 4]));
            let mut buf = Vec::new();
            img.write_to(&mut Cursor::new(&mut buf), image::ImageFormat::Png).unwrap();
            decode_rgb8(&buf).unwrap()
        };
        assert_eq!((w, h, rgb), (1, 1, vec![1, 2, 3]));
    }

    #[test]
    fn truncated_file_names_path() {
        let dir = tempdir().unwrap();
        make_corpus(dir.path(), &[("A", 1)]);
        let p = dir.path().join("A/img0.png");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        let m = scan_corpus(dir.path(), Split::Train).unwrap();
        match load_image(&m, &m.entries[0]) {
            Err(Error::Decode { path, .. }) => assert!(path.ends_with("img0.png")),
            other => panic!("expected decode error, got {other:?}"),
        }

        let skipped = map_images(&m, LoadPolicy::SkipWithWarning, Ok).unwrap();
        assert_eq!(skipped.skipped(), 1);
        assert_eq!(skipped.warnings.len(), 1);
        assert!(map_images(&m, LoadPolicy::Abort, Ok).is_err());
    }

    #[test]
    fn labeled_image_invariants() {
        assert!(LabeledImage::from_rgb(vec![0; 5], 1, 2).is_err());
        assert!(LabeledImage::from_rgb(vec![], 0, 2).is_err());
        assert!(LabeledImage::from_rgb(vec![0; 6], 1, 2).is_ok());
    }

    #[test]
    fn manifest_written_elsewhere_rebases_paths() {
        let dir = tempdir().unwrap();
        let root = dir.path().join("data");
        make_corpus(&root, &[("A", 1)]);
        let out = dir.path().join("out");
        fs::create_dir(&out).unwrap();
        let m = scan_corpus(&root, Split::Train).unwrap();
        write_manifest(&m, &out.join("m.csv")).unwrap();
        let text = fs::read_to_string(out.join("m.csv")).unwrap();
        assert!(text.contains("../data/A/img0.png,A,train"), "{text}");
        let back = read_manifest(&out.join("m.csv")).unwrap();
        assert!(load_image(&back, &back.entries[0]).is_ok());
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = Path::new("/x");
        let bad_class = "# classes: A,B\npath,label,split\na.png,A,train\nb.png,C,train\n";
        match manifest_from_csv(bad_class, dir, "m.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let bad_split = "# classes: A\n# warning: w\npath,label,split\na.png,A,valid\n";
        match manifest_from_csv(bad_split, dir, "m.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let dup = "# classes: A\npath,label,split\na.png,A,train\na.png,A,test\n";
        assert!(matches!(manifest_from_csv(dup, dir, "m"), Err(Error::Parse { line: 4, .. })));
        let ragged = "# classes: A\npath,label,split\na.png,A\n";
        assert!(matches!(manifest_from_csv(ragged, dir, "m"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(manifest_from_csv("path,label,split\n", dir, "m"), Err(Error::Parse { line: 1, .. })));
    }

    fn arb_manifest() -> impl Strategy<Value = CorpusManifest> {
        let classes = proptest::collection::btree_set("[A-Za-z][A-Za-z0-9_ ]{0,6}", 1..5);
        classes.prop_flat_map(|set| {
            let names: Vec<String> = set.into_iter().collect();
            let n = names.len();
            let entries = proptest::collection::btree_map(
                "[a-z0-9_/ ,\"]{1,12}",
                (0..n, prop::bool::ANY),
                0..12,
            );
            let warnings = proptest::collection::vec("[ -~]{0,20}", 0..3);
            (Just(names), entries, warnings).prop_map(|(class_names, entries, warnings)| CorpusManifest {
                root: PathBuf::from("/corpus"),
                class_names,
                entries: entries
                    .into_iter()
                    .map(|(path, (label, train))| ManifestEntry {
                        path,
                        label,
                        split: if train { Split::Train } else { Split::Test },
                    })
                    .collect(),
                warnings: warnings.into_iter().map(|w| w.trim().to_string()).collect(),
            })
        })
    }

    proptest! {
        #[test]
        fn manifest_csv_round_trip(m in arb_manifest()) {
            let text = manifest_to_csv(&m, &m.root).unwrap();
            let back = manifest_from_csv(&text, &m.root, "m.csv").unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
