//! Shallow image descriptors and the feature CSV format.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    map_images, parse_class_list, split_comment_header, write_comment_header, CorpusManifest, LabeledImage,
    LoadPolicy, Split,
};
use crate::error::{write_file, Error, Result};

/// Layout of a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureSchema {
    /// Mean R, G, B intensity.
    MeanRgb,
    /// Per-channel normalized histograms with `bins` bins, concatenated R, G, B.
    Histogram { bins: usize },
    /// Externally computed descriptor of fixed dimension.
    External { dim: usize },
}

impl FeatureSchema {
    pub fn dim(self) -> usize {
        match self {
            FeatureSchema::MeanRgb => 3,
            FeatureSchema::Histogram { bins } => 3 * bins,
            FeatureSchema::External { dim } => dim,
        }
    }
}

impl fmt::Display for FeatureSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSchema::MeanRgb => write!(f, "mean-rgb-3"),
            FeatureSchema::Histogram { bins } => write!(f, "hist-3x{bins}"),
            FeatureSchema::External { dim } => write!(f, "external-{dim}"),
        }
    }
}

impl FromStr for FeatureSchema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::arg(format!("unknown feature schema `{s}`"));
        if s == "mean-rgb-3" {
            return Ok(FeatureSchema::MeanRgb);
        }
        if let Some(bins) = s.strip_prefix("hist-3x") {
            let bins: usize = bins.parse().map_err(|_| bad())?;
            if bins == 0 {
                return Err(bad());
            }
            return Ok(FeatureSchema::Histogram { bins });
        }
        if let Some(dim) = s.strip_prefix("external-") {
            let dim: usize = dim.parse().map_err(|_| bad())?;
            if dim == 0 {
                return Err(bad());
            }
            return Ok(FeatureSchema::External { dim });
        }
        Err(bad())
    }
}

impl Serialize for FeatureSchema {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureSchema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub schema: FeatureSchema,
    pub values: Vec<f64>,
}

/// Built-in image feature extractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Extractor {
    MeanRgb,
    Histogram { bins: usize },
}

impl Extractor {
    pub fn schema(self) -> FeatureSchema {
        match self {
            Extractor::MeanRgb => FeatureSchema::MeanRgb,
            Extractor::Histogram { bins } => FeatureSchema::Histogram { bins },
        }
    }

    pub fn extract(self, image: &LabeledImage) -> Result<FeatureVector> {
        match self {
            Extractor::MeanRgb => Ok(mean_rgb(image)),
            Extractor::Histogram { bins } => color_histogram(image, bins),
        }
    }

    /// The extractor that produces `schema`, if it is a built-in one.
    pub fn for_schema(schema: FeatureSchema) -> Option<Self> {
        match schema {
            FeatureSchema::MeanRgb => Some(Extractor::MeanRgb),
            FeatureSchema::Histogram { bins } => Some(Extractor::Histogram { bins }),
            FeatureSchema::External { .. } => None,
        }
    }
}

/// Per-channel average intensity. Channel sums are accumulated exactly in
/// integers and divided once.
pub fn mean_rgb(image: &LabeledImage) -> FeatureVector {
    let mut sums = [0u64; 3];
    for px in image.pixels().chunks_exact(3) {
        sums[0] += px[0] as u64;
        sums[1] += px[1] as u64;
        sums[2] += px[2] as u64;
    }
    let n = image.pixel_count() as f64;
    FeatureVector {
        schema: FeatureSchema::MeanRgb,
        values: sums.iter().map(|&s| s as f64 / n).collect(),
    }
}

/// Bin index of an 8-bit value: `floor(v * bins / 256)`.
#[inline]
pub fn bin_of(v: u8, bins: usize) -> usize {
    v as usize * bins / 256
}

/// Per-channel histograms of normalized frequencies, blocks in R, G, B order.
pub fn color_histogram(image: &LabeledImage, bins: usize) -> Result<FeatureVector> {
    if bins == 0 {
        return Err(Error::arg("histogram bin count must be at least 1"));
    }
    let mut counts = vec![0u64; 3 * bins];
    for px in image.pixels().chunks_exact(3) {
        for c in 0..3 {
            counts[c * bins + bin_of(px[c], bins)] += 1;
        }
    }
    let n = image.pixel_count() as f64;
    Ok(FeatureVector {
        schema: FeatureSchema::Histogram { bins },
        values: counts.into_iter().map(|c| c as f64 / n).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub label: usize,
    pub split: Split,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub schema: FeatureSchema,
    pub class_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(schema: FeatureSchema, class_names: Vec<String>) -> Self {
        Self {
            schema,
            class_names,
            rows: Vec::new(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.schema.dim()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, label: usize, split: Split, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dim() {
            return Err(Error::arg(format!(
                "row has {} values but schema {} needs {}",
                values.len(),
                self.schema,
                self.dim()
            )));
        }
        if label >= self.n_classes() {
            return Err(Error::arg(format!("label {label} out of range for {} classes", self.n_classes())));
        }
        self.rows.push(FeatureRow { label, split, values });
        Ok(())
    }

    pub fn split(&self, split: Split) -> FeatureTable {
        FeatureTable {
            schema: self.schema,
            class_names: self.class_names.clone(),
            rows: self.rows.iter().filter(|r| r.split == split).cloned().collect(),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Row-major `len × dim` matrix.
    pub fn matrix(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| r.values.iter().copied()).collect()
    }
}

/// Applies `extractor` to every manifest entry. Row order follows the
/// manifest; undecodable entries are skipped or abort according to `policy`.
pub fn featurize_corpus(
    manifest: &CorpusManifest,
    extractor: Extractor,
    policy: LoadPolicy,
) -> Result<(FeatureTable, Vec<String>)> {
    let results = map_images(manifest, policy, |img| {
        let fv = extractor.extract(&img)?;
        Ok((img.label, img.split, fv.values))
    })?;
    let mut table = FeatureTable::new(extractor.schema(), manifest.class_names.clone());
    for (label, split, values) in results.items.into_iter().flatten() {
        table.push(label, split, values)?;
    }
    Ok((table, results.warnings))
}

fn format_float(v: f64) -> String {
    // 17 significant digits: exact round trip.
    format!("{v:.16e}")
}

pub fn feature_table_to_csv(table: &FeatureTable) -> String {
    let mut out = String::new();
    write_comment_header(&mut out, "schema", &table.schema.to_string());
    write_comment_header(&mut out, "classes", &table.class_names.join(","));
    out.push_str("label,split");
    for i in 0..table.dim() {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&table.class_names[row.label]);
        out.push(',');
        out.push_str(row.split.as_str());
        for v in &row.values {
            out.push(',');
            out.push_str(&format_float(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_feature_csv(table: &FeatureTable, path: &Path) -> Result<()> {
    write_file(path, feature_table_to_csv(table))
}

/// Parses a feature CSV. Class names come from `class_names` when given and
/// otherwise from the file's `# classes:` line. Without a `# schema:` line
/// the schema is `external-N` with N taken from the header.
pub fn feature_table_from_csv(text: &str, class_names: Option<&[String]>, file: &str) -> Result<FeatureTable> {
    let (meta, header_lines, body) = split_comment_header(text);
    let file_classes = meta.iter().find(|(k, _)| k == "classes").map(|(_, v)| parse_class_list(v));
    let classes = match (class_names, file_classes) {
        (Some(given), Some(found)) if given != found.as_slice() => {
            return Err(Error::parse(
                file,
                1,
                format!("class list [{}] does not match expected [{}]", found.join(","), given.join(",")),
            ))
        }
        (Some(given), _) => given.to_vec(),
        (None, Some(found)) => found,
        (None, None) => return Err(Error::parse(file, 1, "no `# classes:` line and no class list supplied")),
    };

    let mut lines = body.lines().enumerate().map(|(i, l)| (header_lines as u64 + i as u64 + 1, l));
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| Error::parse(file, header_lines as u64 + 1, "missing header row"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 3 || columns[0] != "label" || columns[1] != "split" {
        return Err(Error::parse(file, header_line, "expected header `label,split,f0,...`"));
    }
    for (i, c) in columns[2..].iter().enumerate() {
        if *c != format!("f{i}") {
            return Err(Error::parse(file, header_line, format!("expected column f{i}, found `{c}`")));
        }
    }
    let dim = columns.len() - 2;
    let schema = match meta.iter().find(|(k, _)| k == "schema") {
        Some((_, s)) => s.parse::<FeatureSchema>().map_err(|e| Error::parse(file, 1, e.to_string()))?,
        None => FeatureSchema::External { dim },
    };
    if schema.dim() != dim {
        return Err(Error::parse(
            file,
            header_line,
            format!("schema {schema} needs {} columns, header has {dim}", schema.dim()),
        ));
    }

    let mut table = FeatureTable::new(schema, classes);
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(Error::parse(
                file,
                line,
                format!("expected {} fields, found {}", dim + 2, fields.len()),
            ));
        }
        let label = table
            .class_names
            .iter()
            .position(|c| c == fields[0])
            .ok_or_else(|| Error::parse(file, line, format!("unknown class `{}`", fields[0])))?;
        let split: Split = fields[1].parse().map_err(|e: Error| Error::parse(file, line, e.to_string()))?;
        let mut values = Vec::with_capacity(dim);
        for (i, f) in fields[2..].iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::parse(file, line, format!("f{i}: `{f}` is not a number")))?;
            if !v.is_finite() {
                return Err(Error::parse(file, line, format!("f{i}: non-finite value `{f}`")));
            }
            values.push(v);
        }
        table.push(label, split, values).map_err(|e| Error::parse(file, line, e.to_string()))?;
    }
    Ok(table)
}

pub fn read_feature_csv(path: &Path, class_names: Option<&[String]>) -> Result<FeatureTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    feature_table_from_csv(&text, class_names, &path.display().to_string())
}

/// Ingests externally computed features (e.g. CNN embeddings).
pub fn load_external_features(path: &Path, class_names: Option<&[String]>) -> Result<FeatureTable> {
    let table = read_feature_csv(path, class_names)?;
    match table.schema {
        FeatureSchema::External { .. } => Ok(table),
        other => Err(Error::arg(format!(
            "{} holds built-in {other} features, not external ones",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn img(w: u32, h: u32, px: &[[u8; 3]]) -> LabeledImage {
        LabeledImage::from_rgb(px.iter().flatten().copied().collect(), w, h).unwrap()
    }

    #[test]
    fn mean_of_solid_and_two_point() {
        assert_eq!(mean_rgb(&LabeledImage::solid(3, 2, [10, 20, 30])).values, [10.0, 20.0, 30.0]);
        let two = img(2, 1, &[[0, 0, 0], [255, 255, 255]]);
        assert_eq!(mean_rgb(&two).values, [127.5, 127.5, 127.5]);
    }

    #[test]
    fn mean_matches_brute_force_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let px: Vec<u8> = (0..48).map(|_| rng.random()).collect();
            let image = LabeledImage::from_rgb(px.clone(), 4, 4).unwrap();
            // independent oracle: sum channel c by striding
            let oracle: Vec<f64> = (0..3)
                .map(|c| px.iter().skip(c).step_by(3).map(|&v| v as u32).sum::<u32>() as f64 / 16.0)
                .collect();
            assert_eq!(mean_rgb(&image).values, oracle);
        }
    }

    #[test]
    fn white_lands_in_last_bin() {
        let h = color_histogram(&LabeledImage::solid(4, 4, [255, 255, 255]), 16).unwrap();
        for c in 0..3 {
            let block = &h.values[c * 16..(c + 1) * 16];
            assert_eq!(block[15], 1.0);
            assert!(block[..15].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn red_bins_follow_floor_rule() {
        let image = img(2, 2, &[[0, 0, 0], [15, 0, 0], [16, 0, 0], [255, 0, 0]]);
        let h = color_histogram(&image, 16).unwrap();
        let mut expected = [0.0; 16];
        expected[0] = 0.5;
        expected[1] = 0.25;
        expected[15] = 0.25;
        assert_eq!(&h.values[..16], &expected);
    }

    #[test]
    fn bin_rule_edges() {
        assert_eq!(bin_of(255, 16), 15);
        assert_eq!(bin_of(255, 1), 0);
        assert_eq!(bin_of(255, 3), 2);
        assert_eq!(bin_of(85, 3), 0);
        assert_eq!(bin_of(86, 3), 1);
        for v in 0..=255u8 {
            assert_eq!(bin_of(v, 16), v as usize / 16);
        }
    }

    #[test]
    fn zero_bins_rejected() {
        assert!(color_histogram(&LabeledImage::solid(1, 1, [0, 0, 0]), 0).is_err());
    }

    #[test]
    fn solid_mass_at_256_bins() {
        for v in [0u8, 1, 77, 128, 254, 255] {
            let h = color_histogram(&LabeledImage::solid(3, 3, [v, v, v]), 256).unwrap();
            for c in 0..3 {
                assert_eq!(h.values[c * 256 + v as usize], 1.0);
            }
        }
    }

    #[test]
    fn schema_names_round_trip() {
        for s in [
            FeatureSchema::MeanRgb,
            FeatureSchema::Histogram { bins: 16 },
            FeatureSchema::External { dim: 1280 },
        ] {
            assert_eq!(s.to_string().parse::<FeatureSchema>().unwrap(), s);
        }
        assert!("hist-3x0".parse::<FeatureSchema>().is_err());
        assert!("rgb".parse::<FeatureSchema>().is_err());
    }

    #[test]
    fn external_csv_errors_carry_line_numbers() {
        let classes = vec!["A".to_string(), "B".to_string()];
        let ok = "label,split,f0,f1\nA,train,1,2\nB,test,3.5,-4e2\n";
        let t = feature_table_from_csv(ok, Some(&classes), "x").unwrap();
        assert_eq!(t.schema, FeatureSchema::External { dim: 2 });
        assert_eq!(t.rows[1].values, [3.5, -400.0]);

        let ragged = "label,split,f0,f1\nA,train,1,2\nB,test,3\n";
        assert!(matches!(feature_table_from_csv(ragged, Some(&classes), "x"), Err(Error::Parse { line: 3, .. })));
        let nan = "label,split,f0\nA,train,NaN\n";
        assert!(matches!(feature_table_from_csv(nan, Some(&classes), "x"), Err(Error::Parse { line: 2, .. })));
        let inf = "# classes: A,B\nlabel,split,f0\nA,train,1\nA,train,inf\n";
        assert!(matches!(feature_table_from_csv(inf, None, "x"), Err(Error::Parse { line: 4, .. })));
        let unknown = "label,split,f0\nC,train,1\n";
        assert!(matches!(feature_table_from_csv(unknown, Some(&classes), "x"), Err(Error::Parse { line: 2, .. })));
        assert!(feature_table_from_csv("label,split,f0\n", None, "x").is_err());
    }

    proptest! {
        #[test]
        fn histogram_blocks_sum_to_one_and_ignore_pixel_order(
            (w, h, px) in (1u32..8, 1u32..8).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), proptest::collection::vec(any::<u8>(), (w * h * 3) as usize))
            }),
            bins in 1usize..40,
            seed in any::<u64>(),
        ) {
            let image = LabeledImage::from_rgb(px.clone(), w, h).unwrap();
            let hist = color_histogram(&image, bins).unwrap();
            for c in 0..3 {
                let s: f64 = hist.values[c * bins..(c + 1) * bins].iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
            }
            // permute pixels
            let mut triples: Vec<[u8; 3]> = px.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..triples.len()).rev() {
                triples.swap(i, rng.random_range(0..=i));
            }
            let shuffled = LabeledImage::from_rgb(triples.concat(), w, h).unwrap();
            prop_assert_eq!(color_histogram(&shuffled, bins).unwrap(), hist);
            prop_assert_eq!(mean_rgb(&shuffled), mean_rgb(&image));
        }

        #[test]
        fn feature_csv_round_trip(rows in proptest::collection::vec(
            (0usize..3, any::<bool>(), proptest::collection::vec(-1e12f64..1e12, 4)), 0..10)) {
            let mut t = FeatureTable::new(FeatureSchema::External { dim: 4 }, vec!["a".into(), "b".into(), "c".into()]);
            for (l, tr, v) in rows {
                t.push(l, if tr { Split::Train } else { Split::Test }, v).unwrap();
            }
            let back = feature_table_from_csv(&feature_table_to_csv(&t), None, "x").unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
