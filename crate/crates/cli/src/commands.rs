use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use patchaudit::classify::{evaluate, Evaluation, Model, SoftmaxParams};
use patchaudit::corpus::{read_manifest, scan_corpus, write_manifest, CorpusManifest, LoadPolicy, Split};
use patchaudit::features::{featurize_corpus, read_feature_csv, write_feature_csv, Extractor, FeatureSchema};
use patchaudit::forensics::{audit_corpus, AuditParams, BlockinessCalibration, CalibrationTexture, DEFAULT_GRID};
use patchaudit::perturb::{robustness_sweep, PerturbationSpec, RobustnessTable};
use patchaudit::synth::{generate_corpus, SynthSpec};

use crate::{
    usage_error, AuditArgs, Common, EvalArgs, ExtractorArg, FeaturizeArgs, ModelKind, PerturbArgs, Preset, ScanArgs,
    SynthArgs, TrainArgs,
};

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn extractor(kind: ExtractorArg, bins: u32) -> Extractor {
    match kind {
        ExtractorArg::MeanRgb => Extractor::MeanRgb,
        ExtractorArg::Histogram => Extractor::Histogram { bins: bins as usize },
    }
}

fn policy(common: &Common) -> LoadPolicy {
    LoadPolicy::from_strict(common.strict)
}

const TISSUE_NAMES: [(&str, &str); 9] = [
    ("ADI", "Adipose tissue"),
    ("BACK", "Background"),
    ("DEB", "Debris"),
    ("LYM", "Lymphocytes"),
    ("MUC", "Mucus"),
    ("MUS", "Smooth muscle"),
    ("NORM", "Normal colon mucosa"),
    ("STR", "Cancer-associated stroma"),
    ("TUM", "Colorectal adenocarcinoma epithelium"),
];

/// Class indices in display order with their display labels. The nine
/// NCT-CRC-HE tissue classes get their long names in the customary order;
/// any other class list is shown as is.
pub fn display_order(class_names: &[String]) -> Vec<(usize, String)> {
    let mut sorted: Vec<&str> = class_names.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    let is_tissue = sorted.len() == 9 && sorted.iter().zip(TISSUE_NAMES).all(|(a, (b, _))| *a == b);
    if !is_tissue {
        return class_names.iter().cloned().enumerate().collect();
    }
    TISSUE_NAMES
        .iter()
        .map(|(short, long)| {
            let idx = class_names.iter().position(|c| c == short).expect("checked above");
            (idx, format!("{long} ({short})"))
        })
        .collect()
}

fn percent(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

pub fn print_evaluation(eval: &Evaluation, class_names: &[String]) {
    println!("overall accuracy   {}%", percent(eval.accuracy));
    println!("balanced accuracy  {}%", percent(eval.balanced_accuracy));
    let order = display_order(class_names);
    let width = order.iter().map(|(_, l)| l.len()).max().unwrap_or(0);
    for (idx, label) in order {
        let recall = eval.per_class_recall[idx].map_or("n/a".to_string(), |r| format!("{}%", percent(r)));
        println!("  {label:<width$}  {recall:>8}  (n={})", eval.confusion.support(idx));
    }
}

pub fn scan(_common: &Common, args: ScanArgs) -> Result<()> {
    let manifest = scan_corpus(&args.root, args.split.into())?;
    write_manifest(&manifest, &args.out)?;
    println!(
        "{} images in {} classes -> {}",
        manifest.entries.len(),
        manifest.n_classes(),
        args.out.display()
    );
    Ok(())
}

pub fn featurize(common: &Common, args: FeaturizeArgs) -> Result<()> {
    let manifest = read_manifest(&args.manifest)?;
    let ex = extractor(args.extractor.extractor, args.extractor.bins);
    let (table, warnings) = featurize_corpus(&manifest, ex, policy(common))?;
    write_feature_csv(&table, &args.out)?;
    println!(
        "{} rows of {} ({} skipped) -> {}",
        table.len(),
        table.schema,
        warnings.len(),
        args.out.display()
    );
    Ok(())
}

/// Test entries of `test` if given, otherwise those of `train`.
fn audit_manifests(args: &AuditArgs) -> Result<(CorpusManifest, Option<CorpusManifest>)> {
    let full = read_manifest(&args.train)?;
    let train = full.split(Split::Train);
    let test = match &args.test {
        Some(path) => read_manifest(path)?.split(Split::Test),
        None => full.split(Split::Test),
    };
    if train.entries.is_empty() {
        bail!("{} has no train entries", args.train.display());
    }
    Ok((train, (!test.entries.is_empty()).then_some(test)))
}

pub fn audit(common: &Common, args: AuditArgs) -> Result<()> {
    if !(args.saturation_threshold > 0.0 && args.saturation_threshold <= 1.0) {
        usage_error("--saturation-threshold must be in (0, 1]");
    }
    let (train, test) = audit_manifests(&args)?;
    let calibration = if args.grid == DEFAULT_GRID {
        BlockinessCalibration::standard().clone()
    } else {
        BlockinessCalibration::measure(0, 32, 128, CalibrationTexture::default(), args.grid)?
    };
    let params = AuditParams {
        bins: args.bins as usize,
        saturation_threshold: args.saturation_threshold,
        calibration,
        policy: policy(common),
    };
    let report = audit_corpus(&train, test.as_ref(), &params)?;
    write_text(&args.out, &report.to_json()?)?;

    if let Some(dir) = &args.csv_dir {
        write_text(&dir.join("histograms_train.csv"), &report.histogram_csv(Split::Train))?;
        write_text(&dir.join("mean_rgb_train.csv"), &report.mean_rgb_csv(Split::Train))?;
        if test.is_some() {
            write_text(&dir.join("histograms_test.csv"), &report.histogram_csv(Split::Test))?;
            write_text(&dir.join("mean_rgb_test.csv"), &report.mean_rgb_csv(Split::Test))?;
        }
        write_text(&dir.join("blockiness.csv"), &report.blockiness_csv())?;
    }

    let images: usize = report.corpus.train_images.iter().chain(&report.corpus.test_images).sum();
    println!("audited {images} images ({} skipped) -> {}", report.corpus.skipped, args.out.display());
    if let Some(worst) = report.color_audit.pairwise.iter().min_by(|a, b| a.l1.total_cmp(&b.l1)) {
        println!("closest class pair by color: {} / {} (L1 {:.3})", worst.a, worst.b, worst.l1);
    }
    for c in report.clipping.iter().filter(|c| c.flagged > 0) {
        println!("clipping: {} {} has {}/{} flagged images", c.class, c.split, c.flagged, c.images);
    }
    for b in &report.blockiness.per_class {
        if let Some(s) = &b.scores {
            println!(
                "blockiness: {} {} median {:.3} (severe {}, moderate {}, minor {}, none {})",
                b.class, b.split, s.median, b.bands.severe, b.bands.moderate, b.bands.minor, b.bands.none
            );
        }
    }
    Ok(())
}

pub fn train(common: &Common, args: TrainArgs) -> Result<()> {
    let table = read_feature_csv(&args.features, None)?.split(Split::Train);
    if table.is_empty() {
        bail!("{} has no train rows", args.features.display());
    }
    let model = match args.kind {
        ModelKind::Forest => Model::train_forest(&table, &args.forest.params(), common.seed())?,
        ModelKind::Softmax => {
            let params = SoftmaxParams {
                learning_rate: args.learning_rate,
                epochs: args.epochs,
                l2: args.l2,
                standardize: !args.no_standardize,
            };
            Model::train_softmax(&table, &params, common.seed())?
        }
    };
    model.save(&args.out)?;
    println!(
        "{} trained on {} rows of {} -> {}",
        model.classifier.kind(),
        table.len(),
        table.schema,
        args.out.display()
    );
    Ok(())
}

fn eval_csv(eval: &Evaluation, class_names: &[String]) -> String {
    let mut out = String::from("class,support,correct,recall\n");
    for (i, name) in class_names.iter().enumerate() {
        let recall = eval.per_class_recall[i].map_or(String::new(), |r| r.to_string());
        out.push_str(&format!(
            "{name},{},{},{recall}\n",
            eval.confusion.support(i),
            eval.confusion.get(i, i)
        ));
    }
    out
}

fn confusion_csv(eval: &Evaluation, class_names: &[String]) -> String {
    let mut out = String::from("true,predicted,count\n");
    for (t, tn) in class_names.iter().enumerate() {
        for (p, pn) in class_names.iter().enumerate() {
            out.push_str(&format!("{tn},{pn},{}\n", eval.confusion.get(t, p)));
        }
    }
    out
}

pub fn eval(_common: &Common, args: EvalArgs) -> Result<()> {
    let model = Model::load(&args.model)?;
    let table = read_feature_csv(&args.features, None)?.split(args.split.into());
    if table.is_empty() {
        bail!("{} has no {:?} rows", args.features.display(), args.split);
    }
    let eval = evaluate(&model, &table)?;
    print_evaluation(&eval, &model.class_names);
    if let Some(path) = &args.out {
        write_text(path, &eval_csv(&eval, &model.class_names))?;
    }
    if let Some(path) = &args.confusion {
        write_text(path, &confusion_csv(&eval, &model.class_names))?;
    }
    Ok(())
}

fn perturbation_spec(args: &PerturbArgs) -> Result<PerturbationSpec> {
    if let Some(path) = &args.spec {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    let defaults = PerturbationSpec::default();
    Ok(PerturbationSpec {
        jpeg_qualities: args.jpeg.clone().unwrap_or(defaults.jpeg_qualities),
        hue_deltas_degrees: args.hue.clone().unwrap_or(defaults.hue_deltas_degrees),
    })
}

pub fn print_sweep(table: &RobustnessTable) {
    println!("{:<12} {:>9} {:>9} {:>9}", "perturbation", "accuracy", "balanced", "delta");
    for r in &table.rows {
        println!(
            "{:<12} {:>8}% {:>8}% {:>+8.2}",
            r.perturbation,
            percent(r.accuracy),
            percent(r.balanced_accuracy),
            100.0 * r.delta_accuracy
        );
    }
}

pub fn perturb(common: &Common, args: PerturbArgs) -> Result<()> {
    let spec = perturbation_spec(&args)?;
    let model = Model::load(&args.model)?;
    let ex = match (args.extractor, args.bins) {
        (Some(kind), bins) => extractor(kind, bins.unwrap_or(16)),
        (None, Some(_)) => usage_error("--bins requires --extractor"),
        (None, None) => match Extractor::for_schema(model.schema) {
            Some(ex) => ex,
            None => bail!("model was trained on {} features, which cannot be recomputed from images", model.schema),
        },
    };
    let manifest = read_manifest(&args.manifest)?.split(Split::Test);
    if manifest.entries.is_empty() {
        bail!("{} has no test entries", args.manifest.display());
    }
    let table = robustness_sweep(&model, &manifest, ex, &spec)?;
    let errors: u64 = table.load_errors + table.rows.iter().map(|r| r.errors).sum::<u64>();
    if common.strict && errors > 0 {
        bail!("{errors} images could not be loaded or perturbed");
    }
    write_text(&args.out, &table.to_csv())?;
    print_sweep(&table);
    Ok(())
}

pub fn synth(common: &Common, args: SynthArgs) -> Result<()> {
    let mut spec = match (&args.spec, args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SynthSpec::from_json(&text).with_context(|| format!("in {}", path.display()))?
        }
        (None, Some(Preset::ColorSignatures)) => SynthSpec::color_signatures(args.train_per_class, args.test_per_class),
        (None, Some(Preset::IdenticalMeans)) => SynthSpec::identical_means(args.train_per_class, args.test_per_class),
        (None, None) => usage_error("one of --spec or --preset is required"),
    };
    if args.preset.is_some() {
        spec = spec.with_size(args.size, args.size);
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let manifest = generate_corpus(&spec, &args.out)?;
    println!(
        "{} images in {} classes -> {}",
        manifest.entries.len(),
        manifest.n_classes(),
        args.out.join("manifest.csv").display()
    );
    Ok(())
}

/// Schema of the features a model consumes, for messages.
pub fn schema_label(schema: FeatureSchema) -> String {
    match schema {
        FeatureSchema::MeanRgb => "mean RGB".into(),
        FeatureSchema::Histogram { bins } => format!("{bins}-bin histogram"),
        FeatureSchema::External { dim } => format!("external ({dim})"),
    }
}
