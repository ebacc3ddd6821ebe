use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use patchaudit::classify::{evaluate, ConfusionMatrix, Evaluation, ForestParams, Model};
use patchaudit::corpus::{manifest_to_csv, map_images, merge_manifests, scan_corpus, LoadPolicy, Split};
use patchaudit::features::{color_histogram, feature_table_to_csv, mean_rgb, FeatureSchema, FeatureTable};
use patchaudit::FORMAT_VERSION;
use serde::Serialize;

use crate::commands::{display_order, write_text};
use crate::{Common, ReproArgs};

const LAYOUTS: [(&str, &str); 2] = [("train", "test"), ("NCT-CRC-HE-100K", "CRC-VAL-HE-7K")];

fn locate(args: &ReproArgs) -> Result<(PathBuf, PathBuf)> {
    let found = args.root.as_ref().and_then(|root| {
        LAYOUTS
            .iter()
            .map(|(tr, te)| (root.join(tr), root.join(te)))
            .find(|(tr, te)| tr.is_dir() && te.is_dir())
    });
    let train = args.train.clone().or_else(|| found.as_ref().map(|f| f.0.clone()));
    let test = args.test.clone().or_else(|| found.as_ref().map(|f| f.1.clone()));
    match (train, test) {
        (Some(tr), Some(te)) => Ok((tr, te)),
        _ => bail!(
            "no train/test layout under {}: expected train/ and test/, or NCT-CRC-HE-100K/ and CRC-VAL-HE-7K/",
            args.root.as_deref().map_or("<none>".into(), |p| p.display().to_string())
        ),
    }
}

#[derive(Serialize)]
struct FeatureResult {
    features: FeatureSchema,
    accuracy: f64,
    balanced_accuracy: f64,
    per_class_recall: Vec<Option<f64>>,
    confusion: ConfusionMatrix,
}

#[derive(Serialize)]
struct ReproReport {
    format_version: u32,
    seed: u64,
    forest: ForestParams,
    class_names: Vec<String>,
    train_images: Vec<usize>,
    test_images: Vec<usize>,
    skipped: usize,
    results: Vec<FeatureResult>,
    warnings: Vec<String>,
}

fn counts(table: &FeatureTable, split: Split) -> Vec<usize> {
    let mut v = vec![0; table.n_classes()];
    table.rows.iter().filter(|r| r.split == split).for_each(|r| v[r.label] += 1);
    v
}

fn file_stem(schema: FeatureSchema) -> String {
    match schema {
        FeatureSchema::MeanRgb => "mean_rgb".into(),
        other => other.to_string().replace('-', "_"),
    }
}

pub fn run(common: &Common, args: ReproArgs) -> Result<()> {
    let (train_root, test_root) = locate(&args)?;
    let train = scan_corpus(&train_root, Split::Train).with_context(|| format!("scanning {}", train_root.display()))?;
    let test = scan_corpus(&test_root, Split::Test).with_context(|| format!("scanning {}", test_root.display()))?;
    let manifest = merge_manifests(&train, &test)?;
    let bins = args.bins as usize;

    let results = map_images(&manifest, LoadPolicy::from_strict(common.strict), |img| {
        Ok((img.label, img.split, mean_rgb(&img).values, color_histogram(&img, bins)?.values))
    })?;
    let mut mean_table = FeatureTable::new(FeatureSchema::MeanRgb, manifest.class_names.clone());
    let mut hist_table = FeatureTable::new(FeatureSchema::Histogram { bins }, manifest.class_names.clone());
    for (label, split, m, h) in results.items.into_iter().flatten() {
        mean_table.push(label, split, m)?;
        hist_table.push(label, split, h)?;
    }
    let mut warnings = manifest.warnings.clone();
    warnings.extend(results.warnings.iter().cloned());
    let skipped = results.warnings.len();

    let params = args.forest.params();
    let seed = common.seed();
    let mut evaluated: Vec<(FeatureTable, Model, Evaluation)> = Vec::new();
    for table in [mean_table, hist_table] {
        let train_rows = table.split(Split::Train);
        let test_rows = table.split(Split::Test);
        if test_rows.is_empty() {
            bail!("no readable test images under {}", test_root.display());
        }
        let model = Model::train_forest(&train_rows, &params, seed)?;
        let eval = evaluate(&model, &test_rows)?;
        warnings.extend(eval.warnings.iter().cloned());
        evaluated.push((table, model, eval));
    }

    print_table(&manifest.class_names, &evaluated);

    if let Some(out) = &args.out {
        write_outputs(out, &manifest, &evaluated)?;
        let (first, _, _) = &evaluated[0];
        let report = ReproReport {
            format_version: FORMAT_VERSION,
            seed,
            forest: params,
            class_names: manifest.class_names.clone(),
            train_images: counts(first, Split::Train),
            test_images: counts(first, Split::Test),
            skipped,
            results: evaluated
                .iter()
                .map(|(t, _, e)| FeatureResult {
                    features: t.schema,
                    accuracy: e.accuracy,
                    balanced_accuracy: e.balanced_accuracy,
                    per_class_recall: e.per_class_recall.clone(),
                    confusion: e.confusion.clone(),
                })
                .collect(),
            warnings,
        };
        write_text(&out.join("report.json"), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(())
}

fn write_outputs(
    out: &Path,
    manifest: &patchaudit::corpus::CorpusManifest,
    evaluated: &[(FeatureTable, Model, Evaluation)],
) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_text(&out.join("manifest.csv"), &manifest_to_csv(manifest, out)?)?;
    for (table, model, _) in evaluated {
        let stem = file_stem(table.schema);
        write_text(&out.join(format!("features_{stem}.csv")), &feature_table_to_csv(table))?;
        write_text(&out.join(format!("model_{stem}.json")), &model.to_json()?)?;
    }
    Ok(())
}

fn print_table(class_names: &[String], evaluated: &[(FeatureTable, Model, Evaluation)]) {
    let order = display_order(class_names);
    let width = order.iter().map(|(_, l)| l.len()).max().unwrap_or(0).max(17);
    let header: Vec<String> = evaluated.iter().map(|(t, _, _)| crate::commands::schema_label(t.schema)).collect();
    print!("{:<width$}", "recall (%)");
    header.iter().for_each(|h| print!("  {h:>17}"));
    println!();
    for (idx, label) in &order {
        print!("{label:<width$}");
        for (_, _, e) in evaluated {
            let cell = e.per_class_recall[*idx].map_or("n/a".into(), |r| format!("{:.2}", 100.0 * r));
            print!("  {cell:>17}");
        }
        println!();
    }
    println!();
    for ((table, _, e), label) in evaluated.iter().zip(&header) {
        println!(
            "{label} + random forest ({}): accuracy {:.2}%, balanced accuracy {:.2}%",
            table.schema,
            100.0 * e.accuracy,
            100.0 * e.balanced_accuracy
        );
    }
}
