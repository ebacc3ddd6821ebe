//! Shallow classifiers over feature tables and their evaluation.

mod forest;
mod metrics;
mod softmax;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{bootstrap_sample, train_forest, DecisionTree, ForestParams, RandomForest, TrainingSet, TreeNode};
pub use metrics::ConfusionMatrix;
pub use softmax::{loss_and_gradient, train_softmax, SoftmaxParams, SoftmaxProbe};

use crate::error::{write_file, Error, Result};
use crate::features::{FeatureSchema, FeatureTable};
use crate::{par, FORMAT_VERSION};

pub trait ProbabilisticClassifier {
    fn n_features(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Most probable class (lowest index on ties) with the full distribution.
    fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let p = self.predict_proba(x)?;
        Ok((argmax(&p), p))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_dim(x: &[f64], n_features: usize) -> Result<()> {
    if x.len() == n_features {
        Ok(())
    } else {
        Err(Error::arg(format!(
            "feature vector has {} values, model expects {n_features}",
            x.len()
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Forest(RandomForest),
    Softmax(SoftmaxProbe),
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Forest(_) => "forest",
            Classifier::Softmax(_) => "softmax",
        }
    }
}

impl ProbabilisticClassifier for Classifier {
    fn n_features(&self) -> usize {
        match self {
            Classifier::Forest(m) => m.n_features(),
            Classifier::Softmax(m) => m.n_features(),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            Classifier::Forest(m) => m.n_classes(),
            Classifier::Softmax(m) => m.n_classes(),
        }
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Classifier::Forest(m) => m.predict_proba(x),
            Classifier::Softmax(m) => m.predict_proba(x),
        }
    }
}

/// A trained classifier bound to the feature schema and class list it was
/// trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub schema: FeatureSchema,
    pub class_names: Vec<String>,
    pub classifier: Classifier,
}

impl ProbabilisticClassifier for Model {
    fn n_features(&self) -> usize {
        self.classifier.n_features()
    }

    fn n_classes(&self) -> usize {
        self.classifier.n_classes()
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.classifier.predict_proba(x)
    }
}

fn training_set(table: &FeatureTable) -> (Vec<f64>, Vec<usize>) {
    (table.matrix(), table.labels())
}

impl Model {
    /// Trains a forest on every row of `table`.
    pub fn train_forest(table: &FeatureTable, params: &ForestParams, seed: u64) -> Result<Self> {
        let (x, y) = training_set(table);
        let set = TrainingSet::new(&x, &y, table.dim(), table.n_classes())?;
        Ok(Self {
            schema: table.schema,
            class_names: table.class_names.clone(),
            classifier: Classifier::Forest(train_forest(set, params, seed)?),
        })
    }

    /// Trains a softmax probe on every row of `table`.
    pub fn train_softmax(table: &FeatureTable, params: &SoftmaxParams, seed: u64) -> Result<Self> {
        let (x, y) = training_set(table);
        let set = TrainingSet::new(&x, &y, table.dim(), table.n_classes())?;
        Ok(Self {
            schema: table.schema,
            class_names: table.class_names.clone(),
            classifier: Classifier::Softmax(train_softmax(set, params, seed)?),
        })
    }

    pub fn check_compatible(&self, schema: FeatureSchema, class_names: &[String]) -> Result<()> {
        if schema != self.schema {
            return Err(Error::SchemaMismatch {
                expected: self.schema.to_string(),
                actual: schema.to_string(),
            });
        }
        if class_names != self.class_names.as_slice() {
            return Err(Error::SchemaMismatch {
                expected: format!("classes [{}]", self.class_names.join(",")),
                actual: format!("classes [{}]", class_names.join(",")),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let (hyperparams, master_seed, body) = match &self.classifier {
            Classifier::Forest(f) => (
                serde_json::to_value(&f.params)?,
                f.seed,
                serde_json::to_value(ForestBody {
                    n_features: f.n_features,
                    n_classes: f.n_classes,
                    trees: f.trees.clone(),
                })?,
            ),
            Classifier::Softmax(s) => (
                serde_json::to_value(&s.params)?,
                s.seed,
                serde_json::to_value(SoftmaxBody {
                    n_features: s.n_features,
                    n_classes: s.n_classes,
                    weights: s.weights.clone(),
                    feature_mean: s.feature_mean.clone(),
                    feature_scale: s.feature_scale.clone(),
                })?,
            ),
        };
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            kind: self.classifier.kind().to_string(),
            schema: self.schema,
            class_names: self.class_names.clone(),
            hyperparams,
            master_seed,
            body,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::arg(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                file.format_version
            )));
        }
        let classifier = match file.kind.as_str() {
            "forest" => {
                let body: ForestBody = serde_json::from_value(file.body)?;
                let forest = RandomForest {
                    trees: body.trees,
                    n_features: body.n_features,
                    n_classes: body.n_classes,
                    params: serde_json::from_value(file.hyperparams)?,
                    seed: file.master_seed,
                };
                forest.validate()?;
                Classifier::Forest(forest)
            }
            "softmax" => {
                let body: SoftmaxBody = serde_json::from_value(file.body)?;
                let probe = SoftmaxProbe {
                    n_features: body.n_features,
                    n_classes: body.n_classes,
                    weights: body.weights,
                    feature_mean: body.feature_mean,
                    feature_scale: body.feature_scale,
                    params: serde_json::from_value(file.hyperparams)?,
                    seed: file.master_seed,
                    loss_history: Vec::new(),
                };
                probe.validate()?;
                Classifier::Softmax(probe)
            }
            other => return Err(Error::arg(format!("unknown model kind `{other}`"))),
        };
        if classifier.n_features() != file.schema.dim() || classifier.n_classes() != file.class_names.len() {
            return Err(Error::arg("model body does not match its header"));
        }
        Ok(Self {
            schema: file.schema,
            class_names: file.class_names,
            classifier,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: String,
    schema: FeatureSchema,
    class_names: Vec<String>,
    hyperparams: serde_json::Value,
    master_seed: u64,
    body: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct ForestBody {
    n_features: usize,
    n_classes: usize,
    trees: Vec<DecisionTree>,
}

#[derive(Serialize, Deserialize)]
struct SoftmaxBody {
    n_features: usize,
    n_classes: usize,
    weights: Vec<f64>,
    feature_mean: Vec<f64>,
    feature_scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// Recall per class, `None` where the class has no test rows.
    pub per_class_recall: Vec<Option<f64>>,
    pub warnings: Vec<String>,
}

impl Evaluation {
    pub fn from_confusion(confusion: ConfusionMatrix, class_names: &[String]) -> Self {
        let warnings = confusion
            .empty_classes()
            .into_iter()
            .map(|c| {
                let msg = format!(
                    "class {} has no test samples; excluded from balanced accuracy",
                    class_names.get(c).map(String::as_str).unwrap_or("?")
                );
                log::warn!("{msg}");
                msg
            })
            .collect();
        Self {
            accuracy: confusion.accuracy(),
            balanced_accuracy: confusion.balanced_accuracy(),
            per_class_recall: confusion.per_class_recall(),
            confusion,
            warnings,
        }
    }
}

/// Predicts every row of `table` and tallies the confusion matrix.
pub fn evaluate(model: &Model, table: &FeatureTable) -> Result<Evaluation> {
    model.check_compatible(table.schema, &table.class_names)?;
    let predictions = par::map(&table.rows, |_, row| model.predict(&row.values).map(|(c, _)| c));
    let mut confusion = ConfusionMatrix::new(model.n_classes());
    for (row, pred) in table.rows.iter().zip(predictions) {
        confusion.record(row.label, pred?)?;
    }
    Ok(Evaluation::from_confusion(confusion, &model.class_names))
}
