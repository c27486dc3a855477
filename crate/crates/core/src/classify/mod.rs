//! Decision Table, Naive Bayes and the DT/NB hybrid for visit intent, with
//! leave-one-out driven feature selection and cross-validated evaluation.
//!
//! Class index 0 is Intentless and 1 is Intentful throughout; every tie
//! resolves to Intentless.

mod discretize;
mod eval;
mod model;
mod search;

pub use discretize::{equal_frequency_edges, Discretizer};
pub use eval::{classification_report, evaluate_classifier, ClassMetrics, CvScheme, EvalReport};
pub use model::{laplace_priors, BodyRow, DecisionTable, IntentModel, NaiveBayes};
pub use search::{loo_accuracy, train, train_dt, train_dtnb, train_nb};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_name, FeatureSet, FeatureVector};
use crate::model::IntentLabel;

pub(crate) const IL: usize = 0;
pub(crate) const IF: usize = 1;

pub(crate) fn class_index(label: IntentLabel) -> usize {
    match label {
        IntentLabel::Intentless => IL,
        IntentLabel::Intentful => IF,
    }
}

pub(crate) fn class_label(index: usize) -> IntentLabel {
    if index == IF {
        IntentLabel::Intentful
    } else {
        IntentLabel::Intentless
    }
}

pub const DEFAULT_BINS: usize = 5;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Dt,
    Nb,
    Dtnb,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dt" => Ok(ClassifierKind::Dt),
            "nb" => Ok(ClassifierKind::Nb),
            "dtnb" => Ok(ClassifierKind::Dtnb),
            other => Err(Error::Config(format!("unknown classifier `{other}`"))),
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassifierKind::Dt => "dt",
            ClassifierKind::Nb => "nb",
            ClassifierKind::Dtnb => "dtnb",
        })
    }
}

/// Labelled rows over a named subset of the feature columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<IntentLabel>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<IntentLabel>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch(rows.len(), labels.len()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != feature_names.len()) {
            return Err(Error::LengthMismatch(feature_names.len(), r.len()));
        }
        Ok(Dataset {
            feature_names,
            rows,
            labels,
        })
    }

    /// Labelled vectors projected onto a feature set; unlabelled rows are skipped.
    pub fn from_features(vectors: &[FeatureVector], set: &FeatureSet) -> Self {
        let cols = set.columns();
        let (rows, labels) = vectors
            .iter()
            .filter_map(|v| {
                let label = v.label?;
                Some((cols.iter().map(|&c| v.values[c]).collect(), label))
            })
            .unzip();
        Dataset {
            feature_names: cols.into_iter().map(feature_name).collect(),
            rows,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut c = [0; 2];
        for &l in &self.labels {
            c[class_index(l)] += 1;
        }
        c
    }
}
