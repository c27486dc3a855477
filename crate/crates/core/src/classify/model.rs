use std::collections::{BTreeMap, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};

use super::discretize::Discretizer;
use super::{class_index, class_label, ClassifierKind, Dataset, IF, IL};
use crate::error::{Error, Result};
use crate::model::IntentLabel;

/// Laplace-smoothed class priors, (N_l + 1) / (N + 2).
pub fn laplace_priors(counts: [usize; 2]) -> [f64; 2] {
    let n = (counts[0] + counts[1]) as f64;
    [(counts[0] as f64 + 1.0) / (n + 2.0), (counts[1] as f64 + 1.0) / (n + 2.0)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyRow {
    pub key: Vec<u8>,
    /// Instances per class, Intentless first.
    pub counts: [u32; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTable {
    pub schema: Vec<usize>,
    pub body: Vec<BodyRow>,
    pub default: IntentLabel,
}

impl DecisionTable {
    pub fn fit(x: &[Vec<u8>], y: &[usize], schema: &[usize]) -> Self {
        let mut body: BTreeMap<Vec<u8>, [u32; 2]> = BTreeMap::new();
        let mut class_counts = [0usize; 2];
        for (row, &label) in x.iter().zip(y) {
            body.entry(project(row, schema)).or_default()[label] += 1;
            class_counts[label] += 1;
        }
        DecisionTable {
            schema: schema.to_vec(),
            body: body.into_iter().map(|(key, counts)| BodyRow { key, counts }).collect(),
            default: class_label(majority(class_counts)),
        }
    }

    fn lookup(&self, key: &[u8]) -> Option<[u32; 2]> {
        self.body
            .binary_search_by(|r| r.key.as_slice().cmp(key))
            .ok()
            .map(|i| self.body[i].counts)
    }

    /// (c_l + 1) / (N_match + 2) for a matching row, else the priors.
    pub fn posterior(&self, binned: &[u8], priors: [f64; 2]) -> [f64; 2] {
        match self.lookup(&project(binned, &self.schema)) {
            Some(c) => dt_posterior(c[0] as usize, c[1] as usize).unwrap_or(priors),
            None => priors,
        }
    }
}

fn dt_posterior(c_il: usize, c_if: usize) -> Option<[f64; 2]> {
    let n = c_il + c_if;
    (n > 0).then(|| {
        let d = n as f64 + 2.0;
        [(c_il as f64 + 1.0) / d, (c_if as f64 + 1.0) / d]
    })
}

pub(crate) fn majority(counts: [usize; 2]) -> usize {
    if counts[IF] > counts[IL] {
        IF
    } else {
        IL
    }
}

pub(crate) fn project(row: &[u8], schema: &[usize]) -> Vec<u8> {
    schema.iter().map(|&j| row[j]).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    pub features: Vec<usize>,
    pub priors: [f64; 2],
    /// conditionals[i][bin][class] for feature `features[i]`.
    pub conditionals: Vec<Vec<[f64; 2]>>,
}

impl NaiveBayes {
    pub fn fit(x: &[Vec<u8>], y: &[usize], features: &[usize], disc: &Discretizer) -> Self {
        let mut class_counts = [0usize; 2];
        for &l in y {
            class_counts[l] += 1;
        }
        let conditionals = features
            .iter()
            .map(|&j| {
                let bins = disc.bin_count(j);
                let mut counts = vec![[0usize; 2]; bins];
                for (row, &l) in x.iter().zip(y) {
                    counts[row[j] as usize][l] += 1;
                }
                counts
                    .into_iter()
                    .map(|c| {
                        [0, 1].map(|l| (c[l] as f64 + 1.0) / (class_counts[l] + bins) as f64)
                    })
                    .collect()
            })
            .collect();
        NaiveBayes {
            features: features.to_vec(),
            priors: laplace_priors(class_counts),
            conditionals,
        }
    }

    /// Unnormalized log p(l) + Σ log p(f|l).
    fn log_joint(&self, binned: &[u8]) -> [f64; 2] {
        let mut out = self.priors.map(f64::ln);
        for (i, &j) in self.features.iter().enumerate() {
            let table = &self.conditionals[i];
            let bin = (binned[j] as usize).min(table.len() - 1);
            for l in 0..2 {
                out[l] += table[bin][l].ln();
            }
        }
        out
    }

    pub fn posterior(&self, binned: &[u8]) -> [f64; 2] {
        normalize_log(self.log_joint(binned))
    }
}

pub(crate) fn normalize_log(logs: [f64; 2]) -> [f64; 2] {
    let m = logs[0].max(logs[1]);
    let e = logs.map(|v| (v - m).exp());
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

/// A fitted intent classifier. DT-only models have no NB features and
/// NB-only models have an empty DT schema; the hybrid combines both as
/// P(l|f) ∝ P_DT(l|f_DT) · P_NB(l|f_NB) / P(l).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentModel {
    pub kind: ClassifierKind,
    pub feature_names: Vec<String>,
    pub discretizer: Discretizer,
    pub dt: DecisionTable,
    pub nb: NaiveBayes,
    /// Set when the training data held a single class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_class: Option<IntentLabel>,
}

impl IntentModel {
    /// Fits tables for fixed DT and NB feature sets (indices into the
    /// dataset's columns).
    pub fn fit_with(
        kind: ClassifierKind,
        data: &Dataset,
        bins: usize,
        dt_schema: &[usize],
        nb_features: &[usize],
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let disc = Discretizer::fit(&data.rows, bins)?;
        let x: Vec<Vec<u8>> = data.rows.iter().map(|r| disc.transform(r)).collect();
        let y: Vec<usize> = data.labels.iter().map(|&l| class_index(l)).collect();
        Ok(Self::from_binned(kind, data.feature_names.clone(), disc, &x, &y, dt_schema, nb_features))
    }

    pub(crate) fn from_binned(
        kind: ClassifierKind,
        feature_names: Vec<String>,
        discretizer: Discretizer,
        x: &[Vec<u8>],
        y: &[usize],
        dt_schema: &[usize],
        nb_features: &[usize],
    ) -> Self {
        let dt = DecisionTable::fit(x, y, dt_schema);
        let nb = NaiveBayes::fit(x, y, nb_features, &discretizer);
        let single_class = match (y.contains(&IL), y.contains(&IF)) {
            (true, false) => Some(IntentLabel::Intentless),
            (false, true) => Some(IntentLabel::Intentful),
            _ => None,
        };
        if let Some(only) = single_class {
            warn!("training data holds only {only} instances; the model always predicts {only}");
        }
        IntentModel {
            kind,
            feature_names,
            discretizer,
            dt,
            nb,
            single_class,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.discretizer.width() != model.feature_names.len() {
            return Err(Error::NotFitted("discretizer width does not match feature names".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn priors(&self) -> [f64; 2] {
        self.nb.priors
    }

    /// Posterior (Intentless, Intentful) for a raw feature row.
    pub fn posterior(&self, row: &[f64]) -> Result<[f64; 2]> {
        if row.len() != self.feature_names.len() {
            return Err(Error::LengthMismatch(self.feature_names.len(), row.len()));
        }
        if let Some(only) = self.single_class {
            let mut p = [0.0; 2];
            p[class_index(only)] = 1.0;
            return Ok(p);
        }
        let binned = self.discretizer.transform(row);
        let p_dt = self.dt.posterior(&binned, self.priors());
        let nb = self.nb.log_joint(&binned);
        let p_nb = normalize_log(nb);
        let priors = self.priors();
        Ok(normalize_log([0, 1].map(|l| p_dt[l].ln() + p_nb[l].ln() - priors[l].ln())))
    }

    /// Label and posterior; equal posteriors resolve to Intentless.
    pub fn predict(&self, row: &[f64]) -> Result<(IntentLabel, [f64; 2])> {
        let p = self.posterior(row)?;
        let label = if p[IF] > p[IL] {
            IntentLabel::Intentful
        } else {
            IntentLabel::Intentless
        };
        Ok((label, p))
    }
}

/// Leave-one-out evaluation over a fixed binned training set.
pub(crate) struct LooScorer<'a> {
    x: &'a [Vec<u8>],
    y: &'a [usize],
    class_counts: [usize; 2],
    bins: Vec<usize>,
    /// nb_counts[feature][bin][class]
    nb_counts: Vec<Vec<[usize; 2]>>,
}

impl<'a> LooScorer<'a> {
    pub(crate) fn new(x: &'a [Vec<u8>], y: &'a [usize], disc: &Discretizer) -> Self {
        let width = disc.width();
        let bins: Vec<usize> = (0..width).map(|j| disc.bin_count(j)).collect();
        let mut nb_counts: Vec<Vec<[usize; 2]>> = bins.iter().map(|&b| vec![[0; 2]; b]).collect();
        let mut class_counts = [0; 2];
        for (row, &l) in x.iter().zip(y) {
            class_counts[l] += 1;
            for j in 0..width {
                nb_counts[j][row[j] as usize][l] += 1;
            }
        }
        LooScorer {
            x,
            y,
            class_counts,
            bins,
            nb_counts,
        }
    }

    /// Number of rows classified correctly when each is held out in turn.
    pub(crate) fn correct(&self, dt_schema: &[usize], nb_features: &[usize]) -> usize {
        let mut groups: HashMap<Vec<u8>, [usize; 2]> = HashMap::new();
        if !dt_schema.is_empty() {
            for (row, &l) in self.x.iter().zip(self.y) {
                groups.entry(project(row, dt_schema)).or_default()[l] += 1;
            }
        }
        let mut correct = 0;
        for (row, &own) in self.x.iter().zip(self.y) {
            let mut cc = self.class_counts;
            cc[own] -= 1;
            let priors = laplace_priors(cc);
            let p_dt = if dt_schema.is_empty() {
                priors
            } else {
                let mut c = groups[&project(row, dt_schema)];
                c[own] -= 1;
                dt_posterior(c[IL], c[IF]).unwrap_or(priors)
            };
            // P_DT · P_NB / P(l) ∝ P_DT · Π p(f|l)
            let mut score = p_dt.map(f64::ln);
            for &j in nb_features {
                let b = row[j] as usize;
                for l in 0..2 {
                    let mut c = self.nb_counts[j][b][l];
                    if l == own {
                        c -= 1;
                    }
                    score[l] += ((c as f64 + 1.0) / (cc[l] + self.bins[j]) as f64).ln();
                }
            }
            let predicted = if score[IF] > score[IL] { IF } else { IL };
            if predicted == own {
                correct += 1;
            }
        }
        correct
    }
}
