use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::search::train;
use super::{class_index, ClassifierKind, Dataset, IF, IL};
use crate::error::{Error, Result};
use crate::model::IntentLabel;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvScheme {
    Loo,
    KFold(usize),
}

impl std::str::FromStr for CvScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "loo" {
            return Ok(CvScheme::Loo);
        }
        let k = s
            .strip_prefix("kfold:")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 2)
            .ok_or_else(|| Error::Config(format!("cv scheme must be `loo` or `kfold:N` with N ≥ 2, got `{s}`")))?;
        Ok(CvScheme::KFold(k))
    }
}

impl std::fmt::Display for CvScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CvScheme::Loo => f.write_str("loo"),
            CvScheme::KFold(k) => write!(f, "kfold:{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class: BTreeMap<IntentLabel, ClassMetrics>,
    /// Support-weighted averages over the two classes.
    pub weighted: ClassMetrics,
    /// confusion[actual][predicted], Intentless first.
    pub confusion: [[usize; 2]; 2],
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Accuracy plus per-class and support-weighted precision, recall and F.
/// An undefined precision or recall (no predictions, no support) counts as 0.
pub fn classification_report(actual: &[IntentLabel], predicted: &[IntentLabel]) -> Result<EvalReport> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch(actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(Error::InvalidInput("no predictions to evaluate".into()));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&a, &p) in actual.iter().zip(predicted) {
        confusion[class_index(a)][class_index(p)] += 1;
    }
    let n = actual.len();
    let mut per_class = BTreeMap::new();
    let mut weighted = ClassMetrics {
        precision: 0.0,
        recall: 0.0,
        f_score: 0.0,
        support: n,
    };
    for (c, label) in [(IL, IntentLabel::Intentless), (IF, IntentLabel::Intentful)] {
        let tp = confusion[c][c];
        let support = confusion[c][0] + confusion[c][1];
        let predicted_c = confusion[0][c] + confusion[1][c];
        let precision = ratio(tp, predicted_c);
        let recall = ratio(tp, support);
        let f_score = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let w = support as f64 / n as f64;
        weighted.precision += w * precision;
        weighted.recall += w * recall;
        weighted.f_score += w * f_score;
        per_class.insert(
            label,
            ClassMetrics {
                precision,
                recall,
                f_score,
                support,
            },
        );
    }
    Ok(EvalReport {
        accuracy: ratio(confusion[0][0] + confusion[1][1], n),
        per_class,
        weighted,
        confusion,
    })
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub(crate) fn stratified_folds(labels: &[IntentLabel], k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [IntentLabel::Intentless, IntentLabel::Intentful] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// Cross-validated predictions of a classifier trained from scratch (feature
/// selection included) on each training split.
pub fn cross_val_predict(
    kind: ClassifierKind,
    data: &Dataset,
    scheme: CvScheme,
    bins: usize,
    seed: u64,
) -> Result<Vec<IntentLabel>> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let folds = match scheme {
        CvScheme::Loo => (0..n).map(|i| vec![i]).collect(),
        CvScheme::KFold(k) if k > n => {
            return Err(Error::InvalidInput(format!("{k} folds for {n} rows")));
        }
        CvScheme::KFold(k) => stratified_folds(&data.labels, k, seed),
    };
    let mut predicted = vec![IntentLabel::Intentless; n];
    for test in &folds {
        let train_idx: Vec<usize> = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
        let model = train(kind, &data.select_rows(&train_idx), bins)?;
        for &i in test {
            predicted[i] = model.predict(&data.rows[i])?.0;
        }
    }
    Ok(predicted)
}

pub fn evaluate_classifier(
    kind: ClassifierKind,
    data: &Dataset,
    scheme: CvScheme,
    bins: usize,
    seed: u64,
) -> Result<EvalReport> {
    let predicted = cross_val_predict(kind, data, scheme, bins, seed)?;
    classification_report(&data.labels, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use IntentLabel::{Intentful as F, Intentless as L};

    #[test]
    fn perfect_predictions() {
        let y = [F, L, L, F];
        let r = classification_report(&y, &y).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!((r.weighted.precision, r.weighted.recall, r.weighted.f_score), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_majority_on_48_128() {
        let mut actual = vec![F; 48];
        actual.extend(vec![L; 128]);
        let predicted = vec![L; 176];
        let r = classification_report(&actual, &predicted).unwrap();
        assert!((r.accuracy - 0.7273).abs() < 1e-4);
        assert_eq!(r.per_class[&F].precision, 0.0);
        assert!((r.weighted.precision - 0.53).abs() < 0.005);
        assert!((r.weighted.recall - 0.73).abs() < 0.005);
        assert!((r.weighted.f_score - 0.61).abs() < 0.005);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("loo".parse::<CvScheme>().unwrap(), CvScheme::Loo);
        assert_eq!("kfold:10".parse::<CvScheme>().unwrap(), CvScheme::KFold(10));
        assert!("kfold:1".parse::<CvScheme>().is_err());
        assert!("holdout".parse::<CvScheme>().is_err());
    }

    #[test]
    fn folds_are_stratified_and_complete() {
        let mut labels = vec![F; 48];
        labels.extend(vec![L; 128]);
        let folds = stratified_folds(&labels, 10, 3);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..176).collect::<Vec<_>>());
        for f in &folds {
            let ifs = f.iter().filter(|&&i| labels[i] == F).count();
            assert!((4..=5).contains(&ifs), "{ifs}");
        }
    }

    #[test]
    fn too_many_folds() {
        let d = Dataset::new(vec!["a".into()], vec![vec![0.0], vec![1.0]], vec![F, L]).unwrap();
        assert!(evaluate_classifier(ClassifierKind::Nb, &d, CvScheme::KFold(3), 5, 0).is_err());
    }
}
