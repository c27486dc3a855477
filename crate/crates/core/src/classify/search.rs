use log::debug;

use super::discretize::Discretizer;
use super::model::{IntentModel, LooScorer};
use super::{class_index, ClassifierKind, Dataset};
use crate::error::{Error, Result};

struct Binned {
    disc: Discretizer,
    x: Vec<Vec<u8>>,
    y: Vec<usize>,
}

fn bin(data: &Dataset, bins: usize) -> Result<Binned> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let disc = Discretizer::fit(&data.rows, bins)?;
    let x = data.rows.iter().map(|r| disc.transform(r)).collect();
    let y = data.labels.iter().map(|&l| class_index(l)).collect();
    Ok(Binned { disc, x, y })
}

/// Leave-one-out accuracy of fixed DT / NB feature sets.
pub fn loo_accuracy(data: &Dataset, bins: usize, dt_schema: &[usize], nb_features: &[usize]) -> Result<f64> {
    let b = bin(data, bins)?;
    let scorer = LooScorer::new(&b.x, &b.y, &b.disc);
    Ok(scorer.correct(dt_schema, nb_features) as f64 / data.len() as f64)
}

/// Forward selection: grow the schema one feature at a time while LOO
/// accuracy strictly improves. Ties go to the lowest feature index.
fn forward_schema(scorer: &LooScorer, width: usize) -> Vec<usize> {
    let mut schema: Vec<usize> = Vec::new();
    let mut best = scorer.correct(&schema, &[]);
    loop {
        let mut step: Option<(usize, usize)> = None;
        for f in (0..width).filter(|f| !schema.contains(f)) {
            let mut cand = schema.clone();
            cand.push(f);
            cand.sort_unstable();
            let acc = scorer.correct(&cand, &[]);
            if acc > step.map_or(best, |(_, a)| a) {
                step = Some((f, acc));
            }
        }
        match step {
            Some((f, acc)) => {
                debug!("dt: add feature {f}, loo correct {best} -> {acc}");
                schema.push(f);
                schema.sort_unstable();
                best = acc;
            }
            None => return schema,
        }
    }
}

/// Hybrid search: every feature starts in the DT; each step moves one DT
/// feature to NB or drops it, keeping the single change with the best
/// strictly improved LOO accuracy.
fn hybrid_split(scorer: &LooScorer, width: usize) -> (Vec<usize>, Vec<usize>) {
    let mut dt: Vec<usize> = (0..width).collect();
    let mut nb: Vec<usize> = Vec::new();
    let mut best = scorer.correct(&dt, &nb);
    loop {
        // (feature, to_nb, accuracy)
        let mut step: Option<(usize, bool, usize)> = None;
        for &f in &dt {
            let rest: Vec<usize> = dt.iter().copied().filter(|&g| g != f).collect();
            let mut with_f = nb.clone();
            with_f.push(f);
            with_f.sort_unstable();
            for (to_nb, nb_cand) in [(true, &with_f), (false, &nb)] {
                let acc = scorer.correct(&rest, nb_cand);
                if acc > step.map_or(best, |s| s.2) {
                    step = Some((f, to_nb, acc));
                }
            }
        }
        match step {
            Some((f, to_nb, acc)) => {
                debug!(
                    "dtnb: {} feature {f}, loo correct {best} -> {acc}",
                    if to_nb { "move to nb" } else { "drop" }
                );
                dt.retain(|&g| g != f);
                if to_nb {
                    nb.push(f);
                    nb.sort_unstable();
                }
                best = acc;
            }
            None => return (dt, nb),
        }
    }
}

pub fn train_dt(data: &Dataset, bins: usize) -> Result<IntentModel> {
    let b = bin(data, bins)?;
    let schema = forward_schema(&LooScorer::new(&b.x, &b.y, &b.disc), data.width());
    Ok(IntentModel::from_binned(
        ClassifierKind::Dt,
        data.feature_names.clone(),
        b.disc,
        &b.x,
        &b.y,
        &schema,
        &[],
    ))
}

pub fn train_nb(data: &Dataset, bins: usize) -> Result<IntentModel> {
    let b = bin(data, bins)?;
    let all: Vec<usize> = (0..data.width()).collect();
    Ok(IntentModel::from_binned(
        ClassifierKind::Nb,
        data.feature_names.clone(),
        b.disc,
        &b.x,
        &b.y,
        &[],
        &all,
    ))
}

pub fn train_dtnb(data: &Dataset, bins: usize) -> Result<IntentModel> {
    let b = bin(data, bins)?;
    let (dt, nb) = hybrid_split(&LooScorer::new(&b.x, &b.y, &b.disc), data.width());
    Ok(IntentModel::from_binned(
        ClassifierKind::Dtnb,
        data.feature_names.clone(),
        b.disc,
        &b.x,
        &b.y,
        &dt,
        &nb,
    ))
}

pub fn train(kind: ClassifierKind, data: &Dataset, bins: usize) -> Result<IntentModel> {
    match kind {
        ClassifierKind::Dt => train_dt(data, bins),
        ClassifierKind::Nb => train_nb(data, bins),
        ClassifierKind::Dtnb => train_dtnb(data, bins),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IntentLabel::{self, Intentful, Intentless};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<IntentLabel>) -> Dataset {
        let names = (0..rows[0].len()).map(|i| format!("x{i}")).collect();
        Dataset::new(names, rows, labels).unwrap()
    }

    #[test]
    fn separable_feature_is_selected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let class = i % 2 == 0;
            rows.push(vec![rng.random::<f64>(), if class { 1.0 } else { 0.0 }, rng.random()]);
            labels.push(if class { Intentful } else { Intentless });
        }
        let data = dataset(rows, labels);
        let m = train_dt(&data, 5).unwrap();
        assert_eq!(m.dt.schema, vec![1]);
        assert_eq!(loo_accuracy(&data, 5, &[1], &[]).unwrap(), 1.0);
    }

    #[test]
    fn noise_gives_majority_baseline() {
        // every feature value is shared by both classes in the same 3:1 ratio
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for v in 0..5 {
            for k in 0..4 {
                rows.push(vec![v as f64, (v * 7 % 5) as f64]);
                labels.push(if k == 0 { Intentful } else { Intentless });
            }
        }
        let data = dataset(rows.clone(), labels);
        let m = train_dt(&data, 5).unwrap();
        assert!(m.dt.schema.is_empty());
        for r in &rows {
            assert_eq!(m.predict(r).unwrap().0, Intentless);
        }
    }

    #[test]
    fn empty_training_set() {
        let data = Dataset::new(vec!["a".into()], vec![], vec![]).unwrap();
        assert!(matches!(train_dtnb(&data, 5), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn hybrid_on_separable_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..200 {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let mut r = vec![a, b];
            r.extend((0..4).map(|_| rng.random::<f64>()));
            rows.push(r);
            labels.push(if a + b > 1.0 { Intentful } else { Intentless });
        }
        let data = dataset(rows, labels);
        let m = train_dtnb(&data, 5).unwrap();
        let acc = loo_accuracy(&data, 5, &m.dt.schema, &m.nb.features).unwrap();
        assert!(acc >= 0.9, "loo accuracy {acc}");
    }
}
