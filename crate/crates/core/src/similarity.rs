//! TF-IDF space over the category documents, cosine similarity between a
//! query context and each category, and the dwell-boosted contextual
//! similarity used by the classifier and the predictor.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{CategoryDocument, TermBag};
use crate::model::{label_indicator, CategoryId, CategoryVector, Trajectory, ApLabels, CATEGORY_COUNT};

/// Sparse vector as (term index, weight), sorted by index, no zero weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector(Vec<(usize, f64)>);

impl SparseVector {
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.0, &other.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// Cosine of two sparse vectors; 0 when either is zero.
pub fn sparse_cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(b) / denom).clamp(0.0, 1.0)
}

/// Raw-tf, ln-idf weighting fitted on a document collection.
#[derive(Clone, Debug)]
pub struct TfIdfModel {
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    doc_vectors: Vec<SparseVector>,
}

impl TfIdfModel {
    pub fn fit(docs: &[TermBag]) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let vocabulary: BTreeMap<String, usize> = docs
            .iter()
            .flat_map(|d| d.terms())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t.to_string(), i))
            .collect();
        let mut df = vec![0usize; vocabulary.len()];
        for doc in docs {
            for (term, _) in doc.iter() {
                df[vocabulary[term]] += 1;
            }
        }
        let n = docs.len() as f64;
        let idf = df.iter().map(|&d| (n / d as f64).ln()).collect();
        let mut model = TfIdfModel {
            vocabulary,
            idf,
            doc_vectors: Vec::new(),
        };
        model.doc_vectors = docs.iter().map(|d| model.vectorize(d)).collect();
        Ok(model)
    }

    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn doc_count(&self) -> usize {
        self.doc_vectors.len()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocabulary.get(term).map(|&i| self.idf[i])
    }

    pub fn doc_vector(&self, doc: usize) -> &SparseVector {
        &self.doc_vectors[doc]
    }

    /// tf × idf against the fitted vocabulary; unseen terms are dropped.
    pub fn vectorize(&self, bag: &TermBag) -> SparseVector {
        let entries = bag
            .iter()
            .filter_map(|(term, tf)| {
                let &i = self.vocabulary.get(term)?;
                let w = tf as f64 * self.idf[i];
                (w > 0.0).then_some((i, w))
            })
            .collect::<BTreeMap<_, _>>();
        SparseVector(entries.into_iter().collect())
    }

    /// Cosine between document `doc` and the query bag.
    pub fn cosine(&self, doc: usize, query: &TermBag) -> f64 {
        sparse_cosine(&self.doc_vectors[doc], &self.vectorize(query))
    }

    /// Cosine of the query against every document, in document order.
    pub fn cosines(&self, query: &TermBag) -> Vec<f64> {
        let q = self.vectorize(query);
        self.doc_vectors.iter().map(|d| sparse_cosine(d, &q)).collect()
    }
}

/// TF-IDF space over the semantic category documents.
#[derive(Clone, Debug)]
pub struct CategorySpace {
    model: TfIdfModel,
}

/// Fits the space over a corpus holding exactly one document per category.
pub fn fit_tfidf(corpus: &[CategoryDocument]) -> Result<CategorySpace> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if corpus.len() != CATEGORY_COUNT
        || corpus.iter().enumerate().any(|(i, d)| d.category.index() != i)
    {
        return Err(Error::InvalidInput(
            "corpus must list one document per category in registry order".into(),
        ));
    }
    let bags: Vec<TermBag> = corpus.iter().map(|d| d.terms.clone()).collect();
    Ok(CategorySpace {
        model: TfIdfModel::fit(&bags)?,
    })
}

impl CategorySpace {
    pub fn model(&self) -> &TfIdfModel {
        &self.model
    }

    pub fn cosine(&self, category: CategoryId, query: &TermBag) -> f64 {
        self.model.cosine(category.index(), query)
    }

    pub fn cosines(&self, query: &TermBag) -> CategoryVector {
        let mut out = [0.0; CATEGORY_COUNT];
        out.copy_from_slice(&self.model.cosines(query));
        out
    }

    /// Cosine between two arbitrary bags inside the fitted space.
    pub fn bag_cosine(&self, a: &TermBag, b: &TermBag) -> f64 {
        sparse_cosine(&self.model.vectorize(a), &self.model.vectorize(b))
    }
}

/// Share of the visit's dwell spent at APs labelled with each category.
/// Labels overlap, so the shares may add up to more than one.
pub fn dwell_fractions(trajectory: &Trajectory, ap_labels: &ApLabels) -> CategoryVector {
    let mut out = [0.0; CATEGORY_COUNT];
    let total = trajectory.total_dwell();
    if total == 0 {
        return out;
    }
    for hop in &trajectory.hops {
        if let Some(labels) = ap_labels.get(&hop.ap_id) {
            for c in labels {
                out[c.index()] += hop.dwell_s as f64;
            }
        }
    }
    for v in &mut out {
        *v /= total as f64;
    }
    out
}

/// CS_i = t_i × cos_i where both are strictly positive, else 0.
pub fn contextual_similarity(cosines: &CategoryVector, dwell: &CategoryVector) -> CategoryVector {
    let mut out = [0.0; CATEGORY_COUNT];
    for i in 0..CATEGORY_COUNT {
        if cosines[i] > 0.0 && dwell[i] > 0.0 {
            out[i] = cosines[i] * dwell[i];
        }
    }
    out
}

/// SS(a) = Σ_j P_{a,j} × CS_j.
pub fn semantic_weight(indicator: &CategoryVector, weights: &CategoryVector) -> f64 {
    indicator.iter().zip(weights).map(|(p, w)| p * w).sum()
}

/// SS for every labelled AP.
pub fn semantic_weight_vector(ap_labels: &ApLabels, weights: &CategoryVector) -> BTreeMap<String, f64> {
    ap_labels
        .iter()
        .map(|(ap, labels)| (ap.clone(), semantic_weight(&label_indicator(labels), weights)))
        .collect()
}

/// Categories by cosine, descending; ties by registry index. k is clamped.
pub fn top_k_categories(cosines: &CategoryVector, k: usize) -> Vec<CategoryId> {
    let mut ids: Vec<CategoryId> = CategoryId::all().collect();
    ids.sort_by(|a, b| {
        crate::predict::desc(cosines[a.index()], cosines[b.index()])
            .then(a.index().cmp(&b.index()))
    });
    ids.truncate(k.min(CATEGORY_COUNT));
    ids
}

/// Per-visit similarity profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProfile {
    pub cosines: CategoryVector,
    pub dwell_fractions: CategoryVector,
    pub cs: CategoryVector,
}

impl SimilarityProfile {
    pub fn new(cosines: CategoryVector, dwell_fractions: CategoryVector) -> Self {
        let cs = contextual_similarity(&cosines, &dwell_fractions);
        SimilarityProfile {
            cosines,
            dwell_fractions,
            cs,
        }
    }

    pub fn compute(
        space: &CategorySpace,
        query_context: &TermBag,
        trajectory: &Trajectory,
        ap_labels: &ApLabels,
    ) -> Self {
        Self::new(
            space.cosines(query_context),
            dwell_fractions(trajectory, ap_labels),
        )
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["category", "cosine", "dwell_fraction", "cs"])?;
        for c in CategoryId::all() {
            let i = c.index();
            w.write_record([
                c.name().to_string(),
                self.cosines[i].to_string(),
                self.dwell_fractions[i].to_string(),
                self.cs[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<profile csv>", e))?;
        Ok(())
    }
}
