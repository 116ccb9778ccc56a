use crate::error::{Error, Result};
use crate::netcore::{classify, embed_samples, NetworkSpec, ParamStore};
use crate::synthgen::{Dataset, Modality, Sample};

/// Samples embedded per forward pass.
const EMBED_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    /// Index of the sample in its dataset.
    pub sample_ref: usize,
    pub modality: Modality,
    pub id: usize,
    pub labels: Vec<usize>,
    pub embedding: Vec<f64>,
}

/// Infer-mode embeddings of a dataset, row `i` holding sample `i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn embedding(&self, sample_ref: usize) -> Result<&[f64]> {
        self.rows
            .get(sample_ref)
            .map(|r| r.embedding.as_slice())
            .ok_or(Error::OutOfRange {
                what: "sample reference",
                index: sample_ref,
                limit: self.rows.len(),
            })
    }

    pub fn of_modality(&self, modality: Modality) -> Vec<&EmbeddingRow> {
        self.rows
            .iter()
            .filter(|r| r.modality == modality)
            .collect()
    }
}

pub fn embed_all(
    spec: &NetworkSpec,
    params: &ParamStore,
    dataset: &Dataset,
) -> Result<EmbeddingTable> {
    if dataset.schema != spec.heads {
        return Err(Error::invalid(format!(
            "dataset schema `{}` differs from network heads `{}`",
            dataset.schema, spec.heads
        )));
    }
    let refs: Vec<&Sample> = dataset.samples.iter().collect();
    let mut rows = Vec::with_capacity(refs.len());
    for chunk in refs.chunks(EMBED_CHUNK) {
        let emb = embed_samples(spec, params, chunk)?;
        for (s, e) in chunk.iter().zip(emb) {
            rows.push(EmbeddingRow {
                sample_ref: rows.len(),
                modality: s.modality,
                id: s.id_index,
                labels: s.labels.clone(),
                embedding: e,
            });
        }
    }
    Ok(EmbeddingTable { rows })
}

/// Accuracy per modality; `None` when the modality has no samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModalityAccuracy {
    pub a: Option<f64>,
    pub b: Option<f64>,
}

impl ModalityAccuracy {
    pub fn get(&self, modality: Modality) -> Option<f64> {
        match modality {
            Modality::A => self.a,
            Modality::B => self.b,
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Head accuracy given precomputed embeddings of `samples`. Argmax ties go
/// to the lowest class index.
pub fn head_accuracy(
    params: &ParamStore,
    embeddings: &[Vec<f64>],
    samples: &[&Sample],
    covariate_index: usize,
) -> Result<ModalityAccuracy> {
    if embeddings.len() != samples.len() {
        return Err(Error::shape("one embedding per sample required"));
    }
    let mut hits = [0usize; 2];
    let mut totals = [0usize; 2];
    for (e, s) in embeddings.iter().zip(samples) {
        let logits = classify(params, e, covariate_index)?;
        let m = s.modality as usize;
        totals[m] += 1;
        hits[m] += usize::from(argmax(&logits) == s.labels[covariate_index]);
    }
    let acc = |m: usize| (totals[m] > 0).then(|| hits[m] as f64 / totals[m] as f64);
    Ok(ModalityAccuracy {
        a: acc(0),
        b: acc(1),
    })
}

pub fn covariate_accuracy(
    spec: &NetworkSpec,
    params: &ParamStore,
    dataset: &Dataset,
    covariate: &str,
) -> Result<ModalityAccuracy> {
    let c = spec
        .heads
        .index_of(covariate)
        .ok_or_else(|| Error::MissingCovariate(covariate.to_string()))?;
    let table = embed_all(spec, params, dataset)?;
    let emb: Vec<Vec<f64>> = table.rows.into_iter().map(|r| r.embedding).collect();
    let refs: Vec<&Sample> = dataset.samples.iter().collect();
    head_accuracy(params, &emb, &refs, c)
}
