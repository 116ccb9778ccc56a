//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use xmodal::evalkit::{EmbeddingRow, EmbeddingTable, MatchTrial, TrialSet, Trials};
use xmodal::netcore::Tensor;
use xmodal::rng::{self, Stream};
use xmodal::synthgen::{CovariateSchema, Dataset, FeatureShape, Modality, Sample, SplitTag};

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
    }
    for x in a {
        aa += x * x;
    }
    for y in b {
        bb += y * y;
    }
    (dot / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

/// EER by scanning every candidate threshold against every score.
pub fn eer_brute(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut best_gap = f64::INFINITY;
    let mut best = f64::NAN;
    for t in thresholds {
        let mut fr = 0usize;
        let mut fa = 0usize;
        for (s, &l) in scores.iter().zip(labels) {
            let accept = *s >= t;
            if l && !accept {
                fr += 1;
            }
            if !l && accept {
                fa += 1;
            }
        }
        let (fr, fa) = (fr as f64 / pos, fa as f64 / neg);
        if (fr - fa).abs() < best_gap {
            best_gap = (fr - fa).abs();
            best = (fr + fa) / 2.0;
        }
    }
    best
}

/// mAP computing each relevant item's rank by counting the items ahead of it.
pub fn map_brute(queries: &[&EmbeddingRow], gallery: &[&EmbeddingRow], c: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut included = 0usize;
    for q in queries {
        let scores: Vec<f64> = gallery
            .iter()
            .map(|g| cosine(&q.embedding, &g.embedding))
            .collect();
        let relevant: Vec<usize> = (0..gallery.len())
            .filter(|&g| gallery[g].labels[c] == q.labels[c])
            .collect();
        if relevant.is_empty() {
            continue;
        }
        let rank = |g: usize| {
            1 + (0..gallery.len())
                .filter(|&h| scores[h] > scores[g] || (scores[h] == scores[g] && h < g))
                .count()
        };
        let mut ranks: Vec<usize> = relevant.iter().map(|&g| rank(g)).collect();
        ranks.sort_unstable();
        let mut ap = 0.0;
        for (k, r) in ranks.iter().enumerate() {
            ap += (k + 1) as f64 / *r as f64;
        }
        total += ap / relevant.len() as f64;
        included += 1;
    }
    (included > 0).then(|| total / included as f64)
}

/// Match accuracy by picking the first gallery entry with the maximal score.
pub fn match_brute(table: &EmbeddingTable, trials: &[MatchTrial]) -> f64 {
    let mut correct = 0usize;
    for t in trials {
        let probe = &table.rows[t.probe].embedding;
        let scores: Vec<f64> = t
            .gallery
            .iter()
            .map(|&g| cosine(probe, &table.rows[g].embedding))
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let pick = scores.iter().position(|&s| s == max).unwrap();
        if pick == t.answer {
            correct += 1;
        }
    }
    correct as f64 / trials.len() as f64
}

pub fn row(
    sample_ref: usize,
    modality: Modality,
    id: usize,
    labels: Vec<usize>,
    embedding: Vec<f64>,
) -> EmbeddingRow {
    EmbeddingRow {
        sample_ref,
        modality,
        id,
        labels,
        embedding,
    }
}

/// Embedding drawn from a small lattice so that exact ties occur.
pub fn lattice_vector(r: &mut Stream, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng::below(r, 5) as f64 - 2.0).collect();
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    }
}

pub fn random_table(r: &mut Stream, n: usize, d: usize, classes: usize) -> EmbeddingTable {
    EmbeddingTable {
        rows: (0..n)
            .map(|i| {
                let m = if i % 2 == 0 { Modality::A } else { Modality::B };
                row(i, m, i, vec![rng::below(r, classes)], lattice_vector(r, d))
            })
            .collect(),
    }
}

pub fn random_match_set(r: &mut Stream, table_len: usize, n_trials: usize) -> TrialSet {
    let trials = (0..n_trials)
        .map(|_| {
            let n = 2 + rng::below(r, table_len.min(10) - 1);
            let gallery: Vec<usize> = (0..n).map(|_| rng::below(r, table_len)).collect();
            MatchTrial {
                probe: rng::below(r, table_len),
                answer: rng::below(r, n),
                gallery,
            }
        })
        .collect();
    TrialSet {
        direction: xmodal::evalkit::Direction::AtoB,
        stratification: xmodal::evalkit::Stratification::U,
        trials: Trials::Match { n: 0, trials },
        skipped: 0,
    }
}

pub fn standard_schema(n_ids: usize) -> CovariateSchema {
    CovariateSchema::standard(n_ids, 3).unwrap()
}

/// Dataset with `per_id.0` A- and `per_id.1` B-samples per identity; labels
/// are `(id, gender, nationality)` from the given table.
pub fn labelled_dataset(ids: &[(usize, usize)], per_id: (usize, usize), seed: u64) -> Dataset {
    let mut r = rng::stream(seed);
    let schema = standard_schema(ids.len());
    let mut samples = Vec::new();
    for (id, &(g, n)) in ids.iter().enumerate() {
        for (m, count) in [(Modality::A, per_id.0), (Modality::B, per_id.1)] {
            for _ in 0..count {
                samples.push(Sample {
                    modality: m,
                    features: Tensor::vector((0..4).map(|_| rng::normal(&mut r)).collect()),
                    labels: vec![id, g, n],
                    id_index: id,
                });
            }
        }
    }
    Dataset {
        schema,
        shape_a: FeatureShape(vec![4]),
        shape_b: FeatureShape(vec![4]),
        samples,
        split: SplitTag::Test,
    }
}
