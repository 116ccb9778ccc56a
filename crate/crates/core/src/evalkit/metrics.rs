use std::cmp::Ordering;

use super::table::{EmbeddingRow, EmbeddingTable};
use super::trials::{TrialSet, Trials};
use crate::error::{Error, Result};
use crate::netcore::cosine_similarity;
use crate::par;

/// Fraction of match trials whose highest-cosine gallery entry is the true
/// match. Cosine ties go to the lowest gallery position.
pub fn match_accuracy(table: &EmbeddingTable, set: &TrialSet) -> Result<f64> {
    let Trials::Match { trials, .. } = &set.trials else {
        return Err(Error::invalid("match accuracy needs a match trial set"));
    };
    if trials.is_empty() {
        return Err(Error::invalid("empty trial set"));
    }
    let outcomes = par::map(trials, |t| -> Result<bool> {
        let probe = table.embedding(t.probe)?;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (k, &g) in t.gallery.iter().enumerate() {
            let s = cosine_similarity(probe, table.embedding(g)?)?;
            if s > best_score {
                best = k;
                best_score = s;
            }
        }
        Ok(best == t.answer)
    });
    let mut correct = 0usize;
    for o in outcomes {
        correct += usize::from(o?);
    }
    Ok(correct as f64 / trials.len() as f64)
}

/// Cosine score and label of every verification pair, in order.
pub fn verification_scores(
    table: &EmbeddingTable,
    set: &TrialSet,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let Trials::Verify(pairs) = &set.trials else {
        return Err(Error::invalid(
            "verification scores need a verification trial set",
        ));
    };
    let scores = par::map(pairs, |p| {
        cosine_similarity(table.embedding(p.probe)?, table.embedding(p.partner)?)
    });
    let scores = scores.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok((scores, pairs.iter().map(|p| p.positive).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    /// `(false_accept + false_reject) / 2` at the chosen threshold.
    pub eer: f64,
    pub threshold: f64,
    pub false_accept: f64,
    pub false_reject: f64,
}

/// Equal error rate from a sweep over every distinct score as threshold
/// (accept when `score >= threshold`). The threshold minimizing
/// `|F_R - F_A|` is chosen, ties going to the lower threshold.
pub fn eer(scores: &[f64], labels: &[bool]) -> Result<EerResult> {
    if scores.len() != labels.len() {
        return Err(Error::shape("one label per score required"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("verification scores".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid(
            "equal error rate needs both positive and negative pairs",
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // walking upwards, `rejected_*` count items strictly below the threshold
    let (mut rejected_pos, mut rejected_neg) = (0usize, 0usize);
    let mut best: Option<(f64, EerResult)> = None;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        let fr = rejected_pos as f64 / n_pos as f64;
        let fa = (n_neg - rejected_neg) as f64 / n_neg as f64;
        let gap = (fr - fa).abs();
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((
                gap,
                EerResult {
                    eer: (fr + fa) / 2.0,
                    threshold: t,
                    false_accept: fa,
                    false_reject: fr,
                },
            ));
        }
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                rejected_pos += 1;
            } else {
                rejected_neg += 1;
            }
            i += 1;
        }
    }
    Ok(best.expect("at least one threshold").1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalResult {
    pub map: f64,
    /// Queries with at least one relevant gallery item.
    pub included: usize,
    /// Queries without any, left out of the mean.
    pub excluded: usize,
}

/// Mean average precision. A gallery item is relevant to a query when they
/// share the label of `covariate_index`; the gallery is ranked by descending
/// cosine, ties by position.
pub fn retrieval_map(
    queries: &[&EmbeddingRow],
    gallery: &[&EmbeddingRow],
    covariate_index: usize,
) -> Result<RetrievalResult> {
    if gallery.is_empty() {
        return Err(Error::invalid("empty retrieval gallery"));
    }
    let per_query = par::map(queries, |q| -> Result<Option<f64>> {
        let label = q.labels[covariate_index];
        let n_rel = gallery
            .iter()
            .filter(|g| g.labels[covariate_index] == label)
            .count();
        if n_rel == 0 {
            return Ok(None);
        }
        let scores = gallery
            .iter()
            .map(|g| cosine_similarity(&q.embedding, &g.embedding))
            .collect::<Result<Vec<f64>>>()?;
        let mut order: Vec<usize> = (0..gallery.len()).collect();
        // partial_cmp so that -0.0 and 0.0 tie; scores are never NaN
        order.sort_by(|&a, &b| match scores[b].partial_cmp(&scores[a]) {
            Some(Ordering::Equal) | None => a.cmp(&b),
            Some(o) => o,
        });
        let mut hits = 0usize;
        let mut sum = 0.0;
        for (rank, &g) in order.iter().enumerate() {
            if gallery[g].labels[covariate_index] == label {
                hits += 1;
                sum += hits as f64 / (rank + 1) as f64;
            }
        }
        Ok(Some(sum / n_rel as f64))
    });
    let mut total = 0.0;
    let (mut included, mut excluded) = (0, 0);
    for ap in per_query {
        match ap? {
            Some(ap) => {
                total += ap;
                included += 1;
            }
            None => excluded += 1,
        }
    }
    if included == 0 {
        return Err(Error::invalid("no query has a relevant gallery item"));
    }
    Ok(RetrievalResult {
        map: total / included as f64,
        included,
        excluded,
    })
}
