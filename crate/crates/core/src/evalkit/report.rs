use std::fmt;
use std::io::Write;
use std::str::FromStr;

use super::metrics::{eer, match_accuracy, retrieval_map, verification_scores};
use super::table::EmbeddingTable;
use super::trials::{
    build_match_trials, build_verification_pairs, Direction, Stratification, TrialSet,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag};
use crate::synthgen::Dataset;

pub const METRICS_HEADER: &str = "protocol,direction,stratification,N,value,count,skipped";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Match2,
    MatchN,
    Verify,
    Retrieval,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Self::Match2, Self::MatchN, Self::Verify, Self::Retrieval];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Match2 => "match2",
            Self::MatchN => "matchN",
            Self::Verify => "verify",
            Self::Retrieval => "retrieval",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown protocol `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub protocols: Vec<Protocol>,
    pub strata: Vec<Stratification>,
    /// Gallery sizes for `matchN`.
    pub ns: Vec<usize>,
    pub directions: Vec<Direction>,
    pub seed: u64,
}

impl Default for EvalRequest {
    fn default() -> Self {
        Self {
            protocols: Protocol::ALL.to_vec(),
            strata: vec![Stratification::U],
            ns: vec![2, 4, 6, 8, 10],
            directions: Direction::ALL.to_vec(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    /// `match2`, `matchN`, `verify` or `retrieval_<covariate>`.
    pub protocol: String,
    pub direction: Direction,
    pub stratification: Stratification,
    pub n: Option<usize>,
    /// Accuracy, EER or mAP; `None` when every trial was skipped.
    pub value: Option<f64>,
    /// Trials, pairs or included queries.
    pub count: usize,
    /// Skipped trials or excluded queries.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
    /// Requests that could not be served, e.g. a stratum whose covariate has
    /// no head in the schema.
    pub warnings: Vec<String>,
}

fn trial_seed(seed: u64, d: Direction, s: Stratification, n: usize) -> u64 {
    derive_seed(seed, tag(&format!("{d}/{s}/{n}")))
}

/// Runs every requested protocol on `test` with precomputed embeddings
/// (`table` row `i` is `test.samples[i]`).
pub fn evaluate(table: &EmbeddingTable, test: &Dataset, req: &EvalRequest) -> Result<EvalReport> {
    if table.len() != test.samples.len() {
        return Err(Error::shape("embedding table does not match the test set"));
    }
    let mut report = EvalReport::default();
    let wants = |p| req.protocols.contains(&p);
    for &dir in &req.directions {
        for &strat in &req.strata {
            let mut ns = Vec::new();
            if wants(Protocol::Match2) || wants(Protocol::Verify) {
                ns.push(2);
            }
            if wants(Protocol::MatchN) {
                ns.extend(req.ns.iter().copied());
            }
            ns.sort_unstable();
            ns.dedup();
            let mut sets: Vec<(usize, TrialSet)> = Vec::new();
            let mut missing = false;
            for n in ns {
                match build_match_trials(test, dir, n, strat, trial_seed(req.seed, dir, strat, n)) {
                    Ok(set) => sets.push((n, set)),
                    Err(Error::MissingCovariate(c)) => {
                        report.warnings.push(format!(
                            "stratification {strat} needs covariate `{c}`; skipped"
                        ));
                        missing = true;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if missing {
                continue;
            }
            let set_for = |n: usize| &sets.iter().find(|(k, _)| *k == n).expect("built above").1;
            let mut row = |protocol: &str, n: Option<usize>, value: Option<f64>, count, skipped| {
                report.rows.push(MetricRow {
                    protocol: protocol.to_string(),
                    direction: dir,
                    stratification: strat,
                    n,
                    value,
                    count,
                    skipped,
                })
            };
            let accuracy = |set: &TrialSet| -> Result<Option<f64>> {
                if set.is_empty() {
                    Ok(None)
                } else {
                    match_accuracy(table, set).map(Some)
                }
            };
            if wants(Protocol::Match2) {
                let set = set_for(2);
                row("match2", Some(2), accuracy(set)?, set.len(), set.skipped);
            }
            if wants(Protocol::MatchN) {
                for &n in &req.ns {
                    let set = set_for(n);
                    row("matchN", Some(n), accuracy(set)?, set.len(), set.skipped);
                }
            }
            if wants(Protocol::Verify) {
                let pairs = build_verification_pairs(set_for(2))?;
                let value = if pairs.is_empty() {
                    None
                } else {
                    let (scores, labels) = verification_scores(table, &pairs)?;
                    Some(eer(&scores, &labels)?.eer)
                };
                row("verify", None, value, pairs.len(), pairs.skipped);
            }
        }
        if wants(Protocol::Retrieval) {
            let queries = table.of_modality(dir.probe());
            let gallery = table.of_modality(dir.gallery());
            for (c, cov) in test.schema.covariates().iter().enumerate() {
                let (value, included, excluded) = if gallery.is_empty() || queries.is_empty() {
                    (None, 0, queries.len())
                } else {
                    match retrieval_map(&queries, &gallery, c) {
                        Ok(r) => (Some(r.map), r.included, r.excluded),
                        Err(Error::InvalidArgument(_)) => (None, 0, queries.len()),
                        Err(e) => return Err(e),
                    }
                };
                report.rows.push(MetricRow {
                    protocol: format!("retrieval_{}", cov.name),
                    direction: dir,
                    stratification: Stratification::U,
                    n: None,
                    value,
                    count: included,
                    skipped: excluded,
                });
            }
        }
    }
    Ok(report)
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.protocol,
            r.direction,
            r.stratification,
            r.n.map(|n| n.to_string()).unwrap_or_default(),
            r.value.map(|v| v.to_string()).unwrap_or_default(),
            r.count,
            r.skipped
        )?;
    }
    Ok(())
}
