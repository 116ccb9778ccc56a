use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{self, below, choose_distinct};
use crate::synthgen::{Dataset, Modality, GENDER_COVARIATE, NATIONALITY_COVARIATE};

/// Which covariates every gallery entry must share with the probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stratification {
    U,
    G,
    N,
    GN,
}

impl Stratification {
    pub const ALL: [Stratification; 4] = [Self::U, Self::G, Self::N, Self::GN];

    pub fn covariates(self) -> &'static [&'static str] {
        match self {
            Self::U => &[],
            Self::G => &[GENDER_COVARIATE],
            Self::N => &[NATIONALITY_COVARIATE],
            Self::GN => &[GENDER_COVARIATE, NATIONALITY_COVARIATE],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::U => "U",
            Self::G => "G",
            Self::N => "N",
            Self::GN => "GN",
        }
    }
}

impl fmt::Display for Stratification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stratification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown stratification `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    AtoB,
    BtoA,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Self::AtoB, Self::BtoA];

    pub fn probe(self) -> Modality {
        match self {
            Self::AtoB => Modality::A,
            Self::BtoA => Modality::B,
        }
    }

    pub fn gallery(self) -> Modality {
        self.probe().other()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AtoB => "a2b",
            Self::BtoA => "b2a",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown direction `{s}`")))
    }
}

/// A probe and its gallery; `gallery[answer]` is the true match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchTrial {
    pub probe: usize,
    pub gallery: Vec<usize>,
    pub answer: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyPair {
    pub probe: usize,
    pub partner: usize,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trials {
    Match { n: usize, trials: Vec<MatchTrial> },
    Verify(Vec<VerifyPair>),
}

/// Trials over sample indices of one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSet {
    pub direction: Direction,
    pub stratification: Stratification,
    pub trials: Trials,
    /// Trials dropped because the stratum had too few imposter identities.
    pub skipped: usize,
}

impl TrialSet {
    pub fn len(&self) -> usize {
        match &self.trials {
            Trials::Match { trials, .. } => trials.len(),
            Trials::Verify(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> Option<usize> {
        match &self.trials {
            Trials::Match { n, .. } => Some(*n),
            Trials::Verify(_) => None,
        }
    }
}

struct IdentityEntry {
    key: Vec<usize>,
    probes: Vec<usize>,
    gallery: Vec<usize>,
}

/// One trial per (probe sample, same-identity gallery sample). Each gets
/// `n - 1` imposter identities drawn without replacement from identities
/// sharing the probe's stratum, one random gallery sample from each, and the
/// true match at a random position.
pub fn build_match_trials(
    test: &Dataset,
    direction: Direction,
    n: usize,
    stratification: Stratification,
    seed: u64,
) -> Result<TrialSet> {
    if n < 2 {
        return Err(Error::invalid(format!("gallery size N = {n} must be >= 2")));
    }
    let strat_idx: Vec<usize> = stratification
        .covariates()
        .iter()
        .map(|c| {
            test.schema
                .index_of(c)
                .ok_or_else(|| Error::MissingCovariate(c.to_string()))
        })
        .collect::<Result<_>>()?;

    let mut ids: BTreeMap<usize, IdentityEntry> = BTreeMap::new();
    for (i, s) in test.samples.iter().enumerate() {
        let key: Vec<usize> = strat_idx.iter().map(|&c| s.labels[c]).collect();
        let e = ids.entry(s.id_index).or_insert_with(|| IdentityEntry {
            key: key.clone(),
            probes: Vec::new(),
            gallery: Vec::new(),
        });
        if e.key != key {
            return Err(Error::invalid(format!(
                "identity {} has inconsistent stratification labels",
                s.id_index
            )));
        }
        if s.modality == direction.probe() {
            e.probes.push(i);
        } else {
            e.gallery.push(i);
        }
    }
    let entries: Vec<(&usize, &IdentityEntry)> = ids.iter().collect();
    let mut rng = rng::child(seed, "match-trials");
    let mut trials = Vec::new();
    let mut skipped = 0;
    for (pos, (_, probe_id)) in entries.iter().enumerate() {
        if probe_id.probes.is_empty() || probe_id.gallery.is_empty() {
            continue;
        }
        let candidates: Vec<&IdentityEntry> = entries
            .iter()
            .enumerate()
            .filter(|(j, (_, e))| *j != pos && !e.gallery.is_empty() && e.key == probe_id.key)
            .map(|(_, (_, e))| *e)
            .collect();
        for &probe in &probe_id.probes {
            for &matched in &probe_id.gallery {
                if candidates.len() < n - 1 {
                    skipped += 1;
                    continue;
                }
                let mut gallery: Vec<usize> = choose_distinct(&mut rng, candidates.len(), n - 1)
                    .into_iter()
                    .map(|c| {
                        let g = &candidates[c].gallery;
                        g[below(&mut rng, g.len())]
                    })
                    .collect();
                let answer = below(&mut rng, n);
                gallery.insert(answer, matched);
                trials.push(MatchTrial {
                    probe,
                    gallery,
                    answer,
                });
            }
        }
    }
    Ok(TrialSet {
        direction,
        stratification,
        trials: Trials::Match { n, trials },
        skipped,
    })
}

/// Splits every 1:2 trial into a positive and a negative pair.
pub fn build_verification_pairs(set: &TrialSet) -> Result<TrialSet> {
    let Trials::Match { n: 2, trials } = &set.trials else {
        return Err(Error::invalid(
            "verification pairs need a 1:2 match trial set",
        ));
    };
    let pairs = trials
        .iter()
        .flat_map(|t| {
            [
                VerifyPair {
                    probe: t.probe,
                    partner: t.gallery[t.answer],
                    positive: true,
                },
                VerifyPair {
                    probe: t.probe,
                    partner: t.gallery[1 - t.answer],
                    positive: false,
                },
            ]
        })
        .collect();
    Ok(TrialSet {
        direction: set.direction,
        stratification: set.stratification,
        trials: Trials::Verify(pairs),
        skipped: set.skipped,
    })
}
