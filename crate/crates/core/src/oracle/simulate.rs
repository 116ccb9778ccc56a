//! Monte Carlo counterparts of the closed forms.
//!
//! Trials are split into chunks of [`CHUNK_TRIALS`]; chunk `c` draws from
//! `stream(derive_seed(seed, c))` and per-chunk counts are summed in chunk
//! order, so estimates are identical for any thread count.

use super::closed_form::GenderErrorRates;
use crate::error::{Error, Result};
use crate::par;
use crate::rng::{below, bernoulli, derive_seed, stream, Stream};

pub const CHUNK_TRIALS: u64 = 1 << 16;

fn run_chunks<F>(trials: u64, seed: u64, f: F) -> Vec<[u64; 2]>
where
    F: Fn(&mut Stream, u64) -> [u64; 2] + Sync + Send,
{
    let chunks = trials.div_ceil(CHUNK_TRIALS) as usize;
    par::map_range(chunks, |c| {
        let start = c as u64 * CHUNK_TRIALS;
        let n = CHUNK_TRIALS.min(trials - start);
        let mut rng = stream(derive_seed(seed, c as u64));
        f(&mut rng, n)
    })
}

fn check(trials: u64, p: f64) -> Result<()> {
    if trials == 0 {
        return Err(Error::invalid("number of trials must be positive"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("P = {p} outside [0, 1]")));
    }
    Ok(())
}

/// Perceived gender of an item with true gender `g` under error rate `e`.
fn perceive(rng: &mut Stream, g: bool, e: f64) -> bool {
    g ^ bernoulli(rng, e)
}

/// Empirical 1:2 error. The probe is a voice, both gallery items are faces.
pub fn simulate_match2(e: GenderErrorRates, p: f64, trials: u64, seed: u64) -> Result<f64> {
    check(trials, p)?;
    let counts = run_chunks(trials, seed, |rng, n| {
        let mut errors = 0;
        for _ in 0..n {
            let g = bernoulli(rng, 0.5);
            let gi = bernoulli(rng, 0.5);
            let probe = perceive(rng, g, e.e_v);
            let m = perceive(rng, g, e.e_f);
            let imp = perceive(rng, gi, e.e_f);
            let picked_match = if m != imp {
                let follow = bernoulli(rng, p);
                (m == probe) == follow
            } else {
                bernoulli(rng, 0.5)
            };
            errors += u64::from(!picked_match);
        }
        [errors, 0]
    });
    Ok(counts.iter().map(|c| c[0]).sum::<u64>() as f64 / trials as f64)
}

/// Empirical 1:N error. The searched gender is the probe's perceived gender
/// with probability `p`; an empty candidate set counts as an error.
pub fn simulate_match_n(
    e: GenderErrorRates,
    p: f64,
    n: usize,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    check(trials, p)?;
    if n < 2 {
        return Err(Error::invalid(format!("gallery size N = {n} must be >= 2")));
    }
    let counts = run_chunks(trials, seed, |rng, count| {
        let mut errors = 0;
        for _ in 0..count {
            let g = bernoulli(rng, 0.5);
            let probe = perceive(rng, g, e.e_v);
            let m = perceive(rng, g, e.e_f);
            let target = probe == bernoulli(rng, p);
            let mut same = 0usize;
            for _ in 1..n {
                let gi = bernoulli(rng, 0.5);
                if perceive(rng, gi, e.e_f) == target {
                    same += 1;
                }
            }
            let hit = m == target && below(rng, same + 1) == 0;
            errors += u64::from(!hit);
        }
        [errors, 0]
    });
    Ok(counts.iter().map(|c| c[0]).sum::<u64>() as f64 / trials as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationSim {
    pub false_accept: f64,
    pub false_reject: f64,
    pub positives: u64,
    pub negatives: u64,
}

impl VerificationSim {
    pub fn max_error(&self) -> f64 {
        self.false_accept.max(self.false_reject)
    }
}

/// Empirical verification rates over `trials` pairs, alternately positive and
/// negative. A pair is accepted with probability `p` when perceived genders
/// agree and `q` otherwise.
pub fn simulate_verification(
    e: GenderErrorRates,
    p: f64,
    q: f64,
    trials: u64,
    seed: u64,
) -> Result<VerificationSim> {
    check(trials, p)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("Q = {q} outside [0, 1]")));
    }
    if trials < 2 {
        return Err(Error::invalid("verification needs at least two trials"));
    }
    // CHUNK_TRIALS is even, so the global parity of a trial equals its
    // parity within its chunk.
    let counts = run_chunks(trials, seed, |rng, n| {
        let (mut fa, mut fr) = (0, 0);
        for t in 0..n {
            let positive = t % 2 == 0;
            let g = bernoulli(rng, 0.5);
            let gf = if positive { g } else { bernoulli(rng, 0.5) };
            let v = perceive(rng, g, e.e_v);
            let f = perceive(rng, gf, e.e_f);
            let accept = bernoulli(rng, if v == f { p } else { q });
            if positive && !accept {
                fr += 1;
            } else if !positive && accept {
                fa += 1;
            }
        }
        [fa, fr]
    });
    let positives = trials.div_ceil(2);
    let negatives = trials / 2;
    let fa: u64 = counts.iter().map(|c| c[0]).sum();
    let fr: u64 = counts.iter().map(|c| c[1]).sum();
    Ok(VerificationSim {
        false_accept: fa as f64 / negatives as f64,
        false_reject: fr as f64 / positives as f64,
        positives,
        negatives,
    })
}
