use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenderErrorRates {
    /// Gender misclassification rate on faces (gallery side in matching).
    pub e_f: f64,
    /// Gender misclassification rate on voices (probe side in matching).
    pub e_v: f64,
}

impl GenderErrorRates {
    pub fn new(e_f: f64, e_v: f64) -> Result<Self> {
        for (name, v) in [("e_f", e_f), ("e_v", e_v)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(Self { e_f, e_v })
    }

    pub fn perfect() -> Self {
        Self { e_f: 0.0, e_v: 0.0 }
    }

    pub fn swapped(self) -> Self {
        Self {
            e_f: self.e_v,
            e_v: self.e_f,
        }
    }
}

/// `p`: probability of following the perceived-gender rule; `q`: probability
/// of accepting a verification pair whose perceived genders differ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyParams {
    pub p: f64,
    pub q: f64,
}

impl StrategyParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        for (name, v) in [("P", p), ("Q", q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(Self { p, q })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub strategy: StrategyParams,
    pub error: f64,
    pub alpha: Option<f64>,
}

/// 1:2 matching with perfectly known genders: galleries of different
/// gender are always resolved, same-gender galleries are a coin flip.
pub fn match2_error_perfect() -> f64 {
    0.5 * 0.0 + 0.5 * 0.5
}

/// 1:2 error when mismatched-gender galleries are resolved towards the
/// probe's perceived gender with probability `p`.
pub fn match2_error_at(e: GenderErrorRates, p: f64) -> f64 {
    let (ef, ev) = (e.e_f, e.e_v);
    0.25 + 0.5 * (2.0 * ef * ev - ev - ef + 1.0 + p * (2.0 * ef + 2.0 * ev - 4.0 * ef * ev - 1.0))
}

pub fn match2_error_imperfect(e: GenderErrorRates) -> OracleResult {
    let (ef, ev) = (e.e_f, e.e_v);
    let (p, error) = if ef + ev < 2.0 * ef * ev + 0.5 {
        (1.0, 0.25 + 0.5 * (ef + ev - 2.0 * ef * ev))
    } else {
        (0.0, 0.25 + 0.5 * (2.0 * ef * ev - ev - ef + 1.0))
    };
    OracleResult {
        strategy: StrategyParams { p, q: 0.0 },
        error,
        alpha: None,
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("gallery size N = {n} must be >= 2")));
    }
    Ok(())
}

/// Accuracy of picking uniformly among same-gender gallery entries when the
/// chosen gender is right: `(2 - 0.5^(N-1)) / N`.
pub fn match_n_hit_rate(n: usize) -> f64 {
    (2.0 - 0.5f64.powi(n as i32 - 1)) / n as f64
}

pub fn match_n_error_perfect(n: usize) -> Result<f64> {
    check_n(n)?;
    Ok(1.0 - match_n_hit_rate(n))
}

/// Probability that probe and true match receive the same perceived gender.
pub fn alpha(e: GenderErrorRates) -> f64 {
    e.e_v * e.e_f + (1.0 - e.e_v) * (1.0 - e.e_f)
}

/// 1:N error when the probe's perceived gender is searched with probability
/// `p` and the opposite one otherwise.
pub fn match_n_error_at(e: GenderErrorRates, p: f64, n: usize) -> Result<f64> {
    check_n(n)?;
    let a = alpha(e);
    Ok(1.0 - (p * a + (1.0 - p) * (1.0 - a)) * match_n_hit_rate(n))
}

/// Optimal 1:N strategy. At `alpha == 0.5` both choices tie; `p = 1` is
/// reported.
pub fn match_n_error_imperfect(e: GenderErrorRates, n: usize) -> Result<OracleResult> {
    check_n(n)?;
    let a = alpha(e);
    let hit = match_n_hit_rate(n);
    let (p, error) = if a >= 0.5 {
        (1.0, 1.0 - a * hit)
    } else {
        (0.0, 1.0 - (1.0 - a) * hit)
    };
    Ok(OracleResult {
        strategy: StrategyParams { p, q: 0.0 },
        error,
        alpha: Some(a),
    })
}

/// Verification with perfect genders: reject mismatched pairs, accept
/// matched ones 2/3 of the time; EER 1/3.
pub fn verify_eer_perfect() -> OracleResult {
    let p = 2.0 / 3.0;
    OracleResult {
        strategy: StrategyParams { p, q: 0.0 },
        error: 0.5 * p,
        alpha: Some(1.0),
    }
}

/// `(F_A, F_R)` for accept probabilities `p` (perceived match) and `q`
/// (perceived mismatch).
pub fn verify_rates_at(e: GenderErrorRates, p: f64, q: f64) -> (f64, f64) {
    let a = alpha(e);
    (0.5 * (p + q), 1.0 - a * p - (1.0 - a) * q)
}

/// Optimal equal-error operating point. At `alpha == 0.5` both branches give
/// EER 0.5; the `alpha > 0.5` branch is reported.
pub fn verify_eer_imperfect(e: GenderErrorRates) -> OracleResult {
    let a = alpha(e);
    let (p, q, eer) = if a >= 0.5 {
        (2.0 / (1.0 + 2.0 * a), 0.0, 1.0 / (1.0 + 2.0 * a))
    } else {
        (0.0, 2.0 / (3.0 - 2.0 * a), 1.0 / (3.0 - 2.0 * a))
    };
    OracleResult {
        strategy: StrategyParams { p, q },
        error: eer,
        alpha: Some(a),
    }
}
