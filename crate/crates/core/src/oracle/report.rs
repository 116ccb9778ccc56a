use std::io::Write;

use super::closed_form::*;
use super::simulate::{simulate_match2, simulate_match_n, simulate_verification};
use crate::error::Result;
use crate::rng::{derive_seed, tag};

pub const REPORT_HEADER: &str =
    "quantity,e_f,e_v,N,P,Q,alpha,closed_form,monte_carlo,trials,abs_diff";

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub quantity: String,
    pub rates: GenderErrorRates,
    pub n: Option<usize>,
    pub strategy: StrategyParams,
    pub alpha: Option<f64>,
    pub closed_form: f64,
    pub monte_carlo: Option<f64>,
    pub trials: u64,
}

impl OracleRow {
    pub fn abs_diff(&self) -> Option<f64> {
        self.monte_carlo.map(|m| (m - self.closed_form).abs())
    }
}

/// Closed-form optima for every protocol, each paired with a simulation at
/// the optimal strategy when `trials > 0`.
pub fn oracle_report(
    rates: GenderErrorRates,
    ns: &[usize],
    trials: u64,
    seed: u64,
) -> Result<Vec<OracleRow>> {
    let m2 = match2_error_imperfect(rates);
    let mut strategies = vec![("match2".to_string(), None, m2.strategy)];
    for &n in ns {
        let r = match_n_error_imperfect(rates, n)?;
        strategies.push(("matchN".to_string(), Some(n), r.strategy));
    }
    let v = verify_eer_imperfect(rates);
    strategies.push(("verify".to_string(), None, v.strategy));
    let mut rows = build(rates, strategies, trials, seed)?;
    // at the optimum F_A = F_R analytically; report the exact EER
    if let Some(r) = rows.iter_mut().find(|r| r.quantity == "verify_eer") {
        r.closed_form = v.error;
    }
    Ok(rows)
}

/// Closed forms and simulations at a caller-chosen strategy.
pub fn simulate_report(
    rates: GenderErrorRates,
    strategy: StrategyParams,
    ns: &[usize],
    trials: u64,
    seed: u64,
) -> Result<Vec<OracleRow>> {
    let mut strategies = vec![("match2".to_string(), None, strategy)];
    for &n in ns {
        strategies.push(("matchN".to_string(), Some(n), strategy));
    }
    strategies.push(("verify".to_string(), None, strategy));
    build(rates, strategies, trials, seed)
}

fn build(
    rates: GenderErrorRates,
    strategies: Vec<(String, Option<usize>, StrategyParams)>,
    trials: u64,
    seed: u64,
) -> Result<Vec<OracleRow>> {
    let a = alpha(rates);
    let mut rows = Vec::new();
    for (quantity, n, s) in strategies {
        let row_seed = derive_seed(seed, tag(&format!("{quantity}/{}", n.unwrap_or(0))));
        let simulate = trials > 0;
        match (quantity.as_str(), n) {
            ("match2", _) => rows.push(OracleRow {
                quantity,
                rates,
                n: Some(2),
                strategy: s,
                alpha: None,
                closed_form: match2_error_at(rates, s.p),
                monte_carlo: if simulate {
                    Some(simulate_match2(rates, s.p, trials, row_seed)?)
                } else {
                    None
                },
                trials,
            }),
            ("matchN", Some(n)) => rows.push(OracleRow {
                quantity,
                rates,
                n: Some(n),
                strategy: s,
                alpha: Some(a),
                closed_form: match_n_error_at(rates, s.p, n)?,
                monte_carlo: if simulate {
                    Some(simulate_match_n(rates, s.p, n, trials, row_seed)?)
                } else {
                    None
                },
                trials,
            }),
            _ => {
                let (fa, fr) = verify_rates_at(rates, s.p, s.q);
                let sim = if simulate {
                    Some(simulate_verification(rates, s.p, s.q, trials, row_seed)?)
                } else {
                    None
                };
                let row = |quantity: &str, cf: f64, mc: Option<f64>| OracleRow {
                    quantity: quantity.to_string(),
                    rates,
                    n: None,
                    strategy: s,
                    alpha: Some(a),
                    closed_form: cf,
                    monte_carlo: mc,
                    trials,
                };
                rows.push(row("verify_eer", fa.max(fr), sim.map(|v| v.max_error())));
                rows.push(row("verify_fa", fa, sim.map(|v| v.false_accept)));
                rows.push(row("verify_fr", fr, sim.map(|v| v.false_reject)));
            }
        }
    }
    Ok(rows)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_report<W: Write>(rows: &[OracleRow], mut w: W) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.quantity,
            r.rates.e_f,
            r.rates.e_v,
            opt(r.n),
            r.strategy.p,
            r.strategy.q,
            opt(r.alpha),
            r.closed_form,
            opt(r.monte_carlo),
            if r.monte_carlo.is_some() {
                r.trials.to_string()
            } else {
                String::new()
            },
            opt(r.abs_diff()),
        )?;
    }
    Ok(())
}
