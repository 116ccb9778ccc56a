//! Best achievable performance of a matcher that only knows each item's
//! (binary, balanced) gender, possibly misread at rates `e_f` (faces,
//! modality B) and `e_v` (voices, modality A), with Monte Carlo simulators
//! for every closed form.

mod closed_form;
mod report;
mod simulate;

pub use closed_form::*;
pub use report::{oracle_report, simulate_report, write_report, OracleRow, REPORT_HEADER};
pub use simulate::{
    simulate_match2, simulate_match_n, simulate_verification, VerificationSim, CHUNK_TRIALS,
};
