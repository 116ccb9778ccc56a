//! Trial construction, matching/verification/retrieval metrics, covariate
//! accuracy and MDS coordinates.

mod mds;
mod metrics;
mod report;
mod table;
mod trials;

pub use mds::{mds_embed, write_mds_csv, MDS_MAX_SWEEPS, MDS_TOLERANCE};
pub use metrics::{
    eer, match_accuracy, retrieval_map, verification_scores, EerResult, RetrievalResult,
};
pub use report::{
    evaluate, write_metrics_csv, EvalReport, EvalRequest, MetricRow, Protocol, METRICS_HEADER,
};
pub use table::{
    covariate_accuracy, embed_all, head_accuracy, EmbeddingRow, EmbeddingTable, ModalityAccuracy,
};
pub use trials::{
    build_match_trials, build_verification_pairs, Direction, MatchTrial, Stratification, TrialSet,
    Trials, VerifyPair,
};
