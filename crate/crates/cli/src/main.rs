//! `xmodal`: generate synthetic corpora, train disjoint cross-modal
//! embeddings, evaluate them, and tabulate covariate-only baselines.
//!
//! Every parameter is a `key=value` entry that can come from `--config FILE`
//! or from the matching flag (`--n-ids` for `n_ids`); flags win.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 I/O
//! error, 4 numerical divergence during training.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

macro_rules! keyed_args {
    ($(#[$meta:meta])* $name:ident { $($field:ident $(= $long:literal)? : $help:literal),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Args, Debug, Default)]
        #[allow(non_snake_case)]
        struct $name {
            $(
                #[arg(long $(= $long)?, value_name = "VALUE", help = $help)]
                $field: Option<String>,
            )*
        }

        impl $name {
            fn pairs(&self) -> Vec<(&'static str, String)> {
                let mut v = Vec::new();
                $(
                    if let Some(x) = &self.$field {
                        v.push((stringify!($field), x.clone()));
                    }
                )*
                v
            }
        }
    };
}

keyed_args!(
    /// Generate train/val/test datasets and a manifest.
    GenArgs {
        n_ids: "number of identities",
        n_nationalities: "nationality classes",
        gender_balance: "fraction of gender-0 identities",
        latent_dim: "identity latent dimension",
        shape_a: "modality A feature shape, e.g. 48 or 16x3",
        shape_b: "modality B feature shape, e.g. 48 or 8x8x1",
        per_id: "samples per identity as `a,b`",
        noise_sigma: "feature noise standard deviation",
        id_gain: "signal gain of the id one-hot",
        gender_gain: "signal gain of the gender one-hot",
        nationality_gain: "signal gain of the nationality one-hot",
        ratios: "train,val,test identity fractions",
        exact_gender_balance: "exact gender counts and gender-stratified splits (true/false)",
    }
);

keyed_args!(
    /// Train a network; writes model.ckpt, history.csv and train_config.txt.
    TrainArgs {
        data: "directory holding train.dimset (and optionally val.dimset)",
        arch: "mlp or conv",
        hidden: "hidden widths of the mlp, comma separated",
        filters: "conv block widths, comma separated",
        embedding_dim: "embedding dimension",
        batch_size: "minibatch size",
        modality_mix: "fraction of modality A samples per batch",
        lambda: "loss weights as `covariate:weight,...`",
        lr_initial: "initial learning rate",
        lr_drops: "schedule as `iteration:divisor,...`",
        total_iters: "training iterations",
        momentum: "SGD momentum",
        weight_decay: "weight decay",
        val_interval: "iterations between history rows",
    }
);

keyed_args!(
    /// Evaluate a checkpoint on a test set; writes metrics.csv (and mds.csv).
    EvalArgs {
        model: "checkpoint file",
        data: "test dataset file or directory holding test.dimset",
        protocols: "match2,matchN,verify,retrieval",
        strata: "U,G,N,GN",
        N = "N": "gallery sizes for matchN",
        direction: "a2b,b2a",
        mds: "also write mds.csv (true/false)",
    }
);

keyed_args!(
    /// Closed-form covariate-only baselines over a grid of error rates;
    /// writes oracle.csv.
    OracleArgs {
        e_f: "modality B gender error rates, comma separated",
        e_v: "modality A gender error rates, comma separated",
        N = "N": "gallery sizes",
        trials: "Monte Carlo trials per row (0 = closed form only)",
    }
);

keyed_args!(
    /// Monte Carlo of a chosen strategy; writes simulate.csv.
    SimulateArgs {
        e_f: "modality B gender error rate",
        e_v: "modality A gender error rate",
        p: "probability of following the perceived gender",
        q: "verification accept probability on perceived mismatch",
        N = "N": "gallery sizes",
        trials: "trials per row",
    }
);

keyed_args!(
    /// Planar MDS coordinates of test embeddings; writes mds.csv.
    MdsArgs {
        model: "checkpoint file",
        data: "test dataset file or directory holding test.dimset",
        limit: "maximum number of points",
        modality: "A, B or both",
    }
);

#[derive(Subcommand, Debug)]
enum Command {
    Gen(GenArgs),
    Train(TrainArgs),
    Eval(EvalArgs),
    Oracle(OracleArgs),
    Simulate(SimulateArgs),
    Mds(MdsArgs),
}

#[derive(Parser, Debug)]
#[command(
    name = "xmodal",
    version,
    about = "Disjoint cross-modal embeddings: data, training, evaluation, baselines"
)]
struct Cli {
    /// `key=value` file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    xmodal::par::set_threads(cli.threads).map_err(CliError::Other)?;
    let mut flags = match &cli.command {
        Command::Gen(a) => a.pairs(),
        Command::Train(a) => a.pairs(),
        Command::Eval(a) => a.pairs(),
        Command::Oracle(a) => a.pairs(),
        Command::Simulate(a) => a.pairs(),
        Command::Mds(a) => a.pairs(),
    };
    if let Some(s) = cli.seed {
        flags.push(("seed", s.to_string()));
    }
    let pairs = settings::gather(cli.config.as_deref(), flags)?;
    match cli.command {
        Command::Gen(_) => commands::gen(pairs, &cli.out),
        Command::Train(_) => commands::train_cmd(pairs, &cli.out),
        Command::Eval(_) => commands::eval_cmd(pairs, &cli.out),
        Command::Oracle(_) => commands::oracle_cmd(pairs, &cli.out),
        Command::Simulate(_) => commands::simulate_cmd(pairs, &cli.out),
        Command::Mds(_) => commands::mds_cmd(pairs, &cli.out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("xmodal: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
