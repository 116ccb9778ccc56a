use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use xmodal::evalkit::{
    embed_all, evaluate, mds_embed, write_mds_csv, write_metrics_csv, Direction, EmbeddingRow,
    EvalRequest, Protocol, Stratification,
};
use xmodal::netcore::{read_checkpoint, write_checkpoint, NetworkSpec, ParamStore};
use xmodal::oracle::{
    oracle_report, simulate_report, write_report, GenderErrorRates, StrategyParams,
};
use xmodal::rng;
use xmodal::synthgen::{
    generate_corpus, read_dataset, write_dataset, CorpusConfig, Dataset, FeatureShape, Modality,
};
use xmodal::trainer::{train, TrainConfig};

use crate::error::CliError;
use crate::settings::{parse, parse_bool, parse_list, unknown};

type Pairs = Vec<(String, String)>;

fn out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(&out.display().to_string(), e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush()
        .map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    read_dataset(BufReader::new(f)).map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn load_model(path: &Path) -> Result<(NetworkSpec, ParamStore), CliError> {
    let f = File::open(path).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    read_checkpoint(BufReader::new(f)).map_err(|e| CliError::io(&path.display().to_string(), e))
}

/// A directory resolves to `<dir>/<default_file>`.
fn resolve(path: &Path, default_file: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_file)
    } else {
        path.to_path_buf()
    }
}

fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
}

pub fn gen(pairs: Pairs, out: &Path) -> Result<(), CliError> {
    let mut cfg = CorpusConfig::default();
    let mut seed = 0u64;
    for (k, v) in &pairs {
        match k.as_str() {
            "seed" => seed = parse(k, v)?,
            "n_ids" => cfg.n_ids = parse(k, v)?,
            "n_nationalities" => cfg.n_nationalities = parse(k, v)?,
            "gender_balance" => cfg.gender_balance = parse(k, v)?,
            "latent_dim" => cfg.latent_dim = parse(k, v)?,
            "shape_a" => cfg.shape_a = v.parse::<FeatureShape>()?,
            "shape_b" => cfg.shape_b = v.parse::<FeatureShape>()?,
            "per_id" => {
                let c: Vec<usize> = parse_list(k, v)?;
                let [a, b] = c[..] else {
                    return Err(CliError::Config("per_id takes `a_count,b_count`".into()));
                };
                cfg.per_id = (a, b);
            }
            "noise_sigma" => cfg.noise_sigma = parse(k, v)?,
            "id_gain" => cfg.id_gain = parse(k, v)?,
            "gender_gain" => cfg.gender_gain = parse(k, v)?,
            "nationality_gain" => cfg.nationality_gain = parse(k, v)?,
            "ratios" => {
                let r: Vec<f64> = parse_list(k, v)?;
                let [a, b, c] = r[..] else {
                    return Err(CliError::Config("ratios takes `train,val,test`".into()));
                };
                cfg.ratios = (a, b, c);
            }
            "exact_gender_balance" => cfg.exact_gender_balance = parse_bool(k, v)?,
            other => return Err(unknown("gen", other)),
        }
    }
    let corpus = generate_corpus(&cfg, seed)?;
    out_dir(out)?;
    let mut manifest = String::from("split,identities,samples_a,samples_b,records\n");
    for (name, ds) in [
        ("train", &corpus.train),
        ("val", &corpus.val),
        ("test", &corpus.test),
    ] {
        let path = out.join(format!("{name}.dimset"));
        let mut w = create(&path)?;
        write_dataset(ds, &mut w).map_err(|e| CliError::io(&path.display().to_string(), e))?;
        finish(w, &path)?;
        manifest.push_str(&format!(
            "{name},{},{},{},{}\n",
            ds.identity_set().len(),
            ds.count(Modality::A),
            ds.count(Modality::B),
            ds.len()
        ));
    }
    let path = out.join("manifest.csv");
    fs::write(&path, manifest).map_err(|e| CliError::io(&path.display().to_string(), e))
}

struct ArchConfig {
    arch: String,
    hidden: Vec<usize>,
    filters: Vec<usize>,
    embedding_dim: usize,
}

impl ArchConfig {
    fn build(&self, ds: &Dataset) -> Result<NetworkSpec, CliError> {
        let (a, b, heads) = (ds.shape_a.clone(), ds.shape_b.clone(), ds.schema.clone());
        Ok(match self.arch.as_str() {
            "mlp" => NetworkSpec::mlp(a, b, &self.hidden, self.embedding_dim, heads)?,
            "conv" => NetworkSpec::conv(a, b, &self.filters, self.embedding_dim, heads)?,
            other => {
                return Err(CliError::Config(format!(
                    "unknown arch `{other}` (mlp or conv)"
                )))
            }
        })
    }
}

pub fn train_cmd(pairs: Pairs, out: &Path) -> Result<(), CliError> {
    let mut cfg = TrainConfig::default();
    let mut arch = ArchConfig {
        arch: "mlp".into(),
        hidden: vec![64],
        filters: vec![8, 16],
        embedding_dim: 32,
    };
    let mut data = None;
    for (k, v) in &pairs {
        match k.as_str() {
            "data" => data = Some(PathBuf::from(v)),
            "arch" => arch.arch = v.clone(),
            "hidden" => {
                arch.hidden = if v.is_empty() {
                    Vec::new()
                } else {
                    parse_list(k, v)?
                }
            }
            "filters" => arch.filters = parse_list(k, v)?,
            "embedding_dim" => arch.embedding_dim = parse(k, v)?,
            key if TrainConfig::KEYS.contains(&key) => cfg.set(key, v)?,
            other => return Err(unknown("train", other)),
        }
    }
    cfg.validate()?;
    let data = required(&data, "data")?;
    let train_set = load_dataset(&resolve(data, "train.dimset"))?;
    let val_path = if data.is_dir() {
        Some(data.join("val.dimset"))
    } else {
        None
    };
    let val_set = match val_path {
        Some(p) if p.exists() => Some(load_dataset(&p)?),
        _ => None,
    };
    let spec = arch.build(&train_set)?;
    let outcome = train(&spec, &train_set, val_set.as_ref(), &cfg)?;
    out_dir(out)?;
    let path = out.join("model.ckpt");
    let mut w = create(&path)?;
    write_checkpoint(&spec, &outcome.params, &mut w)
        .map_err(|e| CliError::io(&path.display().to_string(), e))?;
    finish(w, &path)?;
    let path = out.join("history.csv");
    let mut w = create(&path)?;
    outcome
        .history
        .write_csv(&mut w)
        .map_err(|e| CliError::io(&path.display().to_string(), e))?;
    finish(w, &path)?;
    let path = out.join("train_config.txt");
    fs::write(&path, cfg.to_string()).map_err(|e| CliError::io(&path.display().to_string(), e))
}

fn list<T: std::str::FromStr<Err = xmodal::Error>>(value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(|s| s.parse::<T>().map_err(CliError::from))
        .collect()
}

pub fn eval_cmd(pairs: Pairs, out: &Path) -> Result<(), CliError> {
    let mut req = EvalRequest::default();
    let (mut model, mut data) = (None, None);
    let mut mds = false;
    for (k, v) in &pairs {
        match k.as_str() {
            "model" => model = Some(PathBuf::from(v)),
            "data" => data = Some(PathBuf::from(v)),
            "seed" => req.seed = parse(k, v)?,
            "protocols" => req.protocols = list::<Protocol>(v)?,
            "strata" => req.strata = list::<Stratification>(v)?,
            "N" => req.ns = parse_list(k, v)?,
            "direction" => req.directions = list::<Direction>(v)?,
            "mds" => mds = parse_bool(k, v)?,
            other => return Err(unknown("eval", other)),
        }
    }
    if req.ns.iter().any(|&n| n < 2) {
        return Err(CliError::Config("every N must be >= 2".into()));
    }
    let (spec, params) = load_model(required(&model, "model")?)?;
    let test = load_dataset(&resolve(required(&data, "data")?, "test.dimset"))?;
    let table = embed_all(&spec, &params, &test)?;
    let report = evaluate(&table, &test, &req)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    out_dir(out)?;
    let path = out.join("metrics.csv");
    let mut w = create(&path)?;
    write_metrics_csv(&report.rows, &mut w)
        .map_err(|e| CliError::io(&path.display().to_string(), e))?;
    finish(w, &path)?;
    if mds {
        let rows = pick_rows(&table.rows, DEFAULT_MDS_LIMIT, None, req.seed);
        write_mds(&rows, &out.join("mds.csv"))?;
    }
    Ok(())
}

const DEFAULT_MDS_LIMIT: usize = 400;

/// Up to `limit` rows of the requested modality, chosen at random but listed
/// in table order.
fn pick_rows(
    rows: &[EmbeddingRow],
    limit: usize,
    modality: Option<Modality>,
    seed: u64,
) -> Vec<&EmbeddingRow> {
    let pool: Vec<&EmbeddingRow> = rows
        .iter()
        .filter(|r| modality.is_none_or(|m| r.modality == m))
        .collect();
    if pool.len() <= limit {
        return pool;
    }
    let mut pick = rng::choose_distinct(&mut rng::child(seed, "mds"), pool.len(), limit);
    pick.sort_unstable();
    pick.into_iter().map(|i| pool[i]).collect()
}

fn write_mds(rows: &[&EmbeddingRow], path: &Path) -> Result<(), CliError> {
    let points: Vec<Vec<f64>> = rows.iter().map(|r| r.embedding.clone()).collect();
    let coords = mds_embed(&points, 2)?;
    let mut w = create(path)?;
    write_mds_csv(rows, &coords, &mut w)
        .map_err(|e| CliError::io(&path.display().to_string(), e))?;
    finish(w, path)
}

pub fn mds_cmd(pairs: Pairs, out: &Path) -> Result<(), CliError> {
    let (mut model, mut data) = (None, None);
    let mut limit = DEFAULT_MDS_LIMIT;
    let mut modality = None;
    let mut seed = 0u64;
    for (k, v) in &pairs {
        match k.as_str() {
            "model" => model = Some(PathBuf::from(v)),
            "data" => data = Some(PathBuf::from(v)),
            "limit" => limit = parse(k, v)?,
            "seed" => seed = parse(k, v)?,
            "modality" => {
                modality = match v.as_str() {
                    "both" => None,
                    m => Some(m.parse::<Modality>()?),
                }
            }
            other => return Err(unknown("mds", other)),
        }
    }
    let (spec, params) = load_model(required(&model, "model")?)?;
    let test = load_dataset(&resolve(required(&data, "data")?, "test.dimset"))?;
    let table = embed_all(&spec, &params, &test)?;
    let rows = pick_rows(&table.rows, limit, modality, seed);
    out_dir(out)?;
    write_mds(&rows, &out.join("mds.csv"))
}

pub fn oracle_cmd(pairs: Pairs, out: &Path) -> Result<(), CliError> {
    let grid = vec![0.0, 0.1, 0.3, 0.5];
    let (mut e_f, mut e_v) = (grid.clone(), grid);
    let mut ns = vec![2, 5, 10];
    let mut trials = 0u64;
    let mut seed = 0u64;
    for (k, v) in &pairs {
        match k.as_str() {
            "e_f" => e_f = parse_list(k, v)?,
            "e_v" => e_v = parse_list(k, v)?,
            "N" => ns = parse_list(k, v)?,
            "trials" => trials = parse(k, v)?,
            "seed" => seed = parse(k, v)?,
            other => return Err(unknown("oracle", other)),
        }
    }
    let mut rows = Vec::new();
    for (i, &ef) in e_f.iter().enumerate() {
        for (j, &ev) in e_v.iter().enumerate() {
            let rates = GenderErrorRates::new(ef, ev)?;
            let cell_seed = rng::derive_seed(seed, (i * e_v.len() + j) as u64);
            rows.extend(oracle_report(rates, &ns, trials, cell_seed)?);
        }
    }
    out_dir(out)?;
    let path = out.join("oracle.csv");
    let mut w = create(&path)?;
    write_report(&rows, &mut w).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    finish(w, &path)
}

pub fn simulate_cmd(pairs: Pairs, out: &Path) -> Result<(), CliError> {
    let (mut e_f, mut e_v) = (0.0, 0.0);
    let (mut p, mut q) = (1.0, 0.0);
    let mut ns = vec![2, 5, 10];
    let mut trials = 1_000_000u64;
    let mut seed = 0u64;
    for (k, v) in &pairs {
        match k.as_str() {
            "e_f" => e_f = parse(k, v)?,
            "e_v" => e_v = parse(k, v)?,
            "p" => p = parse(k, v)?,
            "q" => q = parse(k, v)?,
            "N" => ns = parse_list(k, v)?,
            "trials" => trials = parse(k, v)?,
            "seed" => seed = parse(k, v)?,
            other => return Err(unknown("simulate", other)),
        }
    }
    if trials < 2 {
        return Err(CliError::Config("simulate needs trials >= 2".into()));
    }
    let rows = simulate_report(
        GenderErrorRates::new(e_f, e_v)?,
        StrategyParams::new(p, q)?,
        &ns,
        trials,
        seed,
    )?;
    out_dir(out)?;
    let path = out.join("simulate.csv");
    let mut w = create(&path)?;
    write_report(&rows, &mut w).map_err(|e| CliError::io(&path.display().to_string(), e))?;
    finish(w, &path)
}
