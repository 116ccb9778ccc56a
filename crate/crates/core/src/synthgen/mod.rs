//! Synthetic two-modality populations driven by shared latent factors.
//!
//! Each identity carries a latent vector and a covariate label vector. A
//! sample of modality A or B is produced by a fixed per-modality linear map
//! applied to `latent ⊕ gain-scaled covariate one-hots`, plus isotropic
//! Gaussian noise. Gains dial how recoverable each covariate is.

mod io;

pub use io::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::netcore::Tensor;
use crate::rng;

pub const ID_COVARIATE: &str = "id";
pub const GENDER_COVARIATE: &str = "gender";
pub const NATIONALITY_COVARIATE: &str = "nationality";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Covariate {
    pub name: String,
    pub cardinality: usize,
}

/// Ordered covariate set. The order indexes the classifier heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovariateSchema {
    covariates: Vec<Covariate>,
}

impl CovariateSchema {
    pub fn new(covariates: Vec<(String, usize)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (name, card) in &covariates {
            if name.is_empty() || name.contains([',', ':', ' ', '\t', '\n']) {
                return Err(Error::invalid(format!("bad covariate name `{name}`")));
            }
            if !seen.insert(name.clone()) {
                return Err(Error::invalid(format!("duplicate covariate `{name}`")));
            }
            if *card < 2 {
                return Err(Error::invalid(format!(
                    "covariate `{name}` needs cardinality >= 2, got {card}"
                )));
            }
        }
        Ok(Self {
            covariates: covariates
                .into_iter()
                .map(|(name, cardinality)| Covariate { name, cardinality })
                .collect(),
        })
    }

    /// The usual `id, gender, nationality` schema.
    pub fn standard(n_ids: usize, n_nationalities: usize) -> Result<Self> {
        Self::new(vec![
            (ID_COVARIATE.into(), n_ids),
            (GENDER_COVARIATE.into(), 2),
            (NATIONALITY_COVARIATE.into(), n_nationalities),
        ])
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    pub fn cardinality(&self, index: usize) -> usize {
        self.covariates[index].cardinality
    }

    pub fn total_cardinality(&self) -> usize {
        self.covariates.iter().map(|c| c.cardinality).sum()
    }
}

impl fmt::Display for CovariateSchema {
    /// `name:card,name:card,...`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.covariates.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", c.name, c.cardinality)?;
        }
        Ok(())
    }
}

impl FromStr for CovariateSchema {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut covs = Vec::new();
        for part in s.split(',') {
            let (name, card) = part
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("bad schema entry `{part}`")))?;
            let card = card
                .parse()
                .map_err(|_| Error::invalid(format!("bad cardinality in `{part}`")))?;
            covs.push((name.to_string(), card));
        }
        Self::new(covs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    /// Voice-like: 1-D `length × channels` signals.
    A,
    /// Face-like: 2-D `h × w × channels` images.
    B,
}

impl Modality {
    pub fn other(self) -> Modality {
        match self {
            Modality::A => Modality::B,
            Modality::B => Modality::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::A => "A",
            Modality::B => "B",
        }
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Modality::A),
            "B" | "b" => Ok(Modality::B),
            _ => Err(Error::invalid(format!("unknown modality `{s}`"))),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-sample feature layout: `[n]` flat, `[len, ch]` sequence, `[h, w, ch]` image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureShape(pub Vec<usize>);

impl FeatureShape {
    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

impl FromStr for FeatureShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let dims: std::result::Result<Vec<usize>, _> = s.split('x').map(str::parse).collect();
        let dims = dims.map_err(|_| Error::invalid(format!("bad shape `{s}`")))?;
        if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
            return Err(Error::invalid(format!("bad shape `{s}`")));
        }
        Ok(FeatureShape(dims))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identity {
    pub id_index: usize,
    pub labels: Vec<usize>,
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationTable {
    pub schema: CovariateSchema,
    pub identities: Vec<Identity>,
}

impl PopulationTable {
    pub fn latent_dim(&self) -> usize {
        self.identities.first().map_or(0, |i| i.latent.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub modality: Modality,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub id_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

impl FromStr for SplitTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitTag::Train),
            "val" => Ok(SplitTag::Val),
            "test" => Ok(SplitTag::Test),
            _ => Err(Error::invalid(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: CovariateSchema,
    pub shape_a: FeatureShape,
    pub shape_b: FeatureShape,
    pub samples: Vec<Sample>,
    pub split: SplitTag,
}

impl Dataset {
    pub fn shape(&self, modality: Modality) -> &FeatureShape {
        match modality {
            Modality::A => &self.shape_a,
            Modality::B => &self.shape_b,
        }
    }

    pub fn identity_set(&self) -> BTreeSet<usize> {
        self.samples.iter().map(|s| s.id_index).collect()
    }

    pub fn count(&self, modality: Modality) -> usize {
        self.samples
            .iter()
            .filter(|s| s.modality == modality)
            .count()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Draws the identities of a synthetic population.
///
/// `gender` (if in the schema) takes value 0 with probability `gender_balance`.
/// `nationality` follows `nationality_weights`; any other non-id covariate is
/// uniform over its values. The `id` covariate, when present, equals the
/// identity index.
pub fn sample_population(
    schema: &CovariateSchema,
    n_ids: usize,
    gender_balance: f64,
    nationality_weights: &[f64],
    latent_dim: usize,
    seed: u64,
) -> Result<PopulationTable> {
    if n_ids < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 identities, got {n_ids}"
        )));
    }
    if !(0.0..=1.0).contains(&gender_balance) {
        return Err(Error::invalid("gender_balance must lie in [0, 1]"));
    }
    if let Some(ni) = schema.index_of(NATIONALITY_COVARIATE) {
        if nationality_weights.len() != schema.cardinality(ni) {
            return Err(Error::invalid(format!(
                "expected {} nationality weights, got {}",
                schema.cardinality(ni),
                nationality_weights.len()
            )));
        }
        if nationality_weights
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::invalid("nationality weights must be non-negative"));
        }
        let total: f64 = nationality_weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "nationality weights sum to {total}, expected 1"
            )));
        }
    }
    if let Some(ii) = schema.index_of(ID_COVARIATE) {
        if schema.cardinality(ii) < n_ids {
            return Err(Error::invalid(format!(
                "id covariate has {} classes for {n_ids} identities",
                schema.cardinality(ii)
            )));
        }
    }

    let mut rng = rng::child(seed, "population");
    let identities = (0..n_ids)
        .map(|id_index| {
            let labels = schema
                .covariates()
                .iter()
                .map(|c| match c.name.as_str() {
                    ID_COVARIATE => id_index,
                    GENDER_COVARIATE if c.cardinality == 2 => {
                        usize::from(!rng::bernoulli(&mut rng, gender_balance))
                    }
                    NATIONALITY_COVARIATE => rng::categorical(&mut rng, nationality_weights),
                    _ => rng::below(&mut rng, c.cardinality),
                })
                .collect();
            let latent = (0..latent_dim).map(|_| rng::normal(&mut rng)).collect();
            Identity {
                id_index,
                labels,
                latent,
            }
        })
        .collect();
    Ok(PopulationTable {
        schema: schema.clone(),
        identities,
    })
}

/// Default nationality prior: 0.65 on class 0, the rest uniform.
pub fn skewed_nationality_weights(k: usize) -> Vec<f64> {
    match k {
        0 => vec![],
        1 => vec![1.0],
        _ => {
            let rest = 0.35 / (k - 1) as f64;
            let mut w = vec![rest; k];
            w[0] = 0.65;
            w
        }
    }
}

/// A fixed random linear map `latent ⊕ one-hots → features` for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityMap {
    pub shape: FeatureShape,
    pub in_dim: usize,
    /// Row-major `[shape.numel(), in_dim]`.
    pub weights: Vec<f64>,
}

impl ModalityMap {
    pub fn out_dim(&self) -> usize {
        self.weights.len() / self.in_dim.max(1)
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .map(|row| row.iter().zip(input).map(|(w, x)| w * x).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityMaps {
    pub a: ModalityMap,
    pub b: ModalityMap,
}

impl ModalityMaps {
    /// Gaussian maps with entries `N(0, 1/in_dim)`, seeded once.
    pub fn random(
        shape_a: FeatureShape,
        shape_b: FeatureShape,
        schema: &CovariateSchema,
        latent_dim: usize,
        seed: u64,
    ) -> Self {
        let in_dim = latent_dim + schema.total_cardinality();
        let scale = 1.0 / (in_dim as f64).sqrt();
        let make = |shape: FeatureShape, name: &str| {
            let mut rng = rng::child(seed, name);
            let weights = (0..shape.numel() * in_dim)
                .map(|_| scale * rng::normal(&mut rng))
                .collect();
            ModalityMap {
                shape,
                in_dim,
                weights,
            }
        };
        ModalityMaps {
            a: make(shape_a, "map-a"),
            b: make(shape_b, "map-b"),
        }
    }

    pub fn get(&self, modality: Modality) -> &ModalityMap {
        match modality {
            Modality::A => &self.a,
            Modality::B => &self.b,
        }
    }
}

/// Draws `per_id.0` A-samples then `per_id.1` B-samples for every identity,
/// identities in table order.
pub fn generate_samples(
    pop: &PopulationTable,
    per_id: (usize, usize),
    maps: &ModalityMaps,
    noise_sigma: f64,
    covariate_signal: &[f64],
    seed: u64,
) -> Result<Dataset> {
    let schema = &pop.schema;
    if covariate_signal.len() != schema.len() {
        return Err(Error::invalid(format!(
            "expected {} covariate gains, got {}",
            schema.len(),
            covariate_signal.len()
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid("noise_sigma must be finite and >= 0"));
    }
    let in_dim = pop.latent_dim() + schema.total_cardinality();
    for m in [Modality::A, Modality::B] {
        let map = maps.get(m);
        if map.in_dim != in_dim || map.weights.len() != map.shape.numel() * in_dim {
            return Err(Error::shape(format!(
                "modality {m} map is {}x{} but config needs {}x{in_dim}",
                map.out_dim(),
                map.in_dim,
                map.shape.numel()
            )));
        }
    }

    let mut rng = rng::child(seed, "samples");
    let mut samples = Vec::with_capacity(pop.identities.len() * (per_id.0 + per_id.1));
    for ident in &pop.identities {
        let mut code = ident.latent.clone();
        for (ci, cov) in schema.covariates().iter().enumerate() {
            let start = code.len();
            code.resize(start + cov.cardinality, 0.0);
            code[start + ident.labels[ci]] = covariate_signal[ci];
        }
        for (modality, count) in [(Modality::A, per_id.0), (Modality::B, per_id.1)] {
            let map = maps.get(modality);
            let clean = map.apply(&code);
            for _ in 0..count {
                let data = clean
                    .iter()
                    .map(|x| {
                        if noise_sigma > 0.0 {
                            x + noise_sigma * rng::normal(&mut rng)
                        } else {
                            *x
                        }
                    })
                    .collect();
                samples.push(Sample {
                    modality,
                    features: Tensor::from_vec(map.shape.0.clone(), data)?,
                    labels: ident.labels.clone(),
                    id_index: ident.id_index,
                });
            }
        }
    }
    Ok(Dataset {
        schema: schema.clone(),
        shape_a: maps.a.shape.clone(),
        shape_b: maps.b.shape.clone(),
        samples,
        split: SplitTag::Train,
    })
}

/// Per-split identity counts by the largest-remainder rule.
fn split_counts(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        // guard against 8.000000000000002-style products
        *c = (e + 1e-9).floor() as usize;
    }
    let mut left = n.saturating_sub(counts.iter().sum());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| {
        let ri = exact[i] - counts[i] as f64;
        let rj = exact[j] - counts[j] as f64;
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if ratios[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

fn check_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::invalid("split ratios must be non-negative"));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "split ratios sum to {total}, expected 1"
        )));
    }
    Ok(())
}

fn partition(dataset: &Dataset, assignment: &HashMap<usize, usize>) -> (Dataset, Dataset, Dataset) {
    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for s in &dataset.samples {
        parts[assignment[&s.id_index]].push(s.clone());
    }
    let [train, val, test] = parts;
    let make = |samples, split| Dataset {
        schema: dataset.schema.clone(),
        shape_a: dataset.shape_a.clone(),
        shape_b: dataset.shape_b.clone(),
        samples,
        split,
    };
    (
        make(train, SplitTag::Train),
        make(val, SplitTag::Val),
        make(test, SplitTag::Test),
    )
}

/// Shuffles `ids` and hands out `counts[i]` of them to split `i`.
fn assign(
    ids: &[usize],
    counts: [usize; 3],
    rng: &mut rng::Stream,
    out: &mut HashMap<usize, usize>,
) {
    let order = rng::choose_distinct(rng, ids.len(), ids.len());
    let mut cursor = 0;
    for (split, &count) in counts.iter().enumerate() {
        for &k in &order[cursor..cursor + count] {
            out.insert(ids[k], split);
        }
        cursor += count;
    }
}

/// Partitions a dataset by identity into train/val/test.
pub fn split_by_identity(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let ratios = [ratios.0, ratios.1, ratios.2];
    check_ratios(ratios)?;
    let ids: Vec<usize> = dataset.identity_set().into_iter().collect();
    let nonzero = ratios.iter().filter(|r| **r > 0.0).count();
    if ids.len() < nonzero {
        return Err(Error::invalid(format!(
            "{} identities cannot fill {nonzero} non-empty splits",
            ids.len()
        )));
    }
    let mut counts = split_counts(ids.len(), ratios);
    // every split with a positive ratio gets at least one identity
    for i in 0..3 {
        if ratios[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| counts[j]).unwrap();
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    let mut assignment = HashMap::new();
    assign(
        &ids,
        counts,
        &mut rng::child(seed, "split"),
        &mut assignment,
    );
    Ok(partition(dataset, &assignment))
}

/// Like [`split_by_identity`], but splits the identities of each value of
/// `covariate` separately, so every split keeps the covariate's proportions
/// up to rounding.
pub fn split_by_identity_within(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    covariate: &str,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let ratios = [ratios.0, ratios.1, ratios.2];
    check_ratios(ratios)?;
    let c = dataset
        .schema
        .index_of(covariate)
        .ok_or_else(|| Error::MissingCovariate(covariate.to_string()))?;
    let mut strata: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for s in &dataset.samples {
        strata.entry(s.labels[c]).or_default().insert(s.id_index);
    }
    let mut rng = rng::child(seed, "split");
    let mut assignment = HashMap::new();
    let mut filled = [0usize; 3];
    for ids in strata.values() {
        let ids: Vec<usize> = ids.iter().copied().collect();
        let counts = split_counts(ids.len(), ratios);
        for i in 0..3 {
            filled[i] += counts[i];
        }
        assign(&ids, counts, &mut rng, &mut assignment);
    }
    if (0..3).any(|i| ratios[i] > 0.0 && filled[i] == 0) {
        return Err(Error::invalid(
            "too few identities per stratum to fill every non-empty split",
        ));
    }
    Ok(partition(dataset, &assignment))
}

/// Reassigns genders so that exactly `round(n * gender_balance)` identities
/// have gender 0, in random order.
pub fn balance_genders(pop: &mut PopulationTable, gender_balance: f64, seed: u64) -> Result<()> {
    if !(0.0..=1.0).contains(&gender_balance) {
        return Err(Error::invalid("gender_balance must lie in [0, 1]"));
    }
    let g = pop
        .schema
        .index_of(GENDER_COVARIATE)
        .ok_or_else(|| Error::MissingCovariate(GENDER_COVARIATE.to_string()))?;
    let n = pop.identities.len();
    let zeros = (n as f64 * gender_balance).round() as usize;
    let order = rng::choose_distinct(&mut rng::child(seed, "balance"), n, n);
    for (rank, &i) in order.iter().enumerate() {
        pop.identities[i].labels[g] = usize::from(rank >= zeros);
    }
    Ok(())
}

/// Knobs for a complete synthetic corpus with the standard schema.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub n_ids: usize,
    pub n_nationalities: usize,
    pub gender_balance: f64,
    pub latent_dim: usize,
    pub shape_a: FeatureShape,
    pub shape_b: FeatureShape,
    pub per_id: (usize, usize),
    pub noise_sigma: f64,
    pub id_gain: f64,
    pub gender_gain: f64,
    pub nationality_gain: f64,
    pub ratios: (f64, f64, f64),
    /// Exact gender counts in the population and gender-stratified splits,
    /// instead of independent draws.
    pub exact_gender_balance: bool,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_ids: 300,
            n_nationalities: 8,
            gender_balance: 0.5,
            latent_dim: 16,
            shape_a: FeatureShape(vec![48]),
            shape_b: FeatureShape(vec![48]),
            per_id: (16, 16),
            noise_sigma: 0.3,
            id_gain: 0.0,
            gender_gain: 4.0,
            nationality_gain: 1.0,
            ratios: (200.0 / 300.0, 50.0 / 300.0, 50.0 / 300.0),
            exact_gender_balance: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub population: PopulationTable,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Population, samples and identity split from one seed.
pub fn generate_corpus(config: &CorpusConfig, seed: u64) -> Result<Corpus> {
    let schema = CovariateSchema::standard(config.n_ids, config.n_nationalities)?;
    let weights = skewed_nationality_weights(config.n_nationalities);
    let mut population = sample_population(
        &schema,
        config.n_ids,
        config.gender_balance,
        &weights,
        config.latent_dim,
        rng::derive_seed(seed, 1),
    )?;
    if config.exact_gender_balance {
        balance_genders(
            &mut population,
            config.gender_balance,
            rng::derive_seed(seed, 5),
        )?;
    }
    let maps = ModalityMaps::random(
        config.shape_a.clone(),
        config.shape_b.clone(),
        &schema,
        config.latent_dim,
        rng::derive_seed(seed, 2),
    );
    let gains = [config.id_gain, config.gender_gain, config.nationality_gain];
    let all = generate_samples(
        &population,
        config.per_id,
        &maps,
        config.noise_sigma,
        &gains,
        rng::derive_seed(seed, 3),
    )?;
    let split_seed = rng::derive_seed(seed, 4);
    let (train, val, test) = if config.exact_gender_balance {
        split_by_identity_within(&all, config.ratios, GENDER_COVARIATE, split_seed)?
    } else {
        split_by_identity(&all, config.ratios, split_seed)?
    };
    Ok(Corpus {
        population,
        train,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gender_schema() -> CovariateSchema {
        CovariateSchema::new(vec![("gender".into(), 2)]).unwrap()
    }

    #[test]
    fn schema_rejects_duplicates_and_unary() {
        assert!(CovariateSchema::new(vec![("g".into(), 2), ("g".into(), 3)]).is_err());
        assert!(CovariateSchema::new(vec![("g".into(), 1)]).is_err());
        let s: CovariateSchema = "id:10,gender:2".parse().unwrap();
        assert_eq!(s.to_string(), "id:10,gender:2");
    }

    #[test]
    fn small_population_respects_cardinality() {
        let pop = sample_population(&gender_schema(), 4, 0.5, &[], 3, 7).unwrap();
        assert_eq!(pop.identities.len(), 4);
        for (i, ident) in pop.identities.iter().enumerate() {
            assert_eq!(ident.id_index, i);
            assert!(ident.labels[0] < 2);
            assert_eq!(ident.latent.len(), 3);
        }
    }

    #[test]
    fn degenerate_nationality_prior() {
        let schema = CovariateSchema::standard(20, 4).unwrap();
        let pop = sample_population(&schema, 20, 0.5, &[1.0, 0.0, 0.0, 0.0], 2, 9).unwrap();
        assert!(pop.identities.iter().all(|i| i.labels[2] == 0));
        assert!(pop.identities.iter().all(|i| i.labels[0] == i.id_index));
    }

    #[test]
    fn gender_count_within_binomial_bound() {
        // Binomial(10000, 0.5): sd = 50, so 4 sd = [4800, 5200].
        let pop = sample_population(&gender_schema(), 10_000, 0.5, &[], 0, 1).unwrap();
        let zeros = pop.identities.iter().filter(|i| i.labels[0] == 0).count();
        assert!((4800..=5200).contains(&zeros), "{zeros}");
    }

    #[test]
    fn population_errors() {
        let schema = CovariateSchema::standard(5, 2).unwrap();
        assert!(sample_population(&schema, 1, 0.5, &[0.5, 0.5], 2, 0).is_err());
        assert!(sample_population(&schema, 5, 0.5, &[0.5, 0.6], 2, 0).is_err());
        assert!(sample_population(&schema, 6, 0.5, &[0.5, 0.5], 2, 0).is_err());
    }

    fn tiny_setup(noise: f64, gains: [f64; 3]) -> Dataset {
        let schema = CovariateSchema::standard(6, 3).unwrap();
        let pop = sample_population(&schema, 6, 0.5, &[0.5, 0.25, 0.25], 4, 2).unwrap();
        let maps = ModalityMaps::random(
            FeatureShape(vec![5, 2]),
            FeatureShape(vec![2, 2, 3]),
            &schema,
            4,
            8,
        );
        generate_samples(&pop, (2, 3), &maps, noise, &gains, 3).unwrap()
    }

    #[test]
    fn noiseless_samples_repeat() {
        let ds = tiny_setup(0.0, [0.0, 1.0, 1.0]);
        assert_eq!(ds.samples[0].features, ds.samples[1].features);
        assert_eq!(ds.samples[0].features.shape(), &[5, 2]);
        assert_eq!(ds.samples[2].features.shape(), &[2, 2, 3]);
        // per-identity counts exactly as requested
        for id in 0..6 {
            let a = ds
                .samples
                .iter()
                .filter(|s| s.id_index == id && s.modality == Modality::A);
            let b = ds
                .samples
                .iter()
                .filter(|s| s.id_index == id && s.modality == Modality::B);
            assert_eq!((a.count(), b.count()), (2, 3));
        }
    }

    #[test]
    fn signal_off_equal_latents_give_equal_samples() {
        let schema = CovariateSchema::standard(2, 2).unwrap();
        let mut pop = sample_population(&schema, 2, 0.5, &[0.5, 0.5], 3, 4).unwrap();
        pop.identities[1].latent = pop.identities[0].latent.clone();
        pop.identities[1].labels[1] = 1 - pop.identities[0].labels[1];
        let maps =
            ModalityMaps::random(FeatureShape(vec![6]), FeatureShape(vec![6]), &schema, 3, 1);
        let ds = generate_samples(&pop, (1, 1), &maps, 0.0, &[0.0; 3], 5).unwrap();
        assert_eq!(ds.samples[0].features, ds.samples[2].features);
        assert_eq!(ds.samples[1].features, ds.samples[3].features);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(
            tiny_setup(0.5, [0.0, 1.0, 1.0]),
            tiny_setup(0.5, [0.0, 1.0, 1.0])
        );
    }

    #[test]
    fn map_shape_mismatch_is_an_error() {
        let schema = CovariateSchema::standard(3, 2).unwrap();
        let pop = sample_population(&schema, 3, 0.5, &[0.5, 0.5], 2, 0).unwrap();
        let mut maps =
            ModalityMaps::random(FeatureShape(vec![4]), FeatureShape(vec![4]), &schema, 2, 0);
        maps.b.shape = FeatureShape(vec![5]);
        assert!(matches!(
            generate_samples(&pop, (1, 1), &maps, 0.0, &[0.0; 3], 0),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn split_exact_proportions_and_partition() {
        let schema = CovariateSchema::standard(10, 2).unwrap();
        let pop = sample_population(&schema, 10, 0.5, &[0.5, 0.5], 2, 0).unwrap();
        let maps =
            ModalityMaps::random(FeatureShape(vec![3]), FeatureShape(vec![3]), &schema, 2, 0);
        let ds = generate_samples(&pop, (2, 2), &maps, 0.1, &[0.0, 1.0, 1.0], 0).unwrap();
        let (tr, va, te) = split_by_identity(&ds, (0.8, 0.1, 0.1), 4).unwrap();
        assert_eq!(
            (
                tr.identity_set().len(),
                va.identity_set().len(),
                te.identity_set().len()
            ),
            (8, 1, 1)
        );
        assert!(tr.identity_set().is_disjoint(&va.identity_set()));
        assert!(tr.identity_set().is_disjoint(&te.identity_set()));
        assert!(va.identity_set().is_disjoint(&te.identity_set()));
        assert_eq!(tr.len() + va.len() + te.len(), ds.len());

        let (tr, va, te) = split_by_identity(&ds, (1.0, 0.0, 0.0), 4).unwrap();
        assert_eq!(tr.len(), ds.len());
        assert!(va.is_empty() && te.is_empty());

        assert!(split_by_identity(&ds, (0.5, 0.4, 0.2), 4).is_err());
    }

    #[test]
    fn split_needs_enough_identities() {
        let schema = CovariateSchema::standard(2, 2).unwrap();
        let pop = sample_population(&schema, 2, 0.5, &[0.5, 0.5], 2, 0).unwrap();
        let maps =
            ModalityMaps::random(FeatureShape(vec![3]), FeatureShape(vec![3]), &schema, 2, 0);
        let ds = generate_samples(&pop, (1, 1), &maps, 0.0, &[0.0; 3], 0).unwrap();
        assert!(split_by_identity(&ds, (0.4, 0.3, 0.3), 0).is_err());
    }

    #[test]
    fn skewed_prior_sums_to_one() {
        let w = skewed_nationality_weights(8);
        assert_eq!(w[0], 0.65);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    fn genders(ds: &Dataset) -> [usize; 2] {
        let mut seen = BTreeMap::new();
        for s in &ds.samples {
            seen.insert(s.id_index, s.labels[1]);
        }
        let mut c = [0, 0];
        for g in seen.values() {
            c[*g] += 1;
        }
        c
    }

    #[test]
    fn default_corpus_is_exactly_gender_balanced() {
        let corpus = generate_corpus(&CorpusConfig::default(), 3).unwrap();
        let pop_zeros = corpus
            .population
            .identities
            .iter()
            .filter(|i| i.labels[1] == 0)
            .count();
        assert_eq!(pop_zeros, 150);
        assert_eq!(genders(&corpus.train), [100, 100]);
        assert_eq!(genders(&corpus.val), [25, 25]);
        assert_eq!(genders(&corpus.test), [25, 25]);
        for s in &corpus.test.samples {
            assert_eq!(s.labels, corpus.population.identities[s.id_index].labels);
        }
    }

    #[test]
    fn stratified_split_partitions() {
        let schema = CovariateSchema::standard(12, 2).unwrap();
        let mut pop = sample_population(&schema, 12, 0.5, &[0.5, 0.5], 2, 0).unwrap();
        balance_genders(&mut pop, 0.5, 1).unwrap();
        let maps =
            ModalityMaps::random(FeatureShape(vec![3]), FeatureShape(vec![3]), &schema, 2, 0);
        let ds = generate_samples(&pop, (1, 2), &maps, 0.1, &[0.0, 1.0, 1.0], 0).unwrap();
        let (tr, va, te) =
            split_by_identity_within(&ds, (0.5, 1.0 / 6.0, 1.0 / 3.0), GENDER_COVARIATE, 2)
                .unwrap();
        assert_eq!(
            (genders(&tr), genders(&va), genders(&te)),
            ([3, 3], [1, 1], [2, 2])
        );
        assert_eq!(tr.len() + va.len() + te.len(), ds.len());
        assert!(tr.identity_set().is_disjoint(&te.identity_set()));
        assert!(split_by_identity_within(&ds, (0.5, 0.5, 0.0), "age", 2).is_err());
    }
}
