//! Text dataset format.
//!
//! ```text
//! DIMSET 1 <schema> A=<shape>,B=<shape> <split>
//! <id_index> <A|B> <label>... <feature>...
//! ```
//!
//! `<schema>` is `name:card,...`; shapes are `x`-joined dimensions. Features
//! are printed with 17 significant digits, so reading a written file gives
//! back bit-identical values.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{CovariateSchema, Dataset, FeatureShape, Modality, Sample, SplitTag};
use crate::error::{Error, Result};
use crate::netcore::Tensor;

pub const DATASET_MAGIC: &str = "DIMSET";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    writeln!(
        out,
        "{DATASET_MAGIC} {DATASET_VERSION} {} A={},B={} {}",
        dataset.schema,
        dataset.shape_a,
        dataset.shape_b,
        dataset.split.as_str()
    )?;
    let mut line = String::new();
    for s in &dataset.samples {
        line.clear();
        write!(line, "{} {}", s.id_index, s.modality).unwrap();
        for l in &s.labels {
            write!(line, " {l}").unwrap();
        }
        for x in s.features.data() {
            write!(line, " {x:.16e}").unwrap();
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn parse_header(line: &str) -> Result<(CovariateSchema, FeatureShape, FeatureShape, SplitTag)> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 5 || toks[0] != DATASET_MAGIC {
        return Err(Error::parse(
            1,
            "expected `DIMSET <version> <schema> <shapes> <split>`",
        ));
    }
    let version: u32 = toks[1]
        .parse()
        .map_err(|_| Error::parse(1, "bad version"))?;
    if version != DATASET_VERSION {
        return Err(Error::parse(1, format!("unsupported version {version}")));
    }
    let schema: CovariateSchema = toks[2]
        .parse()
        .map_err(|e: Error| Error::parse(1, e.to_string()))?;
    let (mut a, mut b) = (None, None);
    for part in toks[3].split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::parse(1, format!("bad shape entry `{part}`")))?;
        let shape: FeatureShape = v
            .parse()
            .map_err(|e: Error| Error::parse(1, e.to_string()))?;
        match k {
            "A" => a = Some(shape),
            "B" => b = Some(shape),
            _ => return Err(Error::parse(1, format!("unknown modality `{k}`"))),
        }
    }
    let split = toks[4]
        .parse()
        .map_err(|e: Error| Error::parse(1, e.to_string()))?;
    match (a, b) {
        (Some(a), Some(b)) => Ok((schema, a, b, split)),
        _ => Err(Error::parse(1, "both modality shapes required")),
    }
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty file"))??;
    let (schema, shape_a, shape_b, split) = parse_header(&header)?;
    let n_labels = schema.len();
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let id_index: usize = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(lineno, "bad id_index"))?;
        let modality: Modality = toks
            .next()
            .ok_or_else(|| Error::parse(lineno, "missing modality"))?
            .parse()
            .map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
        let mut labels = Vec::with_capacity(n_labels);
        for ci in 0..n_labels {
            let v: usize = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(lineno, "bad label"))?;
            if v >= schema.cardinality(ci) {
                return Err(Error::parse(lineno, format!("label {v} out of range")));
            }
            labels.push(v);
        }
        let shape = match modality {
            Modality::A => &shape_a,
            Modality::B => &shape_b,
        };
        let data: std::result::Result<Vec<f64>, _> = toks.map(str::parse::<f64>).collect();
        let data = data.map_err(|_| Error::parse(lineno, "bad feature value"))?;
        if data.len() != shape.numel() {
            return Err(Error::parse(
                lineno,
                format!("expected {} features, got {}", shape.numel(), data.len()),
            ));
        }
        samples.push(Sample {
            modality,
            features: Tensor::from_vec(shape.0.clone(), data)?,
            labels,
            id_index,
        });
    }
    Ok(Dataset {
        schema,
        shape_a,
        shape_b,
        samples,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_samples, sample_population, ModalityMaps};
    use proptest::prelude::*;

    fn sample_dataset(seed: u64) -> Dataset {
        let schema = CovariateSchema::standard(4, 2).unwrap();
        let pop = sample_population(&schema, 4, 0.5, &[0.7, 0.3], 3, seed).unwrap();
        let maps = ModalityMaps::random(
            FeatureShape(vec![4, 2]),
            FeatureShape(vec![2, 2, 1]),
            &schema,
            3,
            seed,
        );
        generate_samples(&pop, (2, 1), &maps, 0.7, &[0.0, 1.0, 0.5], seed).unwrap()
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_dataset(&sample_dataset(1), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(
            first,
            "DIMSET 1 id:4,gender:2,nationality:2 A=4x2,B=2x2x1 train"
        );
        assert_eq!(text.lines().count(), 1 + 12);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(read_dataset("NOPE 1 a:2 A=1,B=1 train\n".as_bytes()).is_err());
        assert!(read_dataset("DIMSET 2 a:2 A=1,B=1 train\n".as_bytes()).is_err());
        let short = "DIMSET 1 a:2 A=2,B=1 test\n0 A 1 0.5\n";
        assert!(matches!(
            read_dataset(short.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad_label = "DIMSET 1 a:2 A=1,B=1 test\n0 A 2 0.5\n";
        assert!(read_dataset(bad_label.as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn write_read_is_exact(seed in any::<u64>()) {
            let ds = sample_dataset(seed);
            let mut buf = Vec::new();
            write_dataset(&ds, &mut buf).unwrap();
            let back = read_dataset(buf.as_slice()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
