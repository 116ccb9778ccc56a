//! Binary checkpoints.
//!
//! Layout: the magic `DIMNET1\n`, the text network spec terminated by its
//! `end` line, then every parameter tensor (running statistics included) as
//! little-endian `f64` in canonical order: branch A layers, branch B layers,
//! then heads (weight, bias).

use std::io::{Read, Write};

use super::params::ParamStore;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8] = b"DIMNET1\n";

pub fn write_checkpoint<W: Write>(
    spec: &NetworkSpec,
    params: &ParamStore,
    mut out: W,
) -> Result<()> {
    params.check_shapes(spec)?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(spec.to_text().as_bytes())?;
    let mut buf = Vec::new();
    for (_, t) in params.tensors(spec) {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(NetworkSpec, ParamStore)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let body = bytes
        .strip_prefix(CHECKPOINT_MAGIC)
        .ok_or_else(|| Error::parse(1, "missing DIMNET1 magic"))?;
    let end = find_end(body).ok_or_else(|| Error::parse(0, "spec block has no `end` line"))?;
    let text = std::str::from_utf8(&body[..end])
        .map_err(|_| Error::parse(0, "spec block is not UTF-8"))?;
    let (spec, _) = NetworkSpec::from_lines(text.lines())?;
    let raw = &body[end..];

    let mut params = ParamStore::zeroed(&spec)?;
    let total: usize = params.tensors(&spec).iter().map(|(_, t)| t.numel()).sum();
    if raw.len() != total * 8 {
        return Err(Error::shape(format!(
            "checkpoint holds {} bytes of parameters, spec needs {}",
            raw.len(),
            total * 8
        )));
    }
    let mut values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for (_, t) in params.tensors_mut(&spec) {
        for v in t.data_mut() {
            *v = values.next().unwrap();
        }
    }
    params.check_shapes(&spec)?;
    Ok((spec, params))
}

/// Byte offset just past the `end\n` line.
fn find_end(body: &[u8]) -> Option<usize> {
    let mut start = 0;
    while start < body.len() {
        let nl = body[start..].iter().position(|&b| b == b'\n')? + start;
        if &body[start..nl] == b"end" {
            return Some(nl + 1);
        }
        start = nl + 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{CovariateSchema, FeatureShape};

    fn spec() -> NetworkSpec {
        NetworkSpec::conv(
            FeatureShape(vec![8, 2]),
            FeatureShape(vec![4, 4, 1]),
            &[3],
            4,
            CovariateSchema::standard(5, 3).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = spec();
        let p = ParamStore::init(&s, 9).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&s, &p, &mut buf).unwrap();
        assert!(buf.starts_with(b"DIMNET1\ninput_a 8x2\n"));
        let (s2, p2) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(s2, s);
        assert_eq!(p2, p);
    }

    #[test]
    fn truncated_and_foreign_files_rejected() {
        let s = spec();
        let p = ParamStore::init(&s, 9).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&s, &p, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 8]).is_err());
        assert!(read_checkpoint(&b"DIMNET2\n"[..]).is_err());
    }
}
