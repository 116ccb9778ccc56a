use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use super::table::EmbeddingRow;
use crate::error::{Error, Result};

/// Convergence tolerance of the symmetric eigen-iteration (relative
/// off-diagonal size).
pub const MDS_TOLERANCE: f64 = 1e-10;
/// Iteration cap of the eigen-iteration before giving up.
pub const MDS_MAX_SWEEPS: usize = 10_000;

/// Classical (Torgerson) scaling of `points` to `out_dims` coordinates:
/// squared Euclidean distances are double-centered and the top eigenpairs
/// give the coordinates. Each output axis is signed so that its
/// largest-magnitude coordinate is positive.
pub fn mds_embed(points: &[Vec<f64>], out_dims: usize) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    if out_dims == 0 {
        return Err(Error::invalid("MDS needs at least one output dimension"));
    }
    if n < out_dims + 1 {
        return Err(Error::invalid(format!(
            "MDS to {out_dims} dimensions needs at least {} points",
            out_dims + 1
        )));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::shape("MDS points differ in dimension"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("MDS input".into()));
    }

    let sq = DMatrix::from_fn(n, n, |i, j| {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    });
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let gram = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand)
    });

    let eig = SymmetricEigen::try_new(gram, MDS_TOLERANCE, MDS_MAX_SWEEPS).ok_or_else(|| {
        Error::NonConvergence(format!(
            "MDS eigen-iteration after {MDS_MAX_SWEEPS} iterations"
        ))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut coords = vec![vec![0.0; out_dims]; n];
    for (k, &e) in order.iter().take(out_dims).enumerate() {
        let scale = eig.eigenvalues[e].max(0.0).sqrt();
        let col: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, e)] * scale).collect();
        let mut lead = 0;
        for i in 1..n {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for (row, v) in coords.iter_mut().zip(&col) {
            // + 0.0 turns -0.0 into 0.0
            row[k] = sign * v + 0.0;
        }
    }
    Ok(coords)
}

/// Writes planar coordinates as `sample_ref,modality,id,x,y`.
pub fn write_mds_csv<W: Write>(
    rows: &[&EmbeddingRow],
    coords: &[Vec<f64>],
    mut w: W,
) -> Result<()> {
    if rows.len() != coords.len() || coords.iter().any(|c| c.len() != 2) {
        return Err(Error::shape("MDS CSV needs one 2-D coordinate per row"));
    }
    writeln!(w, "sample_ref,modality,id,x,y")?;
    for (r, c) in rows.iter().zip(coords) {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.sample_ref, r.modality, r.id, c[0], c[1]
        )?;
    }
    Ok(())
}
