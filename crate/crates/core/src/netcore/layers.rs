//! Batched forward/backward kernels, one per layer kind.
//!
//! A batch activation is a `Vec` of per-sample flat buffers, all with the same
//! per-sample shape. Per-sample work runs through [`par`]; cross-sample sums
//! (parameter gradients, batch statistics) are reduced in sample order.

use super::params::LayerParams;
use super::spec::LayerSpec;
use super::tensor::Tensor;
use crate::par;

pub const BN_EPS: f64 = 1e-5;

pub type Batch = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-channel statistics of one batch (biased variance).
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    Input(Batch),
    BatchNorm {
        xhat: Batch,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    None,
}

fn sum_in_order(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for p in parts {
        for (a, x) in acc.iter_mut().zip(p) {
            *a += x;
        }
    }
    acc
}

fn dense_forward(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, bo)| {
            let row = &w[o * n_in..(o + 1) * n_in];
            bo + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
        })
        .collect()
}

struct ConvGeom {
    size: usize,
    stride: usize,
    padding: usize,
    cin: usize,
    filters: usize,
}

impl ConvGeom {
    /// Maps an output coordinate plus kernel offset to an input coordinate.
    #[inline]
    fn src(&self, out: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = out * self.stride + k;
        if pos < self.padding || pos - self.padding >= extent {
            None
        } else {
            Some(pos - self.padding)
        }
    }
}

fn conv1d_forward(
    g: &ConvGeom,
    w: &[f64],
    b: &[f64],
    x: &[f64],
    len_in: usize,
    len_out: usize,
) -> Vec<f64> {
    let mut y = vec![0.0; len_out * g.filters];
    for t in 0..len_out {
        for f in 0..g.filters {
            let mut acc = b[f];
            for k in 0..g.size {
                if let Some(s) = g.src(t, k, len_in) {
                    let xr = &x[s * g.cin..(s + 1) * g.cin];
                    let wr = &w[(f * g.size + k) * g.cin..(f * g.size + k + 1) * g.cin];
                    acc += xr.iter().zip(wr).map(|(a, c)| a * c).sum::<f64>();
                }
            }
            y[t * g.filters + f] = acc;
        }
    }
    y
}

/// Returns `(dx, dw, db)` for one sample.
fn conv1d_backward(
    g: &ConvGeom,
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    len_in: usize,
    len_out: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; g.filters];
    for t in 0..len_out {
        for f in 0..g.filters {
            let d = dy[t * g.filters + f];
            db[f] += d;
            for k in 0..g.size {
                if let Some(s) = g.src(t, k, len_in) {
                    let off = (f * g.size + k) * g.cin;
                    for c in 0..g.cin {
                        dw[off + c] += d * x[s * g.cin + c];
                        dx[s * g.cin + c] += d * w[off + c];
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

struct Grid2 {
    h_in: usize,
    w_in: usize,
    h_out: usize,
    w_out: usize,
}

fn conv2d_forward(g: &ConvGeom, grid: &Grid2, w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; grid.h_out * grid.w_out * g.filters];
    for oy in 0..grid.h_out {
        for ox in 0..grid.w_out {
            for f in 0..g.filters {
                let mut acc = b[f];
                for ky in 0..g.size {
                    let Some(sy) = g.src(oy, ky, grid.h_in) else {
                        continue;
                    };
                    for kx in 0..g.size {
                        let Some(sx) = g.src(ox, kx, grid.w_in) else {
                            continue;
                        };
                        let xo = (sy * grid.w_in + sx) * g.cin;
                        let wo = ((f * g.size + ky) * g.size + kx) * g.cin;
                        acc += x[xo..xo + g.cin]
                            .iter()
                            .zip(&w[wo..wo + g.cin])
                            .map(|(a, c)| a * c)
                            .sum::<f64>();
                    }
                }
                y[(oy * grid.w_out + ox) * g.filters + f] = acc;
            }
        }
    }
    y
}

fn conv2d_backward(
    g: &ConvGeom,
    grid: &Grid2,
    w: &[f64],
    x: &[f64],
    dy: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; g.filters];
    for oy in 0..grid.h_out {
        for ox in 0..grid.w_out {
            for f in 0..g.filters {
                let d = dy[(oy * grid.w_out + ox) * g.filters + f];
                db[f] += d;
                for ky in 0..g.size {
                    let Some(sy) = g.src(oy, ky, grid.h_in) else {
                        continue;
                    };
                    for kx in 0..g.size {
                        let Some(sx) = g.src(ox, kx, grid.w_in) else {
                            continue;
                        };
                        let xo = (sy * grid.w_in + sx) * g.cin;
                        let wo = ((f * g.size + ky) * g.size + kx) * g.cin;
                        for c in 0..g.cin {
                            dw[wo + c] += d * x[xo + c];
                            dx[xo + c] += d * w[wo + c];
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

fn per_channel_sums(
    xs: &Batch,
    channels: usize,
    f: impl Fn(usize, f64) -> f64 + Sync + Send,
) -> Vec<f64> {
    let parts = par::map(xs, |x| {
        let mut s = vec![0.0; channels];
        for (i, v) in x.iter().enumerate() {
            s[i % channels] += f(i % channels, *v);
        }
        s
    });
    sum_in_order(parts, channels)
}

/// Forward through one layer. `use_batch_stats` is false for batchnorm in
/// inference mode or when the sub-batch has a single sample.
pub(crate) fn forward(
    layer: &LayerSpec,
    params: &LayerParams,
    in_shape: &[usize],
    out_shape: &[usize],
    xs: Batch,
    mode: Mode,
) -> (Batch, LayerCache, Option<BnStats>) {
    let t = &params.tensors;
    match *layer {
        LayerSpec::Dense { .. } => {
            let (w, b) = (t[0].data(), t[1].data());
            let ys = par::map(&xs, |x| dense_forward(w, b, x));
            (ys, LayerCache::Input(xs), None)
        }
        LayerSpec::Conv1d {
            size,
            filters,
            stride,
            padding,
        } => {
            let g = ConvGeom {
                size,
                stride,
                padding,
                cin: in_shape[1],
                filters,
            };
            let (w, b) = (t[0].data(), t[1].data());
            let ys = par::map(&xs, |x| {
                conv1d_forward(&g, w, b, x, in_shape[0], out_shape[0])
            });
            (ys, LayerCache::Input(xs), None)
        }
        LayerSpec::Conv2d {
            size,
            filters,
            stride,
            padding,
        } => {
            let g = ConvGeom {
                size,
                stride,
                padding,
                cin: in_shape[2],
                filters,
            };
            let grid = Grid2 {
                h_in: in_shape[0],
                w_in: in_shape[1],
                h_out: out_shape[0],
                w_out: out_shape[1],
            };
            let (w, b) = (t[0].data(), t[1].data());
            let ys = par::map(&xs, |x| conv2d_forward(&g, &grid, w, b, x));
            (ys, LayerCache::Input(xs), None)
        }
        LayerSpec::BatchNorm => {
            let c = *in_shape.last().unwrap();
            let (gamma, beta) = (t[0].data(), t[1].data());
            let batch_stats = mode == Mode::Train && xs.len() > 1;
            let (mean, var, stats) = if batch_stats {
                let m = (xs.len() * xs[0].len() / c) as f64;
                let mean: Vec<f64> = per_channel_sums(&xs, c, |_, v| v)
                    .into_iter()
                    .map(|s| s / m)
                    .collect();
                let var: Vec<f64> = per_channel_sums(&xs, c, |ch, v| (v - mean[ch]).powi(2))
                    .into_iter()
                    .map(|s| s / m)
                    .collect();
                (mean.clone(), var.clone(), Some(BnStats { mean, var }))
            } else {
                (t[2].data().to_vec(), t[3].data().to_vec(), None)
            };
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let xhat = par::map(&xs, |x| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| (v - mean[i % c]) * inv_std[i % c])
                    .collect::<Vec<f64>>()
            });
            let ys = par::map(&xhat, |xh| {
                xh.iter()
                    .enumerate()
                    .map(|(i, v)| gamma[i % c] * v + beta[i % c])
                    .collect::<Vec<f64>>()
            });
            let cache = LayerCache::BatchNorm {
                xhat,
                inv_std,
                batch_stats,
            };
            (ys, cache, stats)
        }
        LayerSpec::Relu => {
            let ys = par::map(&xs, |x| x.iter().map(|v| v.max(0.0)).collect::<Vec<f64>>());
            (ys, LayerCache::Input(xs), None)
        }
        LayerSpec::GlobalAvgPool => {
            if in_shape.len() == 1 {
                return (xs, LayerCache::None, None);
            }
            let c = *in_shape.last().unwrap();
            let positions = (xs[0].len() / c) as f64;
            let ys = par::map(&xs, |x| {
                let mut s = vec![0.0; c];
                for (i, v) in x.iter().enumerate() {
                    s[i % c] += v;
                }
                s.into_iter().map(|v| v / positions).collect::<Vec<f64>>()
            });
            (ys, LayerCache::None, None)
        }
    }
}

/// Backward through one layer: returns input gradients and the summed
/// parameter gradients (same layout as `params.tensors`, running stats zero).
pub(crate) fn backward(
    layer: &LayerSpec,
    params: &LayerParams,
    in_shape: &[usize],
    out_shape: &[usize],
    cache: &LayerCache,
    dys: Batch,
) -> (Batch, Vec<Tensor>) {
    let t = &params.tensors;
    let zeros_like = || {
        t.iter()
            .map(|x| Tensor::zeros(x.shape().to_vec()))
            .collect::<Vec<_>>()
    };
    match (layer, cache) {
        (LayerSpec::Dense { out }, LayerCache::Input(xs)) => {
            let w = t[0].data();
            let n_in = xs[0].len();
            let idx: Vec<usize> = (0..xs.len()).collect();
            let parts = par::map(&idx, |&i| {
                let (x, dy) = (&xs[i], &dys[i]);
                let mut dx = vec![0.0; n_in];
                let mut dw = vec![0.0; out * n_in];
                for (o, d) in dy.iter().enumerate() {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let drow = &mut dw[o * n_in..(o + 1) * n_in];
                    for k in 0..n_in {
                        dx[k] += d * row[k];
                        drow[k] = d * x[k];
                    }
                }
                (dx, dw)
            });
            let mut grads = zeros_like();
            let mut dxs = Vec::with_capacity(parts.len());
            for ((dx, dw), dy) in parts.into_iter().zip(&dys) {
                for (a, v) in grads[0].data_mut().iter_mut().zip(&dw) {
                    *a += v;
                }
                for (a, v) in grads[1].data_mut().iter_mut().zip(dy) {
                    *a += v;
                }
                dxs.push(dx);
            }
            (dxs, grads)
        }
        (
            LayerSpec::Conv1d {
                size,
                filters,
                stride,
                padding,
            },
            LayerCache::Input(xs),
        ) => {
            let g = ConvGeom {
                size: *size,
                stride: *stride,
                padding: *padding,
                cin: in_shape[1],
                filters: *filters,
            };
            let w = t[0].data();
            let idx: Vec<usize> = (0..xs.len()).collect();
            let parts = par::map(&idx, |&i| {
                conv1d_backward(&g, w, &xs[i], &dys[i], in_shape[0], out_shape[0])
            });
            reduce_conv(parts, zeros_like())
        }
        (
            LayerSpec::Conv2d {
                size,
                filters,
                stride,
                padding,
            },
            LayerCache::Input(xs),
        ) => {
            let g = ConvGeom {
                size: *size,
                stride: *stride,
                padding: *padding,
                cin: in_shape[2],
                filters: *filters,
            };
            let grid = Grid2 {
                h_in: in_shape[0],
                w_in: in_shape[1],
                h_out: out_shape[0],
                w_out: out_shape[1],
            };
            let w = t[0].data();
            let idx: Vec<usize> = (0..xs.len()).collect();
            let parts = par::map(&idx, |&i| conv2d_backward(&g, &grid, w, &xs[i], &dys[i]));
            reduce_conv(parts, zeros_like())
        }
        (
            LayerSpec::BatchNorm,
            LayerCache::BatchNorm {
                xhat,
                inv_std,
                batch_stats,
            },
        ) => {
            let c = *in_shape.last().unwrap();
            let gamma = t[0].data();
            let idx: Vec<usize> = (0..xhat.len()).collect();
            let sums = par::map(&idx, |&i| {
                let mut s_dy = vec![0.0; c];
                let mut s_dyx = vec![0.0; c];
                for (k, (d, xh)) in dys[i].iter().zip(&xhat[i]).enumerate() {
                    s_dy[k % c] += d;
                    s_dyx[k % c] += d * xh;
                }
                (s_dy, s_dyx)
            });
            let mut sum_dy = vec![0.0; c];
            let mut sum_dyx = vec![0.0; c];
            for (a, b) in sums {
                for ch in 0..c {
                    sum_dy[ch] += a[ch];
                    sum_dyx[ch] += b[ch];
                }
            }
            // running statistics are constants, so d/dx is a plain scale
            let running = !batch_stats;
            let m = (xhat.len() * xhat[0].len() / c) as f64;
            let dxs = par::map(&idx, |&i| {
                dys[i]
                    .iter()
                    .zip(&xhat[i])
                    .enumerate()
                    .map(|(k, (d, xh))| {
                        let ch = k % c;
                        if running {
                            d * gamma[ch] * inv_std[ch]
                        } else {
                            gamma[ch] * inv_std[ch] / m * (m * d - sum_dy[ch] - xh * sum_dyx[ch])
                        }
                    })
                    .collect::<Vec<f64>>()
            });
            let mut grads = zeros_like();
            grads[0].data_mut().copy_from_slice(&sum_dyx);
            grads[1].data_mut().copy_from_slice(&sum_dy);
            (dxs, grads)
        }
        (LayerSpec::Relu, LayerCache::Input(xs)) => {
            let idx: Vec<usize> = (0..xs.len()).collect();
            let dxs = par::map(&idx, |&i| {
                xs[i]
                    .iter()
                    .zip(&dys[i])
                    .map(|(x, d)| if *x > 0.0 { *d } else { 0.0 })
                    .collect::<Vec<f64>>()
            });
            (dxs, vec![])
        }
        (LayerSpec::GlobalAvgPool, LayerCache::None) => {
            if in_shape.len() == 1 {
                return (dys, vec![]);
            }
            let c = *in_shape.last().unwrap();
            let numel: usize = in_shape.iter().product();
            let positions = (numel / c) as f64;
            let dxs = par::map(&dys, |dy| {
                (0..numel)
                    .map(|i| dy[i % c] / positions)
                    .collect::<Vec<f64>>()
            });
            (dxs, vec![])
        }
        _ => unreachable!("layer cache does not match layer kind"),
    }
}

fn reduce_conv(
    parts: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    mut grads: Vec<Tensor>,
) -> (Batch, Vec<Tensor>) {
    let mut dxs = Vec::with_capacity(parts.len());
    for (dx, dw, db) in parts {
        for (a, v) in grads[0].data_mut().iter_mut().zip(&dw) {
            *a += v;
        }
        for (a, v) in grads[1].data_mut().iter_mut().zip(&db) {
            *a += v;
        }
        dxs.push(dx);
    }
    (dxs, grads)
}
