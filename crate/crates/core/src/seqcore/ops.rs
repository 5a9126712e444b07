//! Row-major dense kernels and their adjoints. Gradients always accumulate.

use std::ops::Range;

pub(crate) const LN_EPS: f64 = 1e-5;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `y[r] = W x[r] + b` with `W` stored `out x in`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_forward(
    x: &[f64],
    rows: usize,
    params: &[f64],
    w: &Range<usize>,
    b: &Range<usize>,
    in_dim: usize,
    out_dim: usize,
    y: &mut [f64],
) {
    let w = &params[w.clone()];
    let b = &params[b.clone()];
    for r in 0..rows {
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        let yr = &mut y[r * out_dim..(r + 1) * out_dim];
        for o in 0..out_dim {
            yr[o] = b[o] + dot(&w[o * in_dim..(o + 1) * in_dim], xr);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    x: &[f64],
    rows: usize,
    params: &[f64],
    grads: &mut [f64],
    w: &Range<usize>,
    b: &Range<usize>,
    in_dim: usize,
    out_dim: usize,
    dy: &[f64],
    mut dx: Option<&mut [f64]>,
) {
    let wp = &params[w.clone()];
    for r in 0..rows {
        let xr = &x[r * in_dim..(r + 1) * in_dim];
        let dyr = &dy[r * out_dim..(r + 1) * out_dim];
        {
            let gb = &mut grads[b.clone()];
            for (g, d) in gb.iter_mut().zip(dyr) {
                *g += d;
            }
        }
        let gw = &mut grads[w.clone()];
        for (o, &d) in dyr.iter().enumerate() {
            if d != 0.0 {
                axpy(d, xr, &mut gw[o * in_dim..(o + 1) * in_dim]);
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxr = &mut dx[r * in_dim..(r + 1) * in_dim];
            for (o, &d) in dyr.iter().enumerate() {
                if d != 0.0 {
                    axpy(d, &wp[o * in_dim..(o + 1) * in_dim], dxr);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layernorm_forward(
    x: &[f64],
    rows: usize,
    dim: usize,
    params: &[f64],
    gain: &Range<usize>,
    bias: &Range<usize>,
    y: &mut [f64],
    mean: &mut [f64],
    rstd: &mut [f64],
) {
    let g = &params[gain.clone()];
    let b = &params[bias.clone()];
    for r in 0..rows {
        let xr = &x[r * dim..(r + 1) * dim];
        let m = xr.iter().sum::<f64>() / dim as f64;
        let var = xr.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / dim as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        mean[r] = m;
        rstd[r] = s;
        let yr = &mut y[r * dim..(r + 1) * dim];
        for i in 0..dim {
            yr[i] = (xr[i] - m) * s * g[i] + b[i];
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn layernorm_backward(
    x: &[f64],
    rows: usize,
    dim: usize,
    params: &[f64],
    grads: &mut [f64],
    gain: &Range<usize>,
    bias: &Range<usize>,
    mean: &[f64],
    rstd: &[f64],
    dy: &[f64],
    dx: &mut [f64],
) {
    let g = &params[gain.clone()];
    let mut xhat = vec![0.0; dim];
    let mut dxhat = vec![0.0; dim];
    for r in 0..rows {
        let xr = &x[r * dim..(r + 1) * dim];
        let dyr = &dy[r * dim..(r + 1) * dim];
        for i in 0..dim {
            xhat[i] = (xr[i] - mean[r]) * rstd[r];
            dxhat[i] = dyr[i] * g[i];
        }
        {
            let gg = &mut grads[gain.clone()];
            for i in 0..dim {
                gg[i] += dyr[i] * xhat[i];
            }
        }
        {
            let gb = &mut grads[bias.clone()];
            for i in 0..dim {
                gb[i] += dyr[i];
            }
        }
        let mean_d = dxhat.iter().sum::<f64>() / dim as f64;
        let mean_dx = dot(&dxhat, &xhat) / dim as f64;
        let dxr = &mut dx[r * dim..(r + 1) * dim];
        for i in 0..dim {
            dxr[i] += rstd[r] * (dxhat[i] - mean_d - xhat[i] * mean_dx);
        }
    }
}

/// Causal multi-head self-attention over `rows` tokens. `qkv` holds the
/// query, key and value projections side by side (`rows x 3E`); `probs`
/// receives the `heads x rows x rows` attention weights (upper triangle zero).
pub(crate) fn attention_forward(
    qkv: &[f64],
    rows: usize,
    embed: usize,
    heads: usize,
    out: &mut [f64],
    probs: &mut [f64],
) {
    let hd = embed / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let stride = 3 * embed;
    for h in 0..heads {
        for i in 0..rows {
            let q = &qkv[i * stride + h * hd..i * stride + (h + 1) * hd];
            let p = &mut probs[(h * rows + i) * rows..(h * rows + i + 1) * rows];
            let mut max = f64::NEG_INFINITY;
            for j in 0..=i {
                let k = &qkv[j * stride + embed + h * hd..j * stride + embed + (h + 1) * hd];
                p[j] = dot(q, k) * scale;
                max = max.max(p[j]);
            }
            let mut sum = 0.0;
            for pj in p.iter_mut().take(i + 1) {
                *pj = (*pj - max).exp();
                sum += *pj;
            }
            for pj in p.iter_mut().take(i + 1) {
                *pj /= sum;
            }
            let o = &mut out[i * embed + h * hd..i * embed + (h + 1) * hd];
            o.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..=i {
                let v = &qkv[j * stride + 2 * embed + h * hd..j * stride + 2 * embed + (h + 1) * hd];
                axpy(p[j], v, o);
            }
        }
    }
}

pub(crate) fn attention_backward(
    qkv: &[f64],
    probs: &[f64],
    rows: usize,
    embed: usize,
    heads: usize,
    dout: &[f64],
    dqkv: &mut [f64],
) {
    let hd = embed / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let stride = 3 * embed;
    let mut dp = vec![0.0; rows];
    for h in 0..heads {
        for i in 0..rows {
            let p = &probs[(h * rows + i) * rows..(h * rows + i + 1) * rows];
            let d = &dout[i * embed + h * hd..i * embed + (h + 1) * hd];
            let mut weighted = 0.0;
            for j in 0..=i {
                let voff = j * stride + 2 * embed + h * hd;
                dp[j] = dot(d, &qkv[voff..voff + hd]);
                weighted += p[j] * dp[j];
                axpy(p[j], d, &mut dqkv[voff..voff + hd]);
            }
            let qoff = i * stride + h * hd;
            for j in 0..=i {
                let ds = p[j] * (dp[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                let koff = j * stride + embed + h * hd;
                for c in 0..hd {
                    dqkv[qoff + c] += ds * qkv[koff + c];
                    dqkv[koff + c] += ds * qkv[qoff + c];
                }
            }
        }
    }
}

pub(crate) fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}
