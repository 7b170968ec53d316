//! Flat-slice compute kernels behind the graph ops.
//!
//! Reductions across the batch are always summed in batch order so results
//! do not depend on the rayon thread count.

use rayon::prelude::*;

use super::Scalar;

const LANES: usize = 8;

/// Inner product with independent lane accumulators so the loop vectorizes.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    let mut s = T::zero();
    for v in acc {
        s += v;
    }
    s + tail
}

/// `y += alpha * x`
pub fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    fn x_plane(&self) -> usize {
        self.h * self.w
    }
    fn y_plane(&self) -> usize {
        self.ho * self.wo
    }
    fn w_index(&self, co: usize, ci: usize, i: usize) -> usize {
        ((co * self.cin + ci) * self.kh + i) * self.kw
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(x: &[T], weight: &[T], bias: &[T], g: &ConvGeom) -> Vec<T> {
    let per_batch = g.cout * g.y_plane();
    let mut out = vec![T::zero(); g.batch * per_batch];
    out.par_chunks_mut(per_batch)
        .enumerate()
        .for_each(|(b, out_b)| {
            let xb = &x[b * g.cin * g.x_plane()..(b + 1) * g.cin * g.x_plane()];
            for co in 0..g.cout {
                let plane = &mut out_b[co * g.y_plane()..(co + 1) * g.y_plane()];
                plane.iter_mut().for_each(|v| *v = bias[co]);
                for ci in 0..g.cin {
                    let xc = &xb[ci * g.x_plane()..(ci + 1) * g.x_plane()];
                    for i in 0..g.kh {
                        let wrow = &weight[g.w_index(co, ci, i)..g.w_index(co, ci, i) + g.kw];
                        for oh in 0..g.ho {
                            let xrow = &xc[(oh * g.sh + i) * g.w..(oh * g.sh + i + 1) * g.w];
                            let orow = &mut plane[oh * g.wo..(oh + 1) * g.wo];
                            for (j, &wv) in wrow.iter().enumerate() {
                                if g.sw == 1 {
                                    axpy(orow, wv, &xrow[j..j + g.wo]);
                                } else {
                                    for (ow, o) in orow.iter_mut().enumerate() {
                                        *o += wv * xrow[ow * g.sw + j];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

pub(crate) fn conv2d_backward<T: Scalar>(
    x: &[T],
    weight: &[T],
    gy: &[T],
    g: &ConvGeom,
    need_dx: bool,
) -> ConvGrads<T> {
    let xs = g.cin * g.x_plane();
    let ys = g.cout * g.y_plane();

    let dx = need_dx.then(|| {
        let mut dx = vec![T::zero(); g.batch * xs];
        dx.par_chunks_mut(xs).enumerate().for_each(|(b, dxb)| {
            let gyb = &gy[b * ys..(b + 1) * ys];
            for co in 0..g.cout {
                let gplane = &gyb[co * g.y_plane()..(co + 1) * g.y_plane()];
                for ci in 0..g.cin {
                    let dxc = &mut dxb[ci * g.x_plane()..(ci + 1) * g.x_plane()];
                    for i in 0..g.kh {
                        let wrow = &weight[g.w_index(co, ci, i)..g.w_index(co, ci, i) + g.kw];
                        for oh in 0..g.ho {
                            let grow = &gplane[oh * g.wo..(oh + 1) * g.wo];
                            let r = oh * g.sh + i;
                            let dxrow = &mut dxc[r * g.w..(r + 1) * g.w];
                            for (j, &wv) in wrow.iter().enumerate() {
                                if g.sw == 1 {
                                    axpy(&mut dxrow[j..j + g.wo], wv, grow);
                                } else {
                                    for (ow, &gv) in grow.iter().enumerate() {
                                        dxrow[ow * g.sw + j] += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
        dx
    });

    let wlen = weight.len();
    let partials: Vec<(Vec<T>, Vec<T>)> = (0..g.batch)
        .into_par_iter()
        .map(|b| {
            let xb = &x[b * xs..(b + 1) * xs];
            let gyb = &gy[b * ys..(b + 1) * ys];
            let mut dw = vec![T::zero(); wlen];
            let mut db = vec![T::zero(); g.cout];
            for co in 0..g.cout {
                let gplane = &gyb[co * g.y_plane()..(co + 1) * g.y_plane()];
                db[co] = gplane.iter().copied().sum();
                for ci in 0..g.cin {
                    let xc = &xb[ci * g.x_plane()..(ci + 1) * g.x_plane()];
                    for i in 0..g.kh {
                        let base = g.w_index(co, ci, i);
                        for oh in 0..g.ho {
                            let grow = &gplane[oh * g.wo..(oh + 1) * g.wo];
                            let r = oh * g.sh + i;
                            let xrow = &xc[r * g.w..(r + 1) * g.w];
                            for j in 0..g.kw {
                                dw[base + j] += if g.sw == 1 {
                                    dot(grow, &xrow[j..j + g.wo])
                                } else {
                                    grow.iter()
                                        .enumerate()
                                        .map(|(ow, &gv)| gv * xrow[ow * g.sw + j])
                                        .sum()
                                };
                            }
                        }
                    }
                }
            }
            (dw, db)
        })
        .collect();

    let mut dw = vec![T::zero(); wlen];
    let mut db = vec![T::zero(); g.cout];
    for (pw, pb) in partials {
        dw.iter_mut().zip(&pw).for_each(|(a, &v)| *a += v);
        db.iter_mut().zip(&pb).for_each(|(a, &v)| *a += v);
    }
    ConvGrads { dx, dw, db }
}

/// `x` is `[planes, h, w]`; returns `[planes, h/ph, w/pw]`.
pub(crate) fn avgpool_forward<T: Scalar>(
    x: &[T],
    planes: usize,
    (h, w): (usize, usize),
    (ph, pw): (usize, usize),
) -> Vec<T> {
    let (ho, wo) = (h / ph, w / pw);
    let scale = T::one() / T::from_usize(ph * pw).unwrap();
    let mut out = vec![T::zero(); planes * ho * wo];
    for p in 0..planes {
        let xp = &x[p * h * w..(p + 1) * h * w];
        let op = &mut out[p * ho * wo..(p + 1) * ho * wo];
        for oh in 0..ho {
            for ow in 0..wo {
                let mut s = T::zero();
                for i in 0..ph {
                    let row = &xp[(oh * ph + i) * w + ow * pw..(oh * ph + i) * w + (ow + 1) * pw];
                    s += row.iter().copied().sum::<T>();
                }
                op[oh * wo + ow] = s * scale;
            }
        }
    }
    out
}

pub(crate) fn avgpool_backward<T: Scalar>(
    gy: &[T],
    planes: usize,
    (h, w): (usize, usize),
    (ph, pw): (usize, usize),
) -> Vec<T> {
    let (ho, wo) = (h / ph, w / pw);
    let scale = T::one() / T::from_usize(ph * pw).unwrap();
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        let gp = &gy[p * ho * wo..(p + 1) * ho * wo];
        let dp = &mut dx[p * h * w..(p + 1) * h * w];
        for oh in 0..ho {
            for ow in 0..wo {
                let v = gp[oh * wo + ow] * scale;
                for i in 0..ph {
                    let start = (oh * ph + i) * w + ow * pw;
                    dp[start..start + pw].iter_mut().for_each(|d| *d = v);
                }
            }
        }
    }
    dx
}

/// Per-channel statistics of a `[batch, channels, spatial]` layout.
/// Returns `(mean, biased variance)` accumulated in f64.
pub(crate) fn channel_moments<T: Scalar>(
    x: &[T],
    batch: usize,
    channels: usize,
    spatial: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = (batch * spatial) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for c in 0..channels {
        let mut s = 0.0;
        for b in 0..batch {
            let off = (b * channels + c) * spatial;
            s += x[off..off + spatial]
                .iter()
                .map(|v| v.as_f64())
                .sum::<f64>();
        }
        let m = s / n;
        let mut ss = 0.0;
        for b in 0..batch {
            let off = (b * channels + c) * spatial;
            ss += x[off..off + spatial]
                .iter()
                .map(|v| {
                    let d = v.as_f64() - m;
                    d * d
                })
                .sum::<f64>();
        }
        mean[c] = m;
        var[c] = ss / n;
    }
    (mean, var)
}

/// Gradients of `y = gamma * xhat + beta` with batch statistics.
pub(crate) fn batchnorm_train_backward<T: Scalar>(
    gy: &[T],
    xhat: &[T],
    gamma: &[T],
    inv_std: &[T],
    batch: usize,
    spatial: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let channels = gamma.len();
    let n = batch * spatial;
    let mut dx = vec![T::zero(); gy.len()];
    let mut dgamma = vec![T::zero(); channels];
    let mut dbeta = vec![T::zero(); channels];
    for c in 0..channels {
        let (mut sum_dy, mut sum_dy_xhat) = (0.0f64, 0.0f64);
        for b in 0..batch {
            let off = (b * channels + c) * spatial;
            for k in off..off + spatial {
                sum_dy += gy[k].as_f64();
                sum_dy_xhat += (gy[k] * xhat[k]).as_f64();
            }
        }
        dgamma[c] = T::from_f64_lossy(sum_dy_xhat);
        dbeta[c] = T::from_f64_lossy(sum_dy);
        let k_scale = gamma[c] * inv_std[c] / T::from_usize(n).unwrap();
        let nt = T::from_usize(n).unwrap();
        let (sdy, sdyx) = (T::from_f64_lossy(sum_dy), T::from_f64_lossy(sum_dy_xhat));
        for b in 0..batch {
            let off = (b * channels + c) * spatial;
            for k in off..off + spatial {
                dx[k] = k_scale * (nt * gy[k] - sdy - xhat[k] * sdyx);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// `out[b, :] = bias + x[b, :] @ weight` with `weight` laid out `[f, h]`.
pub(crate) fn linear_forward<T: Scalar>(
    x: &[T],
    weight: &[T],
    bias: &[T],
    batch: usize,
    fin: usize,
    fout: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); batch * fout];
    out.par_chunks_mut(fout).enumerate().for_each(|(b, orow)| {
        orow.copy_from_slice(bias);
        let xrow = &x[b * fin..(b + 1) * fin];
        for (f, &xv) in xrow.iter().enumerate() {
            if xv != T::zero() {
                axpy(orow, xv, &weight[f * fout..(f + 1) * fout]);
            }
        }
    });
    out
}

pub(crate) fn linear_backward<T: Scalar>(
    x: &[T],
    weight: &[T],
    gy: &[T],
    batch: usize,
    fin: usize,
    fout: usize,
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let dx = need_dx.then(|| {
        let mut dx = vec![T::zero(); batch * fin];
        dx.par_chunks_mut(fin).enumerate().for_each(|(b, dxrow)| {
            let grow = &gy[b * fout..(b + 1) * fout];
            for (f, d) in dxrow.iter_mut().enumerate() {
                *d = dot(grow, &weight[f * fout..(f + 1) * fout]);
            }
        });
        dx
    });
    let mut dw = vec![T::zero(); fin * fout];
    dw.par_chunks_mut(fout).enumerate().for_each(|(f, dwrow)| {
        for b in 0..batch {
            let xv = x[b * fin + f];
            if xv != T::zero() {
                axpy(dwrow, xv, &gy[b * fout..(b + 1) * fout]);
            }
        }
    });
    let mut db = vec![T::zero(); fout];
    for b in 0..batch {
        db.iter_mut()
            .zip(&gy[b * fout..(b + 1) * fout])
            .for_each(|(a, &v)| *a += v);
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive_for_odd_lengths() {
        for n in [0usize, 1, 7, 8, 9, 31] {
            let a: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 1.0).collect();
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((dot(&a, &b) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn avgpool_drops_remainder() {
        let x: Vec<f64> = (0..897).map(|i| i as f64).collect();
        let y = avgpool_forward(&x, 1, (1, 897), (1, 8));
        assert_eq!(y.len(), 112);
        assert_eq!(y[0], 3.5);
        let dx = avgpool_backward(&vec![1.0; 112], 1, (1, 897), (1, 8));
        assert_eq!(dx[896], 0.0);
        assert_eq!(dx[895], 0.125);
    }
}
