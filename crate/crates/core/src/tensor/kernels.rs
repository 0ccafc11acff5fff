//! Slice-level forward and adjoint kernels. Shapes are validated by the caller.

use super::Real;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub len: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl ConvDims {
    pub fn out_len(&self) -> usize {
        self.len + 2 * self.pad + 1 - self.kernel
    }

    /// Output positions `lo..hi` for which `t + k - pad` lies inside the input,
    /// plus the input index matching `lo`. `None` when no position is valid.
    fn valid_range(&self, k: usize) -> Option<(usize, usize, usize)> {
        let lo = self.pad.saturating_sub(k);
        let hi = (self.len + self.pad).saturating_sub(k).min(self.out_len());
        (lo < hi).then(|| (lo, hi, lo + k - self.pad))
    }
}

pub(crate) fn conv1d_forward<T: Real>(d: ConvDims, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
    let lout = d.out_len();
    for b in 0..d.batch {
        for o in 0..d.cout {
            let row = &mut out[(b * d.cout + o) * lout..][..lout];
            row.fill(bias[o]);
            for c in 0..d.cin {
                let x = &input[(b * d.cin + c) * d.len..][..d.len];
                for k in 0..d.kernel {
                    let w = weight[(o * d.cin + c) * d.kernel + k];
                    let Some((lo, hi, shift)) = d.valid_range(k) else {
                        continue;
                    };
                    for (y, &xv) in row[lo..hi].iter_mut().zip(&x[shift..]) {
                        *y = *y + xv * w;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv1d_backward<T: Real>(
    d: ConvDims,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    grad_input: Option<&mut [T]>,
    grad_weight: Option<&mut [T]>,
    grad_bias: Option<&mut [T]>,
) {
    let lout = d.out_len();
    if let Some(gb) = grad_bias {
        for b in 0..d.batch {
            for o in 0..d.cout {
                let g = &grad_out[(b * d.cout + o) * lout..][..lout];
                gb[o] = gb[o] + g.iter().copied().sum::<T>();
            }
        }
    }
    if let Some(gw) = grad_weight {
        for b in 0..d.batch {
            for o in 0..d.cout {
                let g = &grad_out[(b * d.cout + o) * lout..][..lout];
                for c in 0..d.cin {
                    let x = &input[(b * d.cin + c) * d.len..][..d.len];
                    for k in 0..d.kernel {
                        let Some((lo, hi, shift)) = d.valid_range(k) else {
                            continue;
                        };
                        let acc: T = g[lo..hi].iter().zip(&x[shift..]).map(|(&gv, &xv)| gv * xv).sum();
                        let idx = (o * d.cin + c) * d.kernel + k;
                        gw[idx] = gw[idx] + acc;
                    }
                }
            }
        }
    }
    if let Some(gi) = grad_input {
        for b in 0..d.batch {
            for o in 0..d.cout {
                let g = &grad_out[(b * d.cout + o) * lout..][..lout];
                for c in 0..d.cin {
                    let gx = &mut gi[(b * d.cin + c) * d.len..][..d.len];
                    for k in 0..d.kernel {
                        let w = weight[(o * d.cin + c) * d.kernel + k];
                        let Some((lo, hi, shift)) = d.valid_range(k) else {
                            continue;
                        };
                        for (xg, &gv) in gx[shift..].iter_mut().zip(&g[lo..hi]) {
                            *xg = *xg + gv * w;
                        }
                    }
                }
            }
        }
    }
}

/// out[m, n] = sum_k a[m, k] * b[k, n]
pub(crate) fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    out.fill(T::zero());
    for i in 0..m {
        let row = &mut out[i * n..][..n];
        for p in 0..k {
            let av = a[i * k + p];
            for (y, &bv) in row.iter_mut().zip(&b[p * n..][..n]) {
                *y = *y + av * bv;
            }
        }
    }
}

/// grad_a[m, k] += sum_n g[m, n] * b[k, n]
pub(crate) fn matmul_grad_a<T: Real>(g: &[T], b: &[T], m: usize, k: usize, n: usize, grad_a: &mut [T]) {
    for i in 0..m {
        let grow = &g[i * n..][..n];
        for p in 0..k {
            let acc: T = grow.iter().zip(&b[p * n..][..n]).map(|(&x, &y)| x * y).sum();
            grad_a[i * k + p] = grad_a[i * k + p] + acc;
        }
    }
}

/// grad_b[k, n] += sum_m a[m, k] * g[m, n]
pub(crate) fn matmul_grad_b<T: Real>(a: &[T], g: &[T], m: usize, k: usize, n: usize, grad_b: &mut [T]) {
    for i in 0..m {
        let grow = &g[i * n..][..n];
        for p in 0..k {
            let av = a[i * k + p];
            for (y, &gv) in grad_b[p * n..][..n].iter_mut().zip(grow) {
                *y = *y + av * gv;
            }
        }
    }
}

/// Non-overlapping max pool over the last axis. Returns the flat input index of
/// the first maximal element of every window.
pub(crate) fn maxpool1d_forward<T: Real>(input: &[T], rows: usize, len: usize, k: usize, out: &mut [T]) -> Vec<usize> {
    let lout = len / k;
    let mut argmax = Vec::with_capacity(rows * lout);
    for r in 0..rows {
        for t in 0..lout {
            let base = r * len + t * k;
            let mut best = base;
            for i in base + 1..base + k {
                if input[i] > input[best] {
                    best = i;
                }
            }
            out[r * lout + t] = input[best];
            argmax.push(best);
        }
    }
    argmax
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Per-row loss terms `logsumexp(row) - row[target]`, computed with the max shift.
pub(crate) fn cross_entropy_rows<T: Real>(logits: &[T], classes: usize, targets: &[usize]) -> Vec<T> {
    logits
        .chunks_exact(classes)
        .zip(targets)
        .map(|(row, &t)| {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let s: T = row.iter().map(|&x| (x - mx).exp()).sum();
            s.ln() + (mx - row[t])
        })
        .collect()
}

pub(crate) fn softmax_row<T: Real>(row: &[T], out: &mut [T]) {
    let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - mx).exp();
        s = s + *o;
    }
    for o in out.iter_mut() {
        *o = *o / s;
    }
}
