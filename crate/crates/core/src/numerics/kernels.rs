//! Raw forward kernels over slices.
//!
//! Every output element is accumulated in a fixed index order, so a row
//! computed inside a large batch is bit-identical to the same row computed
//! alone.

/// `out[m x n] = a[m x k] * b[k x n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a[m x k] += g[m x n] * b[k x n]^T`.
pub fn matmul_grad_lhs(g: &[f64], b: &[f64], m: usize, k: usize, n: usize, a_grad: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for kk in 0..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let mut s = 0.0;
            for (gv, bv) in grow.iter().zip(brow) {
                s += gv * bv;
            }
            a_grad[i * k + kk] += s;
        }
    }
}

/// `b[k x n] += a[m x k]^T * g[m x n]`.
pub fn matmul_grad_rhs(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, b_grad: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == 0.0 {
                continue;
            }
            let brow = &mut b_grad[kk * n..(kk + 1) * n];
            for (bv, gv) in brow.iter_mut().zip(grow) {
                *bv += av * gv;
            }
        }
    }
}

/// Geometry of a 2-D convolution over `[batch, in_c, h, w]` inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.padding - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.padding - self.kw) / self.stride + 1
    }

    /// Input coordinate for output coordinate `o` and kernel tap `k`, if inside.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let p = (o * self.stride + k) as isize - self.padding as isize;
        (p >= 0 && (p as usize) < extent).then_some(p as usize)
    }
}

pub fn conv2d(input: &[f64], weight: &[f64], bias: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut out = vec![0.0; g.batch * g.out_c * oh * ow];
    for b in 0..g.batch {
        for o in 0..g.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = bias[o];
                    for c in 0..g.in_c {
                        for ky in 0..g.kh {
                            let Some(iy) = g.source(oy, ky, g.h) else { continue };
                            for kx in 0..g.kw {
                                let Some(ix) = g.source(ox, kx, g.w) else { continue };
                                s += weight[((o * g.in_c + c) * g.kh + ky) * g.kw + kx]
                                    * input[((b * g.in_c + c) * g.h + iy) * g.w + ix];
                            }
                        }
                    }
                    out[((b * g.out_c + o) * oh + oy) * ow + ox] = s;
                }
            }
        }
    }
    out
}

/// Accumulates input, weight and bias gradients of [`conv2d`].
pub fn conv2d_backward(
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    g: &ConvGeometry,
    grad_in: &mut [f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) {
    let (oh, ow) = (g.out_h(), g.out_w());
    for b in 0..g.batch {
        for o in 0..g.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let go = grad_out[((b * g.out_c + o) * oh + oy) * ow + ox];
                    if go == 0.0 {
                        continue;
                    }
                    grad_b[o] += go;
                    for c in 0..g.in_c {
                        for ky in 0..g.kh {
                            let Some(iy) = g.source(oy, ky, g.h) else { continue };
                            for kx in 0..g.kw {
                                let Some(ix) = g.source(ox, kx, g.w) else { continue };
                                let wi = ((o * g.in_c + c) * g.kh + ky) * g.kw + kx;
                                let ii = ((b * g.in_c + c) * g.h + iy) * g.w + ix;
                                grad_w[wi] += go * input[ii];
                                grad_in[ii] += go * weight[wi];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Attention weights of one node over its neighbours.
///
/// `alpha_j = softmax_j(leaky_relu(self_score + neighbor_scores[j]))`; empty
/// input gives empty output.
pub fn attention_weights(self_score: f64, neighbor_scores: &[f64], slope: f64) -> Vec<f64> {
    if neighbor_scores.is_empty() {
        return Vec::new();
    }
    let e: Vec<f64> = neighbor_scores.iter().map(|s| leaky_relu(self_score + s, slope)).collect();
    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = e.iter().map(|v| (v - max).exp()).collect();
    let mut z = 0.0;
    for v in &w {
        z += v;
    }
    w.into_iter().map(|v| v / z).collect()
}

/// Attention-weighted sum of neighbour feature rows; zero vector when there are none.
pub fn attend(alpha: &[f64], neighbor_rows: &[&[f64]], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    for (a, row) in alpha.iter().zip(neighbor_rows) {
        for (o, v) in out.iter_mut().zip(row.iter()) {
            *o += a * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn row_of_batch_equals_single_row() {
        let a: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..8).map(|i| (i as f64 * 1.3).cos()).collect();
        let full = matmul(&a, &b, 3, 4, 2);
        let single = matmul(&a[4..8], &b, 1, 4, 2);
        assert_eq!(&full[2..4], single.as_slice());
    }

    #[test]
    fn conv_output_size() {
        let g = ConvGeometry { batch: 1, in_c: 4, h: 15, w: 15, out_c: 16, kh: 3, kw: 3, stride: 2, padding: 1 };
        assert_eq!((g.out_h(), g.out_w()), (8, 8));
        let g2 = ConvGeometry { h: 8, w: 8, in_c: 16, out_c: 32, ..g };
        assert_eq!((g2.out_h(), g2.out_w()), (4, 4));
    }

    #[test]
    fn attention_single_neighbor_is_one() {
        assert_eq!(attention_weights(0.3, &[-1.7], 0.2), vec![1.0]);
        let w = attention_weights(0.0, &[0.5, 0.5, 0.5, 0.5], 0.2);
        assert!(w.iter().all(|v| *v == 0.25));
        assert!(attention_weights(0.0, &[], 0.2).is_empty());
    }
}
