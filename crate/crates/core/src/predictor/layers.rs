//! Temporal convolution, max-pooling and ReLU with their backward passes.
//!
//! Both convolution and pooling use the offset indexing
//! `h(y) = sum_x f(x) * g(y*d - x + c)` with `c = k - d + 1` (1-based),
//! which in 0-based form reads `out[y] = sum_x w[x] * in[y*d + k - 1 - x]`.

use super::ModelError;

/// `features x len` activations, row-major (one row per feature).
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    pub features: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Frames {
    pub fn zeros(features: usize, len: usize) -> Self {
        Frames {
            features,
            len,
            data: vec![0.0; features * len],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let len = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == len), "ragged rows");
        Frames {
            features: rows.len(),
            len,
            data: rows.concat(),
        }
    }

    pub fn row(&self, f: usize) -> &[f64] {
        &self.data[f * self.len..(f + 1) * self.len]
    }

    pub fn row_mut(&mut self, f: usize) -> &mut [f64] {
        &mut self.data[f * self.len..(f + 1) * self.len]
    }
}

/// Output length of a window of size `k` and stride `d` over `len` steps.
pub fn output_len(len: usize, k: usize, d: usize) -> Result<usize, ModelError> {
    if k == 0 || d == 0 {
        return Err(ModelError::Shape(format!("kernel {k} and stride {d} must be positive")));
    }
    if len < k {
        return Err(ModelError::Shape(format!("input length {len} shorter than kernel {k}")));
    }
    Ok((len - k) / d + 1)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense convolution. `weights` is `[out][in][k]`, `bias` is `[out]`.
pub fn conv1d_forward(
    input: &Frames,
    weights: &[f64],
    bias: &[f64],
    out_features: usize,
    k: usize,
    d: usize,
) -> Result<Frames, ModelError> {
    let n_in = input.features;
    if weights.len() != out_features * n_in * k || bias.len() != out_features {
        return Err(ModelError::Shape(format!(
            "conv weights {} / bias {} do not match {out_features}x{n_in}x{k}",
            weights.len(),
            bias.len()
        )));
    }
    let out_len = output_len(input.len, k, d)?;
    let mut out = Frames::zeros(out_features, out_len);
    for o in 0..out_features {
        let row = out.row_mut(o);
        row.fill(bias[o]);
        for i in 0..n_in {
            let g = input.row(i);
            let w = &weights[(o * n_in + i) * k..(o * n_in + i + 1) * k];
            for (x, &wx) in w.iter().enumerate() {
                let off = k - 1 - x;
                if d == 1 {
                    axpy(wx, &g[off..off + out_len], row);
                } else {
                    for (y, r) in row.iter_mut().enumerate() {
                        *r += wx * g[y * d + off];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Convolution over a one-hot input given by column (`None` = zero column).
pub fn conv1d_forward_onehot(
    columns: &[Option<u16>],
    in_features: usize,
    weights: &[f64],
    bias: &[f64],
    out_features: usize,
    k: usize,
    d: usize,
) -> Result<Frames, ModelError> {
    if weights.len() != out_features * in_features * k || bias.len() != out_features {
        return Err(ModelError::Shape("one-hot conv weights do not match layer".into()));
    }
    let out_len = output_len(columns.len(), k, d)?;
    let mut out = Frames::zeros(out_features, out_len);
    for o in 0..out_features {
        let row = out.row_mut(o);
        for (y, r) in row.iter_mut().enumerate() {
            let mut acc = bias[o];
            for x in 0..k {
                if let Some(c) = columns[y * d + k - 1 - x] {
                    acc += weights[(o * in_features + c as usize) * k + x];
                }
            }
            *r = acc;
        }
    }
    Ok(out)
}

/// Accumulates weight/bias gradients and, when `d_input` is given, the
/// gradient with respect to the layer input.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward(
    input: &Frames,
    weights: &[f64],
    d_out: &Frames,
    k: usize,
    d: usize,
    d_weights: &mut [f64],
    d_bias: &mut [f64],
    mut d_input: Option<&mut Frames>,
) {
    let n_in = input.features;
    let out_len = d_out.len;
    for (o, bias) in d_bias.iter_mut().enumerate().take(d_out.features) {
        let go = d_out.row(o);
        *bias += go.iter().sum::<f64>();
        for i in 0..n_in {
            let g = input.row(i);
            let base = (o * n_in + i) * k;
            for x in 0..k {
                let off = k - 1 - x;
                if d == 1 {
                    d_weights[base + x] += dot(go, &g[off..off + out_len]);
                } else {
                    d_weights[base + x] += go.iter().enumerate().map(|(y, v)| v * g[y * d + off]).sum::<f64>();
                }
            }
            if let Some(din) = d_input.as_deref_mut() {
                let drow = din.row_mut(i);
                for x in 0..k {
                    let off = k - 1 - x;
                    let w = weights[base + x];
                    if d == 1 {
                        axpy(w, go, &mut drow[off..off + out_len]);
                    } else {
                        for (y, v) in go.iter().enumerate() {
                            drow[y * d + off] += w * v;
                        }
                    }
                }
            }
        }
    }
}

pub fn conv1d_backward_onehot(
    columns: &[Option<u16>],
    in_features: usize,
    d_out: &Frames,
    k: usize,
    d: usize,
    d_weights: &mut [f64],
    d_bias: &mut [f64],
) {
    for (o, bias) in d_bias.iter_mut().enumerate().take(d_out.features) {
        let go = d_out.row(o);
        *bias += go.iter().sum::<f64>();
        for (y, &v) in go.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            for x in 0..k {
                if let Some(c) = columns[y * d + k - 1 - x] {
                    d_weights[(o * in_features + c as usize) * k + x] += v;
                }
            }
        }
    }
}

/// Windowed max per feature; also returns, for each output cell, the input
/// position that produced it (first maximum on ties).
pub fn maxpool1d(input: &Frames, k: usize, d: usize) -> Result<(Frames, Vec<usize>), ModelError> {
    let out_len = output_len(input.len, k, d)?;
    let mut out = Frames::zeros(input.features, out_len);
    let mut argmax = vec![0usize; input.features * out_len];
    for f in 0..input.features {
        let g = input.row(f);
        for y in 0..out_len {
            let start = y * d;
            let mut best = start;
            for p in start + 1..start + k {
                if g[p] > g[best] {
                    best = p;
                }
            }
            out.data[f * out_len + y] = g[best];
            argmax[f * out_len + y] = best;
        }
    }
    Ok((out, argmax))
}

/// Routes each pooled gradient back to its argmax position.
pub fn maxpool1d_backward(d_out: &Frames, argmax: &[usize], in_len: usize) -> Frames {
    let mut d_in = Frames::zeros(d_out.features, in_len);
    for f in 0..d_out.features {
        for y in 0..d_out.len {
            let idx = f * d_out.len + y;
            d_in.data[f * in_len + argmax[idx]] += d_out.data[idx];
        }
    }
    d_in
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn relu_inplace(values: &mut [f64]) {
    for v in values {
        *v = relu(*v);
    }
}

/// Zeroes gradient entries whose activation was clamped.
pub fn relu_backward(activations: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activations) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal 1-based evaluation of `h(y) = sum_{x=1..k} f(x) g(y*d - x + c)`
    /// summed over input features, plus bias.
    fn conv_oracle(g: &[Vec<f64>], f: &[Vec<Vec<f64>>], bias: &[f64], d: usize) -> Vec<Vec<f64>> {
        let l = g[0].len() as i64;
        let k = f[0][0].len() as i64;
        let d = d as i64;
        let c = k - d + 1;
        let out_len = (l - k) / d + 1;
        (0..f.len())
            .map(|j| {
                (1..=out_len)
                    .map(|y| {
                        let mut h = bias[j];
                        for (i, gi) in g.iter().enumerate() {
                            for x in 1..=k {
                                let idx = y * d - x + c; // 1-based
                                h += f[j][i][(x - 1) as usize] * gi[(idx - 1) as usize];
                            }
                        }
                        h
                    })
                    .collect()
            })
            .collect()
    }

    fn pool_oracle(g: &[f64], k: usize, d: usize) -> Vec<f64> {
        let (l, k, d) = (g.len() as i64, k as i64, d as i64);
        let c = k - d + 1;
        (1..=(l - k) / d + 1)
            .map(|y| (1..=k).map(|x| g[(y * d - x + c - 1) as usize]).fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    fn flat(f: &[Vec<Vec<f64>>]) -> Vec<f64> {
        f.iter().flatten().flatten().copied().collect()
    }

    #[test]
    fn identity_kernel() {
        let g = Frames::from_rows(&[vec![1.0, -2.0, 3.5]]);
        let h = conv1d_forward(&g, &[1.0], &[0.0], 1, 1, 1).unwrap();
        assert_eq!(h, g);
    }

    #[test]
    fn two_tap_kernel_matches_formula() {
        let g = vec![vec![1.0, 2.0, 3.0]];
        let f = vec![vec![vec![1.0, 1.0]]];
        let want = conv_oracle(&g, &f, &[0.0], 1);
        assert_eq!(want, vec![vec![3.0, 5.0]]);
        let h = conv1d_forward(&Frames::from_rows(&g), &flat(&f), &[0.0], 1, 2, 1).unwrap();
        assert_eq!(h.data, want[0]);
        // asymmetric kernel exposes the flip
        let f = vec![vec![vec![1.0, 10.0]]];
        let h = conv1d_forward(&Frames::from_rows(&g), &flat(&f), &[0.0], 1, 2, 1).unwrap();
        assert_eq!(h.data, conv_oracle(&g, &f, &[0.0], 1)[0]);
        assert_eq!(h.data, vec![12.0, 23.0]);
    }

    #[test]
    fn multi_feature_and_stride_match_formula() {
        let g = vec![
            vec![0.5, -1.0, 2.0, 0.25, 3.0, -0.75, 1.5],
            vec![1.0, 0.0, -2.0, 4.0, 0.5, 0.5, -1.0],
        ];
        let f = vec![
            vec![vec![0.3, -0.2, 0.1], vec![1.0, 0.5, -0.5]],
            vec![vec![-1.0, 0.0, 2.0], vec![0.25, 0.25, 0.25]],
        ];
        let bias = [0.1, -0.3];
        for d in 1..=3 {
            let want = conv_oracle(&g, &f, &bias, d);
            let h = conv1d_forward(&Frames::from_rows(&g), &flat(&f), &bias, 2, 3, d).unwrap();
            let got: Vec<Vec<f64>> = (0..2).map(|j| h.row(j).to_vec()).collect();
            for (a, b) in got.iter().flatten().zip(want.iter().flatten()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // one input feature, summed into a single output
        let g1 = vec![g[0].clone(), g[1].clone()];
        let f1 = vec![f[0].clone()];
        let h = conv1d_forward(&Frames::from_rows(&g1), &flat(&f1), &[0.0], 1, 3, 1).unwrap();
        assert_eq!(h.data.len(), 5);
        for (a, b) in h.data.iter().zip(&conv_oracle(&g1, &f1, &[0.0], 1)[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn onehot_conv_matches_dense() {
        let columns = [Some(1u16), None, Some(0), Some(2), Some(1), None];
        let mut dense = Frames::zeros(3, columns.len());
        for (j, c) in columns.iter().enumerate() {
            if let Some(c) = c {
                dense.data[*c as usize * columns.len() + j] = 1.0;
            }
        }
        let w: Vec<f64> = (0..2 * 3 * 2).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = [0.2, -0.1];
        for d in 1..=2 {
            let a = conv1d_forward(&dense, &w, &b, 2, 2, d).unwrap();
            let s = conv1d_forward_onehot(&columns, 3, &w, &b, 2, 2, d).unwrap();
            for (x, y) in a.data.iter().zip(&s.data) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let g = Frames::zeros(1, 2);
        assert!(matches!(conv1d_forward(&g, &[1.0; 3], &[0.0], 1, 3, 1), Err(ModelError::Shape(_))));
        assert!(matches!(maxpool1d(&g, 3, 3), Err(ModelError::Shape(_))));
        assert!(conv1d_forward(&g, &[1.0; 2], &[0.0], 1, 1, 1).is_err());
    }

    #[test]
    fn pooling() {
        let g = Frames::from_rows(&[vec![3.0, 1.0, 2.0, 5.0, 4.0, 0.0]]);
        let (h, arg) = maxpool1d(&g, 3, 3).unwrap();
        assert_eq!(h.data, vec![3.0, 5.0]);
        assert_eq!(h.data, pool_oracle(&g.data, 3, 3));
        assert_eq!(arg, vec![0, 3]);
        let (same, _) = maxpool1d(&g, 1, 1).unwrap();
        assert_eq!(same, g);
        let c = Frames::from_rows(&[vec![7.0; 9]]);
        assert!(maxpool1d(&c, 3, 2).unwrap().0.data.iter().all(|v| *v == 7.0));
        let odd = [0.3, -1.0, 2.0, 2.5, -0.5, 1.0, 0.0];
        assert_eq!(maxpool1d(&Frames::from_rows(&[odd.to_vec()]), 3, 2).unwrap().0.data, pool_oracle(&odd, 3, 2));

        let back = maxpool1d_backward(&Frames::from_rows(&[vec![1.0, 2.0]]), &arg, 6);
        assert_eq!(back.data, vec![1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_values() {
        assert_eq!(relu(0.0), 0.0);
        assert_eq!(relu(-5.0), 0.0);
        assert_eq!(relu(2.5), 2.5);
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let input = Frames::from_rows(&[vec![0.4, -1.2, 0.7, 2.0, -0.3, 0.9], vec![1.1, 0.2, -0.8, 0.5, 0.6, -1.4]]);
        let w: Vec<f64> = (0..3 * 2 * 3).map(|i| ((i * 7 % 11) as f64 - 5.0) / 7.0).collect();
        let b = [0.05, -0.02, 0.3];
        for d in 1..=2 {
            // loss = sum(out * coeff)
            let out = conv1d_forward(&input, &w, &b, 3, 3, d).unwrap();
            let coeff: Vec<f64> = (0..out.data.len()).map(|i| (i as f64 * 0.61).cos()).collect();
            let loss = |inp: &Frames, w: &[f64]| -> f64 {
                let o = conv1d_forward(inp, w, &b, 3, 3, d).unwrap();
                o.data.iter().zip(&coeff).map(|(a, c)| a * c).sum()
            };
            let d_out = Frames { features: 3, len: out.len, data: coeff.clone() };
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; 3];
            let mut din = Frames::zeros(2, 6);
            conv1d_backward(&input, &w, &d_out, 3, d, &mut dw, &mut db, Some(&mut din));
            let h = 1e-6;
            for i in 0..w.len() {
                let (mut p, mut m) = (w.clone(), w.clone());
                p[i] += h;
                m[i] -= h;
                let fd = (loss(&input, &p) - loss(&input, &m)) / (2.0 * h);
                assert!((fd - dw[i]).abs() < 1e-7);
            }
            for i in 0..input.data.len() {
                let (mut p, mut m) = (input.clone(), input.clone());
                p.data[i] += h;
                m.data[i] -= h;
                let fd = (loss(&p, &w) - loss(&m, &w)) / (2.0 * h);
                assert!((fd - din.data[i]).abs() < 1e-7);
            }
        }
    }
}
