//! Nested-loop reference implementations, written independently of the
//! im2col/GEMM kernels, plus the seeded comparison sweeps built on them.

use super::{random_tensor, rng};
use engagement::nn::layers::{conv2d_forward, dense_forward, maxpool_forward, softmax, Padding};
use engagement::{Scalar, Tensor};
use rand::Rng;

/// Direct 3×3 cross-correlation, zero-padded by one pixel when `same`.
pub fn conv(input: &[f64], c: usize, h: usize, w: usize, weights: &[f64], out_c: usize, bias: &[f64], same: bool) -> (Vec<f64>, usize, usize) {
    let pad = if same { 1 } else { 0 };
    let (oh, ow) = (h + 2 * pad - 2, w + 2 * pad - 2);
    let mut out = vec![0.0; out_c * oh * ow];
    for o in 0..out_c {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = bias[o];
                for ci in 0..c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (y + ky) as isize - pad as isize;
                            let ix = (x + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += weights[((o * c + ci) * 3 + ky) * 3 + kx] * input[(ci * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = acc;
            }
        }
    }
    (out, oh, ow)
}

pub fn maxpool(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::new();
    for ci in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let at = |dy: usize, dx: usize| input[(ci * h + 2 * y + dy) * w + 2 * x + dx];
                out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
            }
        }
    }
    out
}

pub fn dense(input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = input.len();
    (0..bias.len())
        .map(|i| {
            let mut acc = bias[i];
            for j in 0..n {
                acc += weights[i * n + j] * input[j];
            }
            acc
        })
        .collect()
}

/// Softmax computed from the definition, exp(z_i) / Σ exp(z_j).
pub fn softmax_direct(logits: &[f64]) -> Vec<f64> {
    let total: f64 = logits.iter().map(|z| z.exp()).sum();
    logits.iter().map(|z| z.exp() / total).collect()
}

fn as_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|&v| v.into()).collect()
}

fn worst(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "oracle and kernel disagree on length");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest elementwise deviation over `cases` random convolutions,
/// alternating same and valid padding.
pub fn conv_sweep<T: Scalar>(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut err: f64 = 0.0;
    for case in 0..cases {
        let (c, o) = (r.random_range(1..=4), r.random_range(1..=4));
        let (h, w) = (r.random_range(3..=10), r.random_range(3..=10));
        let same = case % 2 == 0;
        let input = random_tensor::<T>(&[c, h, w], &mut r, -1.0, 1.0);
        let weights = random_tensor::<T>(&[o, c, 3, 3], &mut r, -1.0, 1.0);
        let bias = random_tensor::<T>(&[o], &mut r, -1.0, 1.0);
        let padding = if same { Padding::Same } else { Padding::Valid };
        let got = conv2d_forward(&input, &weights, bias.data(), padding).unwrap();
        let (want, oh, ow) = conv(&as_f64(&input), c, h, w, &as_f64(&weights), o, &as_f64(&bias), same);
        assert_eq!(got.shape(), [o, oh, ow]);
        err = err.max(worst(&as_f64(&got), &want));
    }
    err
}

pub fn pool_sweep<T: Scalar>(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut err: f64 = 0.0;
    for _ in 0..cases {
        let c = r.random_range(1..=4);
        let (h, w) = (r.random_range(2..=11), r.random_range(2..=11));
        let input = random_tensor::<T>(&[c, h, w], &mut r, -1.0, 1.0);
        let (got, _) = maxpool_forward(&input).unwrap();
        assert_eq!(got.shape(), [c, h / 2, w / 2]);
        err = err.max(worst(&as_f64(&got), &maxpool(&as_f64(&input), c, h, w)));
    }
    err
}

pub fn dense_sweep<T: Scalar>(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut err: f64 = 0.0;
    for _ in 0..cases {
        let (m, n) = (r.random_range(1..=16), r.random_range(1..=64));
        let input = random_tensor::<T>(&[n], &mut r, -1.0, 1.0);
        let weights = random_tensor::<T>(&[m, n], &mut r, -1.0, 1.0);
        let bias = random_tensor::<T>(&[m], &mut r, -1.0, 1.0);
        let got = dense_forward(input.data(), &weights, bias.data()).unwrap();
        err = err.max(worst(&as_f64(&got), &dense(&as_f64(&input), &as_f64(&weights), &as_f64(&bias))));
    }
    err
}

pub fn softmax_sweep<T: Scalar>(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut err: f64 = 0.0;
    for _ in 0..cases {
        let n = r.random_range(1..=10);
        let logits = random_tensor::<T>(&[n], &mut r, -20.0, 20.0);
        let got: Vec<f64> = softmax(logits.data()).unwrap().into_iter().map(Into::into).collect();
        err = err.max(worst(&got, &softmax_direct(&as_f64(&logits))));
    }
    err
}
