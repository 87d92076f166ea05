// Brute-force loop oracles for the convolution kernels. Shared with the
// acceptance suite through `#[path]`, so it only depends on the public API.
#![allow(dead_code)]

use terragan::ops::{conv2d, conv2d_transpose};
use terragan::{Rng, Scalar, Tensor};

pub fn random<T: Scalar>(shape: &[usize], rng: &mut Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.uniform(-1.0, 1.0))).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn at(t: &Tensor<f64>, i: [usize; 4]) -> f64 {
    let s = t.shape();
    t.data()[((i[0] * s[1] + i[1]) * s[2] + i[2]) * s[3] + i[3]]
}

/// Sliding dot product, one output element at a time.
pub fn conv2d_loops(x: &Tensor<f64>, k: &Tensor<f64>, bias: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let [b, cin, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [cout, _, kh, kw] = [k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]];
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; b * cout * oh * ow];
    for n in 0..b {
        for o in 0..cout {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = bias.data()[o];
                    for c in 0..cin {
                        for u in 0..kh {
                            for v in 0..kw {
                                let (y, xx) = ((i * stride + u) as isize - pad as isize, (j * stride + v) as isize - pad as isize);
                                if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                    continue;
                                }
                                acc += at(x, [n, c, y as usize, xx as usize]) * at(k, [o, c, u, v]);
                            }
                        }
                    }
                    out[((n * cout + o) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    Tensor::from_vec(&[b, cout, oh, ow], out).unwrap()
}

/// Scatter every input pixel through the kernel; kernel is `[Cin, Cout, Kh, Kw]`.
pub fn conv2d_transpose_loops(x: &Tensor<f64>, k: &Tensor<f64>, bias: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let [b, cin, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [_, cout, kh, kw] = [k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]];
    let oh = (h - 1) * stride + kh - 2 * pad;
    let ow = (w - 1) * stride + kw - 2 * pad;
    let mut out = vec![0.0; b * cout * oh * ow];
    for n in 0..b {
        for o in 0..cout {
            for i in 0..oh * ow {
                out[(n * cout + o) * oh * ow + i] = bias.data()[o];
            }
        }
        for c in 0..cin {
            for i in 0..h {
                for j in 0..w {
                    for o in 0..cout {
                        for u in 0..kh {
                            for v in 0..kw {
                                let (y, xx) = ((i * stride + u) as isize - pad as isize, (j * stride + v) as isize - pad as isize);
                                if y < 0 || xx < 0 || y >= oh as isize || xx >= ow as isize {
                                    continue;
                                }
                                out[((n * cout + o) * oh + y as usize) * ow + xx as usize] +=
                                    at(x, [n, c, i, j]) * at(k, [c, o, u, v]);
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[b, cout, oh, ow], out).unwrap()
}

#[derive(Debug, Default)]
pub struct Sweep {
    pub cases: usize,
    pub conv_max_error: f64,
    pub transpose_max_error: f64,
}

/// Every batch 1..=2, channels 1..=4, H, W 1..=9, stride {1,2}, padding
/// {0,1} and square kernels 1..=4 that fit, against both oracles.
pub fn exhaustive_sweep(seed: u64) -> Sweep {
    let mut rng = Rng::new(seed);
    let mut sweep = Sweep::default();
    for b in 1..=2 {
        for cin in 1..=4 {
            for h in 1..=9 {
                for w in 1..=9 {
                    for stride in 1..=2 {
                        for pad in 0..=1 {
                            for kk in 1..=4 {
                                let cout = 1 + rng.below(3);
                                let x = random::<f64>(&[b, cin, h, w], &mut rng);
                                let bias = random::<f64>(&[cout], &mut rng);
                                if kk <= h + 2 * pad && kk <= w + 2 * pad {
                                    let k = random::<f64>(&[cout, cin, kk, kk], &mut rng);
                                    let got = conv2d(&x, &k, Some(&bias), stride, pad).unwrap();
                                    let want = conv2d_loops(&x, &k, &bias, stride, pad);
                                    sweep.conv_max_error = sweep.conv_max_error.max(got.max_abs_diff(&want).unwrap());
                                    sweep.cases += 1;
                                }
                                if (h.min(w) - 1) * stride + kk > 2 * pad {
                                    let k = random::<f64>(&[cin, cout, kk, kk], &mut rng);
                                    let got = conv2d_transpose(&x, &k, Some(&bias), stride, pad).unwrap();
                                    let want = conv2d_transpose_loops(&x, &k, &bias, stride, pad);
                                    sweep.transpose_max_error =
                                        sweep.transpose_max_error.max(got.max_abs_diff(&want).unwrap());
                                    sweep.cases += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    sweep
}

/// `<conv2d(x, K), y>` against `<x, conv2d_transpose(y, K)>` on random
/// geometry; returns the worst relative gap.
pub fn adjoint_gap(instances: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < instances {
        let b = 1 + rng.below(2);
        let cin = 1 + rng.below(4);
        let cout = 1 + rng.below(4);
        let kk = 1 + rng.below(4);
        let stride = 1 + rng.below(2);
        let pad = rng.below(2).min(kk - 1);
        // Output extent m, input extent chosen so the stride tiles it exactly.
        let (mh, mw) = (1 + rng.below(5), 1 + rng.below(5));
        let h = ((mh - 1) * stride + kk) as isize - 2 * pad as isize;
        let w = ((mw - 1) * stride + kk) as isize - 2 * pad as isize;
        if h < 1 || w < 1 {
            continue;
        }
        let (h, w) = (h as usize, w as usize);
        let x = random::<f64>(&[b, cin, h, w], &mut rng);
        let k = random::<f64>(&[cout, cin, kk, kk], &mut rng);
        let y = random::<f64>(&[b, cout, mh, mw], &mut rng);
        let lhs = conv2d(&x, &k, None, stride, pad).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&conv2d_transpose(&y, &k, None, stride, pad).unwrap()).unwrap();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12));
        done += 1;
    }
    worst
}
