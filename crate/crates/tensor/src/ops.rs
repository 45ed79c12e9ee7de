//! Differentiable operations on [`Var`].

use crate::graph::Var;
use crate::kernels::conv::{conv_backward, conv_bias_grad, conv_forward, ConvGeometry};
use crate::kernels::norm::{batch_norm_backward, channel_stats, normalize};
use crate::kernels::pool::{max_pool2x2, max_pool2x2_backward};
use crate::kernels::resize::{resize_bilinear, resize_bilinear_backward};
use crate::real::{gemm, Real};
use crate::tensor::{numel, Tensor};

fn trailing_planes(shape: &[usize]) -> (usize, usize, usize) {
    assert!(shape.len() >= 2, "op needs at least two axes, got {shape:?}");
    let n = shape.len();
    (numel(&shape[..n - 2]), shape[n - 2], shape[n - 1])
}

impl<'g, T: Real> Var<'g, T> {
    pub fn add(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = self.value().add(&other.value());
        self.graph.op(v, &[self, other], |c| vec![Some(c.grad.clone()), Some(c.grad.clone())])
    }

    pub fn sub(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = self.value().sub(&other.value());
        self.graph.op(v, &[self, other], |c| vec![Some(c.grad.clone()), Some(c.grad.scale(-T::one()))])
    }

    pub fn mul(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = self.value().mul(&other.value());
        self.graph.op(v, &[self, other], |c| {
            vec![
                c.needs(0).then(|| c.grad.mul(c.input(1))),
                c.needs(1).then(|| c.grad.mul(c.input(0))),
            ]
        })
    }

    pub fn div(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = self.value().zip_map(&other.value(), |a, b| a / b);
        self.graph.op(v, &[self, other], |c| {
            let (a, b) = (c.input(0), c.input(1));
            vec![
                c.needs(0).then(|| c.grad.zip_map(b, |g, bv| g / bv)),
                c.needs(1).then(|| {
                    let q = c.grad.zip_map(a, |g, av| g * av);
                    q.zip_map(b, |ga, bv| -ga / (bv * bv))
                }),
            ]
        })
    }

    pub fn scale(self, s: f64) -> Var<'g, T> {
        let s = T::lit(s);
        let v = self.value().scale(s);
        self.graph.op(v, &[self], move |c| vec![Some(c.grad.scale(s))])
    }

    pub fn add_scalar(self, s: f64) -> Var<'g, T> {
        let s = T::lit(s);
        let v = self.value().map(|x| x + s);
        self.graph.op(v, &[self], |c| vec![Some(c.grad.clone())])
    }

    pub fn neg(self) -> Var<'g, T> {
        self.scale(-1.0)
    }

    pub fn relu(self) -> Var<'g, T> {
        let v = self.value().map(|x| x.max(T::zero()));
        self.graph.op(v, &[self], |c| {
            vec![Some(c.grad.zip_map(c.input(0), |g, x| if x > T::zero() { g } else { T::zero() }))]
        })
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        let v = self.value().map(stable_sigmoid);
        self.graph.op(v, &[self], |c| vec![Some(c.grad.zip_map(c.output, |g, s| g * s * (T::one() - s)))])
    }

    pub fn abs(self) -> Var<'g, T> {
        let v = self.value().map(|x| x.abs());
        self.graph.op(v, &[self], |c| {
            vec![Some(c.grad.zip_map(c.input(0), |g, x| {
                if x > T::zero() {
                    g
                } else if x < T::zero() {
                    -g
                } else {
                    T::zero()
                }
            }))]
        })
    }

    pub fn exp(self) -> Var<'g, T> {
        let v = self.value().map(|x| x.exp());
        self.graph.op(v, &[self], |c| vec![Some(c.grad.mul(c.output))])
    }

    pub fn sqr(self) -> Var<'g, T> {
        let v = self.value().map(|x| x * x);
        self.graph.op(v, &[self], |c| vec![Some(c.grad.zip_map(c.input(0), |g, x| g * (x + x)))])
    }

    pub fn sum(self) -> Var<'g, T> {
        let v = Tensor::scalar(self.value().sum());
        self.graph.op(v, &[self], |c| vec![Some(Tensor::full(c.input(0).shape().to_vec(), c.grad.item()))])
    }

    pub fn mean(self) -> Var<'g, T> {
        let n = self.value().numel();
        self.sum().scale(1.0 / n as f64)
    }

    pub fn sum_axis(self, axis: usize) -> Var<'g, T> {
        let input_shape = self.shape();
        let v = self.value().sum_axis(axis);
        self.graph.op(v, &[self], move |c| {
            let extent = input_shape[axis];
            let mut kept = input_shape.clone();
            kept[axis] = 1;
            let g = c.grad.clone().reshape(kept);
            let parts: Vec<&Tensor<T>> = std::iter::repeat_n(&g, extent).collect();
            vec![Some(Tensor::concat(&parts, axis))]
        })
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Var<'g, T> {
        let input_shape = self.shape();
        let v = (*self.value()).clone().reshape(shape);
        self.graph.op(v, &[self], move |c| vec![Some(c.grad.clone().reshape(input_shape.clone()))])
    }

    pub fn permute(self, perm: &[usize]) -> Var<'g, T> {
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let v = self.value().permute(perm);
        self.graph.op(v, &[self], move |c| vec![Some(c.grad.permute(&inverse))])
    }

    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'g, T> {
        let input_shape = self.shape();
        let v = self.value().narrow(axis, start, len);
        self.graph.op(v, &[self], move |c| {
            let extent = input_shape[axis];
            let mut parts = Vec::new();
            let mut pad_shape = input_shape.clone();
            let before = (start > 0).then(|| {
                pad_shape[axis] = start;
                Tensor::zeros(pad_shape.clone())
            });
            let after = (start + len < extent).then(|| {
                pad_shape[axis] = extent - start - len;
                Tensor::zeros(pad_shape.clone())
            });
            if let Some(b) = before.as_ref() {
                parts.push(b);
            }
            parts.push(c.grad);
            if let Some(a) = after.as_ref() {
                parts.push(a);
            }
            vec![Some(Tensor::concat(&parts, axis))]
        })
    }

    pub fn concat(parts: &[Var<'g, T>], axis: usize) -> Var<'g, T> {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor<T>> = values.iter().map(|v| v.as_ref()).collect();
        let v = Tensor::concat(&refs, axis);
        let extents: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        parts[0].graph.op(v, parts, move |c| {
            let mut start = 0;
            extents
                .iter()
                .enumerate()
                .map(|(i, &e)| {
                    let g = c.needs(i).then(|| c.grad.narrow(axis, start, e));
                    start += e;
                    g
                })
                .collect()
        })
    }

    pub fn flip(self, axis: usize) -> Var<'g, T> {
        let v = self.value().flip(axis);
        self.graph.op(v, &[self], move |c| vec![Some(c.grad.flip(axis))])
    }

    /// `[B, M, K] x [B, K, N] -> [B, M, N]`.
    pub fn bmm(self, other: Var<'g, T>) -> Var<'g, T> {
        let v = self.value().bmm(&other.value());
        self.graph.op(v, &[self, other], |c| {
            let (a, b) = (c.input(0), c.input(1));
            let (bs, m, k) = (a.dim(0), a.dim(1), a.dim(2));
            let n = b.dim(2);
            let g = c.grad.data();
            let da = c.needs(0).then(|| {
                let mut out = vec![T::zero(); bs * m * k];
                for i in 0..bs {
                    gemm(m, n, k, &g[i * m * n..], false, &b.data()[i * k * n..], true, &mut out[i * m * k..], false);
                }
                Tensor::from_vec(vec![bs, m, k], out)
            });
            let db = c.needs(1).then(|| {
                let mut out = vec![T::zero(); bs * k * n];
                for i in 0..bs {
                    gemm(k, m, n, &a.data()[i * m * k..], true, &g[i * m * n..], false, &mut out[i * k * n..], false);
                }
                Tensor::from_vec(vec![bs, k, n], out)
            });
            vec![da, db]
        })
    }

    pub fn softmax_last(self) -> Var<'g, T> {
        let v = self.value().softmax_last();
        self.graph.op(v, &[self], |c| {
            let n = *c.output.shape().last().unwrap();
            let mut dx = vec![T::zero(); c.output.numel()];
            for ((d, y), g) in dx.chunks_mut(n).zip(c.output.data().chunks(n)).zip(c.grad.data().chunks(n)) {
                let dot: T = y.iter().zip(g).map(|(&a, &b)| a * b).sum();
                for ((dv, &yv), &gv) in d.iter_mut().zip(y).zip(g) {
                    *dv = yv * (gv - dot);
                }
            }
            vec![Some(Tensor::from_vec(c.output.shape().to_vec(), dx))]
        })
    }

    /// Stride-1 convolution on `[N, Cin, D, H, W]` with weight
    /// `[Cout, Cin, KD, KH, KW]` and symmetric zero padding.
    pub fn conv3d(self, weight: Var<'g, T>, bias: Option<Var<'g, T>>, padding: [usize; 3]) -> Var<'g, T> {
        let xs = self.shape();
        let ws = weight.shape();
        assert_eq!(xs.len(), 5, "conv3d input must be [N, C, D, H, W], got {xs:?}");
        assert_eq!(ws.len(), 5, "conv3d weight must be rank 5, got {ws:?}");
        assert_eq!(xs[1], ws[1], "conv3d channel mismatch: input {} vs weight {}", xs[1], ws[1]);
        let geom = ConvGeometry {
            batch: xs[0],
            c_in: xs[1],
            c_out: ws[0],
            input: [xs[2], xs[3], xs[4]],
            kernel: [ws[2], ws[3], ws[4]],
            padding,
        };
        let o = geom.output();
        let x = self.value();
        let w = weight.value();
        let bias_val = bias.map(|b| b.value());
        let out = conv_forward(x.data(), w.data(), bias_val.as_ref().map(|b| b.data()), &geom);
        let value = Tensor::from_vec(vec![xs[0], ws[0], o[0], o[1], o[2]], out);
        let mut parents = vec![self, weight];
        parents.extend(bias);
        self.graph.op(value, &parents, move |c| {
            let (dx, dw) =
                conv_backward(c.input(0).data(), c.input(1).data(), c.grad.data(), &geom, c.needs(0), c.needs(1));
            let mut grads = vec![
                dx.map(|d| Tensor::from_vec(c.input(0).shape().to_vec(), d)),
                dw.map(|d| Tensor::from_vec(c.input(1).shape().to_vec(), d)),
            ];
            if c.num_inputs() > 2 {
                grads.push(c.needs(2).then(|| Tensor::from_vec(vec![geom.c_out], conv_bias_grad(c.grad.data(), &geom))));
            }
            grads
        })
    }

    /// Stride-1 convolution on `[N, Cin, H, W]` with weight `[Cout, Cin, KH, KW]`.
    pub fn conv2d(self, weight: Var<'g, T>, bias: Option<Var<'g, T>>, padding: [usize; 2]) -> Var<'g, T> {
        let xs = self.shape();
        let ws = weight.shape();
        assert_eq!(xs.len(), 4, "conv2d input must be [N, C, H, W], got {xs:?}");
        assert_eq!(ws.len(), 4, "conv2d weight must be rank 4, got {ws:?}");
        let x5 = self.reshape(vec![xs[0], xs[1], 1, xs[2], xs[3]]);
        let w5 = weight.reshape(vec![ws[0], ws[1], 1, ws[2], ws[3]]);
        let y = x5.conv3d(w5, bias, [0, padding[0], padding[1]]);
        let ys = y.shape();
        y.reshape(vec![ys[0], ys[1], ys[3], ys[4]])
    }

    /// `x [N, F] -> x W^T + b` with `W [O, F]`, `b [O]`.
    pub fn linear(self, weight: Var<'g, T>, bias: Var<'g, T>) -> Var<'g, T> {
        let xs = self.shape();
        let ws = weight.shape();
        assert_eq!(xs.len(), 2, "linear input must be [N, F]");
        assert_eq!(xs[1], ws[1], "linear feature mismatch: input {} vs weight {}", xs[1], ws[1]);
        let (n, f, o) = (xs[0], xs[1], ws[0]);
        let mut out = vec![T::zero(); n * o];
        gemm(n, f, o, self.value().data(), false, weight.value().data(), true, &mut out, false);
        let b = bias.value();
        for row in out.chunks_mut(o) {
            for (v, &bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
        self.graph.op(Tensor::from_vec(vec![n, o], out), &[self, weight, bias], move |c| {
            let g = c.grad.data();
            let dx = c.needs(0).then(|| {
                let mut d = vec![T::zero(); n * f];
                gemm(n, o, f, g, false, c.input(1).data(), false, &mut d, false);
                Tensor::from_vec(vec![n, f], d)
            });
            let dw = c.needs(1).then(|| {
                let mut d = vec![T::zero(); o * f];
                gemm(o, n, f, g, true, c.input(0).data(), false, &mut d, false);
                Tensor::from_vec(vec![o, f], d)
            });
            let db = c.needs(2).then(|| c.grad.sum_axis(0));
            vec![dx, dw, db]
        })
    }

    /// 2x2 stride-2 max pooling over the two trailing axes.
    pub fn max_pool2x2(self) -> Var<'g, T> {
        let shape = self.shape();
        let (planes, h, w) = trailing_planes(&shape);
        let (out, arg) = max_pool2x2(self.value().data(), planes, h, w);
        let mut out_shape = shape.clone();
        let nd = shape.len();
        out_shape[nd - 2] = h / 2;
        out_shape[nd - 1] = w / 2;
        let len = numel(&shape);
        self.graph.op(Tensor::from_vec(out_shape, out), &[self], move |c| {
            vec![Some(Tensor::from_vec(shape.clone(), max_pool2x2_backward(c.grad.data(), &arg, len)))]
        })
    }

    /// Bilinear resize of the two trailing axes (half-pixel centers).
    pub fn resize_bilinear(self, out_h: usize, out_w: usize) -> Var<'g, T> {
        let shape = self.shape();
        let (planes, h, w) = trailing_planes(&shape);
        let out = resize_bilinear(self.value().data(), planes, h, w, out_h, out_w);
        let mut out_shape = shape.clone();
        let nd = shape.len();
        out_shape[nd - 2] = out_h;
        out_shape[nd - 1] = out_w;
        self.graph.op(Tensor::from_vec(out_shape, out), &[self], move |c| {
            let d = resize_bilinear_backward(c.grad.data(), planes, h, w, out_h, out_w);
            vec![Some(Tensor::from_vec(shape.clone(), d))]
        })
    }

    /// Batch normalization over axis 1 using the batch's own statistics.
    /// Returns the output and the (mean, biased variance) used.
    pub fn batch_norm_train(self, gamma: Var<'g, T>, beta: Var<'g, T>, eps: f64) -> (Var<'g, T>, Tensor<T>, Tensor<T>) {
        let shape = self.shape();
        let (n, ch, s) = (shape[0], shape[1], numel(&shape[2..]));
        let x = self.value();
        let stats = channel_stats(x.data(), n, ch, s);
        let g = gamma.value();
        let b = beta.value();
        let eps = T::lit(eps);
        let (y, xhat, inv_std) = normalize(x.data(), n, ch, s, &stats.mean, &stats.var, g.data(), b.data(), eps);
        let out = self.graph.op(Tensor::from_vec(shape.clone(), y), &[self, gamma, beta], move |c| {
            let (dx, dg, db) =
                batch_norm_backward(c.grad.data(), &xhat, &inv_std, c.input(1).data(), n, ch, s, true);
            vec![
                c.needs(0).then(|| Tensor::from_vec(shape.clone(), dx)),
                c.needs(1).then(|| Tensor::from_vec(vec![ch], dg)),
                c.needs(2).then(|| Tensor::from_vec(vec![ch], db)),
            ]
        });
        (out, Tensor::from_vec(vec![ch], stats.mean), Tensor::from_vec(vec![ch], stats.var))
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_eval(
        self,
        gamma: Var<'g, T>,
        beta: Var<'g, T>,
        mean: &Tensor<T>,
        var: &Tensor<T>,
        eps: f64,
    ) -> Var<'g, T> {
        let shape = self.shape();
        let (n, ch, s) = (shape[0], shape[1], numel(&shape[2..]));
        let x = self.value();
        let g = gamma.value();
        let b = beta.value();
        let eps = T::lit(eps);
        let (y, xhat, inv_std) = normalize(x.data(), n, ch, s, mean.data(), var.data(), g.data(), b.data(), eps);
        self.graph.op(Tensor::from_vec(shape.clone(), y), &[self, gamma, beta], move |c| {
            let (dx, dg, db) =
                batch_norm_backward(c.grad.data(), &xhat, &inv_std, c.input(1).data(), n, ch, s, false);
            vec![
                c.needs(0).then(|| Tensor::from_vec(shape.clone(), dx)),
                c.needs(1).then(|| Tensor::from_vec(vec![ch], dg)),
                c.needs(2).then(|| Tensor::from_vec(vec![ch], db)),
            ]
        })
    }

    /// Mean binary cross-entropy of `sigmoid(self)` against `target`,
    /// evaluated as `max(z, 0) - z y + ln(1 + exp(-|z|))`.
    pub fn bce_with_logits(self, target: &Tensor<T>) -> Var<'g, T> {
        let z = self.value();
        assert_eq!(z.shape(), target.shape(), "bce shape mismatch");
        let m = T::from_usize(z.numel()).unwrap();
        let total: T = z
            .data()
            .iter()
            .zip(target.data())
            .map(|(&zv, &yv)| zv.max(T::zero()) - zv * yv + (-zv.abs()).exp().ln_1p())
            .sum();
        let target = target.clone();
        self.graph.op(Tensor::scalar(total / m), &[self], move |c| {
            let g = c.grad.item() / m;
            vec![Some(c.input(0).zip_map(&target, |zv, yv| g * (stable_sigmoid(zv) - yv)))]
        })
    }
}

pub fn stable_sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
