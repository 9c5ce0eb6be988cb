use std::rc::Rc;

use ndarray::{Axis, Ix2, IxDyn};

use super::conv::{self, ConvGeom};
use super::{Array, Var};

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Add,
    Sub,
    Mul,
    Scale(f64),
    AddScalar,
    MulConst(Rc<Array>),
    PowF(f64),
    Exp,
    Tanh,
    Reshape(Vec<usize>),
    BroadcastTo(Vec<usize>),
    SumTo(Vec<usize>),
    MatMul,
    Transpose,
    Conv2d(ConvGeom),
    ConvTranspose2d(ConvGeom),
    ConvWeightGrad(ConvGeom),
    LogSoftmax,
}

impl Op {
    pub(crate) fn backward(&self, inputs: &[Var], out: &Var, g: &Var, needs: &[bool]) -> Vec<Option<Var>> {
        let need = |i: usize| needs.get(i).copied().unwrap_or(false);
        match self {
            Op::Add => vec![Some(g.clone()), Some(g.clone())],
            Op::Sub => vec![Some(g.clone()), need(1).then(|| scale(g, -1.0))],
            Op::Mul => vec![
                need(0).then(|| mul(g, &inputs[1])),
                need(1).then(|| mul(g, &inputs[0])),
            ],
            Op::Scale(s) => vec![Some(scale(g, *s))],
            Op::AddScalar => vec![Some(g.clone())],
            Op::MulConst(m) => vec![Some(mul_const(g, m.clone()))],
            Op::PowF(p) => {
                let d = scale(&powf(&inputs[0], p - 1.0), *p);
                vec![Some(mul(g, &d))]
            }
            Op::Exp => vec![Some(mul(g, out))],
            Op::Tanh => {
                // g * (1 - y^2)
                let y2 = mul(out, out);
                vec![Some(sub(g, &mul(g, &y2)))]
            }
            Op::Reshape(orig) => vec![Some(reshape(g, orig))],
            Op::BroadcastTo(orig) => vec![Some(sum_to(g, orig))],
            Op::SumTo(orig) => vec![Some(broadcast_to(g, orig))],
            Op::MatMul => vec![
                need(0).then(|| matmul(g, &transpose(&inputs[1]))),
                need(1).then(|| matmul(&transpose(&inputs[0]), g)),
            ],
            Op::Transpose => vec![Some(transpose(g))],
            Op::Conv2d(geom) => {
                let (x, w) = (&inputs[0], &inputs[1]);
                let hw = (x.shape()[2], x.shape()[3]);
                vec![
                    need(0).then(|| conv_transpose2d(g, w, *geom, hw)),
                    need(1).then(|| conv_weight_grad(x, g, *geom)),
                ]
            }
            Op::ConvTranspose2d(geom) => {
                let (x, w) = (&inputs[0], &inputs[1]);
                vec![
                    need(0).then(|| conv2d(g, w, *geom)),
                    need(1).then(|| conv_weight_grad(g, x, *geom)),
                ]
            }
            Op::ConvWeightGrad(geom) => {
                // out = dW such that <out, D> = <conv2d(x, D), gy>
                let (x, gy) = (&inputs[0], &inputs[1]);
                let hw = (x.shape()[2], x.shape()[3]);
                vec![
                    need(0).then(|| conv_transpose2d(gy, g, *geom, hw)),
                    need(1).then(|| conv2d(x, g, *geom)),
                ]
            }
            Op::LogSoftmax => {
                let n = out.shape()[0];
                let row_sum = sum_to(g, &[n, 1]);
                let soft = exp(out);
                vec![Some(sub(g, &mul(&soft, &broadcast_to(&row_sum, out.shape()))))]
            }
        }
    }
}

fn assert_same_shape(a: &Var, b: &Var, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}: shape mismatch");
}

pub fn add(a: &Var, b: &Var) -> Var {
    assert_same_shape(a, b, "add");
    Var::from_op(a.value() + b.value(), Op::Add, vec![a.clone(), b.clone()])
}

pub fn sub(a: &Var, b: &Var) -> Var {
    assert_same_shape(a, b, "sub");
    Var::from_op(a.value() - b.value(), Op::Sub, vec![a.clone(), b.clone()])
}

pub fn mul(a: &Var, b: &Var) -> Var {
    assert_same_shape(a, b, "mul");
    Var::from_op(a.value() * b.value(), Op::Mul, vec![a.clone(), b.clone()])
}

pub fn scale(a: &Var, s: f64) -> Var {
    Var::from_op(a.value() * s, Op::Scale(s), vec![a.clone()])
}

pub fn neg(a: &Var) -> Var {
    scale(a, -1.0)
}

pub fn add_scalar(a: &Var, s: f64) -> Var {
    Var::from_op(a.value() + s, Op::AddScalar, vec![a.clone()])
}

/// Elementwise product with a fixed (non-differentiable) array.
pub fn mul_const(a: &Var, m: Rc<Array>) -> Var {
    assert_eq!(a.shape(), m.shape(), "mul_const: shape mismatch");
    Var::from_op(a.value() * &*m, Op::MulConst(m), vec![a.clone()])
}

pub fn powf(a: &Var, p: f64) -> Var {
    Var::from_op(a.value().mapv(|x| x.powf(p)), Op::PowF(p), vec![a.clone()])
}

pub fn sqrt(a: &Var) -> Var {
    powf(a, 0.5)
}

pub fn exp(a: &Var) -> Var {
    Var::from_op(a.value().mapv(f64::exp), Op::Exp, vec![a.clone()])
}

pub fn tanh(a: &Var) -> Var {
    Var::from_op(a.value().mapv(f64::tanh), Op::Tanh, vec![a.clone()])
}

pub fn relu(a: &Var) -> Var {
    leaky_relu(a, 0.0)
}

pub fn leaky_relu(a: &Var, slope: f64) -> Var {
    let mask = a.value().mapv(|x| if x > 0.0 { 1.0 } else { slope });
    mul_const(a, Rc::new(mask))
}

pub fn reshape(a: &Var, shape: &[usize]) -> Var {
    let value = a
        .value()
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order(IxDyn(shape))
        .unwrap_or_else(|e| panic!("reshape {:?} -> {:?}: {e}", a.shape(), shape));
    Var::from_op(value, Op::Reshape(a.shape().to_vec()), vec![a.clone()])
}

/// Numpy-style broadcast. `a` must be 0-d or have the target rank with
/// every axis either 1 or equal to the target.
pub fn broadcast_to(a: &Var, shape: &[usize]) -> Var {
    if a.shape() == shape {
        return a.clone();
    }
    let value = a
        .value()
        .broadcast(IxDyn(shape))
        .unwrap_or_else(|| panic!("cannot broadcast {:?} to {:?}", a.shape(), shape))
        .to_owned();
    Var::from_op(value, Op::BroadcastTo(a.shape().to_vec()), vec![a.clone()])
}

/// Adjoint of [`broadcast_to`]: sums over the axes that were expanded.
pub fn sum_to(a: &Var, shape: &[usize]) -> Var {
    if a.shape() == shape {
        return a.clone();
    }
    let value = if shape.is_empty() {
        Array::from_elem(IxDyn(&[]), a.value().sum())
    } else {
        assert_eq!(shape.len(), a.shape().len(), "sum_to: rank mismatch");
        let mut v = a.value().clone();
        for (axis, (&from, &to)) in a.shape().iter().zip(shape).enumerate() {
            if from != to {
                assert_eq!(to, 1, "sum_to {:?} -> {:?}", a.shape(), shape);
                v = v.sum_axis(Axis(axis)).insert_axis(Axis(axis));
            }
        }
        v
    };
    Var::from_op(value, Op::SumTo(a.shape().to_vec()), vec![a.clone()])
}

pub fn sum_all(a: &Var) -> Var {
    sum_to(a, &[])
}

pub fn mean_all(a: &Var) -> Var {
    let n = a.value().len() as f64;
    scale(&sum_all(a), 1.0 / n)
}

pub fn matmul(a: &Var, b: &Var) -> Var {
    let a2 = a.value().view().into_dimensionality::<Ix2>().expect("matmul: lhs must be 2-d");
    let b2 = b.value().view().into_dimensionality::<Ix2>().expect("matmul: rhs must be 2-d");
    let value = a2.dot(&b2).into_dyn();
    Var::from_op(value, Op::MatMul, vec![a.clone(), b.clone()])
}

pub fn transpose(a: &Var) -> Var {
    assert_eq!(a.shape().len(), 2, "transpose: 2-d only");
    let value = a.value().t().as_standard_layout().into_owned();
    Var::from_op(value, Op::Transpose, vec![a.clone()])
}

/// 2-d convolution of `x` [N,C,H,W] with `w` [O,C,k,k].
pub fn conv2d(x: &Var, w: &Var, geom: ConvGeom) -> Var {
    let value = conv::conv2d_forward(x.value(), w.value(), geom);
    Var::from_op(value, Op::Conv2d(geom), vec![x.clone(), w.clone()])
}

/// Transposed convolution of `x` [N,A,h,w] with `w` [A,B,k,k], producing
/// [N,B,H,W] where `hw = (H, W)` is the spatial size a forward convolution
/// would map back onto `(h, w)`.
pub fn conv_transpose2d(x: &Var, w: &Var, geom: ConvGeom, hw: (usize, usize)) -> Var {
    let value = conv::conv_transpose2d_forward(x.value(), w.value(), geom, hw);
    Var::from_op(value, Op::ConvTranspose2d(geom), vec![x.clone(), w.clone()])
}

/// Gradient of `<conv2d(x, W), gy>` with respect to `W`.
pub fn conv_weight_grad(x: &Var, gy: &Var, geom: ConvGeom) -> Var {
    let value = conv::conv2d_weight_grad(x.value(), gy.value(), geom);
    Var::from_op(value, Op::ConvWeightGrad(geom), vec![x.clone(), gy.clone()])
}

/// Row-wise log-softmax of a 2-d tensor.
pub fn log_softmax(a: &Var) -> Var {
    let x = a.value().view().into_dimensionality::<Ix2>().expect("log_softmax: 2-d only");
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        row.mapv_inplace(|v| v - lse);
    }
    Var::from_op(out.into_dyn(), Op::LogSoftmax, vec![a.clone()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::grad;
    use ndarray::{Array4, ArrayD};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_array(shape: &[usize], rng: &mut ChaCha8Rng) -> ArrayD<f64> {
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-1.0..1.0))
    }

    /// Central-difference check of d f / d input.
    fn check_grad(f: &dyn Fn(&Var) -> Var, x0: &Array) {
        let x = Var::param(x0.clone());
        let g = grad(&f(&x), &[&x], false)[0].clone().unwrap();
        let eps = 1e-6;
        for i in 0..x0.len() {
            let mut xp = x0.clone();
            xp.as_slice_mut().unwrap()[i] += eps;
            let mut xm = x0.clone();
            xm.as_slice_mut().unwrap()[i] -= eps;
            let fd = (f(&Var::constant(xp)).item() - f(&Var::constant(xm)).item()) / (2.0 * eps);
            let an = g.value().as_slice().unwrap()[i];
            assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "elem {i}: fd {fd} vs analytic {an}");
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let geom = ConvGeom::HALVING;
        let x0 = rand_array(&[2, 2, 6, 6], &mut rng);
        let w0 = rand_array(&[3, 2, 4, 4], &mut rng);
        let proj = Var::constant(rand_array(&[2, 3, 3, 3], &mut rng));
        let wc = Var::constant(w0.clone());
        check_grad(&|x| sum_all(&mul(&conv2d(x, &wc, geom), &proj)), &x0);
        let xc = Var::constant(x0.clone());
        check_grad(&|w| sum_all(&mul(&conv2d(&xc, w, geom), &proj)), &w0);
    }

    #[test]
    fn conv_transpose_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let geom = ConvGeom::HALVING;
        let x0 = rand_array(&[2, 3, 3, 3], &mut rng);
        let w0 = rand_array(&[3, 2, 4, 4], &mut rng);
        let proj = Var::constant(rand_array(&[2, 2, 6, 6], &mut rng));
        let wc = Var::constant(w0.clone());
        check_grad(&|x| sum_all(&mul(&conv_transpose2d(x, &wc, geom, (6, 6)), &proj)), &x0);
        let xc = Var::constant(x0.clone());
        check_grad(&|w| sum_all(&mul(&conv_transpose2d(&xc, w, geom, (6, 6)), &proj)), &w0);
    }

    #[test]
    fn conv_transpose_is_adjoint_of_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let geom = ConvGeom::HALVING;
        let x = rand_array(&[1, 2, 8, 8], &mut rng);
        let w = rand_array(&[3, 2, 4, 4], &mut rng);
        let y = rand_array(&[1, 3, 4, 4], &mut rng);
        let cx = conv::conv2d_forward(&x, &w, geom);
        let ty = conv::conv_transpose2d_forward(&y, &w, geom, (8, 8));
        let lhs: f64 = (&cx * &y).sum();
        let rhs: f64 = (&x * &ty).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn weight_grad_second_order_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let geom = ConvGeom::HALVING;
        let x0 = rand_array(&[1, 2, 4, 4], &mut rng);
        let gy0 = rand_array(&[1, 2, 2, 2], &mut rng);
        let proj = Var::constant(rand_array(&[2, 2, 4, 4], &mut rng));
        let gyc = Var::constant(gy0.clone());
        check_grad(&|x| sum_all(&mul(&conv_weight_grad(x, &gyc, geom), &proj)), &x0);
        let xc = Var::constant(x0.clone());
        check_grad(&|gy| sum_all(&mul(&conv_weight_grad(&xc, gy, geom), &proj)), &gy0);
    }

    #[test]
    fn elementwise_and_reduction_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = rand_array(&[3, 4], &mut rng);
        let m = Var::constant(rand_array(&[4, 2], &mut rng));
        check_grad(&|x| sum_all(&tanh(&matmul(x, &m))), &x0);
        check_grad(&|x| sum_all(&mul(&log_softmax(x), &Var::constant(x0.mapv(|v| v * v)))), &x0);
        check_grad(&|x| sum_all(&sqrt(&add_scalar(&mul(x, x), 0.5))), &x0);
        check_grad(
            &|x| {
                let s = sum_to(x, &[3, 1]);
                sum_all(&mul(&broadcast_to(&s, &[3, 4]), &exp(x)))
            },
            &x0,
        );
        check_grad(&|x| sum_all(&mul(&reshape(&transpose(x), &[2, 6]), &reshape(x, &[2, 6]))), &x0);
    }

    #[test]
    fn double_backward_through_conv_net_matches_finite_differences() {
        // h(w) = || d/dx sum(leaky(conv(x, w))) ||^2, differentiated w.r.t. w.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let geom = ConvGeom::HALVING;
        let x0 = rand_array(&[2, 1, 4, 4], &mut rng);
        let v0 = rand_array(&[2, 2, 2, 2], &mut rng);
        let w0 = rand_array(&[2, 1, 4, 4], &mut rng);
        let proj = Var::constant(v0);
        let h = |w: &Var| {
            let x = Var::param(x0.clone());
            let y = sum_all(&mul(&leaky_relu(&conv2d(&x, w, geom), 0.2), &proj));
            let gx = grad(&y, &[&x], true)[0].clone().unwrap();
            sum_all(&mul(&gx, &gx))
        };
        check_grad(&h, &w0);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let x = Var::constant(Array4::<f64>::zeros((1, 1, 1, 1)).into_shape_with_order(IxDyn(&[1, 1])).unwrap());
        let y = log_softmax(&broadcast_to(&x, &[2, 12]));
        for v in y.value().iter() {
            assert!((v + 12f64.ln()).abs() < 1e-12);
        }
    }
}
