//! Differentiable operations on [`Var`].
//!
//! Every backward rule below is expressed with `Var` operations, which is
//! what makes second-order gradients work.

use crate::conv::ConvGeom;
use crate::element::Element;
use crate::tensor::Tensor;
use crate::var::{Backward, Var};

fn reduce_to<T: Element>(g: Var<T>, shape: &[usize]) -> Var<T> {
    if g.shape() == shape {
        g
    } else {
        g.sum_to(shape)
    }
}

macro_rules! backward_rule {
    ($name:ident < $($field:ident : $ty:ty),* >, |$s:ident, $out:ident, $g:ident, $p:ident| $body:expr) => {
        struct $name { $($field: $ty),* }
        backward_rule!(@impl $name, |$s, $out, $g, $p| $body);
    };
    ($name:ident, |$s:ident, $out:ident, $g:ident, $p:ident| $body:expr) => {
        struct $name;
        backward_rule!(@impl $name, |$s, $out, $g, $p| $body);
    };
    (@impl $name:ident, |$s:ident, $out:ident, $g:ident, $p:ident| $body:expr) => {
        impl<T: Element> Backward<T> for $name {
            #[allow(unused_variables)]
            fn backward(&self, $out: &Var<T>, $g: &Var<T>, $p: &[Var<T>]) -> Vec<Option<Var<T>>> {
                let $s = self;
                $body
            }
            fn name(&self) -> &'static str {
                stringify!($name)
            }
        }
    };
}

backward_rule!(AddOp, |s, out, g, p| vec![
    Some(reduce_to(g.clone(), p[0].shape())),
    Some(reduce_to(g.clone(), p[1].shape())),
]);

backward_rule!(SubOp, |s, out, g, p| vec![
    Some(reduce_to(g.clone(), p[0].shape())),
    Some(reduce_to(g.neg(), p[1].shape())),
]);

backward_rule!(MulOp, |s, out, g, p| vec![
    p[0].requires_grad().then(|| reduce_to(g.mul(&p[1]), p[0].shape())),
    p[1].requires_grad().then(|| reduce_to(g.mul(&p[0]), p[1].shape())),
]);

backward_rule!(DivOp, |s, out, g, p| vec![
    p[0].requires_grad().then(|| reduce_to(g.div(&p[1]), p[0].shape())),
    p[1].requires_grad().then(|| reduce_to(g.mul(out).div(&p[1]).neg(), p[1].shape())),
]);

backward_rule!(NegOp, |s, out, g, p| vec![Some(g.neg())]);

backward_rule!(IdentityOp, |s, out, g, p| vec![Some(g.clone())]);

struct ScaleOp<T>(T);
impl<T: Element> Backward<T> for ScaleOp<T> {
    fn backward(&self, _out: &Var<T>, g: &Var<T>, _p: &[Var<T>]) -> Vec<Option<Var<T>>> {
        vec![Some(g.mul_scalar(self.0))]
    }
    fn name(&self) -> &'static str {
        "ScaleOp"
    }
}

backward_rule!(ExpOp, |s, out, g, p| vec![Some(g.mul(out))]);
backward_rule!(LnOp, |s, out, g, p| vec![Some(g.div(&p[0]))]);
backward_rule!(TanhOp, |s, out, g, p| vec![Some(g.sub(&g.mul(&out.square())))]);
backward_rule!(SqrtOp, |s, out, g, p| vec![Some(g.div(out).mul_scalar(T::from_f64_lossy(0.5)))]);
backward_rule!(SigmoidOp, |s, out, g, p| vec![Some(g.mul(&out.sub(&out.square())))]);
backward_rule!(SoftplusOp, |s, out, g, p| vec![Some(g.mul(&p[0].sigmoid()))]);
backward_rule!(SquareOp, |s, out, g, p| vec![Some(g.mul(&p[0]).mul_scalar(T::from_f64_lossy(2.0)))]);

struct MaskOp<T: Element>(Tensor<T>);
impl<T: Element> Backward<T> for MaskOp<T> {
    fn backward(&self, _out: &Var<T>, g: &Var<T>, _p: &[Var<T>]) -> Vec<Option<Var<T>>> {
        vec![Some(g.mul(&Var::constant(self.0.clone())))]
    }
    fn name(&self) -> &'static str {
        "LeakyReluOp"
    }
}

backward_rule!(SumToOp<input: Vec<usize>>, |s, out, g, p| vec![Some(g.broadcast_to(&s.input))]);
backward_rule!(BroadcastOp<input: Vec<usize>>, |s, out, g, p| vec![Some(g.sum_to(&s.input))]);
backward_rule!(ReshapeOp<input: Vec<usize>>, |s, out, g, p| vec![Some(g.reshape(&s.input))]);

backward_rule!(MatMulOp<ta: bool, tb: bool>, |s, out, g, p| {
    let (a, b) = (&p[0], &p[1]);
    let ga = a.requires_grad().then(|| {
        if s.ta {
            b.matmul_t(s.tb, g, true)
        } else {
            g.matmul_t(false, b, !s.tb)
        }
    });
    let gb = b.requires_grad().then(|| {
        if s.tb {
            g.matmul_t(true, a, s.ta)
        } else {
            a.matmul_t(!s.ta, g, false)
        }
    });
    vec![ga, gb]
});

backward_rule!(Conv2dOp<geom: ConvGeom>, |s, out, g, p| {
    let (x, w) = (&p[0], &p[1]);
    let (_, _, h, wd) = x.value().dims4();
    let (_, _, kh, kw) = w.value().dims4();
    vec![
        x.requires_grad().then(|| g.conv2d_input_grad(w, (h, wd), s.geom)),
        w.requires_grad().then(|| x.conv2d_weight_grad(g, (kh, kw), s.geom)),
    ]
});

backward_rule!(ConvInputGradOp<geom: ConvGeom>, |s, out, g, p| {
    // p = [cotangent y, weight]; g has the shape of the conv input
    let (y, w) = (&p[0], &p[1]);
    let (_, _, kh, kw) = w.value().dims4();
    vec![
        y.requires_grad().then(|| g.conv2d(w, s.geom)),
        w.requires_grad().then(|| g.conv2d_weight_grad(y, (kh, kw), s.geom)),
    ]
});

backward_rule!(ConvWeightGradOp<geom: ConvGeom>, |s, out, g, p| {
    // p = [input x, cotangent y]; g has the shape of the weight
    let (x, y) = (&p[0], &p[1]);
    let (_, _, h, wd) = x.value().dims4();
    vec![
        x.requires_grad().then(|| y.conv2d_input_grad(g, (h, wd), s.geom)),
        y.requires_grad().then(|| x.conv2d(g, s.geom)),
    ]
});

backward_rule!(Upsample2Op, |s, out, g, p| vec![Some(g.pool2_sum())]);
backward_rule!(Pool2SumOp, |s, out, g, p| vec![Some(g.upsample2())]);

backward_rule!(ConcatOp<axis: usize>, |s, out, g, p| {
    let mut start = 0;
    p.iter()
        .map(|part| {
            let len = part.shape()[s.axis];
            let slice = part.requires_grad().then(|| g.narrow(s.axis, start, len));
            start += len;
            slice
        })
        .collect()
});

backward_rule!(NarrowOp<axis: usize, start: usize>, |s, out, g, p| {
    vec![Some(g.unnarrow(p[0].shape(), s.axis, s.start))]
});

backward_rule!(UnnarrowOp<axis: usize, start: usize>, |s, out, g, p| {
    vec![Some(g.narrow(s.axis, s.start, p[0].shape()[s.axis]))]
});

backward_rule!(LogSoftmaxOp<axis: usize>, |s, out, g, p| {
    let mut keep = out.shape().to_vec();
    keep[s.axis] = 1;
    vec![Some(g.sub(&out.exp().mul(&g.sum_to(&keep))))]
});

impl<T: Element> Var<T> {
    fn unary(&self, value: Tensor<T>, op: impl Backward<T> + 'static) -> Var<T> {
        Var::from_op(value, vec![self.clone()], op)
    }

    pub fn add(&self, other: &Var<T>) -> Var<T> {
        let v = self.value().zip_with(other.value(), |a, b| a + b);
        Var::from_op(v, vec![self.clone(), other.clone()], AddOp)
    }

    pub fn sub(&self, other: &Var<T>) -> Var<T> {
        let v = self.value().zip_with(other.value(), |a, b| a - b);
        Var::from_op(v, vec![self.clone(), other.clone()], SubOp)
    }

    pub fn mul(&self, other: &Var<T>) -> Var<T> {
        let v = self.value().zip_with(other.value(), |a, b| a * b);
        Var::from_op(v, vec![self.clone(), other.clone()], MulOp)
    }

    pub fn div(&self, other: &Var<T>) -> Var<T> {
        let v = self.value().zip_with(other.value(), |a, b| a / b);
        Var::from_op(v, vec![self.clone(), other.clone()], DivOp)
    }

    pub fn neg(&self) -> Var<T> {
        self.unary(self.value().map(|x| -x), NegOp)
    }

    pub fn add_scalar(&self, c: T) -> Var<T> {
        self.unary(self.value().map(|x| x + c), IdentityOp)
    }

    pub fn mul_scalar(&self, c: T) -> Var<T> {
        self.unary(self.value().map(|x| x * c), ScaleOp(c))
    }

    pub fn exp(&self) -> Var<T> {
        self.unary(self.value().map(T::exp), ExpOp)
    }

    pub fn ln(&self) -> Var<T> {
        self.unary(self.value().map(T::ln), LnOp)
    }

    pub fn tanh(&self) -> Var<T> {
        self.unary(self.value().map(T::tanh), TanhOp)
    }

    pub fn sqrt(&self) -> Var<T> {
        self.unary(self.value().map(T::sqrt), SqrtOp)
    }

    pub fn square(&self) -> Var<T> {
        self.unary(self.value().map(|x| x * x), SquareOp)
    }

    pub fn sigmoid(&self) -> Var<T> {
        self.unary(self.value().map(sigmoid), SigmoidOp)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&self) -> Var<T> {
        self.unary(self.value().map(softplus), SoftplusOp)
    }

    pub fn leaky_relu(&self, slope: T) -> Var<T> {
        let x = self.value();
        let v = x.map(|a| if a > T::zero() { a } else { a * slope });
        if !self.requires_grad() {
            return Var::constant(v);
        }
        let mask = x.map(|a| if a > T::zero() { T::one() } else { slope });
        self.unary(v, MaskOp(mask))
    }

    pub fn sum_to(&self, shape: &[usize]) -> Var<T> {
        if self.shape() == shape {
            return self.clone();
        }
        self.unary(self.value().sum_to(shape), SumToOp { input: self.shape().to_vec() })
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Var<T> {
        if self.shape() == shape {
            return self.clone();
        }
        self.unary(self.value().broadcast_to(shape), BroadcastOp { input: self.shape().to_vec() })
    }

    pub fn sum_all(&self) -> Var<T> {
        self.sum_to(&[])
    }

    pub fn mean_all(&self) -> Var<T> {
        let n = self.value().numel().max(1);
        self.sum_all().mul_scalar(T::one() / T::from_usize(n).unwrap())
    }

    /// Sum over `axes`, keeping them as size-1 dimensions.
    pub fn sum_keep(&self, axes: &[usize]) -> Var<T> {
        let mut shape = self.shape().to_vec();
        for &a in axes {
            shape[a] = 1;
        }
        self.sum_to(&shape)
    }

    /// Mean over `axes`, keeping them as size-1 dimensions.
    pub fn mean_keep(&self, axes: &[usize]) -> Var<T> {
        let count: usize = axes.iter().map(|&a| self.shape()[a]).product();
        self.sum_keep(axes).mul_scalar(T::one() / T::from_usize(count.max(1)).unwrap())
    }

    pub fn reshape(&self, shape: &[usize]) -> Var<T> {
        if self.shape() == shape {
            return self.clone();
        }
        self.unary(self.value().reshape(shape), ReshapeOp { input: self.shape().to_vec() })
    }

    pub fn matmul(&self, other: &Var<T>) -> Var<T> {
        self.matmul_t(false, other, false)
    }

    /// `op(self) * op(other)` where `op` optionally transposes.
    pub fn matmul_t(&self, trans_a: bool, other: &Var<T>, trans_b: bool) -> Var<T> {
        let v = self.value().matmul(trans_a, other.value(), trans_b);
        Var::from_op(v, vec![self.clone(), other.clone()], MatMulOp { ta: trans_a, tb: trans_b })
    }

    pub fn conv2d(&self, weight: &Var<T>, geom: ConvGeom) -> Var<T> {
        let v = self.value().conv2d(weight.value(), geom);
        Var::from_op(v, vec![self.clone(), weight.clone()], Conv2dOp { geom })
    }

    /// Adjoint of [`Var::conv2d`] in its input; the transposed convolution.
    /// `weight` is laid out `(C_self, C_out, kh, kw)`.
    pub fn conv2d_input_grad(&self, weight: &Var<T>, input_hw: (usize, usize), geom: ConvGeom) -> Var<T> {
        let v = self.value().conv2d_input_grad(weight.value(), input_hw, geom);
        Var::from_op(v, vec![self.clone(), weight.clone()], ConvInputGradOp { geom })
    }

    pub fn conv2d_weight_grad(&self, grad: &Var<T>, kernel_hw: (usize, usize), geom: ConvGeom) -> Var<T> {
        let v = self.value().conv2d_weight_grad(grad.value(), kernel_hw, geom);
        Var::from_op(v, vec![self.clone(), grad.clone()], ConvWeightGradOp { geom })
    }

    pub fn upsample2(&self) -> Var<T> {
        self.unary(self.value().upsample2(), Upsample2Op)
    }

    pub fn pool2_sum(&self) -> Var<T> {
        self.unary(self.value().pool2_sum(), Pool2SumOp)
    }

    /// 2x2 average pooling.
    pub fn avg_pool2(&self) -> Var<T> {
        self.pool2_sum().mul_scalar(T::from_f64_lossy(0.25))
    }

    pub fn concat(parts: &[Var<T>], axis: usize) -> Var<T> {
        let values: Vec<&Tensor<T>> = parts.iter().map(Var::value).collect();
        Var::from_op(Tensor::concat(&values, axis), parts.to_vec(), ConcatOp { axis })
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var<T> {
        self.unary(self.value().narrow(axis, start, len), NarrowOp { axis, start })
    }

    pub fn unnarrow(&self, full_shape: &[usize], axis: usize, start: usize) -> Var<T> {
        self.unary(self.value().unnarrow(full_shape, axis, start), UnnarrowOp { axis, start })
    }

    pub fn log_softmax(&self, axis: usize) -> Var<T> {
        self.unary(self.value().log_softmax(axis), LogSoftmaxOp { axis })
    }

    pub fn softmax(&self, axis: usize) -> Var<T> {
        self.log_softmax(axis).exp()
    }
}

pub(crate) fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus<T: Element>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

macro_rules! binary_operator {
    ($trait:ident, $method:ident) => {
        impl<T: Element> std::ops::$trait<&Var<T>> for &Var<T> {
            type Output = Var<T>;
            fn $method(self, rhs: &Var<T>) -> Var<T> {
                Var::$method(self, rhs)
            }
        }
    };
}

binary_operator!(Add, add);
binary_operator!(Sub, sub);
binary_operator!(Mul, mul);
binary_operator!(Div, div);

impl<T: Element> std::ops::Neg for &Var<T> {
    type Output = Var<T>;
    fn neg(self) -> Var<T> {
        Var::neg(self)
    }
}
