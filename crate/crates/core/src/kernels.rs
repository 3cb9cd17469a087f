//! Row-level arithmetic shared by the IR interpreter and the tiled runtime.
//!
//! Every reduction runs in ascending index order starting from the
//! operator's identity, so equal inputs always give bit-identical outputs.

use crate::model::{BinaryOp, Reduce, UnaryOp};

/// `out = x * W` for a row vector `x` and a row-major `x.len() x out.len()` matrix.
pub fn matvec(x: &[f32], w: &[f32], out: &mut [f32]) {
    let cols = out.len();
    debug_assert_eq!(w.len(), x.len() * cols);
    for (c, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0f32;
        for (k, &xk) in x.iter().enumerate() {
            acc += xk * w[k * cols + c];
        }
        *o = acc;
    }
}

pub fn unary(op: UnaryOp, x: f32) -> f32 {
    match op {
        UnaryOp::Exp => x.exp(),
        UnaryOp::Relu => x.max(0.0),
        UnaryOp::Sigmoid => 1.0 / (1.0 + (-x).exp()),
    }
}

pub fn binary(op: BinaryOp, a: f32, b: f32) -> f32 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a / b,
        BinaryOp::Max => a.max(b),
    }
}

pub fn unary_row(op: UnaryOp, x: &[f32], out: &mut [f32]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = unary(op, v);
    }
}

/// Element-wise binary op; a width-1 operand broadcasts.
pub fn binary_row(op: BinaryOp, a: &[f32], b: &[f32], out: &mut [f32]) {
    for (i, o) in out.iter_mut().enumerate() {
        let x = if a.len() == 1 { a[0] } else { a[i] };
        let y = if b.len() == 1 { b[0] } else { b[i] };
        *o = binary(op, x, y);
    }
}

pub fn reduce_into(r: Reduce, acc: &mut [f32], x: &[f32]) {
    for (a, &v) in acc.iter_mut().zip(x) {
        *a = r.combine(*a, v);
    }
}
