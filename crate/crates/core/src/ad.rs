//! Reverse-mode differentiation over a scalar tape.
//!
//! Numeric code in this crate is written once against the [`Scalar`] trait and
//! runs either on plain `f64` or on [`Var`], which records every operation on a
//! [`Tape`]. A tape is a flat Wengert list: each node stores its operation, up to
//! two operand indices, the primal value and the local partial derivatives.
//! Because `Var` performs exactly the same floating-point operations as the
//! `f64` path, primal values on the tape are bit-identical to an untaped run.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic needed by the samplers, fields and losses.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;
    /// A constant living in the same context as `self`.
    fn lift(self, c: f64) -> Self;
    /// `c - self`
    fn rsub(self, c: f64) -> Self;
    /// `c / self`
    fn rdiv(self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn exp_m1(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;

    fn square(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn lift(self, c: f64) -> Self {
        c
    }
    #[inline]
    fn rsub(self, c: f64) -> Self {
        c - self
    }
    #[inline]
    fn rdiv(self, c: f64) -> Self {
        c / self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn exp_m1(self) -> Self {
        f64::exp_m1(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Input,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    AddC(f64),
    SubC(f64),
    RSubC(f64),
    MulC(f64),
    DivC(f64),
    RDivC(f64),
    Exp,
    ExpM1,
    Ln,
    Sqrt,
    Tanh,
    Sin,
    Cos,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: Op,
    a: u32,
    b: u32,
    value: f64,
    da: f64,
    db: f64,
}

/// Recorded operations of one differentiable computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    inputs: RefCell<Vec<u32>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.borrow().len())
            .field("inputs", &self.inputs.borrow().len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(nodes)),
            inputs: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Register an independent variable. Gradients are reported in the order
    /// inputs were created.
    pub fn input(&self, value: f64) -> Var<'_> {
        let idx = self.push(Node {
            op: Op::Input,
            a: 0,
            b: 0,
            value,
            da: 0.0,
            db: 0.0,
        });
        self.inputs.borrow_mut().push(idx);
        Var { tape: self, idx, val: value }
    }

    pub fn inputs(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.input(v)).collect()
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        let idx = self.push(Node {
            op: Op::Const,
            a: 0,
            b: 0,
            value,
            da: 0.0,
            db: 0.0,
        });
        Var { tape: self, idx, val: value }
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = u32::try_from(nodes.len()).expect("tape exceeds u32 nodes");
        nodes.push(node);
        idx
    }

    fn unary(&self, op: Op, a: u32, value: f64, da: f64) -> u32 {
        self.push(Node { op, a, b: a, value, da, db: 0.0 })
    }

    fn binary(&self, op: Op, a: u32, b: u32, value: f64, da: f64, db: f64) -> u32 {
        self.push(Node { op, a, b, value, da, db })
    }

    /// Adjoints of `output` with respect to every input, in creation order.
    /// Inputs that `output` does not depend on get exactly `0.0`.
    pub fn gradient(&self, output: Var<'_>) -> Vec<f64> {
        assert!(std::ptr::eq(output.tape, self), "output belongs to another tape");
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let n = &nodes[i];
            match n.op {
                Op::Input | Op::Const => {}
                Op::Add | Op::Sub | Op::Mul | Op::Div => {
                    adj[n.a as usize] += g * n.da;
                    adj[n.b as usize] += g * n.db;
                }
                _ => adj[n.a as usize] += g * n.da,
            }
        }
        self.inputs.borrow().iter().map(|&i| adj[i as usize]).collect()
    }

    /// Recompute every node from its operation with new input values.
    /// Replaying with the recorded inputs reproduces the recorded values
    /// bit-for-bit.
    pub fn replay(&self, inputs: &[f64]) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let input_ids = self.inputs.borrow();
        assert_eq!(inputs.len(), input_ids.len(), "input count mismatch");
        let mut vals = vec![0.0; nodes.len()];
        let mut next_input = 0;
        for (i, n) in nodes.iter().enumerate() {
            let a = vals[n.a as usize];
            let b = vals[n.b as usize];
            vals[i] = match n.op {
                Op::Input => {
                    let v = inputs[next_input];
                    next_input += 1;
                    v
                }
                Op::Const => n.value,
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Neg => -a,
                Op::AddC(c) => a + c,
                Op::SubC(c) => a - c,
                Op::RSubC(c) => c - a,
                Op::MulC(c) => a * c,
                Op::DivC(c) => a / c,
                Op::RDivC(c) => c / a,
                Op::Exp => a.exp(),
                Op::ExpM1 => a.exp_m1(),
                Op::Ln => a.ln(),
                Op::Sqrt => a.sqrt(),
                Op::Tanh => a.tanh(),
                Op::Sin => a.sin(),
                Op::Cos => a.cos(),
            };
        }
        vals
    }

    /// Values recorded during the forward pass.
    pub fn recorded_values(&self) -> Vec<f64> {
        self.nodes.borrow().iter().map(|n| n.value).collect()
    }

    pub fn input_values(&self) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        self.inputs.borrow().iter().map(|&i| nodes[i as usize].value).collect()
    }
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var(#{} = {})", self.idx, self.val)
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    #[inline]
    fn un(self, op: Op, value: f64, da: f64) -> Self {
        let idx = self.tape.unary(op, self.idx, value, da);
        Var { tape: self.tape, idx, val: value }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let value = self.val + rhs.val;
        let idx = self.tape.binary(Op::Add, self.idx, rhs.idx, value, 1.0, 1.0);
        Var { tape: self.tape, idx, val: value }
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let value = self.val - rhs.val;
        let idx = self.tape.binary(Op::Sub, self.idx, rhs.idx, value, 1.0, -1.0);
        Var { tape: self.tape, idx, val: value }
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let value = self.val * rhs.val;
        let idx = self.tape.binary(Op::Mul, self.idx, rhs.idx, value, rhs.val, self.val);
        Var { tape: self.tape, idx, val: value }
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let value = self.val / rhs.val;
        let inv = 1.0 / rhs.val;
        let idx = self
            .tape
            .binary(Op::Div, self.idx, rhs.idx, value, inv, -value * inv);
        Var { tape: self.tape, idx, val: value }
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    fn neg(self) -> Self {
        self.un(Op::Neg, -self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        self.un(Op::AddC(c), self.val + c, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        self.un(Op::SubC(c), self.val - c, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.un(Op::MulC(c), self.val * c, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self.un(Op::DivC(c), self.val / c, 1.0 / c)
    }
}

impl<'t> Scalar for Var<'t> {
    #[inline]
    fn value(self) -> f64 {
        self.val
    }
    fn lift(self, c: f64) -> Self {
        self.tape.constant(c)
    }
    fn rsub(self, c: f64) -> Self {
        self.un(Op::RSubC(c), c - self.val, -1.0)
    }
    fn rdiv(self, c: f64) -> Self {
        let value = c / self.val;
        self.un(Op::RDivC(c), value, -value / self.val)
    }
    fn exp(self) -> Self {
        let value = self.val.exp();
        self.un(Op::Exp, value, value)
    }
    fn exp_m1(self) -> Self {
        let value = self.val.exp_m1();
        self.un(Op::ExpM1, value, self.val.exp())
    }
    fn ln(self) -> Self {
        self.un(Op::Ln, self.val.ln(), 1.0 / self.val)
    }
    fn sqrt(self) -> Self {
        let value = self.val.sqrt();
        self.un(Op::Sqrt, value, 0.5 / value)
    }
    fn tanh(self) -> Self {
        let value = self.val.tanh();
        self.un(Op::Tanh, value, 1.0 - value * value)
    }
    fn sin(self) -> Self {
        self.un(Op::Sin, self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.un(Op::Cos, self.val.cos(), -self.val.sin())
    }
}
