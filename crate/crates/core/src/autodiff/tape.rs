//! The Wengert-list tape: construction, evaluation, value-level reverse
//! sweep, and the graph-building reverse sweep.

use std::collections::HashMap;

use num_traits::Float;
use thiserror::Error;

use super::dual::Dual;
use crate::num::Real;

#[derive(Debug, Error)]
pub enum AdError {
    #[error("non-finite value at node #{index} ({op})")]
    NonFinite { index: usize, op: &'static str },
    #[error("laplacian dims must be spatial; index 0 is the time slot")]
    TimeInLaplacian,
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) u32);

impl Var {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Scalar the tape can evaluate in: plain reals or [`Dual`] tangents.
pub trait AdScalar<F: Real>:
    Copy
    + PartialEq
    + core::fmt::Debug
    + core::ops::Add<Output = Self>
    + core::ops::Sub<Output = Self>
    + core::ops::Mul<Output = Self>
    + core::ops::Div<Output = Self>
    + core::ops::Neg<Output = Self>
{
    fn from_real(r: F) -> Self;
    fn zero() -> Self;
    fn one() -> Self;
    /// Value part (drops any tangent payload).
    fn primal(self) -> F;
    /// Multiply by a plain-real coefficient.
    fn scale(self, k: F) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn recip(self) -> Self;
    fn finite(self) -> bool;

    /// `acc += x·c` with a plain-real coefficient; hot path of affine nodes.
    #[inline(always)]
    fn fma_scaled(acc: &mut Self, x: Self, c: F) {
        *acc = *acc + x.scale(c);
    }

    /// `acc += x·y`.
    #[inline(always)]
    fn fma(acc: &mut Self, x: Self, y: Self) {
        *acc = *acc + x * y;
    }

    /// Lane-reduced `g += Σ x·y`; parameter-gradient accumulation.
    #[inline(always)]
    fn reduce_fma(g: &mut F, x: Self, y: Self) {
        *g = *g + (x * y).primal_sum();
    }

    /// Lane-reduced `g += Σ x`.
    #[inline(always)]
    fn reduce_add(g: &mut F, x: Self) {
        *g = *g + x.primal_sum();
    }

    /// Sum over lanes (identity for plain scalars).
    fn primal_sum(self) -> F;
}

impl<F: Real> AdScalar<F> for F {
    fn from_real(r: F) -> Self {
        r
    }
    fn zero() -> Self {
        F::zero()
    }
    fn one() -> Self {
        F::one()
    }
    fn primal(self) -> F {
        self
    }
    fn scale(self, k: F) -> Self {
        self * k
    }
    fn sin(self) -> Self {
        Float::sin(self)
    }
    fn cos(self) -> Self {
        Float::cos(self)
    }
    fn tanh(self) -> Self {
        Float::tanh(self)
    }
    fn exp(self) -> Self {
        Float::exp(self)
    }
    fn ln(self) -> Self {
        Float::ln(self)
    }
    fn sqrt(self) -> Self {
        Float::sqrt(self)
    }
    fn recip(self) -> Self {
        F::one() / self
    }
    fn finite(self) -> bool {
        Float::is_finite(self)
    }
    #[inline(always)]
    fn primal_sum(self) -> F {
        self
    }
}

/// Fixed-width lane pack: evaluates one graph on several points at once.
/// Each lane is arithmetically independent and bit-identical to a scalar
/// evaluation of that point; packing only amortizes the per-node dispatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pack<F, const B: usize>(pub [F; B]);

impl<F: Real, const B: usize> Pack<F, B> {
    pub fn splat(v: F) -> Self {
        Pack([v; B])
    }

    pub fn from_fn(f: impl FnMut(usize) -> F) -> Self {
        Pack(core::array::from_fn(f))
    }

    #[inline(always)]
    fn map(self, f: impl Fn(F) -> F) -> Self {
        let mut out = self.0;
        for o in &mut out {
            *o = f(*o);
        }
        Pack(out)
    }

    #[inline(always)]
    fn zip(self, o: Self, f: impl Fn(F, F) -> F) -> Self {
        let mut out = self.0;
        for (a, b) in out.iter_mut().zip(&o.0) {
            *a = f(*a, *b);
        }
        Pack(out)
    }
}

impl<F: Real, const B: usize> core::ops::Add for Pack<F, B> {
    type Output = Self;
    #[inline(always)]
    fn add(self, o: Self) -> Self {
        self.zip(o, |a, b| a + b)
    }
}

impl<F: Real, const B: usize> core::ops::Sub for Pack<F, B> {
    type Output = Self;
    #[inline(always)]
    fn sub(self, o: Self) -> Self {
        self.zip(o, |a, b| a - b)
    }
}

impl<F: Real, const B: usize> core::ops::Mul for Pack<F, B> {
    type Output = Self;
    #[inline(always)]
    fn mul(self, o: Self) -> Self {
        self.zip(o, |a, b| a * b)
    }
}

impl<F: Real, const B: usize> core::ops::Div for Pack<F, B> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self.zip(o, |a, b| a / b)
    }
}

impl<F: Real, const B: usize> core::ops::Neg for Pack<F, B> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|a| -a)
    }
}

impl<F: Real, const B: usize> AdScalar<F> for Pack<F, B> {
    #[inline(always)]
    fn from_real(r: F) -> Self {
        Pack::splat(r)
    }
    #[inline(always)]
    fn fma_scaled(acc: &mut Self, x: Self, c: F) {
        for (a, v) in acc.0.iter_mut().zip(&x.0) {
            *a += *v * c;
        }
    }
    #[inline(always)]
    fn fma(acc: &mut Self, x: Self, y: Self) {
        for ((a, v), w) in acc.0.iter_mut().zip(&x.0).zip(&y.0) {
            *a += *v * *w;
        }
    }
    fn zero() -> Self {
        Pack::splat(F::zero())
    }
    fn one() -> Self {
        Pack::splat(F::one())
    }
    fn primal(self) -> F {
        self.0[0]
    }
    #[inline(always)]
    fn scale(self, k: F) -> Self {
        self.map(|a| a * k)
    }
    fn sin(self) -> Self {
        self.map(Float::sin)
    }
    fn cos(self) -> Self {
        self.map(Float::cos)
    }
    fn tanh(self) -> Self {
        self.map(Float::tanh)
    }
    fn exp(self) -> Self {
        self.map(Float::exp)
    }
    fn ln(self) -> Self {
        self.map(Float::ln)
    }
    fn sqrt(self) -> Self {
        self.map(Float::sqrt)
    }
    fn recip(self) -> Self {
        self.map(|a| F::one() / a)
    }
    fn finite(self) -> bool {
        self.0.iter().all(|a| Float::is_finite(*a))
    }
    #[inline(always)]
    fn primal_sum(self) -> F {
        let mut acc = F::zero();
        for v in self.0 {
            acc += v;
        }
        acc
    }
    #[inline(always)]
    fn reduce_fma(g: &mut F, x: Self, y: Self) {
        let mut acc = F::zero();
        for (a, b) in x.0.iter().zip(&y.0) {
            acc += *a * *b;
        }
        *g = *g + acc;
    }
}

impl<F: Real> AdScalar<F> for Dual<F> {
    fn from_real(r: F) -> Self {
        Dual::constant(r)
    }
    fn zero() -> Self {
        Dual::constant(F::zero())
    }
    fn one() -> Self {
        Dual::constant(F::one())
    }
    fn primal(self) -> F {
        self.re
    }
    fn scale(self, k: F) -> Self {
        Dual { re: self.re * k, dt: self.dt * k }
    }
    fn sin(self) -> Self {
        Dual { re: self.re.sin(), dt: self.dt * self.re.cos() }
    }
    fn cos(self) -> Self {
        Dual { re: self.re.cos(), dt: -self.dt * self.re.sin() }
    }
    fn tanh(self) -> Self {
        let y = self.re.tanh();
        Dual { re: y, dt: self.dt * (F::one() - y * y) }
    }
    fn exp(self) -> Self {
        let y = self.re.exp();
        Dual { re: y, dt: self.dt * y }
    }
    fn ln(self) -> Self {
        Dual { re: self.re.ln(), dt: self.dt / self.re }
    }
    fn sqrt(self) -> Self {
        let y = self.re.sqrt();
        Dual { re: y, dt: self.dt / (F::of(2.0) * y) }
    }
    fn recip(self) -> Self {
        let y = F::one() / self.re;
        Dual { re: y, dt: -self.dt * y * y }
    }
    fn finite(self) -> bool {
        self.re.is_finite() && self.dt.is_finite()
    }
    fn primal_sum(self) -> F {
        self.re
    }
}

/// Where a linear combination reads its coefficients.
#[derive(Debug, Clone, Copy)]
enum CoeffSrc {
    /// Parameter bank entries `offset + k·stride`; their gradient is
    /// accumulated by the value backward sweep.
    Param { bank: u8, offset: u32, stride: i64 },
    /// Constants in the tape-local arena.
    Local { offset: u32 },
}

/// Bias term of a linear combination.
#[derive(Debug, Clone, Copy)]
pub enum Bias<F> {
    None,
    Const(F),
    Param { bank: u8, idx: u32 },
}

#[derive(Debug, Clone)]
struct LinMeta<F> {
    coeff: CoeffSrc,
    bias: Bias<F>,
    args_start: u32,
    args_len: u32,
}

#[derive(Debug, Clone, Copy)]
enum Op<F> {
    Input(u32),
    Const(F),
    Param { bank: u8, idx: u32 },
    Lin(u32),
    Neg(Var),
    Sin { omega: F, arg: Var },
    Cos { omega: F, arg: Var },
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Recip(Var),
    Sqr(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddC(F, Var),
    MulC(F, Var),
}

impl<F> Op<F> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Const(_) => "const",
            Op::Param { .. } => "param",
            Op::Lin(_) => "lin",
            Op::Neg(_) => "neg",
            Op::Sin { .. } => "sin",
            Op::Cos { .. } => "cos",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Ln(_) => "ln",
            Op::Sqrt(_) => "sqrt",
            Op::Recip(_) => "recip",
            Op::Sqr(_) => "sqr",
            Op::Add(_, _) => "add",
            Op::Sub(_, _) => "sub",
            Op::Mul(_, _) => "mul",
            Op::Div(_, _) => "div",
            Op::AddC(_, _) => "add_const",
            Op::MulC(_, _) => "mul_const",
        }
    }
}

/// Reusable evaluation buffers; one per thread of batch evaluation.
#[derive(Debug, Default, Clone)]
pub struct TapeBuf<S> {
    values: Vec<S>,
    adjoints: Vec<S>,
}

impl<S: Copy> TapeBuf<S> {
    pub fn new() -> Self {
        TapeBuf { values: Vec::new(), adjoints: Vec::new() }
    }

    pub fn value(&self, v: Var) -> S {
        self.values[v.0 as usize]
    }

    pub fn adjoint(&self, v: Var) -> S {
        self.adjoints[v.0 as usize]
    }
}

/// The scalar computation graph. Construction-time typing admits only the
/// supported primitives, so an unsupported operation is unrepresentable
/// rather than silently mis-differentiated.
///
/// Pure non-affine nodes are hash-consed: pushing a node with the same
/// operation and operands returns the existing handle, which keeps repeated
/// derivative sweeps from duplicating subexpressions.
#[derive(Debug, Clone, Default)]
pub struct Tape<F: Real> {
    ops: Vec<Op<F>>,
    lin: Vec<LinMeta<F>>,
    args: Vec<u32>,
    locals: Vec<F>,
    n_inputs: usize,
    cse: HashMap<CseKey, Var>,
}

/// Structural identity of a pure node: opcode, constant bits, operands
/// (commutative operands normalized).
type CseKey = (u8, u64, u32, u32);

impl<F: Real> Tape<F> {
    pub fn new(n_inputs: usize) -> Self {
        let mut t = Tape {
            ops: Vec::with_capacity(64 + n_inputs),
            lin: Vec::new(),
            args: Vec::new(),
            locals: Vec::new(),
            n_inputs,
            cse: HashMap::new(),
        };
        for i in 0..n_inputs {
            t.ops.push(Op::Input(i as u32));
        }
        t
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn input_vars(&self) -> Vec<Var> {
        (0..self.n_inputs as u32).map(Var).collect()
    }

    fn push(&mut self, op: Op<F>) -> Var {
        if let Some(key) = cse_key(&op) {
            if let Some(&v) = self.cse.get(&key) {
                return v;
            }
            let id = self.ops.len() as u32;
            self.ops.push(op);
            self.cse.insert(key, Var(id));
            return Var(id);
        }
        let id = self.ops.len() as u32;
        self.ops.push(op);
        Var(id)
    }

    pub fn constant(&mut self, v: F) -> Var {
        self.push(Op::Const(v))
    }

    /// Leaf referencing one entry of a parameter bank.
    pub fn param(&mut self, bank: usize, idx: usize) -> Var {
        self.push(Op::Param { bank: bank as u8, idx: idx as u32 })
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.push(Op::Neg(a))
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.push(Op::Sin { omega: F::one(), arg: a })
    }

    /// `sin(omega · z)`; the frequency-scaled form sine networks use.
    pub fn sin_scaled(&mut self, omega: F, a: Var) -> Var {
        self.push(Op::Sin { omega, arg: a })
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.push(Op::Cos { omega: F::one(), arg: a })
    }

    pub fn cos_scaled(&mut self, omega: F, a: Var) -> Var {
        self.push(Op::Cos { omega, arg: a })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.push(Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.push(Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.push(Op::Ln(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.push(Op::Sqrt(a))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.push(Op::Recip(a))
    }

    pub fn sqr(&mut self, a: Var) -> Var {
        self.push(Op::Sqr(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Div(a, b))
    }

    pub fn add_const(&mut self, c: F, a: Var) -> Var {
        self.push(Op::AddC(c, a))
    }

    pub fn mul_const(&mut self, c: F, a: Var) -> Var {
        self.push(Op::MulC(c, a))
    }

    /// Affine node over parameter-bank coefficients:
    /// `bias + Σ_k params[bank][offset + k·stride] · args[k]`.
    pub fn lin_param(
        &mut self,
        bank: usize,
        offset: usize,
        stride: i64,
        bias: Bias<F>,
        args: &[Var],
    ) -> Var {
        let args_start = self.args.len() as u32;
        self.args.extend(args.iter().map(|v| v.0));
        let mi = self.lin.len() as u32;
        self.lin.push(LinMeta {
            coeff: CoeffSrc::Param { bank: bank as u8, offset: offset as u32, stride },
            bias,
            args_start,
            args_len: args.len() as u32,
        });
        self.push(Op::Lin(mi))
    }

    /// Affine node over fixed coefficients: `bias + Σ_k coeffs[k] · args[k]`.
    pub fn lin_local(&mut self, coeffs: &[F], bias: Option<F>, args: &[Var]) -> Var {
        assert_eq!(coeffs.len(), args.len());
        let offset = self.locals.len() as u32;
        self.locals.extend_from_slice(coeffs);
        let args_start = self.args.len() as u32;
        self.args.extend(args.iter().map(|v| v.0));
        let mi = self.lin.len() as u32;
        self.lin.push(LinMeta {
            coeff: CoeffSrc::Local { offset },
            bias: match bias {
                Some(b) => Bias::Const(b),
                None => Bias::None,
            },
            args_start,
            args_len: args.len() as u32,
        });
        self.push(Op::Lin(mi))
    }

    fn lin_args(&self, m: &LinMeta<F>) -> &[u32] {
        &self.args[m.args_start as usize..(m.args_start + m.args_len) as usize]
    }

    /// Evaluate all nodes into `buf.values`.
    pub fn forward<S: AdScalar<F>>(&self, buf: &mut TapeBuf<S>, banks: &[&[F]], inputs: &[S]) {
        assert_eq!(inputs.len(), self.n_inputs, "input arity mismatch");
        buf.values.clear();
        buf.values.reserve(self.ops.len());
        for op in &self.ops {
            let v = {
                let vals = &buf.values;
                match *op {
                    Op::Input(i) => inputs[i as usize],
                    Op::Const(c) => S::from_real(c),
                    Op::Param { bank, idx } => S::from_real(banks[bank as usize][idx as usize]),
                    Op::Lin(mi) => {
                        let m = &self.lin[mi as usize];
                        let args = self.lin_args(m);
                        let mut acc = match m.bias {
                            Bias::None => S::zero(),
                            Bias::Const(c) => S::from_real(c),
                            Bias::Param { bank, idx } => {
                                S::from_real(banks[bank as usize][idx as usize])
                            }
                        };
                        match m.coeff {
                            CoeffSrc::Local { offset } => {
                                let cs = &self.locals
                                    [offset as usize..offset as usize + args.len()];
                                for (c, &a) in cs.iter().zip(args) {
                                    S::fma_scaled(&mut acc, vals[a as usize], *c);
                                }
                            }
                            CoeffSrc::Param { bank, offset, stride } => {
                                let p = banks[bank as usize];
                                if stride == 1 {
                                    let cs =
                                        &p[offset as usize..offset as usize + args.len()];
                                    for (c, &a) in cs.iter().zip(args) {
                                        S::fma_scaled(&mut acc, vals[a as usize], *c);
                                    }
                                } else {
                                    for (k, &a) in args.iter().enumerate() {
                                        let ci = offset as i64 + k as i64 * stride;
                                        S::fma_scaled(
                                            &mut acc,
                                            vals[a as usize],
                                            p[ci as usize],
                                        );
                                    }
                                }
                            }
                        }
                        acc
                    }
                    Op::Neg(a) => -vals[a.0 as usize],
                    Op::Sin { omega, arg } => vals[arg.0 as usize].scale(omega).sin(),
                    Op::Cos { omega, arg } => vals[arg.0 as usize].scale(omega).cos(),
                    Op::Tanh(a) => vals[a.0 as usize].tanh(),
                    Op::Exp(a) => vals[a.0 as usize].exp(),
                    Op::Ln(a) => vals[a.0 as usize].ln(),
                    Op::Sqrt(a) => vals[a.0 as usize].sqrt(),
                    Op::Recip(a) => vals[a.0 as usize].recip(),
                    Op::Sqr(a) => {
                        let x = vals[a.0 as usize];
                        x * x
                    }
                    Op::Add(a, b) => vals[a.0 as usize] + vals[b.0 as usize],
                    Op::Sub(a, b) => vals[a.0 as usize] - vals[b.0 as usize],
                    Op::Mul(a, b) => vals[a.0 as usize] * vals[b.0 as usize],
                    Op::Div(a, b) => vals[a.0 as usize] / vals[b.0 as usize],
                    Op::AddC(c, a) => vals[a.0 as usize] + S::from_real(c),
                    Op::MulC(c, a) => vals[a.0 as usize].scale(c),
                }
            };
            buf.values.push(v);
        }
    }

    /// Rebuild the tape keeping only ancestors of `keep` (inputs always
    /// survive). Returns the compact tape plus the remapped handles of
    /// `keep`, in order. Evaluation of the kept nodes is unchanged.
    pub fn compact(&self, keep: &[Var]) -> (Tape<F>, Vec<Var>) {
        let n = self.ops.len();
        let mut live = vec![false; n];
        for i in 0..self.n_inputs {
            live[i] = true;
        }
        for &v in keep {
            live[v.0 as usize] = true;
        }
        for id in (0..n).rev() {
            if !live[id] {
                continue;
            }
            self.for_each_parent(id, |p| live[p as usize] = true);
        }
        let mut remap = vec![u32::MAX; n];
        let mut out = Tape {
            ops: Vec::with_capacity(live.iter().filter(|l| **l).count()),
            lin: Vec::new(),
            args: Vec::new(),
            locals: self.locals.clone(),
            n_inputs: self.n_inputs,
            cse: HashMap::new(),
        };
        for id in 0..n {
            if !live[id] {
                continue;
            }
            let r = |v: Var| Var(remap[v.0 as usize]);
            let op = match self.ops[id] {
                Op::Lin(mi) => {
                    let m = self.lin[mi as usize].clone();
                    let args: Vec<u32> = self
                        .lin_args(&m)
                        .iter()
                        .map(|&a| remap[a as usize])
                        .collect();
                    let args_start = out.args.len() as u32;
                    out.args.extend_from_slice(&args);
                    let nmi = out.lin.len() as u32;
                    out.lin.push(LinMeta {
                        coeff: m.coeff,
                        bias: m.bias,
                        args_start,
                        args_len: m.args_len,
                    });
                    Op::Lin(nmi)
                }
                Op::Input(i) => Op::Input(i),
                Op::Const(c) => Op::Const(c),
                Op::Param { bank, idx } => Op::Param { bank, idx },
                Op::Neg(a) => Op::Neg(r(a)),
                Op::Sin { omega, arg } => Op::Sin { omega, arg: r(arg) },
                Op::Cos { omega, arg } => Op::Cos { omega, arg: r(arg) },
                Op::Tanh(a) => Op::Tanh(r(a)),
                Op::Exp(a) => Op::Exp(r(a)),
                Op::Ln(a) => Op::Ln(r(a)),
                Op::Sqrt(a) => Op::Sqrt(r(a)),
                Op::Recip(a) => Op::Recip(r(a)),
                Op::Sqr(a) => Op::Sqr(r(a)),
                Op::Add(a, b) => Op::Add(r(a), r(b)),
                Op::Sub(a, b) => Op::Sub(r(a), r(b)),
                Op::Mul(a, b) => Op::Mul(r(a), r(b)),
                Op::Div(a, b) => Op::Div(r(a), r(b)),
                Op::AddC(c, a) => Op::AddC(c, r(a)),
                Op::MulC(c, a) => Op::MulC(c, r(a)),
            };
            remap[id] = out.ops.len() as u32;
            out.ops.push(op);
        }
        let kept = keep.iter().map(|&v| Var(remap[v.0 as usize])).collect();
        (out, kept)
    }

    /// Count of nodes per op name plus total affine fan-in (debug helper).
    pub fn op_stats(&self) -> Vec<(&'static str, usize)> {
        let mut map: std::collections::HashMap<&'static str, usize> = Default::default();
        let mut lin_edges = 0usize;
        for op in &self.ops {
            *map.entry(op.name()).or_default() += 1;
            if let Op::Lin(mi) = op {
                lin_edges += self.lin[*mi as usize].args_len as usize;
            }
        }
        let mut v: Vec<_> = map.into_iter().collect();
        v.sort_by_key(|(_, c)| core::cmp::Reverse(*c));
        v.push(("lin_edges_total", lin_edges));
        v
    }

    /// First non-finite node after a forward pass, if any.
    pub fn check_finite<S: AdScalar<F>>(&self, buf: &TapeBuf<S>) -> Result<(), AdError> {
        for (i, v) in buf.values.iter().enumerate() {
            if !v.finite() {
                return Err(AdError::NonFinite { index: i, op: self.ops[i].name() });
            }
        }
        Ok(())
    }

    /// Value-level reverse sweep from the seeded roots. Adjoints of every
    /// node end up in `buf`; parameter-bank gradients are accumulated into
    /// `grads` (entries `+=`, callers zero them) when provided.
    ///
    /// Requires a prior [`Tape::forward`] on the same `buf`.
    pub fn backward<S: AdScalar<F>>(
        &self,
        buf: &mut TapeBuf<S>,
        banks: &[&[F]],
        seeds: &[(Var, S)],
        mut grads: Option<&mut [Vec<F>]>,
    ) {
        let n = self.ops.len();
        debug_assert_eq!(buf.values.len(), n, "forward before backward");
        buf.adjoints.clear();
        buf.adjoints.resize(n, S::zero());
        for &(v, s) in seeds {
            buf.adjoints[v.0 as usize] = buf.adjoints[v.0 as usize] + s;
        }
        let zero = S::zero();
        for id in (0..n).rev() {
            let adj = buf.adjoints[id];
            if adj == zero {
                continue;
            }
            match self.ops[id] {
                Op::Input(_) | Op::Const(_) => {}
                Op::Param { bank, idx } => {
                    if let Some(gs) = grads.as_deref_mut() {
                        S::reduce_add(&mut gs[bank as usize][idx as usize], adj);
                    }
                }
                Op::Lin(mi) => {
                    let m = &self.lin[mi as usize];
                    let args =
                        &self.args[m.args_start as usize..(m.args_start + m.args_len) as usize];
                    match m.coeff {
                        CoeffSrc::Local { offset } => {
                            let cs =
                                &self.locals[offset as usize..offset as usize + args.len()];
                            for (c, &a) in cs.iter().zip(args) {
                                S::fma_scaled(&mut buf.adjoints[a as usize], adj, *c);
                            }
                        }
                        CoeffSrc::Param { bank, offset, stride } => {
                            let p = banks[bank as usize];
                            if let Some(gs) = grads.as_deref_mut() {
                                let gbank = &mut gs[bank as usize];
                                for (k, &a) in args.iter().enumerate() {
                                    let ci = (offset as i64 + k as i64 * stride) as usize;
                                    S::fma_scaled(&mut buf.adjoints[a as usize], adj, p[ci]);
                                    S::reduce_fma(&mut gbank[ci], adj, buf.values[a as usize]);
                                }
                            } else {
                                for (k, &a) in args.iter().enumerate() {
                                    let ci = (offset as i64 + k as i64 * stride) as usize;
                                    S::fma_scaled(&mut buf.adjoints[a as usize], adj, p[ci]);
                                }
                            }
                        }
                    }
                    if let (Bias::Param { bank, idx }, Some(gs)) = (m.bias, grads.as_deref_mut())
                    {
                        S::reduce_add(&mut gs[bank as usize][idx as usize], adj);
                    }
                }
                Op::Neg(a) => {
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t - adj;
                }
                Op::Sin { omega, arg } => {
                    let d = buf.values[arg.0 as usize].scale(omega).cos().scale(omega);
                    let t = &mut buf.adjoints[arg.0 as usize];
                    *t = *t + adj * d;
                }
                Op::Cos { omega, arg } => {
                    let d = buf.values[arg.0 as usize].scale(omega).sin().scale(omega);
                    let t = &mut buf.adjoints[arg.0 as usize];
                    *t = *t - adj * d;
                }
                Op::Tanh(a) => {
                    let y = buf.values[id];
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t + adj * (S::one() - y * y);
                }
                Op::Exp(a) => {
                    let y = buf.values[id];
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t + adj * y;
                }
                Op::Ln(a) => {
                    let x = buf.values[a.0 as usize];
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t + adj * x.recip();
                }
                Op::Sqrt(a) => {
                    let y = buf.values[id];
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t + adj.scale(F::of(0.5)) * y.recip();
                }
                Op::Recip(a) => {
                    let y = buf.values[id];
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t - adj * y * y;
                }
                Op::Sqr(a) => {
                    let x = buf.values[a.0 as usize];
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t + adj * x.scale(F::of(2.0));
                }
                Op::Add(a, b) => {
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t + adj;
                    let t = &mut buf.adjoints[b.0 as usize];
                    *t = *t + adj;
                }
                Op::Sub(a, b) => {
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t + adj;
                    let t = &mut buf.adjoints[b.0 as usize];
                    *t = *t - adj;
                }
                Op::Mul(a, b) => {
                    let va = buf.values[a.0 as usize];
                    let vb = buf.values[b.0 as usize];
                    S::fma(&mut buf.adjoints[a.0 as usize], adj, vb);
                    S::fma(&mut buf.adjoints[b.0 as usize], adj, va);
                }
                Op::Div(a, b) => {
                    let y = buf.values[id];
                    let rb = buf.values[b.0 as usize].recip();
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t + adj * rb;
                    let t = &mut buf.adjoints[b.0 as usize];
                    *t = *t - adj * y * rb;
                }
                Op::AddC(_, a) => {
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t + adj;
                }
                Op::MulC(c, a) => {
                    let t = &mut buf.adjoints[a.0 as usize];
                    *t = *t + adj.scale(c);
                }
            }
        }
    }

    fn for_each_parent(&self, id: usize, mut f: impl FnMut(u32)) {
        match self.ops[id] {
            Op::Input(_) | Op::Const(_) | Op::Param { .. } => {}
            Op::Lin(mi) => {
                let m = self.lin[mi as usize].clone();
                for &a in self.lin_args(&m) {
                    f(a);
                }
            }
            Op::Neg(a)
            | Op::Sin { arg: a, .. }
            | Op::Cos { arg: a, .. }
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Sqrt(a)
            | Op::Recip(a)
            | Op::Sqr(a)
            | Op::AddC(_, a)
            | Op::MulC(_, a) => f(a.0),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                f(a.0);
                f(b.0);
            }
        }
    }

    /// Graph-building reverse sweep: appends nodes computing `∂y/∂w` for
    /// each `w` in `wrt` and returns their handles. The derivative nodes are
    /// ordinary tape nodes, so they can be squared into losses, fed to a
    /// further `grad_graph`, and reached by the value-level [`Tape::backward`]
    /// for parameter gradients.
    ///
    /// Nodes with no path from any `wrt` to `y` yield an exact constant 0.
    pub fn grad_graph(&mut self, y: Var, wrt: &[Var]) -> Vec<Var> {
        let n = self.ops.len();
        let y_i = y.0 as usize;

        // Nodes that transitively read any wrt leaf; adjoints are only
        // propagated into these, so parameter/constant subgraphs stay out.
        let mut relevant = vec![false; n];
        for &w in wrt {
            relevant[w.0 as usize] = true;
        }
        for id in 0..n {
            if relevant[id] {
                continue;
            }
            let mut dep = false;
            self.for_each_parent(id, |p| dep |= relevant[p as usize]);
            if dep {
                relevant[id] = true;
            }
        }

        let mut contribs: Vec<Vec<Contrib<F>>> = vec![Vec::new(); n];
        let mut adj_var: Vec<Option<Var>> = vec![None; n];
        let mut deriv_cache: HashMap<(u32, u8), Var> = HashMap::new();

        let one = self.constant(F::one());

        for id in (0..=y_i).rev() {
            if !relevant[id] {
                continue;
            }
            let adj = if id == y_i {
                one
            } else if contribs[id].is_empty() {
                continue;
            } else {
                let list = std::mem::take(&mut contribs[id]);
                self.combine_contribs(list)
            };
            adj_var[id] = Some(adj);

            match self.ops[id] {
                Op::Input(_) | Op::Const(_) | Op::Param { .. } => {}
                Op::Lin(mi) => {
                    let m = self.lin[mi as usize].clone();
                    let args: Vec<u32> = self.lin_args(&m).to_vec();
                    match m.coeff {
                        CoeffSrc::Local { offset } => {
                            for (k, &a) in args.iter().enumerate() {
                                if relevant[a as usize] {
                                    let c = self.locals[offset as usize + k];
                                    contribs[a as usize].push(Contrib::Scaled(c, adj));
                                }
                            }
                        }
                        CoeffSrc::Param { bank, offset, stride } => {
                            for (k, &a) in args.iter().enumerate() {
                                if relevant[a as usize] {
                                    let ci = offset as i64 + k as i64 * stride;
                                    contribs[a as usize]
                                        .push(Contrib::ByParam { bank, idx: ci, adj });
                                }
                            }
                        }
                    }
                }
                Op::Neg(a) => {
                    if relevant[a.0 as usize] {
                        contribs[a.0 as usize].push(Contrib::Scaled(-F::one(), adj));
                    }
                }
                Op::Sin { omega, arg } => {
                    if relevant[arg.0 as usize] {
                        let d = *deriv_cache.entry((id as u32, 0)).or_insert_with(|| {
                            let c = self.push(Op::Cos { omega, arg });
                            self.push(Op::MulC(omega, c))
                        });
                        contribs[arg.0 as usize].push(Contrib::ByVar(adj, d));
                    }
                }
                Op::Cos { omega, arg } => {
                    if relevant[arg.0 as usize] {
                        let d = *deriv_cache.entry((id as u32, 0)).or_insert_with(|| {
                            let s = self.push(Op::Sin { omega, arg });
                            self.push(Op::MulC(-omega, s))
                        });
                        contribs[arg.0 as usize].push(Contrib::ByVar(adj, d));
                    }
                }
                Op::Tanh(a) => {
                    if relevant[a.0 as usize] {
                        let d = *deriv_cache.entry((id as u32, 0)).or_insert_with(|| {
                            let y2 = self.push(Op::Sqr(Var(id as u32)));
                            let ny2 = self.push(Op::MulC(-F::one(), y2));
                            self.push(Op::AddC(F::one(), ny2))
                        });
                        contribs[a.0 as usize].push(Contrib::ByVar(adj, d));
                    }
                }
                Op::Exp(a) => {
                    if relevant[a.0 as usize] {
                        contribs[a.0 as usize].push(Contrib::ByVar(adj, Var(id as u32)));
                    }
                }
                Op::Ln(a) => {
                    if relevant[a.0 as usize] {
                        let d = *deriv_cache
                            .entry((id as u32, 0))
                            .or_insert_with(|| self.push(Op::Recip(a)));
                        contribs[a.0 as usize].push(Contrib::ByVar(adj, d));
                    }
                }
                Op::Sqrt(a) => {
                    if relevant[a.0 as usize] {
                        let d = *deriv_cache.entry((id as u32, 0)).or_insert_with(|| {
                            let twice = self.push(Op::MulC(F::of(2.0), Var(id as u32)));
                            self.push(Op::Recip(twice))
                        });
                        contribs[a.0 as usize].push(Contrib::ByVar(adj, d));
                    }
                }
                Op::Recip(a) => {
                    if relevant[a.0 as usize] {
                        let d = *deriv_cache.entry((id as u32, 0)).or_insert_with(|| {
                            let y2 = self.push(Op::Sqr(Var(id as u32)));
                            self.push(Op::MulC(-F::one(), y2))
                        });
                        contribs[a.0 as usize].push(Contrib::ByVar(adj, d));
                    }
                }
                Op::Sqr(a) => {
                    if relevant[a.0 as usize] {
                        let d = *deriv_cache
                            .entry((id as u32, 0))
                            .or_insert_with(|| self.push(Op::MulC(F::of(2.0), a)));
                        contribs[a.0 as usize].push(Contrib::ByVar(adj, d));
                    }
                }
                Op::Add(a, b) => {
                    if relevant[a.0 as usize] {
                        contribs[a.0 as usize].push(Contrib::Pass(adj));
                    }
                    if relevant[b.0 as usize] {
                        contribs[b.0 as usize].push(Contrib::Pass(adj));
                    }
                }
                Op::Sub(a, b) => {
                    if relevant[a.0 as usize] {
                        contribs[a.0 as usize].push(Contrib::Pass(adj));
                    }
                    if relevant[b.0 as usize] {
                        contribs[b.0 as usize].push(Contrib::Scaled(-F::one(), adj));
                    }
                }
                Op::Mul(a, b) => {
                    if relevant[a.0 as usize] {
                        contribs[a.0 as usize].push(Contrib::ByVar(adj, b));
                    }
                    if relevant[b.0 as usize] {
                        contribs[b.0 as usize].push(Contrib::ByVar(adj, a));
                    }
                }
                Op::Div(a, b) => {
                    let rb = *deriv_cache
                        .entry((id as u32, 0))
                        .or_insert_with(|| self.push(Op::Recip(b)));
                    if relevant[a.0 as usize] {
                        contribs[a.0 as usize].push(Contrib::ByVar(adj, rb));
                    }
                    if relevant[b.0 as usize] {
                        let d = *deriv_cache.entry((id as u32, 1)).or_insert_with(|| {
                            let y_over_b = self.push(Op::Mul(Var(id as u32), rb));
                            self.push(Op::MulC(-F::one(), y_over_b))
                        });
                        contribs[b.0 as usize].push(Contrib::ByVar(adj, d));
                    }
                }
                Op::AddC(_, a) => {
                    if relevant[a.0 as usize] {
                        contribs[a.0 as usize].push(Contrib::Pass(adj));
                    }
                }
                Op::MulC(c, a) => {
                    if relevant[a.0 as usize] {
                        contribs[a.0 as usize].push(Contrib::Scaled(c, adj));
                    }
                }
            }
        }

        wrt.iter()
            .map(|&w| adj_var[w.0 as usize].unwrap_or_else(|| self.constant(F::zero())))
            .collect()
    }

    /// Reduce a contribution list to a single node, vectorizing the common
    /// layer-transpose pattern (all contributions read one parameter bank at
    /// a constant index stride) into one affine node.
    fn combine_contribs(&mut self, list: Vec<Contrib<F>>) -> Var {
        debug_assert!(!list.is_empty());
        if list.len() == 1 {
            return self.emit_single(&list[0]);
        }
        let all_param = list.iter().all(|c| matches!(c, Contrib::ByParam { .. }));
        if all_param {
            let (bank0, idx0) = match list[0] {
                Contrib::ByParam { bank, idx, .. } => (bank, idx),
                _ => unreachable!(),
            };
            let stride = match list[1] {
                Contrib::ByParam { idx, .. } => idx - idx0,
                _ => unreachable!(),
            };
            let uniform = list.windows(2).all(|w| match (&w[0], &w[1]) {
                (
                    Contrib::ByParam { bank: b0, idx: i0, .. },
                    Contrib::ByParam { bank: b1, idx: i1, .. },
                ) => *b0 == bank0 && *b1 == bank0 && i1 - i0 == stride,
                _ => false,
            });
            if uniform {
                let args: Vec<Var> = list
                    .iter()
                    .map(|c| match c {
                        Contrib::ByParam { adj, .. } => *adj,
                        _ => unreachable!(),
                    })
                    .collect();
                return self.lin_param(
                    bank0 as usize,
                    idx0 as usize,
                    stride,
                    Bias::None,
                    &args,
                );
            }
        }
        let all_const = list
            .iter()
            .all(|c| matches!(c, Contrib::Pass(_) | Contrib::Scaled(_, _)));
        if all_const {
            let coeffs: Vec<F> = list
                .iter()
                .map(|c| match c {
                    Contrib::Pass(_) => F::one(),
                    Contrib::Scaled(k, _) => *k,
                    _ => unreachable!(),
                })
                .collect();
            let args: Vec<Var> = list
                .iter()
                .map(|c| match c {
                    Contrib::Pass(a) | Contrib::Scaled(_, a) => *a,
                    _ => unreachable!(),
                })
                .collect();
            return self.lin_local(&coeffs, None, &args);
        }
        let mut acc = self.emit_single(&list[0]);
        for c in &list[1..] {
            let t = self.emit_single(c);
            acc = self.add(acc, t);
        }
        acc
    }

    fn emit_single(&mut self, c: &Contrib<F>) -> Var {
        match *c {
            Contrib::Pass(a) => a,
            Contrib::Scaled(k, a) => self.mul_const(k, a),
            Contrib::ByVar(a, v) => self.mul(a, v),
            Contrib::ByParam { bank, idx, adj } => {
                self.lin_param(bank as usize, idx as usize, 1, Bias::None, &[adj])
            }
        }
    }
}

fn cse_key<F: Real>(op: &Op<F>) -> Option<CseKey> {
    let bits = |c: F| c.as_f64().to_bits();
    // commutative operands in canonical order
    let pair = |a: Var, b: Var| {
        let (x, y) = if a.0 <= b.0 { (a.0, b.0) } else { (b.0, a.0) };
        (x, y)
    };
    Some(match *op {
        Op::Const(c) => (0, bits(c), 0, 0),
        Op::Param { bank, idx } => (1, bank as u64, idx, 0),
        Op::Neg(a) => (2, 0, a.0, 0),
        Op::Sin { omega, arg } => (3, bits(omega), arg.0, 0),
        Op::Cos { omega, arg } => (4, bits(omega), arg.0, 0),
        Op::Tanh(a) => (5, 0, a.0, 0),
        Op::Exp(a) => (6, 0, a.0, 0),
        Op::Ln(a) => (7, 0, a.0, 0),
        Op::Sqrt(a) => (8, 0, a.0, 0),
        Op::Recip(a) => (9, 0, a.0, 0),
        Op::Sqr(a) => (10, 0, a.0, 0),
        Op::Add(a, b) => {
            let (x, y) = pair(a, b);
            (11, 0, x, y)
        }
        Op::Mul(a, b) => {
            let (x, y) = pair(a, b);
            (12, 0, x, y)
        }
        Op::Sub(a, b) => (13, 0, a.0, b.0),
        Op::Div(a, b) => (14, 0, a.0, b.0),
        Op::AddC(c, a) => (15, bits(c), a.0, 0),
        Op::MulC(c, a) => (16, bits(c), a.0, 0),
        Op::Input(_) | Op::Lin(_) => return None,
    })
}

/// One summand of a node's adjoint during the graph-building sweep.
#[derive(Debug, Clone, Copy)]
enum Contrib<F> {
    /// `+ a`
    Pass(Var),
    /// `+ k·a`
    Scaled(F, Var),
    /// `+ a·v`
    ByVar(Var, Var),
    /// `+ params[bank][idx]·a`
    ByParam { bank: u8, idx: i64, adj: Var },
}
