//! Exact derivatives of game objectives.
//!
//! Every game is written once, generically over [`Scalar`]. Evaluating it on
//! nested [`Dual`] numbers yields exact first, second and higher derivatives:
//! `Dual<f64>` gives directional derivatives, `Dual<Dual<f64>>` gives
//! Hessian-vector products, and so on. Policy dimensions are tiny (at most
//! ten coordinates in total), so forward mode is all that is needed here.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// Number type the games are generic over.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    /// Primal (non-derivative) part.
    fn re(&self) -> f64;
    fn exp(self) -> Self;
    fn sigmoid(self) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dual number `v + d·ε` with `ε² = 0`, nestable over any [`Scalar`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub v: T,
    pub d: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(v: T, d: T) -> Self {
        Self { v, d }
    }

    pub fn constant(v: T) -> Self {
        Self { v, d: T::cst(0.0) }
    }

    pub fn variable(v: T) -> Self {
        Self { v, d: T::cst(1.0) }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d + o.d)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d - o.d)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.v * o.v, self.v * o.d + self.d * o.v)
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::cst(1.0) / o.v;
        let q = self.v * inv;
        Self::new(q, (self.d - q * o.d) * inv)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.v, -self.d)
    }
}

impl<T: Scalar> AddAssign for Dual<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Scalar> SubAssign for Dual<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Scalar> MulAssign for Dual<T> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(T::cst(v))
    }
    #[inline]
    fn re(&self) -> f64 {
        self.v.re()
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        Self::new(e, e * self.d)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        let s = self.v.sigmoid();
        Self::new(s, self.d * s * (T::cst(1.0) - s))
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        Self::new(self.v.scale(k), self.d.scale(k))
    }
}

/// Joint policy parameters: one row of `dim` logits per player.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPolicy {
    players: usize,
    dim: usize,
    data: Vec<f64>,
}

impl JointPolicy {
    pub fn new(players: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if players < 2 || dim == 0 {
            return Err(Error::Shape(format!(
                "joint policy needs at least 2 players and 1 parameter, got {players}x{dim}"
            )));
        }
        if data.len() != players * dim {
            return Err(Error::Shape(format!(
                "expected {} entries for {players}x{dim} policy, got {}",
                players * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("joint policy has non-finite entries".into()));
        }
        Ok(Self { players, dim, data })
    }

    pub fn zeros(players: usize, dim: usize) -> Self {
        Self { players, dim, data: vec![0.0; players * dim] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged policy rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Player-relabelled copy (rows reversed for two players).
    pub fn swapped(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.players {
            out.row_mut(i).copy_from_slice(self.row(self.players - 1 - i));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Expected return per player.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnVector(pub Vec<f64>);

impl ReturnVector {
    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// Row `i` holds `∇_{x_i} f_i(x)`; same layout as [`JointPolicy`].
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedGradient {
    pub players: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl AlignedGradient {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Dense `rows × cols` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Jacobian {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// A vector-valued differentiable function of flattened joint-policy entries.
///
/// Implementors write `eval` once; exact derivatives come from nested duals.
pub trait Differentiable {
    /// Number of inputs.
    fn input_dim(&self) -> usize;
    /// Number of outputs.
    fn output_dim(&self) -> usize;
    fn eval<T: Scalar>(&self, x: &[T]) -> Vec<T>;
}

/// A scalar objective: one output of a [`Differentiable`].
pub trait DifferentiableScalar {
    fn input_dim(&self) -> usize;
    fn eval<T: Scalar>(&self, x: &[T]) -> T;

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }

    /// Exact gradient with respect to the listed coordinates.
    fn gradient_on(&self, x: &[f64], coords: &[usize]) -> Vec<f64> {
        let mut lifted: Vec<Dual<f64>> = x.iter().map(|&v| Dual::constant(v)).collect();
        coords
            .iter()
            .map(|&c| {
                lifted[c].d = 1.0;
                let out = self.eval(&lifted).d;
                lifted[c].d = 0.0;
                out
            })
            .collect()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.input_dim()).collect();
        self.gradient_on(x, &all)
    }

    /// Exact Hessian-vector product `H v`.
    fn hessian_vector(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.input_dim();
        let mut lifted: Vec<Dual<Dual<f64>>> = x
            .iter()
            .zip(v)
            .map(|(&xi, &vi)| Dual::new(Dual::constant(xi), Dual::constant(vi)))
            .collect();
        (0..n)
            .map(|c| {
                lifted[c].v.d = 1.0;
                let out = self.eval(&lifted).d.d;
                lifted[c].v.d = 0.0;
                out
            })
            .collect()
    }
}

/// Output `index` of a vector function, viewed as a scalar objective.
pub struct Component<'a, F: ?Sized> {
    pub func: &'a F,
    pub index: usize,
}

impl<F: Differentiable + ?Sized> DifferentiableScalar for Component<'_, F> {
    fn input_dim(&self) -> usize {
        self.func.input_dim()
    }

    fn eval<T: Scalar>(&self, x: &[T]) -> T {
        self.func.eval(x)[self.index]
    }
}

/// Central-difference gradient estimate.
pub fn finite_diff_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|c| {
            probe[c] = x[c] + h;
            let up = f(&probe);
            probe[c] = x[c] - h;
            let down = f(&probe);
            probe[c] = x[c];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// `max_c |a_c - b_c| / max(1, max_c |b_c|)`: relative error with an absolute floor near zero.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Lift a real vector into dual numbers with zero tangent.
pub fn lift<T: Scalar>(x: &[T]) -> Vec<Dual<T>> {
    x.iter().map(|&v| Dual::constant(v)).collect()
}

/// `∇_{x_player} f_player` of a two-output function, generic so it can be nested.
pub fn own_gradient<F, T>(f: &F, x: &[T], player: usize, dim: usize) -> Vec<T>
where
    F: Differentiable + ?Sized,
    T: Scalar,
{
    let mut lifted = lift(x);
    (0..dim)
        .map(|n| {
            let c = player * dim + n;
            lifted[c].d = T::cst(1.0);
            let out = f.eval(&lifted)[player].d;
            lifted[c].d = T::cst(0.0);
            out
        })
        .collect()
}

/// Exact aligned gradient: row `i` is `∇_{x_i} f_i(x)`.
pub fn aligned_grad<F: Differentiable + ?Sized>(f: &F, x: &JointPolicy) -> Result<AlignedGradient> {
    check_shape(f, x)?;
    let (p, n) = (x.players(), x.dim());
    let mut data = Vec::with_capacity(p * n);
    for i in 0..p {
        data.extend(own_gradient(f, x.as_slice(), i, n));
    }
    Ok(AlignedGradient { players: p, dim: n, data })
}

/// Full Jacobian `∂f_i/∂x_c` for every player `i` and every coordinate `c`.
pub fn full_jacobian<F: Differentiable + ?Sized>(f: &F, x: &JointPolicy) -> Result<Jacobian> {
    check_shape(f, x)?;
    let rows = f.output_dim();
    let cols = f.input_dim();
    let mut data = vec![0.0; rows * cols];
    let mut lifted = lift(x.as_slice());
    for c in 0..cols {
        lifted[c].d = 1.0;
        let out = f.eval(&lifted);
        lifted[c].d = 0.0;
        for (r, o) in out.iter().enumerate() {
            data[r * cols + c] = o.d;
        }
    }
    Ok(Jacobian { rows, cols, data })
}

/// Exact `H_i v` where `H_i` is the Hessian of `f_i` over all coordinates.
pub fn hessian_vector<F: Differentiable + ?Sized>(
    f: &F,
    x: &JointPolicy,
    player: usize,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_shape(f, x)?;
    if v.len() != f.input_dim() {
        return Err(Error::Shape(format!(
            "direction has {} entries, expected {}",
            v.len(),
            f.input_dim()
        )));
    }
    if player >= f.output_dim() {
        return Err(Error::Shape(format!("no player {player}")));
    }
    Ok(Component { func: f, index: player }.hessian_vector(x.as_slice(), v))
}

/// Transposed Jacobian of the aligned-gradient field applied to `w`:
/// `Σ_i H_i (w restricted to block i)`.
pub fn aligned_jacobian_transpose<F: Differentiable + ?Sized>(
    f: &F,
    x: &[f64],
    players: usize,
    w: &[f64],
) -> Vec<f64> {
    let dim = x.len() / players;
    let mut out = vec![0.0; x.len()];
    let mut masked = vec![0.0; x.len()];
    for i in 0..players {
        let block = i * dim..(i + 1) * dim;
        if w[block.clone()].iter().all(|v| *v == 0.0) {
            continue;
        }
        masked.iter_mut().for_each(|m| *m = 0.0);
        masked[block.clone()].copy_from_slice(&w[block]);
        let hv = Component { func: f, index: i }.hessian_vector(x, &masked);
        for (o, h) in out.iter_mut().zip(hv) {
            *o += h;
        }
    }
    out
}

fn check_shape<F: Differentiable + ?Sized>(f: &F, x: &JointPolicy) -> Result<()> {
    if x.as_slice().len() != f.input_dim() || x.players() != f.output_dim() {
        return Err(Error::Shape(format!(
            "policy is {}x{}, game expects {} players and {} entries",
            x.players(),
            x.dim(),
            f.output_dim(),
            f.input_dim()
        )));
    }
    Ok(())
}
