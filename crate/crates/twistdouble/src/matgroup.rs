//! Matrix Lie algebra and group kernel.
//!
//! Everything that the doubles need lives here: complex 3x3 blocks over
//! dual-number scalars, semidirect-product elements `(chi, g)`, their Lie
//! algebra, group curves and exact directional derivatives of observables.
//! A plain matrix group is the special case with `chi = 0` and `phi = 0`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use num_dual::{Dual, DualNumCopy};
use num_traits::{One, Zero};
use rand::Rng;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::Error;

pub type C64 = Complex<f64>;
pub type Cx<S> = Complex<S>;
pub type Dual64 = Dual<f64>;
pub type Dual2 = Dual<Dual<f64>>;

/// Scalars that can flow through the kernel: `f64` and nested dual numbers.
pub trait Real: DualNumCopy<Primitive = f64> {}
impl<T: DualNumCopy<Primitive = f64>> Real for T {}

#[inline]
pub fn re<S: Real>(x: f64) -> Cx<S> {
    Complex::new(S::from(x), S::zero())
}

#[inline]
pub fn lift<S: Real>(z: C64) -> Cx<S> {
    Complex::new(S::from(z.re), S::from(z.im))
}

/// Primal value of a complex scalar.
#[inline]
pub fn value<S: Real>(z: Cx<S>) -> C64 {
    Complex::new(z.re.re(), z.im.re())
}

/// Tangent part of a complex dual scalar.
#[inline]
pub fn tangent<S: Real>(z: Cx<Dual<S>>) -> Cx<S> {
    Complex::new(z.re.eps, z.im.eps)
}

#[inline]
pub fn primal<S: Real>(z: Cx<Dual<S>>) -> Cx<S> {
    Complex::new(z.re.re, z.im.re)
}

#[inline]
pub fn seed<S: Real>(v: Cx<S>, d: Cx<S>) -> Cx<Dual<S>> {
    Complex::new(Dual::new(v.re, d.re), Dual::new(v.im, d.im))
}

#[inline]
pub fn up<S: Real>(v: Cx<S>) -> Cx<Dual<S>> {
    Complex::new(Dual::from_re(v.re), Dual::from_re(v.im))
}

pub fn cexp<S: Real>(z: Cx<S>) -> Cx<S> {
    let m = z.re.exp();
    Complex::new(m * z.im.cos(), m * z.im.sin())
}

/// Principal logarithm, written through real-analytic parts so that it stays
/// holomorphic under dual propagation.
pub fn cln<S: Real>(z: Cx<S>) -> Cx<S> {
    let r2 = z.re * z.re + z.im * z.im;
    Complex::new(r2.ln() * S::from(0.5), z.im.atan2(z.re))
}

pub fn cdiv<S: Real>(a: Cx<S>, b: Cx<S>) -> Cx<S> {
    let d = b.re * b.re + b.im * b.im;
    Complex::new(
        (a.re * b.re + a.im * b.im) / d,
        (a.im * b.re - a.re * b.im) / d,
    )
}

pub fn cabs(z: C64) -> f64 {
    z.norm()
}

/// Complex 3x3 block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct M3<S> {
    pub a: [[Cx<S>; 3]; 3],
}

impl<S: Real> M3<S> {
    pub fn zero() -> Self {
        M3 { a: [[Complex::zero(); 3]; 3] }
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.a[i][i] = Complex::one();
        }
        m
    }

    pub fn unit(i: usize, j: usize) -> Self {
        let mut m = Self::zero();
        m.a[i][j] = Complex::one();
        m
    }

    pub fn from_real(r: [[f64; 3]; 3]) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.a[i][j] = re(r[i][j]);
            }
        }
        m
    }

    pub fn diag(d: [f64; 3]) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.a[i][i] = re(d[i]);
        }
        m
    }

    pub fn lift(m: &M3<f64>) -> Self {
        let mut o = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                o.a[i][j] = lift(m.a[i][j]);
            }
        }
        o
    }

    pub fn value(&self) -> M3<f64> {
        let mut o = M3::zero();
        for i in 0..3 {
            for j in 0..3 {
                o.a[i][j] = value(self.a[i][j]);
            }
        }
        o
    }

    pub fn scale(&self, c: Cx<S>) -> Self {
        let mut o = *self;
        for row in o.a.iter_mut() {
            for x in row.iter_mut() {
                *x = *x * c;
            }
        }
        o
    }

    pub fn scale_re(&self, c: f64) -> Self {
        self.scale(re(c))
    }

    pub fn transpose(&self) -> Self {
        let mut o = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                o.a[i][j] = self.a[j][i];
            }
        }
        o
    }

    pub fn tr(&self) -> Cx<S> {
        self.a[0][0] + self.a[1][1] + self.a[2][2]
    }

    /// Trace of the product, without forming it.
    pub fn tr_mul(&self, b: &Self) -> Cx<S> {
        let mut s = Complex::zero();
        for i in 0..3 {
            for j in 0..3 {
                s = s + self.a[i][j] * b.a[j][i];
            }
        }
        s
    }

    pub fn det(&self) -> Cx<S> {
        let a = &self.a;
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    /// Inverse by the adjugate formula (holomorphic, no conjugation).
    pub fn inv(&self) -> Self {
        let a = &self.a;
        let mut c = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
                // cofactor of (j, i) lands at (i, j)
                c.a[i][j] = a[j1][i1] * a[j2][i2] - a[j1][i2] * a[j2][i1];
            }
        }
        let d = self.det();
        let one: Cx<S> = Complex::one();
        c.scale(cdiv(one, d))
    }

    pub fn comm(&self, b: &Self) -> Self {
        *self * *b - *b * *self
    }

    /// `g x g^{-1}` with a supplied inverse.
    pub fn conj_by(&self, g: &Self, ginv: &Self) -> Self {
        *g * *self * *ginv
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for row in self.a.iter() {
            for x in row.iter() {
                m = m.max(value(*x).norm());
            }
        }
        m
    }

    fn norm1_value(&self) -> f64 {
        let mut best: f64 = 0.0;
        for j in 0..3 {
            let mut s = 0.0;
            for i in 0..3 {
                s += value(self.a[i][j]).norm();
            }
            best = best.max(s);
        }
        best
    }

    /// Matrix exponential by scaling and squaring with a Taylor kernel.
    pub fn expm(&self) -> Self {
        let (s, x) = scaled(self.norm1_value(), |f| self.scale_re(f));
        let mut term = Self::identity();
        let mut sum = Self::identity();
        for k in 1..=TAYLOR_TERMS {
            term = (term * x).scale_re(1.0 / k as f64);
            sum = sum + term;
        }
        for _ in 0..s {
            sum = sum * sum;
        }
        sum
    }
}

const TAYLOR_TERMS: usize = 18;

/// Scaling exponent bringing the norm below one half.
fn scaled<T>(norm: f64, scale: impl Fn(f64) -> T) -> (u32, T) {
    let mut s = 0u32;
    let mut n = norm;
    while n > 0.5 {
        n *= 0.5;
        s += 1;
    }
    (s, scale(0.5f64.powi(s as i32)))
}

impl<S: Real> Add for M3<S> {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        let mut o = self;
        for i in 0..3 {
            for j in 0..3 {
                o.a[i][j] = o.a[i][j] + b.a[i][j];
            }
        }
        o
    }
}

impl<S: Real> AddAssign for M3<S> {
    fn add_assign(&mut self, b: Self) {
        *self = *self + b;
    }
}

impl<S: Real> Sub for M3<S> {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        let mut o = self;
        for i in 0..3 {
            for j in 0..3 {
                o.a[i][j] = o.a[i][j] - b.a[i][j];
            }
        }
        o
    }
}

impl<S: Real> Neg for M3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut o = self;
        for i in 0..3 {
            for j in 0..3 {
                o.a[i][j] = -o.a[i][j];
            }
        }
        o
    }
}

impl<S: Real> Mul for M3<S> {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let mut o = Self::zero();
        for i in 0..3 {
            for k in 0..3 {
                let x = self.a[i][k];
                for j in 0..3 {
                    o.a[i][j] = o.a[i][j] + x * b.a[k][j];
                }
            }
        }
        o
    }
}

/// Seed a block of values with a block of tangents.
pub fn seed_m3<S: Real>(v: &M3<S>, d: &M3<S>) -> M3<Dual<S>> {
    let mut o = M3::zero();
    for i in 0..3 {
        for j in 0..3 {
            o.a[i][j] = seed(v.a[i][j], d.a[i][j]);
        }
    }
    o
}

pub fn up_m3<S: Real>(v: &M3<S>) -> M3<Dual<S>> {
    let mut o = M3::zero();
    for i in 0..3 {
        for j in 0..3 {
            o.a[i][j] = up(v.a[i][j]);
        }
    }
    o
}

pub fn primal_m3<S: Real>(v: &M3<Dual<S>>) -> M3<S> {
    let mut o = M3::zero();
    for i in 0..3 {
        for j in 0..3 {
            o.a[i][j] = primal(v.a[i][j]);
        }
    }
    o
}

pub fn tangent_m3<S: Real>(v: &M3<Dual<S>>) -> M3<S> {
    let mut o = M3::zero();
    for i in 0..3 {
        for j in 0..3 {
            o.a[i][j] = tangent(v.a[i][j]);
        }
    }
    o
}

// ---------------------------------------------------------------------------
// Semidirect elements and algebra elements (blockwise over a grid).

/// Element `(chi, g)` of the semidirect product, one block per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Elem<S> {
    pub chi: Vec<M3<S>>,
    pub g: Vec<M3<S>>,
}

/// Algebra element `phi ⊕ alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct Alg<S> {
    pub phi: Vec<M3<S>>,
    pub alpha: Vec<M3<S>>,
}

impl<S: Real> Elem<S> {
    pub fn identity(blocks: usize) -> Self {
        Elem { chi: vec![M3::zero(); blocks], g: vec![M3::identity(); blocks] }
    }

    pub fn blocks(&self) -> usize {
        self.g.len()
    }

    pub fn lift(k: &Elem<f64>) -> Self {
        Elem {
            chi: k.chi.iter().map(M3::lift).collect(),
            g: k.g.iter().map(M3::lift).collect(),
        }
    }

    pub fn value(&self) -> Elem<f64> {
        Elem {
            chi: self.chi.iter().map(|m| m.value()).collect(),
            g: self.g.iter().map(|m| m.value()).collect(),
        }
    }

    /// `(chi, g)(chi', g') = (chi + g chi' g^{-1}, g g')`.
    pub fn mul(&self, o: &Self) -> Self {
        let n = self.blocks();
        let mut chi = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for j in 0..n {
            let gi = self.g[j].inv();
            chi.push(self.chi[j] + o.chi[j].conj_by(&self.g[j], &gi));
            g.push(self.g[j] * o.g[j]);
        }
        Elem { chi, g }
    }

    /// `(chi, g)^{-1} = (-g^{-1} chi g, g^{-1})`.
    pub fn inv(&self) -> Self {
        let n = self.blocks();
        let mut chi = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for j in 0..n {
            let gi = self.g[j].inv();
            chi.push(-(gi * self.chi[j] * self.g[j]));
            g.push(gi);
        }
        Elem { chi, g }
    }

    pub fn dist(&self, o: &Self) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..self.blocks() {
            m = m.max((self.chi[j] - o.chi[j]).max_abs());
            m = m.max((self.g[j] - o.g[j]).max_abs());
        }
        m
    }

    /// Adjoint action on the algebra: `Ad_(chi,g)(phi ⊕ alpha)`.
    pub fn ad(&self, x: &Alg<S>) -> Alg<S> {
        let n = self.blocks();
        let mut phi = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        for j in 0..n {
            let gi = self.g[j].inv();
            let a = x.alpha[j].conj_by(&self.g[j], &gi);
            let p = x.phi[j].conj_by(&self.g[j], &gi);
            phi.push(p + self.chi[j].comm(&a));
            alpha.push(a);
        }
        Alg { phi, alpha }
    }

    /// Right Maurer-Cartan reading of a first-order curve: `(d/ds K(s)) K^{-1}`.
    pub fn right_mc(k: &Elem<Dual<S>>) -> Alg<S> {
        let n = k.blocks();
        let mut phi = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        for j in 0..n {
            let g0 = primal_m3(&k.g[j]);
            let dg = tangent_m3(&k.g[j]);
            let dchi = tangent_m3(&k.chi[j]);
            let a = dg * g0.inv();
            phi.push(dchi - a.comm(&primal_m3(&k.chi[j])));
            alpha.push(a);
        }
        Alg { phi, alpha }
    }
}

impl<S: Real> Alg<S> {
    pub fn zero(blocks: usize) -> Self {
        Alg { phi: vec![M3::zero(); blocks], alpha: vec![M3::zero(); blocks] }
    }

    pub fn blocks(&self) -> usize {
        self.alpha.len()
    }

    pub fn lift(x: &Alg<f64>) -> Self {
        Alg {
            phi: x.phi.iter().map(M3::lift).collect(),
            alpha: x.alpha.iter().map(M3::lift).collect(),
        }
    }

    pub fn value(&self) -> Alg<f64> {
        Alg {
            phi: self.phi.iter().map(|m| m.value()).collect(),
            alpha: self.alpha.iter().map(|m| m.value()).collect(),
        }
    }

    pub fn g_part(alpha: Vec<M3<S>>) -> Self {
        let n = alpha.len();
        Alg { phi: vec![M3::zero(); n], alpha }
    }

    pub fn add(&self, o: &Self) -> Self {
        Alg {
            phi: self.phi.iter().zip(&o.phi).map(|(a, b)| *a + *b).collect(),
            alpha: self.alpha.iter().zip(&o.alpha).map(|(a, b)| *a + *b).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(re(-1.0)))
    }

    pub fn scale(&self, c: Cx<S>) -> Self {
        Alg {
            phi: self.phi.iter().map(|a| a.scale(c)).collect(),
            alpha: self.alpha.iter().map(|a| a.scale(c)).collect(),
        }
    }

    /// `[phi ⊕ alpha, psi ⊕ beta] = ([phi, beta] + [alpha, psi]) ⊕ [alpha, beta]`.
    pub fn bracket(&self, o: &Self) -> Self {
        let n = self.blocks();
        let mut phi = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        for j in 0..n {
            phi.push(self.phi[j].comm(&o.alpha[j]) + self.alpha[j].comm(&o.phi[j]));
            alpha.push(self.alpha[j].comm(&o.alpha[j]));
        }
        Alg { phi, alpha }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..self.blocks() {
            m = m.max(self.phi[j].max_abs()).max(self.alpha[j].max_abs());
        }
        m
    }
}

/// `exp(phi ⊕ alpha)` through the block-triangular embedding
/// `(chi, g) -> [[g, chi g], [0, g]]`.
pub fn exp_alg(x: &Alg<f64>) -> Elem<f64> {
    let n = x.blocks();
    let mut chi = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for j in 0..n {
        let (e, phi_int) = exp_pair(&x.alpha[j], &x.phi[j]);
        chi.push(phi_int * e.inv());
        g.push(e);
    }
    Elem { chi, g }
}

/// Exponential of `[[a, b], [0, a]]`, returned as its diagonal and corner blocks.
fn exp_pair(a: &M3<f64>, b: &M3<f64>) -> (M3<f64>, M3<f64>) {
    let norm = a.norm1_value() + b.norm1_value();
    let (s, f) = scaled(norm, |f| f);
    let (xa, xb) = (a.scale_re(f), b.scale_re(f));
    let (mut ta, mut tb) = (M3::identity(), M3::zero());
    let (mut sa, mut sb) = (M3::identity(), M3::zero());
    for k in 1..=TAYLOR_TERMS {
        let c = 1.0 / k as f64;
        let na = (ta * xa).scale_re(c);
        let nb = (ta * xb + tb * xa).scale_re(c);
        ta = na;
        tb = nb;
        sa = sa + ta;
        sb = sb + tb;
    }
    for _ in 0..s {
        let na = sa * sa;
        let nb = sa * sb + sb * sa;
        sa = na;
        sb = nb;
    }
    (sa, sb)
}

// ---------------------------------------------------------------------------
// Group curves and derivatives.

/// `K exp(eps X)` to first order, with `eps` the fresh infinitesimal.
pub fn right_curve<S: Real>(k: &Elem<S>, x: &Alg<f64>) -> Elem<Dual<S>> {
    let n = k.blocks();
    let mut chi = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for j in 0..n {
        let phi = M3::<S>::lift(&x.phi[j]);
        let alpha = M3::<S>::lift(&x.alpha[j]);
        let gj = k.g[j];
        let dchi = if x.phi[j].max_abs() == 0.0 {
            M3::zero()
        } else {
            phi.conj_by(&gj, &gj.inv())
        };
        chi.push(seed_m3(&k.chi[j], &dchi));
        g.push(seed_m3(&gj, &(gj * alpha)));
    }
    Elem { chi, g }
}

/// `exp(eps X) K` to first order.
pub fn left_curve<S: Real>(k: &Elem<S>, x: &Alg<f64>) -> Elem<Dual<S>> {
    let n = k.blocks();
    let mut chi = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for j in 0..n {
        let phi = M3::<S>::lift(&x.phi[j]);
        let alpha = M3::<S>::lift(&x.alpha[j]);
        chi.push(seed_m3(&k.chi[j], &(phi + alpha.comm(&k.chi[j]))));
        g.push(seed_m3(&k.g[j], &(alpha * k.g[j])));
    }
    Elem { chi, g }
}

/// `K + eps V` for a tangent already expressed in components.
pub fn seeded_elem<S: Real>(k: &Elem<S>, dchi: &[M3<S>], dg: &[M3<S>]) -> Elem<Dual<S>> {
    Elem {
        chi: k.chi.iter().zip(dchi).map(|(a, b)| seed_m3(a, b)).collect(),
        g: k.g.iter().zip(dg).map(|(a, b)| seed_m3(a, b)).collect(),
    }
}

pub fn up_elem<S: Real>(k: &Elem<S>) -> Elem<Dual<S>> {
    Elem {
        chi: k.chi.iter().map(up_m3).collect(),
        g: k.g.iter().map(up_m3).collect(),
    }
}

/// Scalar function on group elements, generic over the scalar type so that
/// nested dual numbers give higher derivatives.
pub trait Observable: Sync {
    fn eval<S: Real>(&self, k: &Elem<S>) -> Cx<S>;
}

impl<T: Observable> Observable for &T {
    fn eval<S: Real>(&self, k: &Elem<S>) -> Cx<S> {
        (**self).eval(k)
    }
}

/// `(d/ds) f(K exp(sX))` at `s = 0`.
pub fn right_derivative<S: Real, F: Observable>(f: &F, x: &Alg<f64>, k: &Elem<S>) -> Cx<S> {
    tangent(f.eval(&right_curve(k, x)))
}

/// `(d/ds) f(exp(sX) K)` at `s = 0`.
pub fn left_derivative<S: Real, F: Observable>(f: &F, x: &Alg<f64>, k: &Elem<S>) -> Cx<S> {
    tangent(f.eval(&left_curve(k, x)))
}

/// Checked `f64` variant: reports non-finite derivatives.
pub fn right_derivative_checked<F: Observable>(
    f: &F,
    x: &Alg<f64>,
    k: &Elem<f64>,
) -> Result<C64, Error> {
    let d = right_derivative(f, x, k);
    if d.re.is_finite() && d.im.is_finite() {
        Ok(d)
    } else {
        Err(Error::NotDifferentiable)
    }
}

pub fn left_derivative_checked<F: Observable>(
    f: &F,
    x: &Alg<f64>,
    k: &Elem<f64>,
) -> Result<C64, Error> {
    let d = left_derivative(f, x, k);
    if d.re.is_finite() && d.im.is_finite() {
        Ok(d)
    } else {
        Err(Error::NotDifferentiable)
    }
}

// ---------------------------------------------------------------------------
// Expression-tree observables.

#[derive(Clone, Debug)]
pub enum MatExpr {
    Chi(usize),
    G(usize),
    GInv(usize),
    Const(M3<f64>),
    Mul(Box<MatExpr>, Box<MatExpr>),
    Add(Box<MatExpr>, Box<MatExpr>),
    Scale(C64, Box<MatExpr>),
    Transpose(Box<MatExpr>),
}

#[derive(Clone, Debug)]
pub enum Expr {
    Const(C64),
    Trace(MatExpr),
    Entry(MatExpr, usize, usize),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
}

impl MatExpr {
    pub fn eval<S: Real>(&self, k: &Elem<S>) -> M3<S> {
        match self {
            MatExpr::Chi(b) => k.chi[*b],
            MatExpr::G(b) => k.g[*b],
            MatExpr::GInv(b) => k.g[*b].inv(),
            MatExpr::Const(m) => M3::lift(m),
            MatExpr::Mul(a, b) => a.eval(k) * b.eval(k),
            MatExpr::Add(a, b) => a.eval(k) + b.eval(k),
            MatExpr::Scale(c, a) => a.eval(k).scale(lift(*c)),
            MatExpr::Transpose(a) => a.eval(k).transpose(),
        }
    }

    pub fn mul(a: MatExpr, b: MatExpr) -> MatExpr {
        MatExpr::Mul(Box::new(a), Box::new(b))
    }
}

impl Expr {
    pub fn trace(m: MatExpr) -> Expr {
        Expr::Trace(m)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }
}

impl Observable for Expr {
    fn eval<S: Real>(&self, k: &Elem<S>) -> Cx<S> {
        match self {
            Expr::Const(c) => lift(*c),
            Expr::Trace(m) => m.eval(k).tr(),
            Expr::Entry(m, i, j) => m.eval(k).a[*i][*j],
            Expr::Add(a, b) => a.eval(k) + b.eval(k),
            Expr::Mul(a, b) => a.eval(k) * b.eval(k),
            Expr::Neg(a) => -a.eval(k),
            Expr::Exp(a) => cexp(a.eval(k)),
            Expr::Ln(a) => cln(a.eval(k)),
        }
    }
}

/// Random polynomial-exponential observable on a single-block element.
pub fn random_expr<R: Rng>(rng: &mut R, depth: usize) -> Expr {
    let leaf = |rng: &mut R| -> Expr {
        let a = random_real_block(rng, 1.0);
        let word = match rng.random_range(0..4) {
            0 => MatExpr::mul(MatExpr::Const(a), MatExpr::Chi(0)),
            1 => MatExpr::mul(MatExpr::Const(a), MatExpr::G(0)),
            2 => MatExpr::mul(
                MatExpr::mul(MatExpr::Const(a), MatExpr::G(0)),
                MatExpr::mul(MatExpr::Chi(0), MatExpr::GInv(0)),
            ),
            _ => MatExpr::mul(
                MatExpr::mul(MatExpr::Const(a), MatExpr::Chi(0)),
                MatExpr::mul(MatExpr::Const(random_real_block(rng, 1.0)), MatExpr::G(0)),
            ),
        };
        Expr::trace(word)
    };
    if depth == 0 {
        return leaf(rng);
    }
    match rng.random_range(0..4) {
        0 => Expr::add(random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
        1 => Expr::mul(random_expr(rng, depth - 1), random_expr(rng, depth - 1)),
        2 => Expr::Exp(Box::new(Expr::mul(
            Expr::Const(C64::new(0.3, 0.0)),
            random_expr(rng, depth - 1),
        ))),
        _ => leaf(rng),
    }
}

// ---------------------------------------------------------------------------
// Random sampling.

pub fn random_real_block<R: Rng>(rng: &mut R, amp: f64) -> M3<f64> {
    let mut r = [[0.0; 3]; 3];
    for row in r.iter_mut() {
        for x in row.iter_mut() {
            *x = amp * rng.random_range(-1.0..1.0);
        }
    }
    M3::from_real(r)
}

/// Traceless real block (element of sl(3,R)).
pub fn random_sl3<R: Rng>(rng: &mut R, amp: f64) -> M3<f64> {
    let m = random_real_block(rng, amp);
    let t = m.tr().scale(1.0 / 3.0);
    m - M3::identity().scale(t)
}

/// Traceless anti-Hermitian block (element of su(3)).
pub fn random_su3<R: Rng>(rng: &mut R, amp: f64) -> M3<f64> {
    let mut m = M3::<f64>::zero();
    for i in 0..3 {
        for j in 0..3 {
            m.a[i][j] = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * amp;
        }
    }
    let mut h = M3::zero();
    for i in 0..3 {
        for j in 0..3 {
            h.a[i][j] = (m.a[i][j] - m.a[j][i].conj()) * 0.5;
        }
    }
    let t = h.tr() / 3.0;
    h - M3::identity().scale(t)
}

pub fn conj_transpose(m: &M3<f64>) -> M3<f64> {
    let mut o = M3::zero();
    for i in 0..3 {
        for j in 0..3 {
            o.a[i][j] = m.a[j][i].conj();
        }
    }
    o
}

// ---------------------------------------------------------------------------
// Abstract matrix Lie algebras.

/// Real matrix Lie algebra with an invariant form and structure constants.
#[derive(Clone, Debug)]
pub struct MatLieAlgebra {
    pub dim: usize,
    pub basis: Vec<DMatrix<f64>>,
    pub form: DMatrix<f64>,
    /// `structure[(k * dim + i) * dim + j] = c^k_{ij}`.
    pub structure: Vec<f64>,
}

impl MatLieAlgebra {
    /// Build from a basis and a bilinear form; structure constants by least
    /// squares.
    pub fn new(
        basis: Vec<DMatrix<f64>>,
        form: impl Fn(&DMatrix<f64>, &DMatrix<f64>) -> f64,
    ) -> Result<Self, Error> {
        let dim = basis.len();
        let mut b = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                b[(i, j)] = form(&basis[i], &basis[j]);
            }
        }
        let structure = structure_constants(&basis)?;
        Ok(MatLieAlgebra { dim, basis, form: b, structure })
    }

    pub fn c(&self, k: usize, i: usize, j: usize) -> f64 {
        self.structure[(k * self.dim + i) * self.dim + j]
    }

    /// Bracket of coordinate vectors.
    pub fn bracket(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, Error> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len().max(y.len()) });
        }
        let n = self.dim;
        let mut out = vec![0.0; n];
        for k in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                if x[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    s += self.c(k, i, j) * x[i] * y[j];
                }
            }
            out[k] = s;
        }
        Ok(out)
    }

    pub fn jacobi_residual(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for m in 0..n {
                        let mut s = 0.0;
                        for l in 0..n {
                            s += self.c(l, i, j) * self.c(m, l, k)
                                + self.c(l, j, k) * self.c(m, l, i)
                                + self.c(l, k, i) * self.c(m, l, j);
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// `max |([X_i,X_j],X_k) + (X_j,[X_i,X_k])|`.
    pub fn ad_invariance_residual(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += self.c(l, i, j) * self.form[(l, k)] + self.c(l, i, k) * self.form[(j, l)];
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
        worst
    }

    pub fn antisymmetry_residual(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((self.c(k, i, j) + self.c(k, j, i)).abs());
                }
            }
        }
        worst
    }

    pub fn form_symmetry_residual(&self) -> f64 {
        (&self.form - self.form.transpose()).amax()
    }
}

/// Least-squares structure constants of a matrix basis.
pub fn structure_constants(basis: &[DMatrix<f64>]) -> Result<Vec<f64>, Error> {
    let dim = basis.len();
    if dim == 0 {
        return Ok(Vec::new());
    }
    let (r, c) = basis[0].shape();
    let len = r * c;
    let mut a = DMatrix::zeros(len, dim);
    for (k, x) in basis.iter().enumerate() {
        if x.shape() != (r, c) {
            return Err(Error::DimensionMismatch { expected: len, got: x.len() });
        }
        for (p, v) in x.iter().enumerate() {
            a[(p, k)] = *v;
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax.max(1.0) {
        return Err(Error::Degenerate("basis is linearly dependent".into()));
    }
    let mut out = vec![0.0; dim * dim * dim];
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let br = &basis[i] * &basis[j] - &basis[j] * &basis[i];
            let rhs = DVector::from_iterator(len, br.iter().copied());
            let sol = svd.solve(&rhs, 1e-14).map_err(|e| Error::Degenerate(e.to_string()))?;
            let resid = (&a * &sol - &rhs).amax();
            worst = worst.max(resid);
            for k in 0..dim {
                out[(k * dim + i) * dim + j] = sol[k];
            }
        }
    }
    if worst > 1e-10 {
        return Err(Error::NotClosed(worst));
    }
    Ok(out)
}

/// Standard real examples used by tests and checks.
pub mod examples {
    use super::*;

    fn unit(n: usize, i: usize, j: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        m[(i, j)] = 1.0;
        m
    }

    pub fn trace_form(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a * b).trace()
    }

    pub fn abelian(dim: usize) -> MatLieAlgebra {
        let basis = (0..dim).map(|i| unit(dim, i, i)).collect();
        MatLieAlgebra::new(basis, trace_form).expect("diagonal basis")
    }

    /// sl(2,R) in the basis `{H' = diag(1,-1), E, F}`.
    pub fn sl2() -> MatLieAlgebra {
        let mut h = DMatrix::zeros(2, 2);
        h[(0, 0)] = 1.0;
        h[(1, 1)] = -1.0;
        MatLieAlgebra::new(vec![h, unit(2, 0, 1), unit(2, 1, 0)], trace_form).expect("sl2")
    }

    /// sl(3,R) in the basis of six root vectors and two diagonal elements.
    pub fn sl3() -> MatLieAlgebra {
        let mut basis = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    basis.push(unit(3, i, j));
                }
            }
        }
        basis.push(DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0, -0.5])));
        basis.push(DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -1.0, 0.5])));
        MatLieAlgebra::new(basis, trace_form).expect("sl3")
    }
}

/// Convert a block to a dense real matrix (real parts).
pub fn block_to_dmatrix(m: &M3<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| m.a[i][j].re)
}

/// Embed a single-block algebra element as the 6x6 matrix `[[alpha, phi], [0, alpha]]`.
pub fn alg_to_dmatrix(x: &Alg<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(6, 6);
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = x.alpha[0].a[i][j].re;
            m[(i + 3, j + 3)] = x.alpha[0].a[i][j].re;
            m[(i, j + 3)] = x.phi[0].a[i][j].re;
        }
    }
    m
}
