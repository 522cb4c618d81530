//! Coordinate algebras of cosymmetry groups: counit, antipode and coproduct
//! evaluated through the group law, ε-derivations, and an exact
//! polynomial-exponential model of `Fun(C)` for the `sl3` quotient group.

use std::collections::BTreeMap;

use crate::matgroup::{
    left_curve, right_curve, tangent, Alg, Cx, Dual2, Elem, Observable, Real, C64,
};
use crate::sl3::{CElem, CGroup};

/// `b ↦ f(b0 · b)`.
pub struct LeftTranslate<'a, F> {
    pub f: &'a F,
    pub b0: Elem<f64>,
}

impl<F: Observable> Observable for LeftTranslate<'_, F> {
    fn eval<S: Real>(&self, k: &Elem<S>) -> Cx<S> {
        self.f.eval(&Elem::lift(&self.b0).mul(k))
    }
}

/// `b ↦ f(b · b0)`.
pub struct RightTranslate<'a, F> {
    pub f: &'a F,
    pub b0: Elem<f64>,
}

impl<F: Observable> Observable for RightTranslate<'_, F> {
    fn eval<S: Real>(&self, k: &Elem<S>) -> Cx<S> {
        self.f.eval(&k.mul(&Elem::lift(&self.b0)))
    }
}

/// The function `b ↦ y(b b0^{-1})`, so that `y'(b) S(y'')(b0)` is evaluated
/// without a symbolic coproduct.
pub fn sweedler_translate<'a, F: Observable>(y: &'a F, b0: &Elem<f64>) -> RightTranslate<'a, F> {
    RightTranslate { f: y, b0: b0.inv() }
}

/// `ε(x) = x(e)`.
pub fn counit<F: Observable>(x: &F, blocks: usize) -> C64 {
    x.eval(&Elem::<f64>::identity(blocks))
}

/// `S(x)(b) = x(b^{-1})`.
pub fn antipode<F: Observable>(x: &F, b: &Elem<f64>) -> C64 {
    x.eval(&b.inv())
}

/// `Δx(b1, b2) = x(b1 b2)`.
pub fn coproduct<F: Observable>(x: &F, b1: &Elem<f64>, b2: &Elem<f64>) -> C64 {
    x.eval(&b1.mul(b2))
}

/// `δ_t(x) = (d/ds) x(exp(s t))` at `s = 0`.
pub fn epsilon_derivation<F: Observable>(t: &Alg<f64>, x: &F) -> C64 {
    let e = Elem::<f64>::identity(t.blocks());
    tangent(x.eval(&left_curve(&e, t)))
}

/// `δ_s(x') δ_t(x'') = ∂_a ∂_b x(exp(a s) exp(b t))` at the origin.
pub fn sweedler_pair<F: Observable>(s: &Alg<f64>, t: &Alg<f64>, x: &F) -> C64 {
    let e = Elem::<f64>::identity(t.blocks());
    let kb = right_curve(&e, t);
    let kab: Elem<Dual2> = left_curve(&kb, s);
    let v = x.eval(&kab);
    tangent(tangent(v))
}

/// `|δ_{[s,t]}(x) − (δ_s(x')δ_t(x'') − δ_t(x')δ_s(x''))|`.
pub fn derivation_bracket_residual<F: Observable>(s: &Alg<f64>, t: &Alg<f64>, x: &F) -> f64 {
    let lhs = epsilon_derivation(&s.bracket(t), x);
    let rhs = sweedler_pair(s, t, x) - sweedler_pair(t, s, x);
    (lhs - rhs).norm()
}

/// Leibniz residual `|δ(xy) − ε(x)δ(y) − ε(y)δ(x)|`.
pub fn leibniz_residual<F: Observable, G: Observable>(t: &Alg<f64>, x: &F, y: &G) -> f64 {
    let b = t.blocks();
    let xy = crate::double_core::ProdObs(x, y);
    let lhs = epsilon_derivation(t, &xy);
    let rhs = counit(x, b) * epsilon_derivation(t, y) + counit(y, b) * epsilon_derivation(t, x);
    (lhs - rhs).norm()
}

/// Max residuals of the group-law Hopf axioms on a catalog.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HopfResiduals {
    pub coassociativity: f64,
    pub counit: f64,
    pub antipode: f64,
}

impl HopfResiduals {
    pub fn max(&self) -> f64 {
        self.coassociativity.max(self.counit).max(self.antipode)
    }
}

/// A group with a catalog of real coordinate functions.
pub trait HopfData {
    type E: Clone;
    fn mul(&self, a: &Self::E, b: &Self::E) -> Self::E;
    fn inv(&self, a: &Self::E) -> Self::E;
    fn identity(&self) -> Self::E;
    fn catalog_len(&self) -> usize;
    fn coordinate(&self, i: usize, b: &Self::E) -> f64;
}

/// Coassociativity, counit and antipode axioms at sampled triples.
pub fn hopf_axiom_check<H: HopfData>(h: &H, samples: &[(H::E, H::E, H::E)]) -> HopfResiduals {
    let mut r = HopfResiduals::default();
    let e = h.identity();
    for (b1, b2, b3) in samples {
        for i in 0..h.catalog_len() {
            let x = |b: &H::E| h.coordinate(i, b);
            let l = x(&h.mul(&h.mul(b1, b2), b3));
            let rr = x(&h.mul(b1, &h.mul(b2, b3)));
            r.coassociativity = r.coassociativity.max((l - rr).abs());
            let c = (x(&h.mul(b1, &e)) - x(b1)).abs().max((x(&h.mul(&e, b1)) - x(b1)).abs());
            r.counit = r.counit.max(c);
            let eps = x(&e);
            let a = (x(&h.mul(b1, &h.inv(b1))) - eps)
                .abs()
                .max((x(&h.mul(&h.inv(b1), b1)) - eps).abs());
            r.antipode = r.antipode.max(a);
        }
    }
    r
}

/// A subgroup of the semidirect double described by a coordinate catalog of
/// observables.
pub struct ElemHopf<'a, F> {
    pub blocks: usize,
    pub catalog: &'a [F],
}

impl<F: Observable> HopfData for ElemHopf<'_, F> {
    type E = Elem<f64>;
    fn mul(&self, a: &Elem<f64>, b: &Elem<f64>) -> Elem<f64> {
        a.mul(b)
    }
    fn inv(&self, a: &Elem<f64>) -> Elem<f64> {
        a.inv()
    }
    fn identity(&self) -> Elem<f64> {
        Elem::identity(self.blocks)
    }
    fn catalog_len(&self) -> usize {
        self.catalog.len()
    }
    fn coordinate(&self, i: usize, b: &Elem<f64>) -> f64 {
        self.catalog[i].eval(b).re
    }
}

impl HopfData for CGroup {
    type E = CElem;
    fn mul(&self, a: &CElem, b: &CElem) -> CElem {
        CGroup::mul(self, a, b)
    }
    fn inv(&self, a: &CElem) -> CElem {
        CGroup::inv(self, a)
    }
    fn identity(&self) -> CElem {
        CGroup::identity(self)
    }
    fn catalog_len(&self) -> usize {
        3
    }
    fn coordinate(&self, i: usize, b: &CElem) -> f64 {
        b[i]
    }
}

// ---------------------------------------------------------------------------
// Exact model of Fun(C): finite sums of c · ξ1^a ξ2^b (ξ3)^m e^{r ξ3}.

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct CKey {
    p: [u32; 3],
    /// exponent rate in units of ε/2
    r: i32,
}

/// Polynomial-exponential function on `C`; rates are integer multiples of `ε/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct CFun {
    pub eps: f64,
    terms: BTreeMap<CKey, f64>,
}

impl CFun {
    pub fn zero(eps: f64) -> Self {
        CFun { eps, terms: BTreeMap::new() }
    }

    pub fn constant(eps: f64, c: f64) -> Self {
        Self::mono(eps, c, [0, 0, 0], 0)
    }

    /// `c ξ1^p0 ξ2^p1 ξ3^p2 e^{r ε ξ3 / 2}`.
    pub fn mono(eps: f64, c: f64, p: [u32; 3], r: i32) -> Self {
        let mut f = Self::zero(eps);
        if c != 0.0 {
            f.terms.insert(CKey { p, r }, c);
        }
        f
    }

    pub fn xi(eps: f64, j: usize) -> Self {
        let mut p = [0; 3];
        p[j] = 1;
        Self::mono(eps, 1.0, p, 0)
    }

    /// `e^{r ε ξ3 / 2}`.
    pub fn exp3(eps: f64, r: i32) -> Self {
        Self::mono(eps, 1.0, [0, 0, 0], r)
    }

    pub fn add(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (k, v) in &o.terms {
            *out.terms.entry(*k).or_insert(0.0) += v;
        }
        out.terms.retain(|_, v| *v != 0.0);
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out.terms.retain(|_, v| *v != 0.0);
        out
    }

    pub fn mul(&self, o: &Self) -> Self {
        let mut out = Self::zero(self.eps);
        for (a, x) in &self.terms {
            for (b, y) in &o.terms {
                let k = CKey { p: [a.p[0] + b.p[0], a.p[1] + b.p[1], a.p[2] + b.p[2]], r: a.r + b.r };
                *out.terms.entry(k).or_insert(0.0) += x * y;
            }
        }
        out.terms.retain(|_, v| *v != 0.0);
        out
    }

    pub fn eval(&self, c: &CElem) -> f64 {
        self.terms
            .iter()
            .map(|(k, v)| {
                v * c[0].powi(k.p[0] as i32)
                    * c[1].powi(k.p[1] as i32)
                    * c[2].powi(k.p[2] as i32)
                    * (0.5 * self.eps * k.r as f64 * c[2]).exp()
            })
            .sum()
    }

    /// Partial derivative in `ξ_j`.
    pub fn partial(&self, j: usize) -> Self {
        let mut out = Self::zero(self.eps);
        for (k, v) in &self.terms {
            if k.p[j] > 0 {
                let mut p = k.p;
                p[j] -= 1;
                *out.terms.entry(CKey { p, r: k.r }).or_insert(0.0) += v * k.p[j] as f64;
            }
            if j == 2 && k.r != 0 {
                *out.terms.entry(*k).or_insert(0.0) += v * 0.5 * self.eps * k.r as f64;
            }
        }
        out.terms.retain(|_, v| *v != 0.0);
        out
    }

    /// `{f, g}_C = p(ξ3)(∂_1 f ∂_2 g − ∂_2 f ∂_1 g)`, `p = (1 − e^{−εξ3})/ε`.
    pub fn bracket(&self, o: &Self) -> Self {
        let e = self.eps;
        let p = Self::constant(e, 1.0 / e).add(&Self::exp3(e, -2).scale(-1.0 / e));
        let j = self.partial(0).mul(&o.partial(1)).add(&self.partial(1).mul(&o.partial(0)).scale(-1.0));
        p.mul(&j)
    }

    /// `S(f)` by substituting the antipode of the generators.
    pub fn antipode(&self) -> Self {
        let e = self.eps;
        // S(ξ_j) = −e^{εξ3/2} ξ_j, S(ξ3) = −ξ3, S(e^{rεξ3/2}) = e^{−rεξ3/2}
        let mut out = Self::zero(e);
        for (k, v) in &self.terms {
            let mut t = Self::mono(e, *v, [0, 0, 0], -k.r);
            for _ in 0..k.p[0] {
                t = t.mul(&Self::mono(e, -1.0, [1, 0, 0], 1));
            }
            for _ in 0..k.p[1] {
                t = t.mul(&Self::mono(e, -1.0, [0, 1, 0], 1));
            }
            for _ in 0..k.p[2] {
                t = t.mul(&Self::mono(e, -1.0, [0, 0, 1], 0));
            }
            out = out.add(&t);
        }
        out
    }
}

/// An explicit coproduct `Δx = Σ_a x'_a ⊗ x''_a`.
#[derive(Clone, Debug)]
pub struct Coproduct {
    pub terms: Vec<(CFun, CFun)>,
}

impl Coproduct {
    /// `Δξ3 = ξ3⊗1 + 1⊗ξ3`, `Δξ_j = ξ_j⊗1 + e^{−εξ3/2}⊗ξ_j`.
    pub fn generator(eps: f64, j: usize) -> Self {
        let one = CFun::constant(eps, 1.0);
        let x = CFun::xi(eps, j);
        let left = if j == 2 { one.clone() } else { CFun::exp3(eps, -1) };
        Coproduct { terms: vec![(x.clone(), one), (left, x)] }
    }

    pub fn eval(&self, a: &CElem, b: &CElem) -> f64 {
        self.terms.iter().map(|(x, y)| x.eval(a) * y.eval(b)).sum()
    }
}

/// Max residuals of the explicit `Fun(C)` data against the group law.
#[derive(Clone, Copy, Debug, Default)]
pub struct FunCResiduals {
    pub coproduct: f64,
    pub antipode: f64,
    pub counit: f64,
    /// `Δ{x,y} = {x',y'} ⊗ x''y'' + x'y' ⊗ {x'',y''}`
    pub poisson_lie: f64,
    /// `S({x,y}) = −{S(x),S(y)}`
    pub antipode_bracket: f64,
    /// `ε({x,y}) = 0`
    pub counit_bracket: f64,
    /// explicit Sweedler form of `y(b b0^{-1})` against the pointwise form
    pub sweedler: f64,
}

impl FunCResiduals {
    pub fn max(&self) -> f64 {
        [
            self.coproduct,
            self.antipode,
            self.counit,
            self.poisson_lie,
            self.antipode_bracket,
            self.counit_bracket,
            self.sweedler,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Checks the stated coproduct, antipode and counit of `Fun(C)` against the
/// group law, and the Poisson-Lie compatibility of `{ξ^1, ξ^2}_C`.
pub fn fun_c_check(c: &CGroup, pairs: &[(CElem, CElem)]) -> FunCResiduals {
    let e = c.eps;
    let gens: Vec<CFun> = (0..3).map(|j| CFun::xi(e, j)).collect();
    let cops: Vec<Coproduct> = (0..3).map(|j| Coproduct::generator(e, j)).collect();
    let mut r = FunCResiduals::default();
    let id = c.identity();
    for j in 0..3 {
        r.counit = r.counit.max(gens[j].eval(&id).abs());
        for a in 0..3 {
            let br = gens[j].bracket(&gens[a]);
            r.counit_bracket = r.counit_bracket.max(br.eval(&id).abs());
        }
    }
    for (b1, b2) in pairs {
        let b12 = c.mul(b1, b2);
        for j in 0..3 {
            r.coproduct = r.coproduct.max((cops[j].eval(b1, b2) - b12[j]).abs());
            let s = gens[j].antipode().eval(b1);
            r.antipode = r.antipode.max((s - c.inv(b1)[j]).abs());
            // Σ y'(b) S(y'')(b0) = y(b b0^{-1})
            let sw: f64 = cops[j].terms.iter().map(|(x, y)| x.eval(b1) * y.antipode().eval(b2)).sum();
            r.sweedler = r.sweedler.max((sw - c.mul(b1, &c.inv(b2))[j]).abs());
        }
        for i in 0..3 {
            for j in 0..3 {
                let lhs = gens[i].bracket(&gens[j]).eval(&b12);
                let mut rhs = 0.0;
                for (x1, x2) in &cops[i].terms {
                    for (y1, y2) in &cops[j].terms {
                        rhs += x1.bracket(y1).eval(b1) * x2.eval(b2) * y2.eval(b2)
                            + x1.eval(b1) * y1.eval(b1) * x2.bracket(y2).eval(b2);
                    }
                }
                r.poisson_lie = r.poisson_lie.max((lhs - rhs).abs());
                let sb = gens[i].bracket(&gens[j]).antipode().eval(b1);
                let bs = gens[i].antipode().bracket(&gens[j].antipode()).eval(b1);
                r.antipode_bracket = r.antipode_bracket.max((sb + bs).abs());
            }
        }
    }
    r
}

/// `{ξ^1, ξ^2}_C` at a point, from the closed form.
pub fn c_bracket_12(c: &CGroup, x: &CElem) -> f64 {
    (1.0 - (-c.eps * x[2]).exp()) / c.eps
}
