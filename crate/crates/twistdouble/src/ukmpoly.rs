//! The u-deformed Kac-Moody Poisson algebra as a biderivation on sparse
//! polynomials in the mode generators `J^{λ,n}_{L,R}`, and the reduction
//! apparatus: gauge condition, constraint sets with exact surface samplers,
//! first-class checks, the chiral parametrization of the loop double and the
//! reduced form `ω̃_u`.
//!
//! Exponentials `exp(−⟨λ, U(H^ν)⟩ J^{ν,0})` for `λ` in the root lattice are
//! adjoined as formal symbols, keyed exactly by the integer coordinates of
//! `λ` over the simple roots.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;

use crate::matgroup::{random_su3, seed_m3, tangent_m3, Elem, Real, C64, M3};
use crate::uwzw::{cartan, Chirality, Generator, Label, LoopDouble, LoopGroupElement, Root, WZWConfig};
use crate::Error;

/// Coordinates over `α₁ = e_0 − e_1`, `α₂ = e_1 − e_2`.
pub type Lattice = [i32; 2];

pub fn root_lattice(r: &Root) -> Lattice {
    let (lo, hi, s) = if r.i < r.j { (r.i, r.j, 1) } else { (r.j, r.i, -1) };
    let mut v = [0, 0];
    for c in v.iter_mut().take(hi).skip(lo) {
        *c = s;
    }
    v
}

/// `⟨λ, U(H^ν)⟩`.
fn lattice_u(cfg: &WZWConfig, l: &Lattice, nu: usize) -> f64 {
    l[0] as f64 * cfg.alpha_u(&Root::new(0, 1), nu) + l[1] as f64 * cfg.alpha_u(&Root::new(1, 2), nu)
}

fn side_index(c: Chirality) -> usize {
    match c {
        Chirality::L => 0,
        Chirality::R => 1,
    }
}

fn side_of(i: usize) -> Chirality {
    if i == 0 {
        Chirality::L
    } else {
        Chirality::R
    }
}

// ---------------------------------------------------------------------------
// Sparse polynomials.

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    /// `exp(−⟨λ_s, U(H^ν)⟩ J_s^{ν,0})` for the L and R sides
    pub exps: [Lattice; 2],
    /// sorted, with positive powers
    pub gens: Vec<(Generator, u32)>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial { exps: [[0, 0]; 2], gens: Vec::new() }
    }

    fn mul(&self, o: &Monomial) -> Monomial {
        let mut exps = self.exps;
        for s in 0..2 {
            for c in 0..2 {
                exps[s][c] += o.exps[s][c];
            }
        }
        let mut m: BTreeMap<Generator, u32> = self.gens.iter().cloned().collect();
        for (g, p) in &o.gens {
            *m.entry(*g).or_insert(0) += p;
        }
        Monomial { exps, gens: m.into_iter().collect() }
    }

    pub fn degree(&self) -> u32 {
        self.gens.iter().map(|(_, p)| p).sum()
    }
}

/// A polynomial in the generators and exponential symbols, kept canonical:
/// merged terms, coefficients below `1e-14` pruned.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparsePoly {
    terms: BTreeMap<Monomial, C64>,
}

const PRUNE: f64 = 1e-14;

/// Generator values at a point; absent generators are zero.
pub type Assignment = BTreeMap<Generator, C64>;

impl SparsePoly {
    pub fn zero() -> Self {
        SparsePoly::default()
    }

    pub fn constant(c: C64) -> Self {
        let mut p = SparsePoly::zero();
        p.push(Monomial::one(), c);
        p
    }

    pub fn gen(g: Generator) -> Self {
        let mut p = SparsePoly::zero();
        p.push(Monomial { exps: [[0, 0]; 2], gens: vec![(g, 1)] }, C64::new(1.0, 0.0));
        p
    }

    pub fn exp_symbol(side: Chirality, l: Lattice) -> Self {
        let mut exps = [[0, 0]; 2];
        exps[side_index(side)] = l;
        let mut p = SparsePoly::zero();
        p.push(Monomial { exps, gens: Vec::new() }, C64::new(1.0, 0.0));
        p
    }

    fn push(&mut self, m: Monomial, c: C64) {
        let e = self.terms.entry(m).or_insert(C64::zero());
        *e += c;
    }

    fn pruned(mut self) -> Self {
        self.terms.retain(|_, c| c.norm() > PRUNE);
        self
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &C64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn add(&self, o: &SparsePoly) -> SparsePoly {
        let mut p = self.clone();
        for (m, c) in &o.terms {
            p.push(m.clone(), *c);
        }
        p.pruned()
    }

    pub fn sub(&self, o: &SparsePoly) -> SparsePoly {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> SparsePoly {
        SparsePoly { terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect() }.pruned()
    }

    pub fn mul(&self, o: &SparsePoly) -> SparsePoly {
        let mut p = SparsePoly::zero();
        for (a, ca) in &self.terms {
            for (b, cb) in &o.terms {
                p.push(a.mul(b), ca * cb);
            }
        }
        p.pruned()
    }

    /// Generators the polynomial depends on, including the Cartan zero modes
    /// behind its exponential symbols.
    pub fn variables(&self) -> BTreeSet<Generator> {
        let mut v = BTreeSet::new();
        for m in self.terms.keys() {
            for (g, _) in &m.gens {
                v.insert(*g);
            }
            for s in 0..2 {
                if m.exps[s] != [0, 0] {
                    for nu in 0..2 {
                        v.insert(Generator::new(side_of(s), Label::Cartan(nu), 0));
                    }
                }
            }
        }
        v
    }

    /// `∂p/∂g`, with `∂ exp(−⟨λ,U(H^ν)⟩J^{ν,0}) / ∂J^{ν,0} = −⟨λ,U(H^ν)⟩ exp(…)`.
    pub fn derivative(&self, g: &Generator, cfg: &WZWConfig) -> SparsePoly {
        let mut p = SparsePoly::zero();
        let zero_mode = match g.label {
            Label::Cartan(nu) if g.mode == 0 => Some(nu),
            _ => None,
        };
        for (m, c) in &self.terms {
            if let Some(i) = m.gens.iter().position(|(h, _)| h == g) {
                let mut gens = m.gens.clone();
                let pw = gens[i].1;
                if pw == 1 {
                    gens.remove(i);
                } else {
                    gens[i].1 -= 1;
                }
                p.push(Monomial { exps: m.exps, gens }, c * pw as f64);
            }
            if let Some(nu) = zero_mode {
                let l = m.exps[side_index(g.side)];
                if l != [0, 0] {
                    p.push(m.clone(), c * -lattice_u(cfg, &l, nu));
                }
            }
        }
        p.pruned()
    }

    pub fn eval(&self, cfg: &WZWConfig, at: &Assignment) -> C64 {
        let val = |g: &Generator| at.get(g).copied().unwrap_or_default();
        let mut s = C64::zero();
        for (m, c) in &self.terms {
            let mut t = *c;
            for (g, p) in &m.gens {
                t *= val(g).powu(*p);
            }
            for side in 0..2 {
                let l = m.exps[side];
                if l != [0, 0] {
                    let mut e = C64::zero();
                    for nu in 0..2 {
                        e -= val(&Generator::new(side_of(side), Label::Cartan(nu), 0)) * lattice_u(cfg, &l, nu);
                    }
                    t *= e.exp();
                }
            }
            s += t;
        }
        s
    }

    /// The monomial list as readable text.
    pub fn render(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut parts = Vec::new();
        for (m, c) in &self.terms {
            let mut s = format!("({:.6}{:+.6}i)", c.re, c.im);
            for (side, l) in m.exps.iter().enumerate() {
                if *l != [0, 0] {
                    s.push_str(&format!("·exp_{}[{},{}]", if side == 0 { "L" } else { "R" }, l[0], l[1]));
                }
            }
            for (g, p) in &m.gens {
                s.push_str(&format!("·{}", g.name()));
                if *p > 1 {
                    s.push_str(&format!("^{p}"));
                }
            }
            parts.push(s);
        }
        parts.join(" + ")
    }
}

// ---------------------------------------------------------------------------
// The bracket.

/// `{a, b}` on generators: the u-deformed current algebra table; `L` and
/// `R` generators commute, and the central terms carry opposite signs.
pub fn generator_bracket(cfg: &WZWConfig, a: &Generator, b: &Generator, band: usize) -> Result<SparsePoly, Error> {
    if a.side != b.side {
        return Ok(SparsePoly::zero());
    }
    let side = a.side;
    let sign = if side == Chirality::L { 1.0 } else { -1.0 };
    let (m, n) = (a.mode, b.mode);
    let s = m + n;
    let at = |l: Label| -> Result<SparsePoly, Error> {
        if s.unsigned_abs() as usize > band {
            return Err(Error::OutOfBand(s));
        }
        Ok(SparsePoly::gen(Generator::new(side, l, s)))
    };
    let i = C64::new(0.0, 1.0);
    Ok(match (a.label, b.label) {
        (Label::Cartan(mu), Label::Cartan(nu)) => {
            if mu == nu && s == 0 {
                SparsePoly::constant(i * (sign * cfg.k * n as f64))
            } else {
                SparsePoly::zero()
            }
        }
        (Label::Cartan(mu), Label::Root(r)) => at(Label::Root(r))?.scale(C64::new(r.on_cartan(mu), 0.0)),
        (Label::Root(r), Label::Cartan(mu)) => at(Label::Root(r))?.scale(C64::new(-r.on_cartan(mu), 0.0)),
        (Label::Root(r), Label::Root(q)) if q == r.neg() => {
            let w = 2.0 / r.norm2();
            let mut p = SparsePoly::zero();
            for mu in 0..2 {
                let c = r.on_cartan(mu);
                if c != 0.0 {
                    p = p.add(&at(Label::Cartan(mu))?.scale(C64::new(w * c, 0.0)));
                }
            }
            if s == 0 {
                p = p.add(&SparsePoly::constant(i * (w * sign * cfg.k * n as f64)));
            }
            p
        }
        (Label::Root(r), Label::Root(q)) => {
            let mut p = match r.add(&q) {
                Some((c, t)) => at(Label::Root(t))?.scale(C64::new(c, 0.0)),
                None => SparsePoly::zero(),
            };
            let d: f64 = (0..2).map(|mu| cfg.alpha_u(&r, mu) * q.on_cartan(mu)).sum();
            if d != 0.0 {
                let quad = SparsePoly::gen(*a).mul(&SparsePoly::gen(*b));
                p = p.sub(&quad.scale(C64::new(d, 0.0)));
            }
            p
        }
    })
}

/// `{p, q} = Σ ∂_a p ∂_b q {a, b}`.
pub fn poisson_bracket(p: &SparsePoly, q: &SparsePoly, cfg: &WZWConfig, band: usize) -> Result<SparsePoly, Error> {
    let vq: Vec<(Generator, SparsePoly)> = q.variables().into_iter().map(|b| (b, q.derivative(&b, cfg))).collect();
    let mut out = SparsePoly::zero();
    for a in p.variables() {
        let da = p.derivative(&a, cfg);
        for (b, db) in &vq {
            if a.side != b.side {
                continue;
            }
            let ab = generator_bracket(cfg, &a, b, band)?;
            if !ab.is_zero() {
                out = out.add(&da.mul(db).mul(&ab));
            }
        }
    }
    Ok(out)
}

/// `{a,{b,c}} + {b,{c,a}} + {c,{a,b}}`.
pub fn jacobi_poly_residual(cfg: &WZWConfig, a: &SparsePoly, b: &SparsePoly, c: &SparsePoly, band: usize) -> Result<SparsePoly, Error> {
    let t1 = poisson_bracket(a, &poisson_bracket(b, c, cfg, band)?, cfg, band)?;
    let t2 = poisson_bracket(b, &poisson_bracket(c, a, cfg, band)?, cfg, band)?;
    let t3 = poisson_bracket(c, &poisson_bracket(a, b, cfg, band)?, cfg, band)?;
    Ok(t1.add(&t2).add(&t3))
}

/// Max Jacobi coefficient over all same-side generator triples whose
/// partial mode sums stay in the band.
pub fn jacobi_all_triples(cfg: &WZWConfig, band: usize) -> Result<f64, Error> {
    let gens: Vec<Generator> =
        Generator::all(band).into_iter().filter(|g| g.side == Chirality::L).collect();
    let mut triples = Vec::new();
    for (x, a) in gens.iter().enumerate() {
        for (y, b) in gens.iter().enumerate().skip(x) {
            for c in gens.iter().skip(y) {
                let ok = [a.mode + b.mode, b.mode + c.mode, a.mode + c.mode, a.mode + b.mode + c.mode]
                    .iter()
                    .all(|s| s.unsigned_abs() as usize <= band);
                if ok {
                    triples.push((*a, *b, *c));
                }
            }
        }
    }
    let mirror = |g: &Generator| Generator { side: Chirality::R, ..*g };
    let res: Result<Vec<f64>, Error> = triples
        .par_iter()
        .map(|(a, b, c)| {
            let mut worst: f64 = 0.0;
            for (x, y, z) in [(*a, *b, *c), (mirror(a), mirror(b), mirror(c))] {
                let r = jacobi_poly_residual(cfg, &SparsePoly::gen(x), &SparsePoly::gen(y), &SparsePoly::gen(z), band)?;
                worst = worst.max(r.max_coeff());
            }
            Ok(worst)
        })
        .collect();
    Ok(res?.into_iter().fold(0.0, f64::max))
}

/// `H = −(1/2k) Σ_{L,R} Σ_{|n| ≤ band} [Σ_μ J^{μ,n} J^{μ,−n} + Σ_α (|α|²/2) J^{α,n} J^{−α,−n}]`.
pub fn hamiltonian_poly(cfg: &WZWConfig, band: usize) -> SparsePoly {
    quadratic_poly(cfg, band, [1.0, 1.0])
}

/// `P = −(1/2k)[(J_L|J_L) − (J_R|J_R)]`, the generator of σ-translations.
pub fn momentum_poly(cfg: &WZWConfig, band: usize) -> SparsePoly {
    quadratic_poly(cfg, band, [1.0, -1.0])
}

fn quadratic_poly(cfg: &WZWConfig, band: usize, w: [f64; 2]) -> SparsePoly {
    let b = band as i64;
    let mut h = SparsePoly::zero();
    for (side, w) in [Chirality::L, Chirality::R].into_iter().zip(w) {
        let c = C64::new(-0.5 * w / cfg.k, 0.0);
        for n in -b..=b {
            for mu in 0..2 {
                let x = SparsePoly::gen(Generator::new(side, Label::Cartan(mu), n));
                let y = SparsePoly::gen(Generator::new(side, Label::Cartan(mu), -n));
                h = h.add(&x.mul(&y).scale(c));
            }
            for r in Root::all() {
                let x = SparsePoly::gen(Generator::new(side, Label::Root(r), n));
                let y = SparsePoly::gen(Generator::new(side, Label::Root(r.neg()), -n));
                h = h.add(&x.mul(&y).scale(c * (r.norm2() / 2.0)));
            }
        }
    }
    h
}

// ---------------------------------------------------------------------------
// Subalgebra data.

/// `±Υ` spans a subalgebra with `[E^γ, E^{−γ}]` iff every root sum of two
/// elements of `±Υ` lies again in `±Υ`.
pub fn upsilon_closed(upsilon: &[Root]) -> bool {
    let pm: Vec<Root> = upsilon.iter().flat_map(|g| [*g, g.neg()]).collect();
    pm.iter().all(|a| pm.iter().all(|b| a.add(b).is_none_or(|(_, s)| pm.contains(&s))))
}

fn gram_schmidt(vs: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::new();
    for v in vs {
        let mut w = *v;
        for o in &out {
            let d = w[0] * o[0] + w[1] * o[1];
            w = [w[0] - d * o[0], w[1] - d * o[1]];
        }
        let n = (w[0] * w[0] + w[1] * w[1]).sqrt();
        if n > 1e-12 {
            out.push([w[0] / n, w[1] / n]);
        }
    }
    out
}

/// Orthonormal basis of `𝒯_S = span{α^∨ : α ∈ Υ}`, coordinates over `H^μ`.
pub fn torus_s(upsilon: &[Root]) -> Vec<[f64; 2]> {
    gram_schmidt(&upsilon.iter().map(|g| [g.on_cartan(0), g.on_cartan(1)]).collect::<Vec<_>>())
}

/// Orthonormal basis of `𝒯_S^⊥` inside `𝒯`.
pub fn torus_s_perp(upsilon: &[Root]) -> Vec<[f64; 2]> {
    let mut vs = torus_s(upsilon);
    vs.extend([[1.0, 0.0], [0.0, 1.0]]);
    gram_schmidt(&vs).split_off(torus_s(upsilon).len())
}

/// `(γ ∘ U)(𝒯_S^⊥) = 0` for all `γ ∈ Υ`.
pub fn gauge_condition_36(cfg: &WZWConfig, upsilon: &[Root]) -> bool {
    gauge_defect(cfg, upsilon) < 1e-12
}

/// `max |⟨γ, U(v)⟩|` over `γ ∈ Υ` and unit `v ∈ 𝒯_S^⊥`.
pub fn gauge_defect(cfg: &WZWConfig, upsilon: &[Root]) -> f64 {
    let mut worst: f64 = 0.0;
    for v in torus_s_perp(upsilon) {
        for g in upsilon {
            let x: f64 = (0..2).map(|mu| v[mu] * cfg.alpha_u(g, mu)).sum();
            worst = worst.max(x.abs());
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Constraints.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `J_L^{γ,n} + e^{−⟨γ,u(J_L)⟩} J_R^{γ,n}`, `J_L^{ν,n} + J_R^{ν,n}`
    FirstClassLeft,
    /// all `J^{γ,n}`, `J^{ν,n≠0}` on both sides, `J_L^{ν,0} + J_R^{ν,0}`, from the left slice
    SliceLeft,
    /// `J_R^{γ,n} + e^{−⟨γ,u(J_R)⟩} J_L^{γ,n}`, `J_L^{ν,n} + J_R^{ν,n}`
    FirstClassRight,
    /// the same U-independent set, from the right slice
    SliceRight,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "first-class-left" => Ok(Variant::FirstClassLeft),
            "slice-left" => Ok(Variant::SliceLeft),
            "first-class-right" => Ok(Variant::FirstClassRight),
            "slice-right" => Ok(Variant::SliceRight),
            _ => Err(Error::Unknown(s.to_string())),
        }
    }
}

pub struct ConstraintSet {
    pub cfg: WZWConfig,
    pub upsilon: Vec<Root>,
    pub variant: Variant,
    pub band: usize,
    pub constraints: Vec<SparsePoly>,
}

fn jt(side: Chirality, t: &[f64; 2], n: i64) -> SparsePoly {
    let mut p = SparsePoly::zero();
    for (mu, c) in t.iter().enumerate() {
        p = p.add(&SparsePoly::gen(Generator::new(side, Label::Cartan(mu), n)).scale(C64::new(*c, 0.0)));
    }
    p
}

pub fn build_constraints(cfg: &WZWConfig, upsilon: &[Root], variant: Variant, band: usize) -> Result<ConstraintSet, Error> {
    if !upsilon_closed(upsilon) {
        return Err(Error::NotClosed(1.0));
    }
    if !gauge_condition_36(cfg, upsilon) {
        return Err(Error::Domain { what: "gauge condition defect".into(), value: gauge_defect(cfg, upsilon) });
    }
    let b = band as i64;
    let pm: Vec<Root> = upsilon.iter().flat_map(|g| [*g, g.neg()]).collect();
    let ts = torus_s(upsilon);
    let mut cs = Vec::new();
    let g = |s, r: Root, n| SparsePoly::gen(Generator::new(s, Label::Root(r), n));
    use Chirality::{L, R};
    match variant {
        Variant::FirstClassLeft | Variant::FirstClassRight => {
            let (a, o) = if variant == Variant::FirstClassLeft { (L, R) } else { (R, L) };
            for r in &pm {
                for n in -b..=b {
                    cs.push(g(a, *r, n).add(&SparsePoly::exp_symbol(a, root_lattice(r)).mul(&g(o, *r, n))));
                }
            }
            for t in &ts {
                for n in -b..=b {
                    cs.push(jt(L, t, n).add(&jt(R, t, n)));
                }
            }
        }
        Variant::SliceLeft | Variant::SliceRight => {
            for r in &pm {
                for n in -b..=b {
                    cs.push(g(L, *r, n));
                    cs.push(g(R, *r, n));
                }
            }
            for t in &ts {
                for n in -b..=b {
                    if n != 0 {
                        cs.push(jt(L, t, n));
                        cs.push(jt(R, t, n));
                    }
                }
                cs.push(jt(L, t, 0).add(&jt(R, t, 0)));
            }
        }
    }
    Ok(ConstraintSet { cfg: cfg.clone(), upsilon: upsilon.to_vec(), variant, band, constraints: cs })
}

fn rand_c<R: Rng>(rng: &mut R) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

impl ConstraintSet {
    /// A band-limited point on the constraint surface: free generators drawn
    /// in `[−1,1]²`, dependent ones solved in closed form.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Assignment {
        let b = self.band as i64;
        let mut at = Assignment::new();
        for g in Generator::all(self.band) {
            at.insert(g, rand_c(rng));
        }
        let pm: Vec<Root> = self.upsilon.iter().flat_map(|g| [*g, g.neg()]).collect();
        let ts = torus_s(&self.upsilon);
        use Chirality::{L, R};
        let project = |at: &mut Assignment, side: Chirality, n: i64, target: &dyn Fn(&Assignment, usize) -> C64| {
            for t in &ts {
                let cur: C64 = (0..2).map(|mu| at[&Generator::new(side, Label::Cartan(mu), n)] * t[mu]).sum();
                let want: C64 = (0..2).map(|mu| target(at, mu) * t[mu]).sum();
                for mu in 0..2 {
                    *at.get_mut(&Generator::new(side, Label::Cartan(mu), n)).unwrap() += (want - cur) * t[mu];
                }
            }
        };
        match self.variant {
            Variant::FirstClassLeft | Variant::FirstClassRight => {
                let (a, o) = if self.variant == Variant::FirstClassLeft { (L, R) } else { (R, L) };
                for n in -b..=b {
                    project(&mut at, o, n, &|at, mu| -at[&Generator::new(a, Label::Cartan(mu), n)]);
                }
                for r in &pm {
                    let e = SparsePoly::exp_symbol(a, root_lattice(r)).eval(&self.cfg, &at);
                    for n in -b..=b {
                        let v = -at[&Generator::new(a, Label::Root(*r), n)] / e;
                        at.insert(Generator::new(o, Label::Root(*r), n), v);
                    }
                }
            }
            Variant::SliceLeft | Variant::SliceRight => {
                for r in &pm {
                    for n in -b..=b {
                        for s in [L, R] {
                            at.insert(Generator::new(s, Label::Root(*r), n), C64::zero());
                        }
                    }
                }
                for n in -b..=b {
                    if n != 0 {
                        for s in [L, R] {
                            project(&mut at, s, n, &|_, _| C64::zero());
                        }
                    }
                }
                project(&mut at, R, 0, &|at, mu| -at[&Generator::new(L, Label::Cartan(mu), 0)]);
            }
        }
        at
    }

    /// `max_i |Φ_i(p)|`.
    pub fn surface_residual(&self, at: &Assignment) -> f64 {
        self.constraints.iter().map(|c| c.eval(&self.cfg, at).norm()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct FirstClassReport {
    /// `max |{Φ_i, Φ_j}|`
    pub constraints: f64,
    /// `max |{H, Φ_i}|`
    pub hamiltonian: f64,
    /// `max |Φ_i|` at the samples
    pub surface: f64,
}

impl FirstClassReport {
    pub fn max(&self) -> f64 {
        self.constraints.max(self.hamiltonian).max(self.surface)
    }
}

/// Brackets of the constraints among themselves and with `ham`, evaluated
/// at the given points. The points are band-limited, so brackets are taken
/// in the doubled band and modes beyond the band evaluate to zero.
pub fn first_class_residual(cs: &ConstraintSet, ham: &SparsePoly, samples: &[Assignment]) -> Result<FirstClassReport, Error> {
    let ham_band = ham.variables().iter().map(|g| g.mode.unsigned_abs() as usize).max().unwrap_or(0);
    let band = 2 * cs.band.max(ham_band);
    let n = cs.constraints.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let brackets: Result<Vec<SparsePoly>, Error> = pairs
        .par_iter()
        .map(|(i, j)| poisson_bracket(&cs.constraints[*i], &cs.constraints[*j], &cs.cfg, band))
        .collect();
    let brackets = brackets?;
    let hb: Result<Vec<SparsePoly>, Error> =
        cs.constraints.par_iter().map(|c| poisson_bracket(ham, c, &cs.cfg, band)).collect();
    let hb = hb?;
    let mut rep = FirstClassReport::default();
    for p in samples {
        for b in &brackets {
            rep.constraints = rep.constraints.max(b.eval(&cs.cfg, p).norm());
        }
        for b in &hb {
            rep.hamiltonian = rep.hamiltonian.max(b.eval(&cs.cfg, p).norm());
        }
        rep.surface = rep.surface.max(cs.surface_residual(p));
    }
    Ok(rep)
}

/// Generator values of a loop-double point, for all modes `|n| ≤ band`.
pub fn assignment_at(d: &LoopDouble, k: &Elem<f64>, band: usize) -> Result<Assignment, Error> {
    Ok(d.generator_pullbacks(k, band)?.into_iter().collect())
}

// ---------------------------------------------------------------------------
// Chiral parametrization.

/// `(g_L, μ, g_R)` with `μ = i h`, `h = Σ h_ν H^ν`, in the Weyl alcove
/// `⟨α₁,h⟩ ≥ 0`, `⟨α₂,h⟩ ≥ 0`, `⟨α₁+α₂,h⟩ ≤ k`.
#[derive(Clone, Debug)]
pub struct ChiralPoint {
    pub g_l: LoopGroupElement,
    pub g_r: LoopGroupElement,
    pub h: [f64; 2],
}

pub fn in_alcove(h: &[f64; 2], k: f64) -> bool {
    let p = |r: Root| r.on_cartan(0) * h[0] + r.on_cartan(1) * h[1];
    p(Root::new(0, 1)) >= 0.0 && p(Root::new(1, 2)) >= 0.0 && p(Root::new(0, 2)) <= k.abs()
}

impl ChiralPoint {
    pub fn new(g_l: LoopGroupElement, g_r: LoopGroupElement, h: [f64; 2], k: f64) -> Result<Self, Error> {
        if !in_alcove(&h, k) {
            return Err(Error::Domain { what: "alcove".into(), value: h[0] });
        }
        Ok(ChiralPoint { g_l, g_r, h })
    }

    pub fn mu(&self) -> M3<f64> {
        mu_of(&self.h)
    }
}

fn mu_of(h: &[f64; 2]) -> M3<f64> {
    (cartan(0).scale_re(h[0]) + cartan(1).scale_re(h[1])).scale(C64::new(0.0, 1.0))
}

/// Tangent to `(g_L, μ, g_R)`-space: `g_L e^{s a_L}`, `μ + s dμ`, `g_R e^{s a_R}`.
#[derive(Clone, Debug)]
pub struct ChiralTangent {
    pub a_l: Vec<M3<f64>>,
    pub dh: [f64; 2],
    pub a_r: Vec<M3<f64>>,
}

fn chiral_curve<S: Real>(g: &[M3<S>], a: &[M3<f64>]) -> Vec<M3<num_dual::Dual<S>>> {
    g.iter().zip(a).map(|(g, a)| seed_m3(g, &(*g * M3::<S>::lift(a)))).collect()
}

/// `J_L = g_L μ g_L^{-1} + k ∂g_L g_L^{-1}`.
pub fn chiral_j_l<S: Real>(d: &LoopDouble, g: &[M3<S>], mu: &M3<S>) -> Vec<M3<S>> {
    let dg = d.deriv(g);
    g.iter().zip(&dg).map(|(g, dg)| *g * *mu * g.inv() + (*dg * g.inv()).scale(crate::matgroup::re(d.cfg.k))).collect()
}

/// `J_R = −g_R μ g_R^{-1} − k ∂g_R g_R^{-1}`.
pub fn chiral_j_r<S: Real>(d: &LoopDouble, g: &[M3<S>], mu: &M3<S>) -> Vec<M3<S>> {
    chiral_j_l(d, g, mu).into_iter().map(|x| -x).collect()
}

/// `(χ, g) = (g_L μ g_L^{-1} + k ∂g_L g_L^{-1}, g_L g_R^{-1})`.
pub fn parametrize_44(d: &LoopDouble, cp: &ChiralPoint) -> Result<Elem<f64>, Error> {
    let a = d.alias_fraction(&cp.g_l.g).max(d.alias_fraction(&cp.g_r.g));
    if a > 1e-8 {
        return Err(Error::Domain { what: "alias fraction".into(), value: a });
    }
    Ok(param_generic(d, &cp.g_l.g, &cp.g_r.g, &cp.mu()))
}

fn param_generic<S: Real>(d: &LoopDouble, gl: &[M3<S>], gr: &[M3<S>], mu: &M3<S>) -> Elem<S> {
    Elem { chi: chiral_j_l(d, gl, mu), g: gl.iter().zip(gr).map(|(a, b)| *a * b.inv()).collect() }
}

struct ChiralDiffs {
    djl: Vec<M3<f64>>,
    djr: Vec<M3<f64>>,
}

fn chiral_diffs(d: &LoopDouble, cp: &ChiralPoint, t: &ChiralTangent) -> ChiralDiffs {
    let gl = chiral_curve(&cp.g_l.g, &t.a_l);
    let gr = chiral_curve(&cp.g_r.g, &t.a_r);
    let mu = seed_m3(&cp.mu(), &mu_of(&t.dh));
    ChiralDiffs {
        djl: chiral_j_l(d, &gl, &mu).iter().map(tangent_m3).collect(),
        djr: chiral_j_r(d, &gr, &mu).iter().map(tangent_m3).collect(),
    }
}

/// The reduced form in chiral variables:
/// `−d(μ|θ_R) + (k/2)(θ_R ∧| ∂θ_R) + ½(u(dJ_R) ∧| dJ_R)
///  + d(μ|θ_L) − (k/2)(θ_L ∧| ∂θ_L) + ½(u(dJ_L) ∧| dJ_L)`, with `θ = g^{-1}dg`.
pub fn omega_tilde_u(d: &LoopDouble, cp: &ChiralPoint, t: &ChiralTangent, u: &ChiralTangent) -> f64 {
    let (a, b) = omega_tilde_parts(d, cp, t, u);
    a + b
}

/// The `U`-free part and the `½(u(dJ) ∧| dJ)` part of [`omega_tilde_u`].
pub fn omega_tilde_parts(d: &LoopDouble, cp: &ChiralPoint, t: &ChiralTangent, u: &ChiralTangent) -> (f64, f64) {
    let p = |x: &[M3<f64>], y: &[M3<f64>]| d.pair_loop(x, y).re;
    let mu = vec![cp.mu(); d.nsigma()];
    let dmu_t = vec![mu_of(&t.dh); d.nsigma()];
    let dmu_u = vec![mu_of(&u.dh); d.nsigma()];
    // d(μ|θ)(t,u) = (dμ_t|θ_u) − (dμ_u|θ_t) − (μ|[θ_t, θ_u])
    let dmt = |at: &[M3<f64>], au: &[M3<f64>]| {
        let c: Vec<M3<f64>> = at.iter().zip(au).map(|(x, y)| x.comm(y)).collect();
        p(&dmu_t, au) - p(&dmu_u, at) - p(&mu, &c)
    };
    let wz = |at: &[M3<f64>], au: &[M3<f64>]| 0.5 * d.cfg.k * (p(at, &d.deriv(au)) - p(au, &d.deriv(at)));
    let free = -dmt(&t.a_r, &u.a_r) + wz(&t.a_r, &u.a_r) + dmt(&t.a_l, &u.a_l) - wz(&t.a_l, &u.a_l);
    let dt = chiral_diffs(d, cp, t);
    let du = chiral_diffs(d, cp, u);
    let uw = |x: &[M3<f64>], y: &[M3<f64>]| {
        0.5 * (p(&vec![d.u_of(x); d.nsigma()], y) - p(&vec![d.u_of(y); d.nsigma()], x))
    };
    (free, uw(&dt.djr, &du.djr) + uw(&dt.djl, &du.djl))
}

/// `d(μ|θ_L − θ_R) − (k/2)(θ_L ∧| ∂θ_L) + (k/2)(θ_R ∧| ∂θ_R)`, the gauged WZW form.
pub fn omega_gauged_wzw(d: &LoopDouble, cp: &ChiralPoint, t: &ChiralTangent, u: &ChiralTangent) -> f64 {
    let p = |x: &[M3<f64>], y: &[M3<f64>]| d.pair_loop(x, y).re;
    let mu = vec![cp.mu(); d.nsigma()];
    let dmu_t = vec![mu_of(&t.dh); d.nsigma()];
    let dmu_u = vec![mu_of(&u.dh); d.nsigma()];
    let th_t: Vec<M3<f64>> = t.a_l.iter().zip(&t.a_r).map(|(a, b)| *a - *b).collect();
    let th_u: Vec<M3<f64>> = u.a_l.iter().zip(&u.a_r).map(|(a, b)| *a - *b).collect();
    let cl: Vec<M3<f64>> = t.a_l.iter().zip(&u.a_l).map(|(x, y)| x.comm(y)).collect();
    let cr: Vec<M3<f64>> = t.a_r.iter().zip(&u.a_r).map(|(x, y)| x.comm(y)).collect();
    let cdiff: Vec<M3<f64>> = cl.iter().zip(&cr).map(|(a, b)| *a - *b).collect();
    let dm = p(&dmu_t, &th_u) - p(&dmu_u, &th_t) - p(&mu, &cdiff);
    let wz = |at: &[M3<f64>], au: &[M3<f64>]| 0.5 * d.cfg.k * (p(at, &d.deriv(au)) - p(au, &d.deriv(at)));
    dm - wz(&t.a_l, &u.a_l) + wz(&t.a_r, &u.a_r)
}

/// The tangent at `K = (χ, g)` of the image curve, right-translated to the
/// frame used by the loop double.
pub fn push_tangent(d: &LoopDouble, cp: &ChiralPoint, t: &ChiralTangent) -> crate::Alg<f64> {
    let gl = chiral_curve(&cp.g_l.g, &t.a_l);
    let gr = chiral_curve(&cp.g_r.g, &t.a_r);
    let mu = seed_m3(&cp.mu(), &mu_of(&t.dh));
    Elem::right_mc(&param_generic(d, &gl, &gr, &mu))
}

/// `ω_u` pulled back through the chiral parametrization.
pub fn omega_u_pullback(d: &LoopDouble, cp: &ChiralPoint, t: &ChiralTangent, u: &ChiralTangent) -> Result<f64, Error> {
    let k = parametrize_44(d, cp)?;
    Ok(d.omega_u(&k, &push_tangent(d, cp, t), &push_tangent(d, cp, u)))
}

/// Random band-limited chiral point with `μ` inside the alcove.
pub fn sample_chiral<R: Rng>(d: &LoopDouble, rng: &mut R, amp: f64) -> ChiralPoint {
    let k = d.cfg.k;
    loop {
        let h = [rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0)];
        if in_alcove(&h, k) {
            return ChiralPoint { g_l: d.sample_loop(rng, amp), g_r: d.sample_loop(rng, amp), h };
        }
    }
}

pub fn sample_chiral_tangent<R: Rng>(d: &LoopDouble, rng: &mut R, amp: f64) -> ChiralTangent {
    let f = |rng: &mut R| crate::uwzw::LoopField::random_su3(rng, d.cfg.n_max, 2, amp).to_grid(d.sigma());
    ChiralTangent { a_l: f(rng), dh: [rng.random_range(-amp..amp), rng.random_range(-amp..amp)], a_r: f(rng) }
}

/// `(J_L^{t,0} + J_R^{t,0})` for the orthonormal `t ∈ 𝒯_S`, at a point and along a tangent.
fn torus_constraint(d: &LoopDouble, cp: &ChiralPoint, t: Option<&ChiralTangent>, ts: &[[f64; 2]]) -> Vec<f64> {
    let (jl, jr) = match t {
        None => (chiral_j_l(d, &cp.g_l.g, &cp.mu()), chiral_j_r(d, &cp.g_r.g, &cp.mu())),
        Some(t) => {
            let c = chiral_diffs(d, cp, t);
            (c.djl, c.djr)
        }
    };
    ts.iter()
        .map(|t| {
            let x = cartan(0).scale_re(t[0]) + cartan(1).scale_re(t[1]);
            // J^{t,0} of an su(3) current is imaginary
            (d.mode(&jl, &x, 0) + d.mode(&jr, &x, 0)).im
        })
        .collect()
}

/// A chiral point with `J_L^{ν,0} + J_R^{ν,0} = 0` for `H^ν ∈ 𝒯_S`, and
/// tangents to that surface. `g_R` carries a Coxeter element so that the
/// condition is solvable for `μ`.
pub fn sample_torus_surface<R: Rng>(
    d: &LoopDouble,
    rng: &mut R,
    upsilon: &[Root],
    amp: f64,
    tangents: usize,
) -> Result<(ChiralPoint, Vec<ChiralTangent>), Error> {
    let ts = torus_s(upsilon);
    let mut cox = M3::<f64>::zero();
    cox.a[1][0] = C64::new(1.0, 0.0);
    cox.a[2][1] = C64::new(1.0, 0.0);
    cox.a[0][2] = C64::new(1.0, 0.0);
    for _ in 0..500 {
        let g_l = d.sample_loop(rng, amp);
        let g_r = LoopGroupElement { g: d.sample_loop(rng, amp).g.iter().map(|g| *g * cox).collect() };
        let mut cp = ChiralPoint { g_l, g_r, h: [0.0, 0.0] };
        // c(h) is affine in h: solve in least squares
        let c0 = torus_constraint(d, &cp, None, &ts);
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|i| {
                let mut e = [0.0; 2];
                e[i] = 1.0;
                cp.h = e;
                torus_constraint(d, &cp, None, &ts).iter().zip(&c0).map(|(a, b)| a - b).collect()
            })
            .collect();
        let a = nalgebra::DMatrix::from_fn(ts.len(), 2, |r, c| cols[c][r]);
        let rhs = nalgebra::DVector::from_iterator(ts.len(), c0.iter().map(|v| -v));
        let sol = a.clone().svd(true, true).solve(&rhs, 1e-12).map_err(|e| Error::Degenerate(e.to_string()))?;
        let h = [sol[0], sol[1]];
        if !in_alcove(&h, d.cfg.k) {
            continue;
        }
        cp.h = h;
        let pinv = a.clone().pseudo_inverse(1e-12).map_err(|e| Error::Degenerate(e.to_string()))?;
        let mut out = Vec::new();
        for _ in 0..tangents {
            let mut t = sample_chiral_tangent(d, rng, 0.5);
            let dc = torus_constraint(d, &cp, Some(&t), &ts);
            let fix = &pinv * nalgebra::DVector::from_vec(dc);
            t.dh = [t.dh[0] - fix[0], t.dh[1] - fix[1]];
            out.push(t);
        }
        return Ok((cp, out));
    }
    Err(Error::Degenerate("no surface point in the alcove".into()))
}

/// `(g_L, g_R) ↦ (t g_L, t g_R)` with `t = exp(X)` and, on tangents, the
/// variation `t^{-1}dt = τ` pushed into the right-translated frames.
pub fn torus_transform(cp: &ChiralPoint, x: &M3<f64>, taus: &[(ChiralTangent, M3<f64>)]) -> (ChiralPoint, Vec<ChiralTangent>) {
    let t = x.expm();
    let lm = |g: &LoopGroupElement| LoopGroupElement { g: g.g.iter().map(|g| t * *g).collect() };
    let cp2 = ChiralPoint { g_l: lm(&cp.g_l), g_r: lm(&cp.g_r), h: cp.h };
    let ad = |g: &M3<f64>, tau: &M3<f64>| g.inv() * *tau * *g;
    let ts = taus
        .iter()
        .map(|(v, tau)| ChiralTangent {
            a_l: v.a_l.iter().zip(&cp.g_l.g).map(|(a, g)| *a + ad(g, tau)).collect(),
            dh: v.dh,
            a_r: v.a_r.iter().zip(&cp.g_r.g).map(|(a, g)| *a + ad(g, tau)).collect(),
        })
        .collect();
    (cp2, ts)
}

/// Random su(3) element, for tests and scenarios.
pub fn random_algebra<R: Rng>(rng: &mut R, amp: f64) -> M3<f64> {
    random_su3(rng, amp)
}


#[cfg(test)]
mod geometric_tests {
    use super::*;
    use crate::double_core::sts_bracket;
    use crate::uwzw::{Current, Hamiltonian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hamiltonian_bracket_matches_geometry() {
        let d = LoopDouble::new(WZWConfig::new(6, 1.0, 0.3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = d.sample_point(&mut rng, 0.4);
        let at = assignment_at(&d, &k, 6).unwrap();
        let h = hamiltonian_poly(&d.cfg, 6);
        for g in [
            Generator::new(Chirality::L, Label::Cartan(0), 1),
            Generator::new(Chirality::R, Label::Cartan(1), 2),
            Generator::new(Chirality::L, Label::Root(Root::new(0, 1)), 0),
            Generator::new(Chirality::R, Label::Root(Root::new(2, 1)), -1),
        ] {
            let geo = sts_bracket(&d, &Hamiltonian { d: &d }, &Current::new(&d, g), &k);
            let alg = poisson_bracket(&h, &SparsePoly::gen(g), &d.cfg, 12).unwrap().eval(&d.cfg, &at);
            println!("{} geo {geo} alg {alg}", g.name());
            assert!((geo - alg).norm() < 1e-6);
        }
    }
}
