//! The double `sl(3,R) ⋊ SL(3,R)` with the transpose twist, its
//! maximally isotropic subgroups `G = {χ = 0}` and the 8-parameter group `B`,
//! the leaf `M = O_L ∩ O_R`, and the quotient `C = B/N` by the ideal
//! `N = Span(t_◁, t_▷, t_{j−})`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::double_core::{coords, symplectic_form, Double, Frames};
use crate::matgroup::{
    alg_to_dmatrix, cexp, cln, left_curve, random_sl3, re, Alg, Cx, Dual64, Elem,
    MatLieAlgebra, Observable, Real, C64, M3,
};
use crate::Error;

/// Labels of the basis, in storage order.
pub const LABELS: [&str; 8] = ["◁", "▷", "1+", "1-", "2+", "2-", "3+", "3-"];

/// Indices into [`LABELS`].
pub mod idx {
    pub const L: usize = 0;
    pub const R: usize = 1;
    pub const P1: usize = 2;
    pub const M1: usize = 3;
    pub const P2: usize = 4;
    pub const M2: usize = 5;
    pub const P3: usize = 6;
    pub const M3: usize = 7;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Twist {
    /// `κ(χ, g) = (−χ^T, (g^{-1})^T)`.
    Transpose,
    /// `κ = Id` (untwisted control).
    Identity,
}

pub fn e_plus(j: usize) -> M3<f64> {
    match j {
        1 => M3::unit(0, 1),
        2 => M3::unit(1, 2),
        3 => M3::unit(0, 2),
        _ => panic!("root index {j}"),
    }
}

pub fn e_minus(j: usize) -> M3<f64> {
    e_plus(j).transpose()
}

pub fn h_mat() -> M3<f64> {
    M3::diag([0.5, 0.0, -0.5])
}

pub fn k_mat() -> M3<f64> {
    M3::diag([0.5, -1.0, 0.5])
}

fn pair_alg(phi: M3<f64>, alpha: M3<f64>) -> Alg<f64> {
    Alg { phi: vec![phi], alpha: vec![alpha] }
}

#[derive(Clone, Debug)]
pub struct Sl3Double {
    pub eps: f64,
    pub twist: Twist,
    frames: Frames,
}

impl Sl3Double {
    pub fn new(eps: f64) -> Result<Self, Error> {
        Self::with_twist(eps, Twist::Transpose)
    }

    pub fn with_twist(eps: f64, twist: Twist) -> Result<Self, Error> {
        if eps == 0.0 || !eps.is_finite() {
            return Err(Error::Config(format!("ε must be nonzero and finite, got {eps}")));
        }
        let z = M3::zero();
        let h = h_mat();
        let k = k_mat();
        let tg = vec![
            pair_alg(z, h),
            pair_alg(z, k.scale_re(1.0 / 3.0)),
            pair_alg(z, e_plus(1)),
            pair_alg(z, e_minus(1)),
            pair_alg(z, e_plus(2)),
            pair_alg(z, e_minus(2)),
            pair_alg(z, e_plus(3)),
            pair_alg(z, e_minus(3)),
        ];
        let tb = vec![
            pair_alg(h.scale_re(2.0), e_plus(3).scale_re(-eps)),
            pair_alg(k.scale_re(2.0), z),
            pair_alg(e_minus(1), z),
            pair_alg(e_plus(1), z),
            pair_alg(e_minus(2), z),
            pair_alg(e_plus(2), z),
            pair_alg(e_minus(3), h.scale_re(eps)),
            pair_alg(e_plus(3), z),
        ];
        let frames = Frames::new(tg, tb, |x| kappa_alg_of(twist, x));
        Ok(Sl3Double { eps, twist, frames })
    }

    // ---- the group B ----------------------------------------------------

    /// The unique element of `B` with algebra component `chi`; `chi` must
    /// satisfy `1 − ε χ_{31} > 0`.
    pub fn b_from_chi<S: Real>(&self, chi: &M3<S>) -> Elem<S> {
        let one = re::<S>(1.0);
        let e = re::<S>(self.eps);
        let w = one - e * chi.a[2][0];
        let lw = cln(w);
        let lam = cexp(lw * re::<S>(-0.5));
        let lam_inv = cexp(lw * re::<S>(0.5));
        let cl = (chi.a[0][0] - chi.a[2][2]) * re::<S>(0.5);
        let mut g = M3::<S>::identity();
        g.a[0][0] = lam;
        g.a[0][2] = -(e * lam * cl);
        g.a[2][2] = lam_inv;
        Elem { chi: vec![*chi], g: vec![g] }
    }

    /// Chart `(s, χ^◁, χ^▷, χ^{1+}, χ^{1−}, χ^{2+}, χ^{2−}, χ^{3+}) -> B`.
    pub fn chart(&self, c: &BCoords) -> Elem<f64> {
        let e = self.eps;
        let mut chi = M3::<f64>::zero();
        let set = |m: &mut M3<f64>, i: usize, j: usize, v: f64| m.a[i][j] = C64::new(v, 0.0);
        set(&mut chi, 0, 0, c.cl + c.cr);
        set(&mut chi, 1, 1, -2.0 * c.cr);
        set(&mut chi, 2, 2, -c.cl + c.cr);
        set(&mut chi, 0, 1, c.c1p);
        set(&mut chi, 1, 0, c.c1m);
        set(&mut chi, 1, 2, c.c2p);
        set(&mut chi, 2, 1, c.c2m);
        set(&mut chi, 0, 2, c.c3p);
        set(&mut chi, 2, 0, (1.0 - (-e * c.s).exp()) / e);
        let mut g = M3::<f64>::identity();
        g.a[0][0] = C64::new((0.5 * e * c.s).exp(), 0.0);
        g.a[0][2] = C64::new(-e * (0.5 * e * c.s).exp() * c.cl, 0.0);
        g.a[2][2] = C64::new((-0.5 * e * c.s).exp(), 0.0);
        Elem { chi: vec![chi], g: vec![g] }
    }

    /// Inverse of [`Sl3Double::chart`] (reads only the algebra component).
    pub fn coords_of(&self, b: &Elem<f64>) -> BCoords {
        let v = |c: BCoord| BCoordObs { c, eps: self.eps }.eval(b).re;
        BCoords {
            s: v(BCoord::S),
            cl: v(BCoord::Left),
            cr: v(BCoord::Right),
            c1p: v(BCoord::C1p),
            c1m: v(BCoord::C1m),
            c2p: v(BCoord::C2p),
            c2m: v(BCoord::C2m),
            c3p: v(BCoord::C3p),
        }
    }

    /// Residual of `b` being an element of `B` (g-part determined by χ).
    pub fn b_membership_residual(&self, b: &Elem<f64>) -> f64 {
        let c = self.chart(&self.coords_of(b));
        c.dist(b)
    }

    /// Coordinate functions `x^i` dual to `t_i` at the identity, in basis order.
    pub fn dual_coordinates(&self) -> [BCoordObs; 8] {
        let o = |c| BCoordObs { c, eps: self.eps };
        [
            o(BCoord::Left),
            o(BCoord::Right),
            o(BCoord::C1m),
            o(BCoord::C1p),
            o(BCoord::C2m),
            o(BCoord::C2p),
            o(BCoord::S),
            o(BCoord::C3p),
        ]
    }

    fn split<S: Real>(&self, kp: &Elem<S>) -> (Elem<S>, Elem<S>) {
        let b = self.b_from_chi(&kp.chi[0]);
        let h = b.g[0].inv() * kp.g[0];
        (b, Elem { chi: vec![M3::zero()], g: vec![h] })
    }

    // ---- the leaf M -----------------------------------------------------

    /// `Tr(J_L E^{3−})` and `Tr(J_R E^{3+})`.
    pub fn leaf_traces(&self, k: &Elem<f64>) -> (f64, f64) {
        let jl = j_left(k);
        let jr = j_right(k);
        (jl.a[0][2].re, jr.a[2][0].re)
    }

    pub fn in_leaf(&self, k: &Elem<f64>) -> bool {
        self.domain_l(k).is_ok() && self.domain_r(k).is_ok()
    }

    /// Random point of `M` by rejection from `exp`-sampled `g` and uniform `χ`.
    pub fn sample_leaf<R: Rng>(&self, rng: &mut R, amp: f64) -> LeafPoint {
        loop {
            let chi = random_sl3(rng, amp);
            let g = random_sl3(rng, 0.5 * amp).expm();
            let k = Elem { chi: vec![chi], g: vec![g] };
            if let Ok(p) = LeafPoint::new(self, k) {
                return p;
            }
        }
    }

    /// Random element of `B` through the chart.
    pub fn sample_b<R: Rng>(&self, rng: &mut R, amp: f64) -> Elem<f64> {
        let mut u = || amp * rng.random_range(-1.0..1.0);
        let c = BCoords { s: u(), cl: u(), cr: u(), c1p: u(), c1m: u(), c2p: u(), c2m: u(), c3p: u() };
        self.chart(&c)
    }

    /// The explicit leaf form written with `J_L, J_R` and the invariant
    /// Maurer-Cartan forms (tangents in the right-translated frame).
    pub fn omega_explicit(&self, k: &Elem<f64>, t: &Alg<f64>, u: &Alg<f64>) -> f64 {
        let e = self.eps;
        let d = |v: &Alg<f64>| -> Tangents {
            let kc: Elem<Dual64> = left_curve(k, v);
            let jl = j_left(&kc);
            let jr = j_right(&kc);
            let g = kc.g[0];
            let gi = g.inv();
            let dg = tangent_block(&g);
            let gi0 = primal_block(&gi);
            Tangents {
                djl: tangent_block(&jl),
                djr: tangent_block(&jr),
                l: gi0 * dg,
                r: dg * gi0,
            }
        };
        let (a, b) = (d(t), d(u));
        let tr = |x: &M3<f64>, y: &M3<f64>| x.tr_mul(y).re;
        let wedge = |f: &dyn Fn(&Tangents) -> f64, g: &dyn Fn(&Tangents) -> f64| f(&a) * g(&b) - f(&b) * g(&a);
        let trw = |f: &dyn Fn(&Tangents) -> M3<f64>, g: &dyn Fn(&Tangents) -> M3<f64>| {
            tr(&f(&a), &g(&b)) - tr(&f(&b), &g(&a))
        };
        let h = h_mat();
        let (tl, trr) = self.leaf_traces(k);
        let mut w = -0.5 * trw(&|x| x.djr, &|x| x.l) + 0.5 * trw(&|x| x.djl, &|x| x.r);
        // with a∧b = a⊗b − b⊗a throughout, the two boundary terms carry ε, not ε/2
        w -= e * wedge(&|x| tr(&x.djl, &h), &|x| x.djl.a[0][2].re) / (1.0 + e * tl);
        w -= e * wedge(&|x| tr(&x.djr, &h), &|x| x.djr.a[2][0].re) / (1.0 - e * trr);
        w
    }

    /// The leaf form from the projector formula.
    pub fn omega_pullback(&self, k: &Elem<f64>, t: &Alg<f64>, u: &Alg<f64>) -> Result<f64, Error> {
        self.domain_l(k)?;
        self.domain_r(k)?;
        Ok(symplectic_form(self, k, t, u).re)
    }

    // ---- algebra data ---------------------------------------------------

    /// `Lie(D)` as a 16-dim matrix algebra in the basis `[T^1..T^8, t_1..t_8]`.
    pub fn lie_d(&self) -> Result<MatLieAlgebra, Error> {
        let f = self.frames();
        let basis: Vec<DMatrix<f64>> =
            f.tg.iter().chain(f.tb.iter()).map(|x| alg_to_dmatrix(x)).collect();
        MatLieAlgebra::new(basis, block_pairing)
    }

    /// `Lie(B)` as an 8-dim matrix algebra in the basis `t_1..t_8`.
    pub fn lie_b(&self) -> Result<MatLieAlgebra, Error> {
        let basis: Vec<DMatrix<f64>> =
            self.frames().tb.iter().map(|x| alg_to_dmatrix(x)).collect();
        MatLieAlgebra::new(basis, block_pairing)
    }

    /// Columns: union-basis coordinates of `κ(e_a)`.
    pub fn kappa_matrix(&self) -> DMatrix<f64> {
        let f = self.frames();
        let all: Vec<&Alg<f64>> = f.tg.iter().chain(f.tb.iter()).collect();
        let m = all.len();
        let mut out = DMatrix::zeros(m, m);
        for (a, x) in all.iter().enumerate() {
            let c = coords(self, &self.kappa_alg(x));
            for p in 0..m {
                out[(p, a)] = c[p].re;
            }
        }
        out
    }

    /// The commutators of `Lie(B)` as listed for this example, as
    /// `(i, j, [(k, coefficient)])` with `[t_i, t_j] = Σ c t_k`.
    pub fn listed_b_commutators(&self) -> Vec<(usize, usize, Vec<(usize, f64)>)> {
        use idx::*;
        let e = self.eps;
        vec![
            (L, P1, vec![(M2, e)]),
            (L, P2, vec![(M1, -e)]),
            (P3, M3, vec![(M3, e)]),
            (P3, L, vec![(L, e)]),
            (P3, P1, vec![(P1, -0.5 * e)]),
            (P3, M1, vec![(M1, 0.5 * e)]),
            (P3, P2, vec![(P2, -0.5 * e)]),
            (P3, M2, vec![(M2, 0.5 * e)]),
        ]
    }

    /// Max deviation of the derived structure constants of `Lie(B)` from the
    /// listed commutators (all unlisted pairs must vanish).
    pub fn b_commutator_residual(&self) -> Result<f64, Error> {
        let alg = self.lie_b()?;
        let n = 8;
        let mut target = vec![0.0; n * n * n];
        for (i, j, terms) in self.listed_b_commutators() {
            for (k, c) in terms {
                target[(k * n + i) * n + j] += c;
                target[(k * n + j) * n + i] -= c;
            }
        }
        Ok(alg.structure.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Indices of `N = Span(t_◁, t_▷, t_{1−}, t_{2−}, t_{3−})`.
    pub fn ideal_n() -> Vec<usize> {
        use idx::*;
        vec![L, R, M1, M2, M3]
    }

    /// Indices of `Lie(H) = Span(T^{j+})`.
    pub fn lie_h() -> Vec<usize> {
        use idx::*;
        vec![P1, P2, P3]
    }

    // ---- actions of H ---------------------------------------------------

    /// Upper unitriangular `h` with entries `(a, b, c)` above the diagonal.
    pub fn h_element(a: f64, b: f64, c: f64) -> Elem<f64> {
        let mut g = M3::<f64>::identity();
        g.a[0][1] = C64::new(a, 0.0);
        g.a[1][2] = C64::new(b, 0.0);
        g.a[0][2] = C64::new(c, 0.0);
        Elem { chi: vec![M3::zero()], g: vec![g] }
    }

    /// `K h^{-1}`.
    pub fn act_right(&self, h: &Elem<f64>, k: &Elem<f64>) -> Elem<f64> {
        k.mul(&h.inv())
    }

    /// `κ(h) K`.
    pub fn act_left(&self, h: &Elem<f64>, k: &Elem<f64>) -> Elem<f64> {
        self.kappa(h).mul(k)
    }
}

struct Tangents {
    djl: M3<f64>,
    djr: M3<f64>,
    l: M3<f64>,
    r: M3<f64>,
}

fn tangent_block(m: &M3<Dual64>) -> M3<f64> {
    crate::matgroup::tangent_m3(m)
}

fn primal_block(m: &M3<Dual64>) -> M3<f64> {
    crate::matgroup::primal_m3(m)
}

/// `(X, Y)` for 6x6 embeddings `[[α, φ], [0, α]]`.
fn block_pairing(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let alpha = |m: &DMatrix<f64>| m.view((0, 0), (3, 3)).into_owned();
    let phi = |m: &DMatrix<f64>| m.view((0, 3), (3, 3)).into_owned();
    (phi(x) * alpha(y)).trace() + (phi(y) * alpha(x)).trace()
}

fn kappa_alg_of(twist: Twist, x: &Alg<f64>) -> Alg<f64> {
    match twist {
        Twist::Transpose => Alg {
            phi: x.phi.iter().map(|m| -m.transpose()).collect(),
            alpha: x.alpha.iter().map(|m| -m.transpose()).collect(),
        },
        Twist::Identity => x.clone(),
    }
}

/// `J_L(χ, g) = χ`.
pub fn j_left<S: Real>(k: &Elem<S>) -> M3<S> {
    k.chi[0]
}

/// `J_R(χ, g) = −Ad_{g^{-1}} χ`.
pub fn j_right<S: Real>(k: &Elem<S>) -> M3<S> {
    let g = k.g[0];
    let gi = g.inv();
    -(gi * k.chi[0] * g)
}

impl Double for Sl3Double {
    fn name(&self) -> &str {
        "sl3"
    }
    fn blocks(&self) -> usize {
        1
    }
    fn weight(&self) -> f64 {
        1.0
    }
    fn frames(&self) -> &Frames {
        &self.frames
    }
    fn complete(&self) -> bool {
        true
    }
    fn kappa_preserves_b(&self) -> bool {
        self.twist == Twist::Identity
    }

    fn kappa<S: Real>(&self, k: &Elem<S>) -> Elem<S> {
        match self.twist {
            Twist::Transpose => Elem {
                chi: k.chi.iter().map(|m| -m.transpose()).collect(),
                g: k.g.iter().map(|m| m.inv().transpose()).collect(),
            },
            Twist::Identity => k.clone(),
        }
    }
    fn kappa_inv<S: Real>(&self, k: &Elem<S>) -> Elem<S> {
        // both twists are involutions
        self.kappa(k)
    }
    fn kappa_alg(&self, x: &Alg<f64>) -> Alg<f64> {
        kappa_alg_of(self.twist, x)
    }
    fn kappa_inv_alg(&self, x: &Alg<f64>) -> Alg<f64> {
        kappa_alg_of(self.twist, x)
    }

    fn factor_l<S: Real>(&self, k: &Elem<S>) -> (Elem<S>, Elem<S>) {
        // κ^{-1}(K) = b h with b ∈ B, h ∈ G; then K = κ(b) κ(h).
        let (b, h) = self.split(&self.kappa_inv(k));
        let xi_r = self.kappa(&h).inv();
        (b, xi_r)
    }

    fn factor_r<S: Real>(&self, k: &Elem<S>) -> (Elem<S>, Elem<S>) {
        // K^{-1} = b h; then K = h^{-1} b^{-1} = κ(κ^{-1}(h^{-1})) b^{-1}.
        let (b, h) = self.split(&k.inv());
        let xi_l = self.kappa_inv(&h.inv());
        (b, xi_l)
    }

    fn domain_l(&self, k: &Elem<f64>) -> Result<(), Error> {
        let kp = self.kappa_inv(k);
        let v = 1.0 - self.eps * kp.chi[0].a[2][0].re;
        if v > 0.0 {
            Ok(())
        } else {
            let (what, value) = match self.twist {
                Twist::Transpose => ("Tr(J_L E3-)", k.chi[0].a[0][2].re),
                Twist::Identity => ("Tr(J_L E3+)", k.chi[0].a[2][0].re),
            };
            Err(Error::Domain { what: what.into(), value })
        }
    }

    fn domain_r(&self, k: &Elem<f64>) -> Result<(), Error> {
        let jr = j_right(k);
        let v = 1.0 - self.eps * jr.a[2][0].re;
        if v > 0.0 {
            Ok(())
        } else {
            Err(Error::Domain { what: "Tr(J_R E3+)".into(), value: jr.a[2][0].re })
        }
    }
}

/// A point of the leaf `M`.
#[derive(Clone, Debug)]
pub struct LeafPoint {
    pub k: Elem<f64>,
}

impl LeafPoint {
    pub fn new(d: &Sl3Double, k: Elem<f64>) -> Result<Self, Error> {
        d.domain_l(&k)?;
        d.domain_r(&k)?;
        Ok(LeafPoint { k })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct BCoords {
    pub s: f64,
    pub cl: f64,
    pub cr: f64,
    pub c1p: f64,
    pub c1m: f64,
    pub c2p: f64,
    pub c2m: f64,
    pub c3p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BCoord {
    S,
    Left,
    Right,
    C1p,
    C1m,
    C2p,
    C2m,
    C3p,
}

/// A chart coordinate of `B`, read off the algebra component.
#[derive(Clone, Copy, Debug)]
pub struct BCoordObs {
    pub c: BCoord,
    pub eps: f64,
}

impl Observable for BCoordObs {
    fn eval<S: Real>(&self, k: &Elem<S>) -> Cx<S> {
        let x = &k.chi[0].a;
        match self.c {
            BCoord::S => {
                let w = re::<S>(1.0) - re::<S>(self.eps) * x[2][0];
                -cln(w) * re::<S>(1.0 / self.eps)
            }
            BCoord::Left => (x[0][0] - x[2][2]) * re::<S>(0.5),
            BCoord::Right => x[1][1] * re::<S>(-0.5),
            BCoord::C1p => x[0][1],
            BCoord::C1m => x[1][0],
            BCoord::C2p => x[1][2],
            BCoord::C2m => x[2][1],
            BCoord::C3p => x[0][2],
        }
    }
}

// ---------------------------------------------------------------------------
// The quotient group C = B/N.

/// `C` realized as `[[λ, 0, ξ_1], [0, λ, ξ_2], [0, 0, 1]]`, `λ = e^{−εξ^3/2}`.
#[derive(Clone, Copy, Debug)]
pub struct CGroup {
    pub eps: f64,
}

pub type CElem = [f64; 3];

impl CGroup {
    pub fn lambda(&self, c: &CElem) -> f64 {
        (-0.5 * self.eps * c[2]).exp()
    }

    pub fn identity(&self) -> CElem {
        [0.0; 3]
    }

    pub fn mul(&self, a: &CElem, b: &CElem) -> CElem {
        let l = self.lambda(a);
        [a[0] + l * b[0], a[1] + l * b[1], a[2] + b[2]]
    }

    pub fn inv(&self, a: &CElem) -> CElem {
        let l = self.lambda(a);
        [-a[0] / l, -a[1] / l, -a[2]]
    }

    pub fn matrix(&self, c: &CElem) -> [[f64; 3]; 3] {
        let l = self.lambda(c);
        [[l, 0.0, c[0]], [0.0, l, c[1]], [0.0, 0.0, 1.0]]
    }

    /// `ρ : B -> C`, dual to `ρ^*(ξ_3) = s`, `ρ^*(ξ_j) = χ^{j−}`.
    pub fn rho(&self, b: &Elem<f64>) -> CElem {
        let o = |c| BCoordObs { c, eps: self.eps }.eval(b).re;
        [o(BCoord::C1m), o(BCoord::C2m), o(BCoord::S)]
    }

    /// `{ξ^1, ξ^2}_C = (1 − e^{−εξ^3})/ε`, `{ξ^3, ξ^j}_C = 0`, as the
    /// antisymmetric matrix of brackets of the coordinates at `c`.
    pub fn bracket_matrix(&self, c: &CElem) -> [[f64; 3]; 3] {
        let p = (1.0 - (-self.eps * c[2]).exp()) / self.eps;
        [[0.0, p, 0.0], [-p, 0.0, 0.0], [0.0, 0.0, 0.0]]
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, amp: f64) -> CElem {
        [
            amp * rng.random_range(-1.0..1.0),
            amp * rng.random_range(-1.0..1.0),
            amp * rng.random_range(-1.0..1.0),
        ]
    }
}

// ---------------------------------------------------------------------------
// The improper (H, C) subsymmetry.

/// `(1 − e^{−ε s})/ε` as a function on `B`, the pullback of `{ξ^1, ξ^2}_C`.
#[derive(Clone, Copy, Debug)]
pub struct CBracketObs {
    pub eps: f64,
}

impl Observable for CBracketObs {
    fn eval<S: Real>(&self, b: &Elem<S>) -> Cx<S> {
        let w = re::<S>(1.0) - re::<S>(self.eps) * b.chi[0].a[2][0];
        // e^{−εs} = 1 − ε χ_31
        (re::<S>(1.0) - w) * re::<S>(1.0 / self.eps)
    }
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct ImproperReport {
    pub trials: usize,
    /// number of sampled `(h, K)` whose image left `M`
    pub action_violations: usize,
    /// max `|[w(ξ_2), w(ξ_1)] f − w({ξ_1, ξ_2}_C) f|` for `ν_R` on `M`
    pub realization: f64,
    /// max `|{ν^*ξ_i, ν^*ξ_j}_D − ν^*{ξ_i, ξ_j}_C|` on `M`
    pub moment: f64,
    /// max deviation of the pulled back bracket on `B` from `{·,·}_C`
    pub c_bracket: f64,
}

impl ImproperReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.action_violations == 0
            && self.realization < tol
            && self.moment < tol
            && self.c_bracket < tol
    }
}

impl Sl3Double {
    /// `ρ^*ξ_1, ρ^*ξ_2, ρ^*ξ_3 = χ^{1−}, χ^{2−}, s`.
    pub fn rho_coordinates(&self) -> [BCoordObs; 3] {
        let o = |c| BCoordObs { c, eps: self.eps };
        [o(BCoord::C1m), o(BCoord::C2m), o(BCoord::S)]
    }

    /// Samples `trials` points of `M` and elements of `H`; checks that both
    /// actions preserve `M`, that `ν_R = ρ ∘ Λ_R` realizes the `C`-symmetry
    /// and is a Poisson map, and that `ρ` pulls `{·,·}_C` back to `{·,·}_B`.
    pub fn improper_subsymmetry_check<R: Rng>(&self, rng: &mut R, trials: usize) -> ImproperReport {
        use crate::moments::{b_bracket, lie_realization_residual, MomentMap, Pullback};
        let mut rep = ImproperReport { trials, ..Default::default() };
        let xs = self.rho_coordinates();
        let cb = CBracketObs { eps: self.eps };
        let zero = crate::double_core::ConstObs(C64::new(0.0, 0.0));
        for trial in 0..trials {
            let k = self.sample_leaf(rng, 0.5).k;
            let mut u = || rng.random_range(-1.0..1.0);
            let h = Self::h_element(u(), u(), u());
            if !self.in_leaf(&self.act_right(&h, &k)) || !self.in_leaf(&self.act_left(&h, &k)) {
                rep.action_violations += 1;
            }
            // the expensive checks run on a subset
            if trial % 10 != 0 {
                continue;
            }
            let f = crate::matgroup::random_expr(rng, 2);
            let r = lie_realization_residual(self, MomentMap::LambdaR, &xs[0], &xs[1], &f, &k);
            rep.realization = rep.realization.max(r);
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let lhs = crate::double_core::sts_bracket(
                    self,
                    &Pullback { d: self, mu: MomentMap::LambdaR, y: &xs[i] },
                    &Pullback { d: self, mu: MomentMap::LambdaR, y: &xs[j] },
                    &k,
                );
                let b = self.factor_r(&k).0;
                let rhs = if (i, j) == (0, 1) { cb.eval(&b) } else { zero.eval(&b) };
                rep.moment = rep.moment.max((lhs - rhs).norm());
            }
            let b = self.sample_b(rng, 0.5);
            let c12 = b_bracket(self, &xs[0], &xs[1], &b) - cb.eval(&b);
            let c13 = b_bracket(self, &xs[0], &xs[2], &b);
            let c23 = b_bracket(self, &xs[1], &xs[2], &b);
            rep.c_bracket = rep.c_bracket.max(c12.norm()).max(c13.norm()).max(c23.norm());
        }
        rep
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::double_core::{duality_residuals, kappa_isometry_residual};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_zero_eps() {
        assert!(Sl3Double::new(0.0).is_err());
    }

    #[test]
    fn duality_table_is_exact() {
        for eps in [0.1, 1.0, 5.0] {
            let d = Sl3Double::new(eps).unwrap();
            let (a, b, c) = duality_residuals(&d);
            assert!(a < 1e-12 && b < 1e-12 && c < 1e-12, "{a} {b} {c}");
            assert!(kappa_isometry_residual(&d) < 1e-12);
        }
    }

    #[test]
    fn b_commutators_match_list() {
        for eps in [0.1, 1.0, 5.0] {
            let d = Sl3Double::new(eps).unwrap();
            assert!(d.b_commutator_residual().unwrap() < 1e-12);
        }
    }

    #[test]
    fn chart_closes_under_product() {
        let d = Sl3Double::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = d.sample_b(&mut rng, 0.4);
            let b = d.sample_b(&mut rng, 0.4);
            assert!(d.b_membership_residual(&a.mul(&b)) < 1e-12);
            assert!(d.b_membership_residual(&a.inv()) < 1e-12);
        }
    }

    #[test]
    fn chart_round_trip() {
        let d = Sl3Double::new(0.7).unwrap();
        let c = BCoords { s: 0.3, cl: -0.2, cr: 0.5, c1p: 1.0, c1m: -0.4, c2p: 0.1, c2m: 0.9, c3p: -1.1 };
        let back = d.coords_of(&d.chart(&c));
        for (x, y) in [
            (c.s, back.s),
            (c.cl, back.cl),
            (c.cr, back.cr),
            (c.c1m, back.c1m),
            (c.c3p, back.c3p),
        ] {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn identity_factorizes_trivially() {
        let d = Sl3Double::new(1.0).unwrap();
        let e = Elem::<f64>::identity(1);
        let (b, g) = d.factor_l(&e);
        assert!(b.dist(&e) < 1e-15 && g.dist(&e) < 1e-15);
        let (b, g) = d.factor_r(&e);
        assert!(b.dist(&e) < 1e-15 && g.dist(&e) < 1e-15);
    }

    #[test]
    fn factorization_near_boundary() {
        let eps = 1.0;
        let d = Sl3Double::new(eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let mut chi = random_sl3(&mut rng, 0.5);
            chi.a[0][2] = C64::new(-1.0 / eps + 0.1, 0.0);
            let g = random_sl3(&mut rng, 0.5).expm();
            let k = Elem { chi: vec![chi], g: vec![g] };
            assert!(d.domain_l(&k).is_ok());
            let (lam, xi) = d.factor_l(&k);
            let back = d.kappa(&lam).mul(&xi.inv());
            assert!(back.dist(&k) < 1e-10);
            assert!(d.b_membership_residual(&lam) < 1e-12);
            assert!(xi.chi[0].max_abs() < 1e-15);
        }
    }

    #[test]
    fn factorization_rejects_outside() {
        let eps = 2.0;
        let d = Sl3Double::new(eps).unwrap();
        let mut chi = M3::<f64>::zero();
        chi.a[0][2] = C64::new(-1.0 / eps, 0.0);
        let k = Elem { chi: vec![chi], g: vec![M3::identity()] };
        match d.domain_l(&k) {
            Err(Error::Domain { value, .. }) => assert!((value + 0.5).abs() < 1e-15),
            other => panic!("expected domain violation, got {other:?}"),
        }
    }

    #[test]
    fn right_factorization_round_trip() {
        let d = Sl3Double::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let p = d.sample_leaf(&mut rng, 0.6);
            let (lam, xi) = d.factor_r(&p.k);
            let back = d.kappa(&xi).mul(&lam.inv());
            assert!(back.dist(&p.k) < 1e-10);
        }
    }

    #[test]
    fn c_group_is_quotient() {
        let d = Sl3Double::new(0.8).unwrap();
        let c = CGroup { eps: 0.8 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = d.sample_b(&mut rng, 0.5);
            let b = d.sample_b(&mut rng, 0.5);
            let lhs = c.rho(&a.mul(&b));
            let rhs = c.mul(&c.rho(&a), &c.rho(&b));
            for i in 0..3 {
                assert!((lhs[i] - rhs[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn explicit_omega_is_antisymmetric() {
        let d = Sl3Double::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = d.sample_leaf(&mut rng, 0.5);
        let t = Alg { phi: vec![random_sl3(&mut rng, 1.0)], alpha: vec![random_sl3(&mut rng, 1.0)] };
        assert!(d.omega_explicit(&p.k, &t, &t).abs() < 1e-14);
    }

    #[test]
    fn explicit_omega_matches_projector_form() {
        for eps in [0.1, 1.0, 5.0] {
            let d = Sl3Double::new(eps).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..20 {
                let p = d.sample_leaf(&mut rng, 0.5);
                let t = Alg { phi: vec![random_sl3(&mut rng, 1.0)], alpha: vec![random_sl3(&mut rng, 1.0)] };
                let u = Alg { phi: vec![random_sl3(&mut rng, 1.0)], alpha: vec![random_sl3(&mut rng, 1.0)] };
                let a = d.omega_explicit(&p.k, &t, &u);
                let b = d.omega_pullback(&p.k, &t, &u).unwrap();
                assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn improper_subsymmetry_holds() {
        let d = Sl3Double::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let rep = d.improper_subsymmetry_check(&mut rng, 100);
        assert!(rep.passed(1e-6), "{rep:?}");
        let k = d.sample_leaf(&mut rng, 0.5).k;
        let e = Sl3Double::h_element(0.0, 0.0, 0.0);
        assert!(d.act_right(&e, &k).dist(&k) < 1e-15 && d.act_left(&e, &k).dist(&k) < 1e-15);
    }

    #[test]
    fn c_bracket_vanishes_at_unit_scale() {
        let d = Sl3Double::new(2.0).unwrap();
        let b = d.chart(&BCoords { c1m: 0.3, c2m: -0.2, c3p: 0.1, ..Default::default() });
        assert_eq!(CBracketObs { eps: 2.0 }.eval(&b).re, 0.0);
        let xs = d.rho_coordinates();
        let v = crate::moments::b_bracket(&d, &xs[0], &xs[1], &b);
        assert!(v.norm() < 1e-12, "{v}");
    }

    #[test]
    fn sts_jacobi_on_leaf() {
        use crate::double_core::jacobi_residual_fast;
        for eps in [0.1, 1.0, 5.0] {
            let d = Sl3Double::new(eps).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(51);
            for _ in 0..3 {
                let k = d.sample_leaf(&mut rng, 0.4).k;
                let f = crate::matgroup::random_expr(&mut rng, 2);
                let g = crate::matgroup::random_expr(&mut rng, 2);
                let h = crate::matgroup::random_expr(&mut rng, 2);
                let r = jacobi_residual_fast(&d, &f, &g, &h, &k).unwrap();
                assert!(r.norm() < 1e-7, "{eps} {r}");
            }
        }
    }

    #[test]
    fn sts_leibniz_and_bivector() {
        use crate::double_core::{bivector_matrix, bivector_pair, sts_bracket, ProdObs};
        let d = Sl3Double::new(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..5 {
            let k = d.sample_leaf(&mut rng, 0.5).k;
            let f = crate::matgroup::random_expr(&mut rng, 2);
            let g = crate::matgroup::random_expr(&mut rng, 2);
            let h = crate::matgroup::random_expr(&mut rng, 2);
            let lhs = sts_bracket(&d, &f, &ProdObs(&g, &h), &k);
            let rhs = sts_bracket(&d, &f, &g, &k) * h.eval(&k) + sts_bracket(&d, &f, &h, &k) * g.eval(&k);
            assert!((lhs - rhs).norm() < 1e-9 * (1.0 + lhs.norm()));
            let a = sts_bracket(&d, &f, &g, &k);
            let b = bivector_pair(&d, &f, &g, &k);
            assert!((a - b).norm() < 1e-9 * (1.0 + a.norm()), "{a} {b}");
            let m = bivector_matrix(&d, &k).map(|z| z.re);
            assert_eq!(m.rank(1e-9), 16);
            assert!((&m + m.transpose()).amax() < 1e-10);
        }
    }

    #[test]
    fn projector_condition_diverges_at_boundary() {
        use crate::double_core::projector_condition;
        let eps = 1.0;
        let d = Sl3Double::new(eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut chi = random_sl3(&mut rng, 0.3);
        let g = random_sl3(&mut rng, 0.3).expm();
        let mut last = 0.0;
        for delta in [1e-1, 1e-2, 1e-3, 1e-4] {
            chi.a[0][2] = C64::new(-1.0 / eps + delta, 0.0);
            let k = Elem { chi: vec![chi], g: vec![g] };
            let c = projector_condition(&d, &k);
            assert!(c > 5.0 * last, "{delta} {c} {last}");
            last = c;
        }
        assert!(last > 1e3);
    }

    #[test]
    fn schouten_brackets_agree() {
        use crate::double_core::schouten_check;
        for eps in [0.1, 1.0, 5.0] {
            let d = Sl3Double::new(eps).unwrap();
            let rep = schouten_check(&d.lie_d().unwrap(), &d.kappa_matrix());
            assert!(rep.twist_difference < 1e-10 && rep.invariance < 1e-10, "{rep:?}");
            assert!(rep.norm > 1e-3);
        }
    }

    #[test]
    fn anomaly_matrix_is_antisymmetric() {
        let d = Sl3Double::new(1.0).unwrap();
        let am = crate::double_core::anomaly_matrices(&d).unwrap();
        assert!(am.antisymmetry_residual() < 1e-12);
    }
}
