//! Twisted Heisenberg doubles: dual bases, anomaly matrices, the
//! Semenov-Tian-Shansky bracket, its symplectic form, projectors and the
//! r-matrix Schouten check.

use nalgebra::DMatrix;
use num_complex::Complex;
use num_traits::Zero;

use crate::matgroup::{
    left_curve, left_derivative, lift, right_curve, right_derivative, tangent, Alg,
    Cx, Dual64, Elem, MatLieAlgebra, Observable, Real, C64,
};
use crate::Error;

/// Dual bases of `Lie(G)` and `Lie(B)` together with their images under the
/// twist.
#[derive(Clone, Debug)]
pub struct Frames {
    /// `T^i`, spanning `Lie(G)`.
    pub tg: Vec<Alg<f64>>,
    /// `t_i`, spanning `Lie(B)`.
    pub tb: Vec<Alg<f64>>,
    /// `κ(t_i)`.
    pub ktb: Vec<Alg<f64>>,
    /// `κ(T^i)`.
    pub ktg: Vec<Alg<f64>>,
}

impl Frames {
    pub fn new(tg: Vec<Alg<f64>>, tb: Vec<Alg<f64>>, kappa: impl Fn(&Alg<f64>) -> Alg<f64>) -> Self {
        let ktb = tb.iter().map(&kappa).collect();
        let ktg = tg.iter().map(&kappa).collect();
        Frames { tg, tb, ktb, ktg }
    }

    pub fn dim(&self) -> usize {
        self.tg.len()
    }
}

/// A twisted Heisenberg double realized as a semidirect product.
pub trait Double: Sync {
    fn name(&self) -> &str;
    fn blocks(&self) -> usize;
    /// Quadrature weight per block in the invariant pairing.
    fn weight(&self) -> f64;
    fn frames(&self) -> &Frames;
    /// Whether `T^i, t_i` together span all of `Lie(D)`.
    fn complete(&self) -> bool;
    /// Whether the twist maps `B` into itself.
    fn kappa_preserves_b(&self) -> bool;

    fn kappa<S: Real>(&self, k: &Elem<S>) -> Elem<S>;
    fn kappa_inv<S: Real>(&self, k: &Elem<S>) -> Elem<S>;
    fn kappa_alg(&self, x: &Alg<f64>) -> Alg<f64>;
    fn kappa_inv_alg(&self, x: &Alg<f64>) -> Alg<f64>;

    /// `(Λ_L, Ξ_R)` with `K = κ(Λ_L) Ξ_R^{-1}`.
    fn factor_l<S: Real>(&self, k: &Elem<S>) -> (Elem<S>, Elem<S>);
    /// `(Λ_R, Ξ_L)` with `K = κ(Ξ_L) Λ_R^{-1}`.
    fn factor_r<S: Real>(&self, k: &Elem<S>) -> (Elem<S>, Elem<S>);
    fn domain_l(&self, k: &Elem<f64>) -> Result<(), Error>;
    fn domain_r(&self, k: &Elem<f64>) -> Result<(), Error>;

    fn pair<S: Real>(&self, a: &Alg<S>, b: &Alg<S>) -> Cx<S> {
        pairing(self.weight(), a, b)
    }
}

/// `(phi ⊕ alpha, psi ⊕ beta) = w Σ_j Tr(phi_j beta_j) + Tr(psi_j alpha_j)`.
pub fn pairing<S: Real>(w: f64, a: &Alg<S>, b: &Alg<S>) -> Cx<S> {
    let mut s: Cx<S> = Complex::zero();
    for j in 0..a.blocks() {
        s = s + a.phi[j].tr_mul(&b.alpha[j]) + b.phi[j].tr_mul(&a.alpha[j]);
    }
    s * lift::<S>(C64::new(w, 0.0))
}

/// Max deviation of the duality/isotropy tables from their targets.
pub fn duality_residuals<D: Double>(d: &D) -> (f64, f64, f64) {
    let f = d.frames();
    let n = f.dim();
    let (mut dual, mut iso_g, mut iso_b): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            dual = dual.max((d.pair(&f.tg[i], &f.tb[j]) - C64::new(target, 0.0)).norm());
            iso_g = iso_g.max(d.pair(&f.tg[i], &f.tg[j]).norm());
            iso_b = iso_b.max(d.pair(&f.tb[i], &f.tb[j]).norm());
        }
    }
    (dual, iso_g, iso_b)
}

/// Max of `|(κX, κY) - (X, Y)|` over the union basis.
pub fn kappa_isometry_residual<D: Double>(d: &D) -> f64 {
    let f = d.frames();
    let all: Vec<&Alg<f64>> = f.tg.iter().chain(f.tb.iter()).collect();
    let kall: Vec<&Alg<f64>> = f.ktg.iter().chain(f.ktb.iter()).collect();
    let mut worst: f64 = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            worst = worst.max((d.pair(kall[i], kall[j]) - d.pair(all[i], all[j])).norm());
        }
    }
    worst
}

/// Coordinates of an algebra element in the union basis `[T^1..T^n, t_1..t_n]`
/// (exact only when the double is complete).
pub fn coords<D: Double, S: Real>(d: &D, x: &Alg<S>) -> Vec<Cx<S>> {
    let f = d.frames();
    let n = f.dim();
    let mut c = Vec::with_capacity(2 * n);
    for i in 0..n {
        c.push(d.pair(x, &Alg::lift(&f.tb[i])));
    }
    for i in 0..n {
        c.push(d.pair(x, &Alg::lift(&f.tg[i])));
    }
    c
}


// ---------------------------------------------------------------------------
// Anomaly matrices.

#[derive(Clone, Debug)]
pub struct AnomalyMatrices {
    pub p: DMatrix<C64>,
    pub q: DMatrix<C64>,
    pub m: DMatrix<C64>,
    pub p_inv_twist: DMatrix<C64>,
    pub q_inv_twist: DMatrix<C64>,
    pub m_inv_twist: DMatrix<C64>,
}

impl AnomalyMatrices {
    pub fn antisymmetry_residual(&self) -> f64 {
        let a = (&self.m + self.m.transpose()).map(|z| z.norm()).max();
        let b = (&self.m_inv_twist + self.m_inv_twist.transpose()).map(|z| z.norm()).max();
        a.max(b)
    }
}

/// `(P_κ)_i^j = (κ t_i, T^j)`, `(Q_κ)^{ij} = (κ T^i, T^j)`, `M_κ = Q_κ P_κ^{-1}`,
/// and the same for `κ^{-1}`.
pub fn anomaly_matrices<D: Double>(d: &D) -> Result<AnomalyMatrices, Error> {
    let f = d.frames();
    let n = f.dim();
    let build = |kt: &dyn Fn(&Alg<f64>) -> Alg<f64>| -> Result<(DMatrix<C64>, DMatrix<C64>, DMatrix<C64>), Error> {
        let ktb: Vec<Alg<f64>> = f.tb.iter().map(kt).collect();
        let ktg: Vec<Alg<f64>> = f.tg.iter().map(kt).collect();
        let p = DMatrix::from_fn(n, n, |i, j| d.pair(&ktb[i], &f.tg[j]));
        let q = DMatrix::from_fn(n, n, |i, j| d.pair(&ktg[i], &f.tg[j]));
        let pinv = p.clone().try_inverse().ok_or(Error::NotDecomposable)?;
        let m = &q * pinv;
        Ok((p, q, m))
    };
    let (p, q, m) = build(&|x| d.kappa_alg(x))?;
    let (pi, qi, mi) = build(&|x| d.kappa_inv_alg(x))?;
    Ok(AnomalyMatrices { p, q, m, p_inv_twist: pi, q_inv_twist: qi, m_inv_twist: mi })
}

// ---------------------------------------------------------------------------
// The bracket.

/// Directional derivatives entering the bracket.
#[derive(Clone, Debug)]
pub struct Grad<S> {
    /// `∇^R_{T^i} f`
    pub rg: Vec<Cx<S>>,
    /// `∇^R_{t_i} f`
    pub rb: Vec<Cx<S>>,
    /// `∇^L_{κ t_i} f`
    pub lkb: Vec<Cx<S>>,
    /// `∇^L_{κ T^i} f`
    pub lkg: Vec<Cx<S>>,
}

pub fn grad<D: Double, S: Real, F: Observable>(d: &D, f: &F, k: &Elem<S>) -> Grad<S> {
    let fr = d.frames();
    Grad {
        rg: fr.tg.iter().map(|x| right_derivative(f, x, k)).collect(),
        rb: fr.tb.iter().map(|x| right_derivative(f, x, k)).collect(),
        lkb: fr.ktb.iter().map(|x| left_derivative(f, x, k)).collect(),
        lkg: fr.ktg.iter().map(|x| left_derivative(f, x, k)).collect(),
    }
}

pub fn bracket_from_grads<S: Real>(a: &Grad<S>, b: &Grad<S>) -> Cx<S> {
    let mut s: Cx<S> = Complex::zero();
    for i in 0..a.rg.len() {
        s = s + a.rg[i] * b.rb[i] - a.lkb[i] * b.lkg[i];
    }
    s
}

/// `{f,g}_D = Σ_i ∇^R_{T^i}f ∇^R_{t_i}g − ∇^L_{κt_i}f ∇^L_{κT^i}g`.
pub fn sts_bracket<D: Double, S: Real, F: Observable, G: Observable>(
    d: &D,
    f: &F,
    g: &G,
    k: &Elem<S>,
) -> Cx<S> {
    let fr = d.frames();
    let mut s: Cx<S> = Complex::zero();
    for i in 0..fr.dim() {
        s = s + right_derivative(f, &fr.tg[i], k) * right_derivative(g, &fr.tb[i], k)
            - left_derivative(f, &fr.ktb[i], k) * left_derivative(g, &fr.ktg[i], k);
    }
    s
}

/// The bracket of two observables, itself an observable.
pub struct BracketObs<'a, D, F, G> {
    pub d: &'a D,
    pub f: &'a F,
    pub g: &'a G,
}

impl<D: Double, F: Observable, G: Observable> Observable for BracketObs<'_, D, F, G> {
    fn eval<S: Real>(&self, k: &Elem<S>) -> Cx<S> {
        sts_bracket(self.d, self.f, self.g, k)
    }
}

/// Product of two observables.
pub struct ProdObs<'a, F, G>(pub &'a F, pub &'a G);

impl<F: Observable, G: Observable> Observable for ProdObs<'_, F, G> {
    fn eval<S: Real>(&self, k: &Elem<S>) -> Cx<S> {
        self.0.eval(k) * self.1.eval(k)
    }
}

/// Constant observable.
pub struct ConstObs(pub C64);

impl Observable for ConstObs {
    fn eval<S: Real>(&self, _k: &Elem<S>) -> Cx<S> {
        lift(self.0)
    }
}

/// Jacobi residual by plain nesting of the bracket (any double, slow).
pub fn jacobi_nested<D: Double, F: Observable, G: Observable, H: Observable>(
    d: &D,
    f: &F,
    g: &G,
    h: &H,
    k: &Elem<f64>,
) -> C64 {
    let fg = BracketObs { d, f, g };
    let gh = BracketObs { d, f: g, g: h };
    let hf = BracketObs { d, f: h, g: f };
    sts_bracket(d, &fg, h, k) + sts_bracket(d, &gh, f, k) + sts_bracket(d, &hf, g, k)
}

// ---------------------------------------------------------------------------
// Right-frame bivector for complete doubles and the fast Jacobi check.

/// `Π^{ab}(K)` with `{f,g} = Π^{ab} ∇^R_{e_a} f ∇^R_{e_b} g`,
/// `e = [T^1..T^n, t_1..t_n]`.
pub fn right_frame_bivector<D: Double, S: Real>(d: &D, k: &Elem<S>) -> Vec<Cx<S>> {
    let fr = d.frames();
    let n = fr.dim();
    let m = 2 * n;
    let kinv = k.inv();
    let mut pi: Vec<Cx<S>> = vec![Complex::zero(); m * m];
    for i in 0..n {
        pi[i * m + n + i] = pi[i * m + n + i] + lift(C64::new(1.0, 0.0));
    }
    for i in 0..n {
        let a = coords(d, &kinv.ad(&Alg::lift(&fr.ktb[i])));
        let b = coords(d, &kinv.ad(&Alg::lift(&fr.ktg[i])));
        for p in 0..m {
            for q in 0..m {
                pi[p * m + q] = pi[p * m + q] - a[p] * b[q];
            }
        }
    }
    pi
}

fn union_basis(fr: &Frames) -> Vec<&Alg<f64>> {
    fr.tg.iter().chain(fr.tb.iter()).collect()
}

/// First and second right derivatives along the union basis.
fn right_jet<F: Observable>(f: &F, basis: &[&Alg<f64>], k: &Elem<f64>) -> (Vec<C64>, Vec<C64>) {
    let m = basis.len();
    let d1: Vec<C64> = basis.iter().map(|x| right_derivative(f, x, k)).collect();
    let mut h = vec![C64::zero(); m * m];
    for c in 0..m {
        let kc: Elem<Dual64> = right_curve(k, basis[c]);
        for a in 0..m {
            h[c * m + a] = tangent(right_derivative(f, basis[a], &kc));
        }
    }
    (d1, h)
}

/// Jacobi residual `{{f,g},h} + cyc` through the right-frame bivector and
/// Hessians (complete doubles only).
pub fn jacobi_residual_fast<D: Double, F: Observable, G: Observable, H: Observable>(
    d: &D,
    f: &F,
    g: &G,
    h: &H,
    k: &Elem<f64>,
) -> Result<C64, Error> {
    if !d.complete() {
        return Err(Error::Config("fast Jacobi needs a complete basis".into()));
    }
    let fr = d.frames();
    let basis = union_basis(fr);
    let m = basis.len();
    let pi = right_frame_bivector(d, k);
    let dpi: Vec<Vec<C64>> = basis
        .iter()
        .map(|x| {
            let kc: Elem<Dual64> = right_curve(k, x);
            right_frame_bivector(d, &kc).into_iter().map(tangent).collect()
        })
        .collect();
    let jf = right_jet(f, &basis, k);
    let jg = right_jet(g, &basis, k);
    let jh = right_jet(h, &basis, k);
    // d_c {a, b}
    let dbr = |a: &(Vec<C64>, Vec<C64>), b: &(Vec<C64>, Vec<C64>)| -> Vec<C64> {
        (0..m)
            .map(|c| {
                let mut s = C64::zero();
                for p in 0..m {
                    for q in 0..m {
                        let w = pi[p * m + q];
                        let dw = dpi[c][p * m + q];
                        if w == C64::zero() && dw == C64::zero() {
                            continue;
                        }
                        s += dw * a.0[p] * b.0[q]
                            + w * (a.1[c * m + p] * b.0[q] + a.0[p] * b.1[c * m + q]);
                    }
                }
                s
            })
            .collect()
    };
    let outer = |x: &[C64], y: &[C64]| -> C64 {
        let mut s = C64::zero();
        for p in 0..m {
            for q in 0..m {
                s += pi[p * m + q] * x[p] * y[q];
            }
        }
        s
    };
    let t1 = outer(&dbr(&jf, &jg), &jh.0);
    let t2 = outer(&dbr(&jg, &jh), &jf.0);
    let t3 = outer(&dbr(&jh, &jf), &jg.0);
    Ok(t1 + t2 + t3)
}

// ---------------------------------------------------------------------------
// Bivector, projectors and the symplectic form in the right-translated frame
// (a tangent vector t at K is stored as v = t K^{-1}).

/// Bivector components as pairs of frame vectors `(A_i, B_i)` with
/// `α = Σ_i A_i ⊗ B_i`.
pub fn bivector_terms<D: Double>(d: &D, k: &Elem<f64>) -> Vec<(Alg<f64>, Alg<f64>, f64)> {
    let fr = d.frames();
    let kc: Elem<f64> = k.clone();
    let mut out = Vec::with_capacity(2 * fr.dim());
    let kk = Elem::<f64>::lift(&kc);
    for i in 0..fr.dim() {
        out.push((ad_c(&kk, &fr.tg[i]), ad_c(&kk, &fr.tb[i]), 1.0));
        out.push((fr.ktb[i].clone(), fr.ktg[i].clone(), -1.0));
    }
    out
}

fn ad_c(k: &Elem<f64>, x: &Alg<f64>) -> Alg<f64> {
    k.ad(x)
}

/// Dense bivector matrix in union-basis coordinates (complete doubles).
pub fn bivector_matrix<D: Double>(d: &D, k: &Elem<f64>) -> DMatrix<C64> {
    let m = 2 * d.frames().dim();
    let mut a = DMatrix::zeros(m, m);
    for (x, y, s) in bivector_terms(d, k) {
        let cx = coords(d, &x);
        let cy = coords(d, &y);
        for p in 0..m {
            for q in 0..m {
                a[(p, q)] += cx[p] * cy[q] * s;
            }
        }
    }
    a
}

/// `α(df, dg)` with `df(v) = ∇^L_v f`.
pub fn bivector_pair<D: Double, F: Observable, G: Observable>(
    d: &D,
    f: &F,
    g: &G,
    k: &Elem<f64>,
) -> C64 {
    let mut s = C64::zero();
    for (x, y, w) in bivector_terms(d, k) {
        s += left_derivative(f, &x, k) * left_derivative(g, &y, k) * w;
    }
    s
}

/// The projectors entering the symplectic form, from the factorizations:
/// `Π_{LR̃} u = κ_*(δΛ_L Λ_L^{-1})`, `Π_{L̃R} u = κ_*(δΞ_L Ξ_L^{-1})`.
pub fn projectors_factorized<D: Double>(d: &D, k: &Elem<f64>, u: &Alg<f64>) -> (Alg<f64>, Alg<f64>) {
    let ku: Elem<Dual64> = left_curve(k, u);
    let (lam_l, _) = d.factor_l(&ku);
    let (_, xi_l) = d.factor_r(&ku);
    let a = d.kappa_alg(&Elem::right_mc(&lam_l));
    let b = d.kappa_alg(&Elem::right_mc(&xi_l));
    (a, b)
}

/// Projector pair by linear solves in the union bases (complete doubles).
/// Returns `(Π_{LR̃} u, Π_{L̃R} u, worst condition number)`.
pub fn projectors_solved<D: Double>(
    d: &D,
    k: &Elem<f64>,
    u: &Alg<f64>,
) -> Result<(Alg<f64>, Alg<f64>, f64), Error> {
    let fr = d.frames();
    let n = fr.dim();
    let m = 2 * n;
    let cu = nalgebra::DVector::from_vec(coords(d, u));
    // columns: Ad_K T^i (kernel S_L) then κ t_i (image S̃_R)
    let mut a1 = DMatrix::zeros(m, m);
    // columns: Ad_K t_i (kernel S̃_L) then κ T^i (image S_R)
    let mut a2 = DMatrix::zeros(m, m);
    for i in 0..n {
        let c1 = coords(d, &k.ad(&fr.tg[i]));
        let c2 = coords(d, &fr.ktb[i]);
        let c3 = coords(d, &k.ad(&fr.tb[i]));
        let c4 = coords(d, &fr.ktg[i]);
        for p in 0..m {
            a1[(p, i)] = c1[p];
            a1[(p, n + i)] = c2[p];
            a2[(p, i)] = c3[p];
            a2[(p, n + i)] = c4[p];
        }
    }
    let cond = |a: &DMatrix<C64>| {
        let sv = a.clone().svd(false, false).singular_values;
        sv.max() / sv.min()
    };
    let kappa = cond(&a1).max(cond(&a2));
    if !kappa.is_finite() || kappa > 1e8 {
        return Err(Error::NotDecomposable);
    }
    let s1 = a1.lu().solve(&cu).ok_or(Error::NotDecomposable)?;
    let s2 = a2.lu().solve(&cu).ok_or(Error::NotDecomposable)?;
    let mut p1 = Alg::zero(d.blocks());
    let mut p2 = Alg::zero(d.blocks());
    for i in 0..n {
        p1 = p1.add(&fr.ktb[i].scale(s1[n + i]));
        p2 = p2.add(&fr.ktg[i].scale(s2[n + i]));
    }
    Ok((p1, p2, kappa))
}

/// Condition number of the union-basis system at K.
pub fn projector_condition<D: Double>(d: &D, k: &Elem<f64>) -> f64 {
    let fr = d.frames();
    let n = fr.dim();
    let m = 2 * n;
    let mut a1 = DMatrix::zeros(m, m);
    for i in 0..n {
        let c1 = coords(d, &k.ad(&fr.tg[i]));
        let c2 = coords(d, &fr.ktb[i]);
        for p in 0..m {
            a1[(p, i)] = c1[p];
            a1[(p, n + i)] = c2[p];
        }
    }
    let sv = a1.svd(false, false).singular_values;
    sv.max() / sv.min()
}

/// `ω(t,u) = (t, (Π_{L̃R} − Π_{LR̃}) u)` in the right-translated frame.
pub fn symplectic_form<D: Double>(d: &D, k: &Elem<f64>, t: &Alg<f64>, u: &Alg<f64>) -> C64 {
    let (plr, prl) = projectors_factorized(d, k, u);
    d.pair(t, &prl.sub(&plr))
}

/// `Σ_i A_i ω(B_i, u)`, which should reproduce `u`.
pub fn bivector_omega_contraction<D: Double>(d: &D, k: &Elem<f64>, u: &Alg<f64>) -> Alg<f64> {
    let (plr, prl) = projectors_factorized(d, k, u);
    let w = prl.sub(&plr);
    let mut out = Alg::zero(d.blocks());
    for (x, y, s) in bivector_terms(d, k) {
        let c = d.pair(&y, &w) * s;
        if c != C64::zero() {
            out = out.add(&x.scale(c));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Schouten brackets of r-matrices.

/// Trivector `[r,r]_S` of a 2-tensor `r` (row-major `dim x dim`).
pub fn schouten(alg: &MatLieAlgebra, r: &[f64]) -> Vec<f64> {
    let n = alg.dim;
    let mut out = vec![0.0; n * n * n];
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    for a in 0..n {
        for b in 0..n {
            let rab = r[a * n + b];
            if rab == 0.0 {
                continue;
            }
            for c in 0..n {
                for e in 0..n {
                    let rce = r[c * n + e];
                    if rce == 0.0 {
                        continue;
                    }
                    let w = rab * rce;
                    for l in 0..n {
                        // [r12, r13]: [e_a, e_c] ⊗ e_b ⊗ e_e
                        out[idx(l, b, e)] += w * alg.c(l, a, c);
                        // [r12, r23]: e_a ⊗ [e_b, e_c] ⊗ e_e
                        out[idx(a, l, e)] += w * alg.c(l, b, c);
                        // [r13, r23]: e_a ⊗ e_c ⊗ [e_b, e_e]
                        out[idx(a, c, l)] += w * alg.c(l, b, e);
                    }
                }
            }
        }
    }
    out
}

/// `ad_X` applied to a trivector, `X = e_x`.
pub fn ad_trivector(alg: &MatLieAlgebra, x: usize, t: &[f64]) -> Vec<f64> {
    let n = alg.dim;
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut out = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let v = t[idx(a, b, c)];
                if v == 0.0 {
                    continue;
                }
                for l in 0..n {
                    let ca = alg.c(l, x, a);
                    let cb = alg.c(l, x, b);
                    let cc = alg.c(l, x, c);
                    out[idx(l, b, c)] += v * ca;
                    out[idx(a, l, c)] += v * cb;
                    out[idx(a, b, l)] += v * cc;
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct SchoutenReport {
    pub twist_difference: f64,
    pub invariance: f64,
    pub norm: f64,
}

/// Compare `[r^κ, r^κ]_S` with `[r, r]_S` and test `ad`-invariance.
/// `kappa` holds the coordinates of `κ(e_a)` as columns, in the algebra basis
/// `e = [T^1..T^n, t_1..t_n]`.
pub fn schouten_check(alg: &MatLieAlgebra, kappa: &DMatrix<f64>) -> SchoutenReport {
    let m = alg.dim;
    let n = m / 2;
    let mut r = vec![0.0; m * m];
    for i in 0..n {
        r[i * m + n + i] += 0.5;
        r[(n + i) * m + i] -= 0.5;
    }
    // r^κ = (κ ⊗ κ) r
    let mut rk = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            let v = r[a * m + b];
            if v == 0.0 {
                continue;
            }
            for p in 0..m {
                for q in 0..m {
                    rk[p * m + q] += v * kappa[(p, a)] * kappa[(q, b)];
                }
            }
        }
    }
    let s = schouten(alg, &r);
    let sk = schouten(alg, &rk);
    let diff = s.iter().zip(&sk).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mut inv: f64 = 0.0;
    for x in 0..m {
        let t = ad_trivector(alg, x, &s);
        inv = inv.max(t.iter().fold(0.0, |a, b| a.max(b.abs())));
    }
    let norm = s.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    SchoutenReport { twist_difference: diff, invariance: inv, norm }
}

/// Elementwise max norm of an algebra difference, relative to `scale`.
pub fn rel_err(a: &Alg<f64>, b: &Alg<f64>) -> f64 {
    a.sub(b).max_abs() / b.max_abs().max(1e-300)
}
