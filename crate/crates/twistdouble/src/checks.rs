//! Named numerical checks, scenarios that select them, and JSON reports.
//!
//! Every check draws its randomness from a generator seeded by the scenario
//! seed and the check id alone, so a report is reproducible bit for bit apart
//! from the wall-time fields.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bialgebra::{c_bracket_12, fun_c_check, hopf_axiom_check, ElemHopf};
use crate::double_core::{
    anomaly_matrices, bivector_omega_contraction, duality_residuals, jacobi_residual_fast, kappa_isometry_residual,
    rel_err, schouten_check, symplectic_form, Double,
};
use crate::matgroup::{random_expr, random_sl3, random_su3, Alg, Elem, Observable, C64, M3};
use crate::moments::{
    act_quasi_adjoint, factorization_round_trip, lie_realization_residual, mixed_brackets, poisson_lie_pointwise,
    subsymmetry_check, twisted_adjoint, verify_identity, BVariant, Identity, MomentMap, Side,
};
use crate::sl3::{CBracketObs, CGroup, Sl3Double, Twist};
use crate::ukmpoly::{self as ukm, Variant};
use crate::uwzw::{cartan, Generator, Label, LoopDouble, LoopGroupElement, Root, WZWConfig};
use crate::Error;

// ---------------------------------------------------------------------------
// Scenarios.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwistName {
    #[default]
    Transpose,
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DoubleParams {
    Sl3 {
        eps: f64,
        #[serde(default)]
        twist: TwistName,
    },
    Loop {
        #[serde(default = "default_algebra")]
        algebra: String,
        n_max: usize,
        k: f64,
        theta: f64,
        /// root names `a1`, `a2`, `a12`; empty means all positive roots
        #[serde(default)]
        upsilon: Vec<String>,
    },
}

fn default_algebra() -> String {
    "su3".into()
}

fn default_trials() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub double: DoubleParams,
    #[serde(default)]
    pub suite: Vec<String>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// per-check tolerance overrides
    #[serde(default)]
    pub tol: BTreeMap<String, f64>,
}

impl Scenario {
    /// TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let sc: Scenario = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn kind(&self) -> DoubleKind {
        match self.double {
            DoubleParams::Sl3 { .. } => DoubleKind::Sl3,
            DoubleParams::Loop { .. } => DoubleKind::Loop,
        }
    }

    /// Resolves every id, checks it applies to the double, and builds the double once.
    pub fn validate(&self) -> Result<(), Error> {
        build(&self.double)?;
        for id in self.suite.iter().chain(self.tol.keys()) {
            let c = lookup(id)?;
            if !c.applies_to(self.kind()) {
                return Err(Error::Config(format!("check {id} does not apply to this double")));
            }
        }
        for (id, t) in &self.tol {
            if !(t.is_finite() && *t >= 0.0) {
                return Err(Error::Domain { what: format!("tolerance of {id}"), value: *t });
            }
        }
        if let DoubleParams::Sl3 { twist: TwistName::Transpose, .. } = self.double {
            for id in &self.suite {
                if lookup(id)?.needs_stable_b {
                    return Err(Error::Config(format!("check {id} needs a twist with κ(B) = B")));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_root(s: &str) -> Result<Root, Error> {
    Root::all().into_iter().find(|r| r.name() == s).ok_or_else(|| Error::Unknown(s.to_string()))
}

enum Built {
    Sl3(Sl3Double),
    Loop(LoopDouble, Vec<Root>),
}

fn build(p: &DoubleParams) -> Result<Built, Error> {
    match p {
        DoubleParams::Sl3 { eps, twist } => {
            let t = match twist {
                TwistName::Transpose => Twist::Transpose,
                TwistName::Identity => Twist::Identity,
            };
            Ok(Built::Sl3(Sl3Double::with_twist(*eps, t)?))
        }
        DoubleParams::Loop { algebra, n_max, k, theta, upsilon } => {
            if algebra != "su3" {
                return Err(Error::Config(format!("unsupported algebra {algebra}")));
            }
            let ups = if upsilon.is_empty() {
                Root::positive()
            } else {
                upsilon.iter().map(|s| parse_root(s)).collect::<Result<_, _>>()?
            };
            Ok(Built::Loop(LoopDouble::new(WZWConfig::new(*n_max, *k, *theta)?), ups))
        }
    }
}

// ---------------------------------------------------------------------------
// Registry.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DoubleKind {
    Sl3,
    Loop,
}

#[derive(Clone, Copy, Debug)]
pub struct CheckInfo {
    pub id: &'static str,
    /// the relation under test
    pub paper_ref: &'static str,
    /// default tolerance on `sl3`, on the loop double; `None` if not applicable
    pub tol: [Option<f64>; 2],
    /// requires `κ(B) = B`
    pub needs_stable_b: bool,
}

impl CheckInfo {
    pub fn applies_to(&self, k: DoubleKind) -> bool {
        self.default_tol(k).is_some()
    }

    pub fn default_tol(&self, k: DoubleKind) -> Option<f64> {
        match k {
            DoubleKind::Sl3 => self.tol[0],
            DoubleKind::Loop => self.tol[1],
        }
    }
}

const fn c(id: &'static str, paper_ref: &'static str, sl3: Option<f64>, lp: Option<f64>, stable: bool) -> CheckInfo {
    CheckInfo { id, paper_ref, tol: [sl3, lp], needs_stable_b: stable }
}

static REGISTRY: &[CheckInfo] = &[
    c("EQ12A", "{Λ_L*x, Λ_L*y}_D = Λ_L*{x,y}_B − M_κ(∇^R x, ∇^R y)", Some(1e-6), Some(1e-6), false),
    c("EQ12B", "{Λ_R*x, Λ_R*y}_D = Λ_R*{x,y}_B − M_{κ^-1}(∇^R x, ∇^R y)", Some(1e-6), Some(1e-6), false),
    c("EQ17A", "{Γ_L*x, Γ_L*y}_D = Γ_L*{x,y}_B + M_{κ^-1}(∇^L x, ∇^L y)", Some(1e-6), Some(1e-6), true),
    c("EQ17B", "{Γ_R*x, Γ_R*y}_D = Γ_R*{x,y}_B + M_κ(∇^L x, ∇^L y)", Some(1e-6), Some(1e-6), true),
    c("EQ18A", "B_L*: {·,·}_D → {·,·}^κ_B, with the ∇^L and ∇^R anomaly terms", Some(1e-6), Some(1e-6), true),
    c("EQ18B", "B_R*: {·,·}_D → {·,·}^{κ^-1}_B, with the ∇^L and ∇^R anomaly terms", Some(1e-6), Some(1e-6), true),
    c("EQ19A-JACOBI", "{·,·}^κ_B is a Poisson-Lie bracket: Jacobi and Δ-compatibility", Some(1e-6), Some(1e-6), true),
    c("EQ19B-JACOBI", "{·,·}^{κ^-1}_B is a Poisson-Lie bracket: Jacobi and Δ-compatibility", Some(1e-6), Some(1e-6), true),
    c("EQ4", "κ = Id: M_κ = 0 and {Λ_L*x, Λ_L*y}_D = Λ_L*{x,y}_B", Some(1e-8), None, false),
    c("b-commutators", "[t_i, t_j] of Lie(B) against the listed structure constants", Some(1e-12), None, false),
    c("bivector-duality", "α(·, ω(·,u)) = u, relative error", Some(1e-8), Some(1e-6), false),
    c("c-bracket-formula", "{ξ1,ξ2}_C = (1 − e^{−εξ3})/ε, and ρ pulls {·,·}_C back to {·,·}_B", Some(1e-10), None, false),
    c("chiral-parametrization", "(χ,g) = (g_L μ g_L^-1 + k∂g_L g_L^-1, g_L g_R^-1): J_R and the T_K ambiguity", None, Some(1e-10), false),
    c("counit-annihilation", "ε({x,y}) = 0 on Fun(C) generators", Some(0.0), None, false),
    c("duality", "(T^i, t_j) = δ^i_j, isotropy of G and B, κ isometric", Some(1e-12), Some(1e-10), false),
    c("factorization", "K = κ(Λ_L) Ξ_R^-1 = κ(Ξ_L) Λ_R^-1 reassembly", Some(1e-10), Some(1e-10), false),
    c("first-class-PL", "{Φ,Φ'} and {H,Φ} on P_L: J_L^γ + e^{−⟨γ,u(J_L)⟩} J_R^γ, J_L^ν + J_R^ν", None, Some(1e-8), false),
    c("first-class-PR", "{Φ,Φ'} and {H,Φ} on P_R: J_R^γ + e^{−⟨γ,u(J_R)⟩} J_L^γ, J_L^ν + J_R^ν", None, Some(1e-8), false),
    c("fun-b-poisson-lie", "Δ{x,y}_B = {x',y'} ⊗ x''y'' + x'y' ⊗ {x'',y''} and group-law axioms on Fun(B)", Some(1e-8), None, false),
    c("fun-c-hopf", "Fun(C) coproduct, antipode, counit and Poisson-Lie compatibility", Some(1e-10), None, false),
    c("gauge-condition", "(γ∘U)(T_S^⊥) = 0 for γ ∈ Υ", None, Some(1e-12), false),
    c("gauged-wzw-limit", "u = 0: ω̃ equals d(μ|θ_L − θ_R) − (k/2)θ_L∧∂θ_L + (k/2)θ_R∧∂θ_R", None, Some(1e-12), false),
    c("hamiltonian-invariance", "H = −(1/2k)[(J_L|J_L) + (J_R|J_R)] under the lifted actions, constant h", None, Some(1e-10), false),
    c("improper-subsymmetry", "H-actions preserve M; ν_R = ρ∘Λ_R realizes the C-symmetry and is Poisson", Some(1e-6), None, false),
    c("jacobi-sts", "Jacobi identity of the Semenov-Tian-Shansky bracket", Some(1e-7), None, false),
    c("km-jacobi", "Jacobi identity of the u-deformed current algebra on all in-band triples", None, Some(1e-12), false),
    c("km-table", "u-deformed current algebra: abstract table against the geometric bracket", None, Some(1e-6), false),
    c("mixed-commute", "{Λ_L*x, Γ_R*y} = {Λ_R*x, Γ_L*y} = 0", Some(1e-8), Some(1e-8), false),
    c("omega-tilde", "ω̃_u in chiral variables equals the pullback of ω_u", None, Some(1e-6), false),
    c("quasi-adjoint-composition", "(h1h2)▷K = h1▷(h2▷K) and e▷K = K for the quasi-adjoint actions", Some(1e-8), Some(1e-6), true),
    c("realization", "[w(y), w(x)] f = w({x,y}_B) f for Λ_L and Λ_R (loop: at N_max ≤ 3)", Some(1e-6), Some(1e-6), false),
    c("reduction-translation", "{P,Φ} on P_L and P_R for the σ-translation generator P", None, Some(1e-8), false),
    c("schouten", "[r^κ, r^κ]_S = [r, r]_S and ad-invariance", Some(1e-10), None, false),
    c("slice-variants", "left and right slices coincide and lie in both first-class surfaces", None, Some(1e-12), false),
    c("subsymmetry", "N an ideal, Lie(H) = N^⊥ ∩ Lie(G), P_κ(Lie H) ⊂ Lie N, no anomaly of ν_R", Some(1e-8), None, false),
    c("symplectic-explicit", "explicit ω against the projector form of the symplectic structure", Some(1e-8), Some(1e-8), false),
    c("torus-invariance", "ω̃_u invariant under (g_L, g_R) → (t g_L, t g_R), t ∈ T_S, on J_L^ν + J_R^ν = 0", None, Some(1e-8), false),
    c("twisted-adjoint-collapse", "U = 0: the lifted actions reduce to the twisted adjoint action", None, Some(1e-8), false),
];

/// All checks ordered by id.
pub fn registry() -> &'static [CheckInfo] {
    REGISTRY
}

pub fn lookup(id: &str) -> Result<&'static CheckInfo, Error> {
    REGISTRY.iter().find(|c| c.id == id).ok_or_else(|| Error::Unknown(id.to_string()))
}

/// `id  sl3-tol  loop-tol  relation`, one line per check.
pub fn list_checks() -> String {
    let f = |t: Option<f64>| t.map_or("-".to_string(), |t| format!("{t:e}"));
    let mut s = format!("{:<26} {:>8} {:>8}  {}\n", "id", "sl3", "loop", "relation");
    for c in REGISTRY {
        s.push_str(&format!("{:<26} {:>8} {:>8}  {}\n", c.id, f(c.tol[0]), f(c.tol[1]), c.paper_ref));
    }
    s
}

// ---------------------------------------------------------------------------
// Reports.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: String,
    pub paper_ref: String,
    pub residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<CheckResult>,
    pub summary: Summary,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.summary.failed == 0
    }
}

fn seed_for(seed: u64, id: &str) -> u64 {
    // FNV-1a over the id, mixed with the scenario seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Runs the suite in id order. `tol_scale` multiplies every tolerance.
pub fn run_scenario(sc: &Scenario, tol_scale: f64) -> Result<Report, Error> {
    sc.validate()?;
    let built = build(&sc.double)?;
    let mut ids: Vec<&String> = sc.suite.iter().collect();
    ids.sort();
    ids.dedup();
    let mut checks = Vec::new();
    for id in ids {
        let info = lookup(id)?;
        let tol = sc.tol.get(id.as_str()).copied().or(info.default_tol(sc.kind())).unwrap() * tol_scale;
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for(sc.seed, id));
        let t = Instant::now();
        let residual = run_check(&built, id, sc.trials.max(1), &mut rng)?;
        let wall_time = t.elapsed().as_secs_f64();
        // NaN never passes
        let verdict = if residual <= tol { Verdict::Pass } else { Verdict::Fail };
        checks.push(CheckResult { id: id.clone(), paper_ref: info.paper_ref.into(), residual, tolerance: tol, verdict, wall_time });
    }
    let passed = checks.iter().filter(|c| c.verdict == Verdict::Pass).count();
    let summary = Summary { total: checks.len(), passed, failed: checks.len() - passed };
    Ok(Report { checks, summary })
}

fn run_check(b: &Built, id: &str, trials: usize, rng: &mut ChaCha8Rng) -> Result<f64, Error> {
    match b {
        Built::Sl3(d) => sl3_check(d, id, trials, rng),
        Built::Loop(d, ups) => loop_check(d, ups, id, trials, rng),
    }
}

fn identity_of(id: &str) -> Option<Identity> {
    Some(match id {
        "EQ12A" => Identity::LeftPullbackAnomaly,
        "EQ12B" => Identity::RightPullbackAnomaly,
        "EQ17A" => Identity::LeftTwistedPullback,
        "EQ17B" => Identity::RightTwistedPullback,
        "EQ18A" => Identity::LeftQuasiMoment,
        "EQ18B" => Identity::RightQuasiMoment,
        "EQ19A-JACOBI" => Identity::KappaBracketJacobi,
        "EQ19B-JACOBI" => Identity::KappaInvBracketJacobi,
        _ => return None,
    })
}

fn maxf(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

/// Identity residuals over points and coordinate pairs. For the Jacobi
/// identities the points are taken in `B`.
fn identity_residual<D: Double, X: Observable>(
    d: &D,
    id: Identity,
    pts: &[Elem<f64>],
    bpts: &[Elem<f64>],
    xs: &[X],
    pairs: &[(usize, usize, usize)],
) -> Result<f64, Error> {
    let am = anomaly_matrices(d)?;
    let jac = matches!(id, Identity::KappaBracketJacobi | Identity::KappaInvBracketJacobi);
    let mut worst: f64 = 0.0;
    for (n, k) in pts.iter().enumerate() {
        for &(i, j, l) in pairs {
            let (k1, k2) = if jac { (&bpts[n], &bpts[(n + 1) % bpts.len()]) } else { (k, k) };
            let r = verify_identity(d, id, &am, &xs[i], &xs[j], &xs[l], k1, k2)?;
            worst = worst.max(r.residual);
        }
    }
    Ok(worst)
}

fn bivector_residual<D: Double>(d: &D, pts: &[(Elem<f64>, Alg<f64>)]) -> f64 {
    maxf(pts.iter().map(|(k, u)| rel_err(&bivector_omega_contraction(d, k, u), u)))
}

// ---------------------------------------------------------------------------
// sl3 checks.

fn sl3_tangent<R: Rng>(rng: &mut R) -> Alg<f64> {
    Alg { phi: vec![random_sl3(rng, 1.0)], alpha: vec![random_sl3(rng, 1.0)] }
}

fn sl3_check(d: &Sl3Double, id: &str, trials: usize, rng: &mut ChaCha8Rng) -> Result<f64, Error> {
    let xs = d.dual_coordinates();
    let leaf = |rng: &mut ChaCha8Rng| d.sample_leaf(rng, 0.5).k;
    if let Some(ident) = identity_of(id) {
        let pts: Vec<Elem<f64>> = (0..trials).map(|_| leaf(rng)).collect();
        let bpts: Vec<Elem<f64>> = (0..trials).map(|_| d.sample_b(rng, 0.5)).collect();
        return identity_residual(d, ident, &pts, &bpts, &xs, &[(0, 2, 1), (6, 3, 4), (2, 5, 7), (1, 7, 0)]);
    }
    Ok(match id {
        "duality" => {
            let (a, b, c) = duality_residuals(d);
            maxf([a, b, c, kappa_isometry_residual(d)])
        }
        "b-commutators" => d.b_commutator_residual()?,
        "jacobi-sts" => {
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let k = leaf(rng);
                let (f, g, h) = (random_expr(rng, 2), random_expr(rng, 2), random_expr(rng, 2));
                w = w.max(jacobi_residual_fast(d, &f, &g, &h, &k)?.norm());
            }
            w
        }
        "EQ4" => {
            let d0 = Sl3Double::with_twist(d.eps, Twist::Identity)?;
            let am = anomaly_matrices(&d0)?;
            let mut w = maxf(am.m.iter().map(|z| z.norm()));
            for _ in 0..trials {
                let k = leaf(rng);
                for (i, j) in [(6, 2), (0, 3), (1, 5)] {
                    let r = verify_identity(&d0, Identity::PoissonMap, &am, &xs[i], &xs[j], &xs[0], &k, &k)?;
                    w = w.max(r.residual);
                }
            }
            w
        }
        "bivector-duality" => {
            let pts: Vec<_> = (0..trials).map(|_| (leaf(rng), sl3_tangent(rng))).collect();
            bivector_residual(d, &pts)
        }
        "symplectic-explicit" => {
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let k = leaf(rng);
                let (t, u) = (sl3_tangent(rng), sl3_tangent(rng));
                let a = d.omega_explicit(&k, &t, &u);
                let b = d.omega_pullback(&k, &t, &u)?;
                let c = symplectic_form(d, &k, &t, &u).re;
                w = w.max((a - b).abs().max((a - c).abs()) / (1.0 + b.abs()));
            }
            w
        }
        "factorization" => {
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                w = w.max(factorization_round_trip(d, &leaf(rng))?);
            }
            w
        }
        "realization" => {
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let k = leaf(rng);
                let f = random_expr(rng, 2);
                for (i, j) in [(0, 2), (6, 3)] {
                    for mu in [MomentMap::LambdaL, MomentMap::LambdaR] {
                        w = w.max(lie_realization_residual(d, mu, &xs[i], &xs[j], &f, &k));
                    }
                }
            }
            w
        }
        "mixed-commute" => {
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let k = leaf(rng);
                for i in 0..8 {
                    let j = rng.random_range(0..8);
                    let (a, b) = mixed_brackets(d, &xs[i], &xs[j], &k);
                    w = w.max(a.norm()).max(b.norm());
                }
            }
            w
        }
        "quasi-adjoint-composition" => {
            let mut w: f64 = 0.0;
            let h = |rng: &mut ChaCha8Rng| Elem { chi: vec![M3::zero()], g: vec![random_sl3(rng, 0.2).expm()] };
            for _ in 0..trials {
                let k = leaf(rng);
                let (h1, h2) = (h(rng), h(rng));
                for side in [Side::L, Side::R] {
                    let a = act_quasi_adjoint(d, side, &h1.mul(&h2), &k)?;
                    let b = act_quasi_adjoint(d, side, &h1, &act_quasi_adjoint(d, side, &h2, &k)?)?;
                    let e = act_quasi_adjoint(d, side, &Elem::identity(1), &k)?;
                    w = w.max(a.dist(&b)).max(e.dist(&k));
                }
            }
            w
        }
        "subsymmetry" => {
            let fr = d.frames();
            let ideal: Vec<Alg<f64>> = Sl3Double::ideal_n().iter().map(|&i| fr.tb[i].clone()).collect();
            let r = subsymmetry_check(d, &ideal);
            let lie_h = Sl3Double::lie_h();
            // Lie(H) must be spanned by the expected T^i
            let shape = if r.h_basis.len() == lie_h.len() { 0.0 } else { 1.0 };
            let outside = maxf(r.h_basis.iter().flat_map(|c| {
                c.iter().enumerate().filter(|(i, _)| !lie_h.contains(i)).map(|(_, v)| v.abs()).collect::<Vec<_>>()
            }));
            maxf([r.ideal, r.projector, r.anomaly, shape, outside])
        }
        "improper-subsymmetry" => {
            let r = d.improper_subsymmetry_check(rng, 10 * trials);
            maxf([r.realization, r.moment, r.c_bracket, r.action_violations as f64])
        }
        "schouten" => {
            let r = schouten_check(&d.lie_d()?, &d.kappa_matrix());
            r.twist_difference.max(r.invariance)
        }
        "fun-c-hopf" => {
            let c = CGroup { eps: d.eps };
            let pairs: Vec<_> = (0..4 * trials).map(|_| (c.sample(rng, 1.0), c.sample(rng, 1.0))).collect();
            let triples: Vec<_> = pairs.iter().map(|(a, b)| (*a, *b, c.mul(a, b))).collect();
            fun_c_check(&c, &pairs).max().max(hopf_axiom_check(&c, &triples).max())
        }
        "counit-annihilation" => {
            let c = CGroup { eps: d.eps };
            let pairs: Vec<_> = (0..trials).map(|_| (c.sample(rng, 1.0), c.sample(rng, 1.0))).collect();
            fun_c_check(&c, &pairs).counit_bracket
        }
        "c-bracket-formula" => {
            let c = CGroup { eps: d.eps };
            let xi = |j| crate::bialgebra::CFun::xi(d.eps, j);
            let br = xi(0).bracket(&xi(1));
            let rho = d.rho_coordinates();
            let cb = CBracketObs { eps: d.eps };
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let x = c.sample(rng, 1.0);
                w = w.max((br.eval(&x) - c_bracket_12(&c, &x)).abs());
                let b = d.sample_b(rng, 0.5);
                let v = crate::moments::b_bracket(d, &rho[0], &rho[1], &b) - cb.eval(&b);
                w = w.max(v.norm()).max((cb.eval(&b).re - c_bracket_12(&c, &c.rho(&b))).abs());
            }
            w
        }
        "fun-b-poisson-lie" => {
            let h = ElemHopf { blocks: 1, catalog: &xs };
            let mut w: f64 = 0.0;
            let mut triples = Vec::new();
            for _ in 0..trials {
                let (b1, b2) = (d.sample_b(rng, 0.5), d.sample_b(rng, 0.5));
                for (i, j) in [(0, 2), (6, 3), (1, 7)] {
                    w = w.max(poisson_lie_pointwise(d, BVariant::Plain, &xs[i], &xs[j], &b1, &b2));
                }
                let b3 = d.sample_b(rng, 0.5);
                triples.push((b1, b2, b3));
            }
            w.max(hopf_axiom_check(&h, &triples).max())
        }
        _ => return Err(Error::Config(format!("check {id} does not apply to sl3"))),
    })
}

// ---------------------------------------------------------------------------
// Loop-double checks.

fn loop_check(d: &LoopDouble, ups: &[Root], id: &str, trials: usize, rng: &mut ChaCha8Rng) -> Result<f64, Error> {
    let cfg = &d.cfg;
    if let Some(ident) = identity_of(id) {
        let xs = [
            d.coordinate(Label::Root(Root::new(0, 1)), 1),
            d.coordinate(Label::Root(Root::new(1, 2)), 0),
            d.coordinate(Label::Cartan(0), -1),
            d.coordinate(Label::Root(Root::new(2, 0)), -1),
        ];
        let pts: Vec<Elem<f64>> = (0..trials).map(|_| d.sample_point(rng, 0.5)).collect();
        let bpts: Vec<Elem<f64>> = (0..trials).map(|_| d.sample_b(rng, 0.5)).collect();
        let pairs: &[(usize, usize, usize)] = if matches!(ident, Identity::KappaBracketJacobi | Identity::KappaInvBracketJacobi) {
            &[(0, 1, 3)]
        } else {
            &[(0, 1, 0), (0, 3, 0), (2, 0, 0), (1, 3, 0)]
        };
        return identity_residual(d, ident, &pts, &bpts, &xs, pairs);
    }
    let chiral_tangents = |rng: &mut ChaCha8Rng| (ukm::sample_chiral_tangent(d, rng, 0.5), ukm::sample_chiral_tangent(d, rng, 0.5));
    Ok(match id {
        "duality" => {
            let (a, b, c) = duality_residuals(d);
            maxf([a, b, c, kappa_isometry_residual(d)])
        }
        "bivector-duality" => {
            let pts: Vec<_> = (0..trials).map(|_| (d.sample_point(rng, 0.5), d.sample_tangent(rng, 2, 0.5))).collect();
            bivector_residual(d, &pts)
        }
        "symplectic-explicit" => {
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let k = d.sample_point(rng, 0.5);
                let (t, u) = (d.sample_tangent(rng, 2, 0.5), d.sample_tangent(rng, 2, 0.5));
                let a = symplectic_form(d, &k, &t, &u).re;
                w = w.max((a - d.omega_u(&k, &t, &u)).abs() / (1.0 + a.abs()));
            }
            w
        }
        "factorization" => {
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                w = w.max(factorization_round_trip(d, &d.sample_point(rng, 0.6))?);
            }
            w
        }
        "realization" => {
            // nested second derivatives over every frame: capped at N_max = 3
            let d = &LoopDouble::new(WZWConfig::new(cfg.n_max.min(3), cfg.k, cfg.theta())?);
            let x = d.coordinate(Label::Root(Root::new(0, 1)), 1);
            let z = d.coordinate(Label::Root(Root::new(1, 2)), 0);
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let k = d.sample_point(rng, 0.3);
                let y = crate::uwzw::LoopField::random_su3(rng, d.cfg.n_max, 2, 1.0).to_grid(d.sigma());
                let phi = crate::uwzw::TraceObs { d, y };
                for mu in [MomentMap::LambdaL, MomentMap::LambdaR] {
                    w = w.max(lie_realization_residual(d, mu, &x, &z, &phi, &k));
                }
            }
            w
        }
        "mixed-commute" => {
            let x = d.coordinate(Label::Root(Root::new(0, 1)), 1);
            let zs = [d.coordinate(Label::Root(Root::new(1, 2)), 0), d.coordinate(Label::Cartan(1), -1)];
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let k = d.sample_point(rng, 0.5);
                for z in &zs {
                    let (a, b) = mixed_brackets(d, &x, z, &k);
                    w = w.max(a.norm()).max(b.norm());
                }
            }
            w
        }
        "quasi-adjoint-composition" => {
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let k = d.sample_point(rng, 0.5);
                let (h1, h2) = (d.sample_loop(rng, 0.4), d.sample_loop(rng, 0.4));
                for side in [Side::L, Side::R] {
                    let a = act_quasi_adjoint(d, side, &h1.mul(&h2).as_elem(), &k)?;
                    let b = act_quasi_adjoint(d, side, &h1.as_elem(), &act_quasi_adjoint(d, side, &h2.as_elem(), &k)?)?;
                    let e = d.act_35(side, &LoopGroupElement::identity(d.nsigma()), &k);
                    let g = d.act_35(side, &h1, &k);
                    w = w.max(a.dist(&b)).max(e.dist(&k)).max(a.dist(&d.act_35(side, &h1.mul(&h2), &k)));
                    w = w.max(g.dist(&act_quasi_adjoint(d, side, &h1.as_elem(), &k)?));
                }
            }
            w
        }
        "twisted-adjoint-collapse" => {
            let d0 = LoopDouble::new(WZWConfig::new(cfg.n_max, cfg.k, 0.0)?);
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let k = d0.sample_point(rng, 0.5);
                let h = d0.sample_loop(rng, 0.4);
                for side in [Side::L, Side::R] {
                    w = w.max(d0.act_35(side, &h, &k).dist(&twisted_adjoint(&d0, &h.as_elem(), &k)));
                }
            }
            w
        }
        "hamiltonian-invariance" => {
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let k = d.sample_point(rng, 0.6);
                let h0 = d.hamiltonian(&k);
                for side in [Side::L, Side::R] {
                    let h = LoopGroupElement::constant(d.nsigma(), random_su3(rng, 0.8).expm());
                    w = w.max((d.hamiltonian(&d.act_35(side, &h, &k)) - h0).abs());
                }
            }
            w
        }
        "km-table" => {
            let band = cfg.n_max / 2;
            let gens = Generator::all(band);
            let mut w: f64 = 0.0;
            for _ in 0..trials.min(2) {
                let k = d.sample_point(rng, 0.4);
                let table = d.bracket_table(&k, &gens);
                let at = ukm::assignment_at(d, &k, cfg.n_max)?;
                for (i, a) in gens.iter().enumerate() {
                    for (j, b) in gens.iter().enumerate() {
                        let p = ukm::generator_bracket(cfg, a, b, cfg.n_max)?;
                        w = w.max((p.eval(cfg, &at) - table[(i, j)]).norm());
                    }
                }
            }
            w
        }
        "km-jacobi" => ukm::jacobi_all_triples(cfg, 4)?,
        "gauge-condition" => ukm::gauge_defect(cfg, ups),
        "first-class-PL" | "first-class-PR" | "reduction-translation" => {
            let variants: &[Variant] = match id {
                "first-class-PL" => &[Variant::FirstClassLeft],
                "first-class-PR" => &[Variant::FirstClassRight],
                _ => &[Variant::FirstClassLeft, Variant::FirstClassRight],
            };
            let band = 4;
            let ham = if id == "reduction-translation" { ukm::momentum_poly(cfg, band) } else { ukm::hamiltonian_poly(cfg, band) };
            let mut w: f64 = 0.0;
            for v in variants {
                let cs = ukm::build_constraints(cfg, ups, *v, band)?;
                let pts: Vec<ukm::Assignment> = (0..10 * trials).map(|_| cs.sample(rng)).collect();
                w = w.max(ukm::first_class_residual(&cs, &ham, &pts)?.max());
            }
            w
        }
        "slice-variants" => {
            let band = 4;
            let sl = ukm::build_constraints(cfg, ups, Variant::SliceLeft, band)?;
            let sr = ukm::build_constraints(cfg, ups, Variant::SliceRight, band)?;
            let fl = ukm::build_constraints(cfg, ups, Variant::FirstClassLeft, band)?;
            let fr = ukm::build_constraints(cfg, ups, Variant::FirstClassRight, band)?;
            let mut w: f64 = if sl.constraints == sr.constraints { 0.0 } else { 1.0 };
            for _ in 0..trials {
                let p = sl.sample(rng);
                w = w.max(sr.surface_residual(&p)).max(fl.surface_residual(&p)).max(fr.surface_residual(&p));
            }
            w
        }
        "chiral-parametrization" => {
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let cp = ukm::sample_chiral(d, rng, 0.4);
                let k = ukm::parametrize_44(d, &cp)?;
                let want = ukm::chiral_j_r(d, &cp.g_r.g, &cp.mu());
                w = w.max(maxf(d.j_right(&k).iter().zip(&want).map(|(a, b)| (*a - *b).max_abs())));
                let x = (cartan(0).scale_re(rng.random_range(-1.0..1.0)) + cartan(1).scale_re(rng.random_range(-1.0..1.0)))
                    .scale(C64::new(0.0, 1.0))
                    .expm();
                let right = |g: &LoopGroupElement| LoopGroupElement { g: g.g.iter().map(|g| *g * x).collect() };
                let cp2 = ukm::ChiralPoint { g_l: right(&cp.g_l), g_r: right(&cp.g_r), h: cp.h };
                w = w.max(ukm::parametrize_44(d, &cp2)?.dist(&k));
            }
            w
        }
        "omega-tilde" => {
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let cp = ukm::sample_chiral(d, rng, 0.4);
                let (t, u) = chiral_tangents(rng);
                let a = ukm::omega_tilde_u(d, &cp, &t, &u);
                w = w.max((a - ukm::omega_u_pullback(d, &cp, &t, &u)?).abs()).max(ukm::omega_tilde_u(d, &cp, &t, &t).abs());
            }
            w
        }
        "torus-invariance" => {
            let ts = ukm::torus_s(ups);
            let tmat = |c: &[f64]| {
                ts.iter().zip(c).fold(M3::zero(), |m, (t, c)| m + (cartan(0).scale_re(t[0]) + cartan(1).scale_re(t[1])).scale_re(*c))
                    .scale(C64::new(0.0, 1.0))
            };
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let (cp, tv) = ukm::sample_torus_surface(d, rng, ups, 0.4, 2)?;
                let mut r = || (0..ts.len()).map(|_| rng.random_range(-0.5..0.5)).collect::<Vec<f64>>();
                let (x, t1, t2) = (tmat(&r()), tmat(&r()), tmat(&r()));
                let (cp2, tv2) = ukm::torus_transform(&cp, &x, &[(tv[0].clone(), t1), (tv[1].clone(), t2)]);
                let a = ukm::omega_tilde_u(d, &cp, &tv[0], &tv[1]);
                w = w.max((a - ukm::omega_tilde_u(d, &cp2, &tv2[0], &tv2[1])).abs());
            }
            w
        }
        "gauged-wzw-limit" => {
            let d0 = LoopDouble::new(WZWConfig::new(cfg.n_max, cfg.k, 0.0)?);
            let mut w: f64 = 0.0;
            for _ in 0..trials {
                let cp = ukm::sample_chiral(&d0, rng, 0.4);
                let (t, u) = (ukm::sample_chiral_tangent(&d0, rng, 0.5), ukm::sample_chiral_tangent(&d0, rng, 0.5));
                let (free, uw) = ukm::omega_tilde_parts(&d0, &cp, &t, &u);
                w = w.max(uw.abs()).max((free - ukm::omega_gauged_wzw(&d0, &cp, &t, &u)).abs());
            }
            w
        }
        _ => return Err(Error::Config(format!("check {id} does not apply to the loop double"))),
    })
}
