use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_twistdouble"))
}

fn scenario(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("twistdouble-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn report(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

const SL3: &str = "[double]\nkind = \"sl3\"\neps = 1.0\n";

#[test]
fn empty_suite_passes() {
    let p = scenario("empty.toml", &format!("seed = 1\n{SL3}"));
    let o = run(&["run", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    assert_eq!(r["checks"].as_array().unwrap().len(), 0);
    assert_eq!(r["summary"]["total"], 0);
}

#[test]
fn duality_and_sts_jacobi_on_sl3() {
    let p = scenario("two.toml", &format!("seed = 42\nsuite = [\"duality\", \"jacobi-sts\"]\n{SL3}"));
    let o = run(&["run", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&o);
    let checks = r["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 2);
    for c in checks {
        assert_eq!(c["verdict"], "pass");
        for f in ["id", "paper_ref", "residual", "tolerance", "verdict", "wall_time"] {
            assert!(c.get(f).is_some(), "{f}");
        }
    }
    assert_eq!(r["summary"]["passed"], 2);
}

#[test]
fn same_seed_same_residuals() {
    let p = scenario("det.toml", &format!("seed = 9\ntrials = 3\nsuite = [\"EQ12A\", \"jacobi-sts\", \"improper-subsymmetry\"]\n{SL3}"));
    let strip = |mut v: serde_json::Value| {
        for c in v["checks"].as_array_mut().unwrap() {
            c.as_object_mut().unwrap().remove("wall_time");
        }
        serde_json::to_string(&v).unwrap()
    };
    let a = strip(report(&run(&["run", p.to_str().unwrap()])));
    let b = strip(report(&run(&["run", p.to_str().unwrap()])));
    assert_eq!(a, b);
    let c = strip(report(&run(&["run", p.to_str().unwrap(), "--seed", "10"])));
    assert_ne!(a, c);
}

#[test]
fn failures_and_errors_set_the_exit_code() {
    let p = scenario("strict.toml", &format!("suite = [\"jacobi-sts\"]\n{SL3}"));
    let o = run(&["run", p.to_str().unwrap(), "--tol-scale", "1e-30"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(&o)["checks"][0]["verdict"], "fail");
    let p = scenario("unknown.toml", &format!("suite = [\"no-such-check\"]\n{SL3}"));
    assert_eq!(run(&["run", p.to_str().unwrap()]).status.code(), Some(2));
    let p = scenario("broken.toml", "suite = [");
    assert_eq!(run(&["run", p.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(&["run", "/nonexistent/scenario.toml"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn json_scenario_and_out_file() {
    let p = scenario("s.json", r#"{"double": {"kind": "sl3", "eps": 0.5}, "suite": ["b-commutators"], "seed": 3}"#);
    let out = p.with_extension("report.json");
    let o = run(&["run", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["checks"][0]["id"], "b-commutators");
}

fn listed_ids() -> Vec<(String, bool, bool)> {
    let o = run(&["list-checks"]);
    assert_eq!(o.status.code(), Some(0));
    String::from_utf8(o.stdout)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[0].to_string(), f[1] != "-", f[2] != "-")
        })
        .collect()
}

#[test]
fn list_contains_identity_tags() {
    let ids: Vec<String> = listed_ids().into_iter().map(|x| x.0).collect();
    for id in ["EQ4", "EQ12A", "EQ12B", "EQ17A", "EQ18B", "EQ19A-JACOBI", "first-class-PL", "first-class-PR", "jacobi-sts"] {
        assert!(ids.iter().any(|x| x == id), "{id}");
    }
}

#[test]
fn every_listed_id_is_accepted() {
    // sl3 entries are run; loop entries are parsed and validated, since
    // running all of them takes minutes
    for (id, sl3, lp) in listed_ids() {
        if sl3 {
            let p = scenario(&format!("{id}.toml"), &format!("trials = 1\nsuite = [\"{id}\"]\n[double]\nkind = \"sl3\"\neps = 1.0\ntwist = \"identity\"\n"));
            let o = run(&["run", p.to_str().unwrap()]);
            assert_ne!(o.status.code(), Some(2), "{id}: {}", String::from_utf8_lossy(&o.stderr));
        }
        if lp {
            let body = format!("suite = [\"{id}\"]\n[double]\nkind = \"loop\"\nn_max = 2\nk = 1.0\ntheta = 0.3\n");
            twistdouble::checks::Scenario::parse(&body).unwrap_or_else(|e| panic!("{id}: {e}"));
        }
    }
}
