use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use twistdouble::ukmpoly::*;
use twistdouble::uwzw::{Generator, LoopDouble, Root, WZWConfig};

#[test]
fn polynomial_jacobi_all_triples() {
    let t = Instant::now();
    let r = jacobi_all_triples(&WZWConfig::new(4, 1.0, 0.3).unwrap(), 4).unwrap();
    println!("jacobi {r:e} in {:?}", t.elapsed());
    assert!(r < 1e-12, "{r}");
}

#[test]
fn first_class_band_four() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for (theta, ups) in [(0.0, vec![Root::new(0, 1)]), (0.3, Root::positive())] {
        let c = WZWConfig::new(4, 1.0, theta).unwrap();
        for v in [Variant::FirstClassLeft, Variant::FirstClassRight] {
            let t = Instant::now();
            let cs = build_constraints(&c, &ups, v, 4).unwrap();
            let pts: Vec<Assignment> = (0..50).map(|_| cs.sample(&mut rng)).collect();
            let p = first_class_residual(&cs, &momentum_poly(&c, 4), &pts).unwrap();
            let h = first_class_residual(&cs, &hamiltonian_poly(&c, 4), &pts).unwrap();
            println!("{v:?} θ={theta} P {p:?} H {h:?} in {:?}", t.elapsed());
            assert!(p.max() < 1e-8);
            assert!(h.constraints < 1e-8 && h.hamiltonian > 0.1);
        }
    }
}

#[test]
fn abstract_table_matches_geometry() {
    let t = Instant::now();
    let d = LoopDouble::new(WZWConfig::new(8, 1.0, 0.3).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let k = d.sample_point(&mut rng, 0.4);
    let band = 4;
    let gens = Generator::all(band);
    let table = d.bracket_table(&k, &gens);
    let at = assignment_at(&d, &k, 8).unwrap();
    let mut worst: f64 = 0.0;
    for (i, a) in gens.iter().enumerate() {
        for (j, b) in gens.iter().enumerate() {
            let p = generator_bracket(&d.cfg, a, b, 8).unwrap();
            worst = worst.max((p.eval(&d.cfg, &at) - table[(i, j)]).norm());
        }
    }
    println!("table {worst:e} over {} generators in {:?}", gens.len(), t.elapsed());
    assert!(worst < 1e-6);
}
