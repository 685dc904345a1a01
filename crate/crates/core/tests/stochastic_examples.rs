use crn_core::detbal::{solve_complex_balanced, solve_rvb, RvbOptions};
use crn_core::model::{DetState, DiscreteState, MassActionSystem, Measure, Status};
use crn_core::parser::parse_network;
use crn_core::stoch::{
    classify_measure, communicating_class, is_stationary_measure, poisson_product, stationary_distribution,
    transitions, StateBox,
};

fn corpus(name: &str) -> MassActionSystem {
    let path = format!("{}/../../corpus/{name}.crn", env!("CARGO_MANIFEST_DIR"));
    parse_network(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn ds(v: &[i64]) -> DiscreteState {
    DiscreteState::new(v.to_vec())
}

fn solve(sys: &MassActionSystem, seed: &[i64], domain: &StateBox) -> Measure {
    let comp = communicating_class(sys, &ds(seed), domain).unwrap();
    stationary_distribution(sys, &comp, true).unwrap().measure
}

fn tv(a: &Measure, b: &Measure) -> f64 {
    let mut keys: Vec<&DiscreteState> = a.support().chain(b.support()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys.iter().map(|x| (a.get(x) - b.get(x)).abs()).sum::<f64>()
}

#[test]
fn srvb_transitions_at_one() {
    let sys = corpus("stochastic_rvb");
    let t = transitions(&sys, &ds(&[1]));
    let up: f64 = t.iter().filter(|t| t.target.0[0] == 2).map(|t| t.rate).sum();
    assert_eq!(t.iter().filter(|t| t.target.0[0] == 2).count(), 2);
    assert_eq!(up, 2.0);
    let down: f64 = t.iter().filter(|t| t.target.0[0] == 0).map(|t| t.rate).sum();
    assert_eq!(down, 1.0);
}

#[test]
fn srvb_stationary_matches_closed_form() {
    let sys = corpus("stochastic_rvb");
    let domain = StateBox::cube(1, 30);
    let pi = solve(&sys, &[0], &domain);
    let mut w = vec![1.0f64];
    for j in 0..30 {
        w.push(w[j] / (2 * j + 1) as f64);
    }
    let z: f64 = w.iter().sum();
    for (x, wx) in w.iter().enumerate().take(26) {
        let want = wx / z;
        let got = pi.get(&ds(&[x as i64]));
        assert!((got - want).abs() / want < 1e-6, "x={x}: {got} vs {want}");
    }
    let r = classify_measure(&sys, &pi, &domain, 1e-9).unwrap();
    assert_eq!(r.rvb.status, Status::Holds);
    assert_eq!(r.rb.status, Status::Fails);
    assert!(solve_rvb(&sys, &RvbOptions::default()).is_empty());
}

#[test]
fn birth_death_is_rvb_not_rb() {
    let sys = corpus("birth_death");
    let small = StateBox::cube(1, 60);
    let pi = solve(&sys, &[0], &small);
    let r = classify_measure(&sys, &pi, &small, 1e-9).unwrap();
    assert_eq!(r.rvb.status, Status::Holds);
    assert_eq!(r.cyb.status, Status::Holds);
    assert_eq!(r.rb.status, Status::Fails);
    let w = r.rb.witness.as_ref().unwrap();
    assert!((w.lhs - w.rhs).abs() > 1e-6);
    assert!(is_stationary_measure(&sys, &pi, &small, 1e-9).unwrap().is_holds());
    let big = solve(&sys, &[0], &StateBox::cube(1, 80));
    assert!(tv(&pi, &big) < 1e-10);
}

#[test]
fn six_complex_rvb_depends_on_component() {
    let sys = corpus("six_complex");
    for (c, rvb) in [(1, Status::Holds), (2, Status::Fails)] {
        let domain = StateBox::new(vec![0, 0, c], vec![40, 40, c]).unwrap();
        let pi = solve(&sys, &[0, 0, c], &domain);
        let r = classify_measure(&sys, &pi, &domain, 1e-9).unwrap();
        assert_eq!(r.rvb.status, rvb, "x_C = {c}");
        assert_eq!(r.rb.status, Status::Fails, "x_C = {c}");
    }
}

#[test]
fn square_product_form() {
    let sys = corpus("square");
    let comp = communicating_class(&sys, &ds(&[3, 0]), &StateBox::cube(2, 20)).unwrap();
    assert!(comp.closed);
    assert_eq!(comp.len(), 4);
    let pi = stationary_distribution(&sys, &comp, false).unwrap().measure;
    let c = solve_complex_balanced(&sys).unwrap().unwrap();
    let pois = poisson_product(&c, &comp.states).unwrap();
    assert!(tv(&pi, &pois) < 1e-10);
    let pois11 = poisson_product(&DetState::new(vec![1.0, 1.0]), &comp.states).unwrap();
    assert!(tv(&pi, &pois11) < 1e-10);
    let r = classify_measure(&sys, &pi, &StateBox::cube(2, 20), 1e-9).unwrap();
    assert_eq!(r.cb.status, Status::Holds);
    assert_eq!(r.rb.status, Status::Fails);
    assert_eq!(r.rvb.status, Status::Fails);
    assert_eq!(r.boundary_skipped, 0);
    assert!(is_stationary_measure(&sys, &pois, &StateBox::cube(2, 20), 1e-9).unwrap().is_holds());
}

#[test]
fn intro_network_is_reaction_balanced() {
    for name in ["intro", "intro_unit"] {
        let sys = corpus(name);
        let domain = StateBox::cube(3, 12);
        let comp = communicating_class(&sys, &ds(&[2, 3, 1]), &domain).unwrap();
        assert!(comp.closed);
        let pi = stationary_distribution(&sys, &comp, false).unwrap().measure;
        let r = classify_measure(&sys, &pi, &domain, 1e-9).unwrap();
        assert_eq!((r.rb.status, r.cb.status, r.rvb.status, r.cyb.status), (Status::Holds, Status::Holds, Status::Holds, Status::Holds));
    }
}

#[test]
fn triangle_stationary_is_not_complex_balanced() {
    let sys = corpus("triangle");
    let domain = StateBox::cube(2, 30);
    let comp = communicating_class(&sys, &ds(&[4, 0]), &domain).unwrap();
    assert!(comp.closed);
    let pi = stationary_distribution(&sys, &comp, false).unwrap().measure;
    let r = classify_measure(&sys, &pi, &domain, 1e-9).unwrap();
    assert_eq!(r.cb.status, Status::Fails);
    assert!(r.stationary.is_holds());
}

#[test]
fn scale_free_solve() {
    let sys = corpus("triangle");
    let domain = StateBox::cube(2, 30);
    let a = solve(&sys, &[6, 0], &domain);
    let b = solve(&sys.scaled(2.0).unwrap(), &[6, 0], &domain);
    assert!(tv(&a, &b) < 1e-12);
}

#[test]
fn catalytic_birth_recurrence_by_level() {
    let sys = corpus("catalytic_birth");
    let tail = |l: i64, bound: i64| {
        let domain = StateBox::new(vec![0, l], vec![bound, l]).unwrap();
        let pi = solve(&sys, &[0, l], &domain);
        let r = classify_measure(&sys, &pi, &domain, 1e-9).unwrap();
        let mass: f64 = (bound / 2..=bound).map(|x| pi.get(&ds(&[x, l]))).sum();
        (pi, r, mass)
    };
    // x_B = 0 leaves only 0 <-> A active: Poisson(1), reaction balanced.
    let (pi0, r0, m0) = tail(0, 40);
    assert!((pi0.get(&ds(&[0, 0])) - (-1.0f64).exp()).abs() < 1e-12);
    assert_eq!((r0.rb.status, r0.rvb.status), (Status::Holds, Status::Holds));
    assert!(m0 < 1e-12);
    // x_B = 1 is the only active level with a stationary distribution.
    let (pi1, r1, m1) = tail(1, 200);
    let (pi1b, _, _) = tail(1, 260);
    assert_eq!(r1.rvb.status, Status::Holds);
    assert!(m1 < 1e-12 && tv(&pi1, &pi1b) < 1e-12);
    // x_B = 2 is null recurrent: truncation pushes mass toward the cap.
    let (_, _, m2a) = tail(2, 100);
    let (_, _, m2b) = tail(2, 400);
    assert!(m2a > 0.1 && m2b > 0.1, "{m2a} {m2b}");
}
