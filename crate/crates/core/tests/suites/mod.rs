//! Seeded 200-instance suites for the invariants of the deterministic and
//! stochastic classifiers. Each suite panics on the first violation.

use crn_core::detbal::{
    classify_state, drift, integrate_final, is_equilibrium, same_compatibility_class, solve_complex_balanced,
    solve_reaction_balanced, solve_rvb, system_cycle_balanced, DetError, ReactionVectorClasses, RvbOptions,
};
use crn_core::gen::{random_reversible, random_system, random_weakly_reversible_def0, Orders};
use crn_core::graph::{active_subnetwork, is_reversible, is_weakly_reversible};
use crn_core::model::{DetState, DiscreteState, MassActionSystem, Measure, ReactionNetwork, Status};
use crn_core::report::has_property_p;
use crn_core::stoch::{
    classify_measure, communicating_class, poisson_product, stationary_distribution, StateBox,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INSTANCES: usize = 200;
const TOL: f64 = 1e-9;

fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + salt)
}

fn positive_state(rng: &mut ChaCha8Rng, n: usize) -> DetState {
    DetState::new((0..n).map(|_| (rng.random_range(-1.5f64..1.5)).exp()).collect())
}

fn opposing(net: &ReactionNetwork) -> bool {
    ReactionVectorClasses::new(net).classes.iter().all(|c| !c.forward.is_empty() && !c.backward.is_empty())
}

/// Structural preconditions failing means no state exists; any other
/// error is a bug.
fn rb_state(sys: &MassActionSystem) -> Option<DetState> {
    match solve_reaction_balanced(sys) {
        Err(DetError::NotReversible) => None,
        other => other.unwrap(),
    }
}

fn cb_state(sys: &MassActionSystem) -> Option<DetState> {
    match solve_complex_balanced(sys) {
        Err(DetError::NotWeaklyReversible) => None,
        other => other.unwrap(),
    }
}

/// A mix of generic, detailed balanced and deficiency-zero systems.
fn mixed_system(rng: &mut ChaCha8Rng, i: usize) -> MassActionSystem {
    let n = rng.random_range(1..=3);
    let size = rng.random_range(2..=6);
    let pairs = rng.random_range(1..=3);
    match i % 4 {
        0 => random_system(rng, n, size, Orders::UpTo(3)),
        1 => random_reversible(rng, n, pairs, Orders::UpTo(2), true),
        2 => random_reversible(rng, n, pairs, Orders::UpTo(2), false),
        _ => random_weakly_reversible_def0(rng, n, Orders::UpTo(2)),
    }
}

/// Random positive states plus every state the solvers return.
fn probe_states(rng: &mut ChaCha8Rng, sys: &MassActionSystem) -> Vec<DetState> {
    let n = sys.n_species();
    let mut out: Vec<DetState> = (0..4).map(|_| positive_state(rng, n)).collect();
    out.extend(rb_state(sys));
    out.extend(cb_state(sys));
    out.extend(solve_rvb(sys, &RvbOptions { starts: 8, ..Default::default() }));
    out
}

pub fn det_balanced_states_are_equilibria_and_related() {
    let mut rng = rng(1);
    let mut balanced = [0usize; 3];
    for i in 0..INSTANCES {
        let sys = mixed_system(&mut rng, i);
        for c in probe_states(&mut rng, &sys) {
            let r = classify_state(&sys, &c, TOL).unwrap();
            let sub = active_subnetwork(&sys, [&c]);
            if r.rb.is_holds() {
                balanced[0] += 1;
                assert!(r.cb.is_holds() && r.rvb.is_holds() && r.cyb.is_holds(), "instance {i}");
                assert!(is_reversible(&sub), "instance {i}");
            }
            if r.cb.is_holds() {
                balanced[1] += 1;
                assert!(is_weakly_reversible(&sub), "instance {i}");
                if r.cyb.is_holds() {
                    assert!(r.rb.is_holds(), "instance {i}");
                }
            }
            if r.rvb.is_holds() {
                balanced[2] += 1;
                assert!(opposing(&sub), "instance {i}");
            }
            if r.rb.is_holds() || r.cb.is_holds() || r.rvb.is_holds() {
                assert!(is_equilibrium(&sys, &c, TOL).is_holds(), "instance {i}");
                assert!(r.is_equilibrium.is_holds(), "instance {i}");
            }
        }
    }
    assert!(balanced.iter().all(|&k| k >= 50), "too few balanced probes: {balanced:?}");
}

pub fn det_cycle_balance_is_state_independent() {
    let mut rng = rng(2);
    let mut seen = [0usize; 2];
    for i in 0..INSTANCES {
        let sys = if i % 2 == 0 {
            random_weakly_reversible_def0(&mut rng, 3, Orders::UpTo(2))
        } else {
            random_system(&mut rng, 2, 6, Orders::UpTo(2))
        };
        let system = system_cycle_balanced(&sys).unwrap();
        seen[usize::from(system)] += 1;
        for _ in 0..10 {
            let c = positive_state(&mut rng, sys.n_species());
            let r = classify_state(&sys, &c, TOL).unwrap();
            assert_eq!(r.cyb.is_holds(), system, "instance {i}");
        }
    }
    assert!(seen[0] > 0 && seen[1] > 0, "{seen:?}");
}

pub fn det_solvers_self_check() {
    let mut rng = rng(3);
    for i in 0..INSTANCES {
        let sys = mixed_system(&mut rng, i);
        if let Some(c) = rb_state(&sys) {
            assert!(classify_state(&sys, &c, TOL).unwrap().rb.is_holds());
        }
        if let Some(c) = cb_state(&sys) {
            assert!(classify_state(&sys, &c, TOL).unwrap().cb.is_holds());
        }
        for c in solve_rvb(&sys, &RvbOptions { starts: 8, ..Default::default() }) {
            assert!(classify_state(&sys, &c, TOL).unwrap().rvb.is_holds());
        }
    }
}

pub fn det_complex_balanced_trajectories_converge() {
    let mut rng = rng(4);
    for i in 0..INSTANCES {
        let n = rng.random_range(1..=3);
        let sys = random_weakly_reversible_def0(&mut rng, n, Orders::UpTo(2));
        assert!(solve_complex_balanced(&sys).unwrap().is_some(), "instance {i}");
        let net = sys.network();
        let vectors = net.reaction_vectors();
        for _ in 0..5 {
            let start = positive_state(&mut rng, sys.n_species());
            let mut c = start.clone();
            let mut t = 0.0;
            while drift(&sys, &c).iter().fold(0.0f64, |m, v| m.max(v.abs())) >= 1e-7 && t < 5000.0 {
                c = integrate_final(&sys, &c, 20.0, 4e-3).unwrap();
                t += 20.0;
            }
            assert!(drift(&sys, &c).iter().all(|v| v.abs() < 1e-6), "instance {i}: no convergence");
            assert!(same_compatibility_class(net, &start, &c, 1e-8), "instance {i}");
            assert!(classify_state(&sys, &c, 1e-6).unwrap().cb.is_holds(), "instance {i}");
            // A second start in the same class reaches the same point.
            let v = &vectors[rng.random_range(0..vectors.len())];
            let eps = 0.2 * start.as_slice().iter().copied().fold(f64::INFINITY, f64::min)
                / v.iter().map(|x| x.abs() as f64).fold(1.0, f64::max);
            let twin = DetState::new(start.as_slice().iter().zip(v).map(|(a, b)| a + eps * *b as f64).collect());
            let mut d = twin;
            let mut t = 0.0;
            while drift(&sys, &d).iter().fold(0.0f64, |m, v| m.max(v.abs())) >= 1e-7 && t < 5000.0 {
                d = integrate_final(&sys, &d, 20.0, 4e-3).unwrap();
                t += 20.0;
            }
            let gap = c.as_slice().iter().zip(d.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap < 1e-5, "instance {i}: two equilibria in one class ({gap})");
        }
    }
}

/// Closed component and its stationary distribution for a conservative system.
fn closed_component(rng: &mut ChaCha8Rng, sys: &MassActionSystem, total: i64) -> Option<(Vec<DiscreteState>, Measure)> {
    let n = sys.n_species();
    let order = sys.network().complexes()[0].order() as i64;
    let mut x = vec![0i64; n];
    for _ in 0..total * order {
        x[rng.random_range(0..n)] += 1;
    }
    let domain = StateBox::cube(n, total * order);
    let comp = communicating_class(sys, &DiscreteState::new(x), &domain).ok()?;
    if !comp.closed || comp.len() < 2 {
        return None;
    }
    let pi = stationary_distribution(sys, &comp, false).unwrap();
    assert!(pi.residual < 1e-10, "residual {}", pi.residual);
    Some((comp.states, pi.measure))
}

fn tv(a: &Measure, b: &Measure) -> f64 {
    let mut s: f64 = a.iter().map(|(x, w)| (w - b.get(x)).abs()).sum();
    s += b.iter().filter(|(x, _)| a.get(x) == 0.0).map(|(_, w)| w).sum::<f64>();
    0.5 * s
}

pub fn stoch_relations_on_stationary_distributions() {
    let mut rng = rng(5);
    let mut checked = 0;
    let mut holds = [0usize; 4];
    for i in 0..INSTANCES {
        let n = rng.random_range(2..=3);
        let pairs = rng.random_range(1..=3);
        let size = rng.random_range(3..=6);
        let sys = match i % 3 {
            0 => random_reversible(&mut rng, n, pairs, Orders::Fixed(2), i % 2 == 0),
            1 => random_weakly_reversible_def0(&mut rng, n, Orders::Fixed(2)),
            _ => random_system(&mut rng, n, size, Orders::Fixed(2)),
        };
        let Some((states, pi)) = closed_component(&mut rng, &sys, 3) else { continue };
        checked += 1;
        let domain = StateBox::cube(n, 6);
        let r = classify_measure(&sys, &pi, &domain, TOL).unwrap();
        assert_eq!(r.boundary_skipped, 0);
        for (k, v) in [&r.rb, &r.cb, &r.rvb, &r.cyb].iter().enumerate() {
            holds[k] += usize::from(v.is_holds());
        }
        let sub = active_subnetwork(&sys, &states);
        if r.rb.is_holds() {
            assert!(r.cb.is_holds() && r.rvb.is_holds() && r.cyb.is_holds(), "instance {i}");
            assert!(is_reversible(&sub), "instance {i}");
        }
        if r.cb.is_holds() {
            assert!(is_weakly_reversible(&sub), "instance {i}");
            if r.cyb.is_holds() {
                assert!(r.rb.is_holds(), "instance {i}");
            }
        }
        if r.rvb.is_holds() {
            assert!(opposing(&sub), "instance {i}");
        }
        if r.rb.is_holds() || r.cb.is_holds() || r.rvb.is_holds() {
            assert!(r.stationary.is_holds(), "instance {i}");
        }
        if r.cb.is_holds() && r.rvb.is_holds() && has_property_p(&states, sys.network().max_source_order()) {
            assert!(r.rb.is_holds(), "instance {i}");
        }
    }
    assert!(checked >= 100, "only {checked} closed components");
    assert!(holds.iter().all(|&k| k >= 10), "{holds:?}");
}

pub fn stoch_product_form_for_complex_balanced() {
    let mut rng = rng(6);
    let mut checked = 0;
    for i in 0..INSTANCES {
        let n = rng.random_range(2..=3);
        let sys = random_weakly_reversible_def0(&mut rng, n, Orders::Fixed(2));
        let c = solve_complex_balanced(&sys).unwrap().expect("deficiency zero");
        let Some((states, pi)) = closed_component(&mut rng, &sys, 4) else { continue };
        checked += 1;
        let pois = poisson_product(&c, &states).unwrap();
        assert!(tv(&pi, &pois) <= 1e-10, "instance {i}: {}", tv(&pi, &pois));
        let r = classify_measure(&sys, &pi, &StateBox::cube(n, 8), TOL).unwrap();
        assert_eq!(r.cb.status, Status::Holds, "instance {i}");
    }
    assert!(checked >= 100, "only {checked} closed components");
}

pub fn stoch_detailed_balance_bridge() {
    let mut rng = rng(7);
    let mut agree = [0usize; 2];
    for i in 0..INSTANCES {
        let n = rng.random_range(2..=3);
        let pairs = rng.random_range(2..=4);
        let sys = random_reversible(&mut rng, n, pairs, Orders::Fixed(2), i % 2 == 0);
        let Some((states, pi)) = closed_component(&mut rng, &sys, 3) else { continue };
        if crn_core::graph::active_reactions(&sys, &states).len() != sys.network().n_reactions() {
            continue;
        }
        let det = rb_state(&sys).is_some();
        let r = classify_measure(&sys, &pi, &StateBox::cube(n, 6), TOL).unwrap();
        assert_ne!(r.rb.status, Status::Undetermined);
        assert_eq!(det, r.rb.is_holds(), "instance {i}");
        agree[usize::from(det)] += 1;
    }
    assert!(agree[0] >= 10 && agree[1] >= 10, "{agree:?}");
}

pub fn stoch_solve_is_scale_free() {
    let mut rng = rng(8);
    for i in 0..INSTANCES {
        let n = rng.random_range(2..=3);
        let size = rng.random_range(3..=6);
        let sys = random_system(&mut rng, n, size, Orders::Fixed(2));
        let mut r2 = rng.clone();
        let Some((_, a)) = closed_component(&mut rng, &sys, 3) else { continue };
        let (_, b) = closed_component(&mut r2, &sys.scaled(2.0).unwrap(), 3).unwrap();
        assert!(tv(&a, &b) <= 1e-12, "instance {i}");
    }
}

pub const ALL: [(&str, fn()); 8] = [
    ("det_balanced_states_are_equilibria_and_related", det_balanced_states_are_equilibria_and_related),
    ("det_cycle_balance_is_state_independent", det_cycle_balance_is_state_independent),
    ("det_solvers_self_check", det_solvers_self_check),
    ("det_complex_balanced_trajectories_converge", det_complex_balanced_trajectories_converge),
    ("stoch_relations_on_stationary_distributions", stoch_relations_on_stationary_distributions),
    ("stoch_product_form_for_complex_balanced", stoch_product_form_for_complex_balanced),
    ("stoch_detailed_balance_bridge", stoch_detailed_balance_bridge),
    ("stoch_solve_is_scale_free", stoch_solve_is_scale_free),
];
