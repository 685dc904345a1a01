//! Seeded random mass-action systems for property suites and benchmarks.
//!
//! Every generator retries until the drawn network is valid (no unused
//! species, no duplicate reactions), so it always returns a system.
//! Rate constants are log-uniform in `[1/4, 4]`.

use std::collections::BTreeSet;

use rand::Rng;

use crate::graph;
use crate::model::{Complex, MassActionSystem, SpeciesTable};

const NAMES: [&str; 6] = ["A", "B", "C", "D", "E", "F"];

fn species(n: usize) -> SpeciesTable {
    SpeciesTable::new(NAMES[..n].iter().copied()).expect("valid names")
}

fn rate<R: Rng>(rng: &mut R) -> f64 {
    (rng.random_range(-2.0f64..2.0) * std::f64::consts::LN_2).exp()
}

/// Uniformly chosen species, `order` times.
fn complex_of_order<R: Rng>(rng: &mut R, n: usize, order: u32) -> Complex {
    let mut c = vec![0u32; n];
    for _ in 0..order {
        c[rng.random_range(0..n)] += 1;
    }
    Complex::new(c)
}

fn complex<R: Rng>(rng: &mut R, n: usize, order: Option<u32>, max_order: u32) -> Complex {
    let k = order.unwrap_or_else(|| rng.random_range(0..=max_order));
    complex_of_order(rng, n, k)
}

fn build(n: usize, reactions: Vec<(Complex, Complex, f64)>) -> Option<MassActionSystem> {
    MassActionSystem::from_reactions(species(n), reactions).ok()
}

/// Shape of the drawn complexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orders {
    /// Every complex has this order, so total molecule count is conserved
    /// and every communicating class is finite.
    Fixed(u32),
    /// Orders uniform in `0..=max`.
    UpTo(u32),
}

impl Orders {
    fn split(self) -> (Option<u32>, u32) {
        match self {
            Orders::Fixed(k) => (Some(k), k),
            Orders::UpTo(k) => (None, k),
        }
    }
}

/// Arbitrary network with `reactions` distinct reactions.
pub fn random_system<R: Rng>(rng: &mut R, n: usize, reactions: usize, orders: Orders) -> MassActionSystem {
    let (fixed, max) = orders.split();
    loop {
        let mut seen = BTreeSet::new();
        let mut list = Vec::new();
        for _ in 0..reactions * 20 {
            if list.len() == reactions {
                break;
            }
            let y = complex(rng, n, fixed, max);
            let yp = complex(rng, n, fixed, max);
            if y != yp && seen.insert((y.clone(), yp.clone())) {
                list.push((y, yp, rate(rng)));
            }
        }
        if let Some(sys) = build(n, list) {
            return sys;
        }
    }
}

/// Reversible network of `pairs` reaction pairs. With `detailed`, the
/// constants are chosen as `κ' = κ c^{y − y'}` for a random positive `c`,
/// so the system has a reaction balanced equilibrium at `c`.
pub fn random_reversible<R: Rng>(
    rng: &mut R,
    n: usize,
    pairs: usize,
    orders: Orders,
    detailed: bool,
) -> MassActionSystem {
    let (fixed, max) = orders.split();
    loop {
        let c: Vec<f64> = (0..n).map(|_| rate(rng)).collect();
        let mut seen = BTreeSet::new();
        let mut list = Vec::new();
        for _ in 0..pairs * 20 {
            if list.len() == 2 * pairs {
                break;
            }
            let y = complex(rng, n, fixed, max);
            let yp = complex(rng, n, fixed, max);
            let key = if y < yp { (y.clone(), yp.clone()) } else { (yp.clone(), y.clone()) };
            if y == yp || !seen.insert(key) {
                continue;
            }
            let k = rate(rng);
            let kb = if detailed {
                let log: f64 = (0..n).map(|i| (f64::from(y.coeffs()[i]) - f64::from(yp.coeffs()[i])) * c[i].ln()).sum();
                k * log.exp()
            } else {
                rate(rng)
            };
            list.push((y.clone(), yp.clone(), k));
            list.push((yp, y, kb));
        }
        if let Some(sys) = build(n, list) {
            return sys;
        }
    }
}

/// Weakly reversible network of deficiency zero: one to three linkage
/// classes, each a directed cycle through 2–4 complexes with random
/// chords.
pub fn random_weakly_reversible_def0<R: Rng>(rng: &mut R, n: usize, orders: Orders) -> MassActionSystem {
    let (fixed, max) = orders.split();
    loop {
        let classes = rng.random_range(1..=3);
        let mut used = BTreeSet::new();
        let mut list = Vec::new();
        let mut ok = true;
        for _ in 0..classes {
            let size = rng.random_range(2..=4);
            let mut nodes = Vec::new();
            for _ in 0..size * 20 {
                if nodes.len() == size {
                    break;
                }
                let y = complex(rng, n, fixed, max);
                if used.insert(y.clone()) {
                    nodes.push(y);
                }
            }
            if nodes.len() < 2 {
                ok = false;
                break;
            }
            let len = nodes.len();
            let mut edges = BTreeSet::new();
            for i in 0..len {
                edges.insert((i, (i + 1) % len));
            }
            for i in 0..len {
                for j in 0..len {
                    if i != j && rng.random_bool(0.3) {
                        edges.insert((i, j));
                    }
                }
            }
            for (i, j) in edges {
                list.push((nodes[i].clone(), nodes[j].clone(), rate(rng)));
            }
        }
        if !ok {
            continue;
        }
        if let Some(sys) = build(n, list) {
            let net = sys.network();
            if graph::is_weakly_reversible(net) && graph::deficiency(net) == Ok(0) {
                return sys;
            }
        }
    }
}
