//! Gillespie direct-method simulation and time-averaged occupancy.
//!
//! The random stream is ChaCha8 keyed by `seed_from_u64(seed)`; replica `i`
//! uses `seed + i`. Holding times are `−ln(1 − u)/a₀` with `u` uniform in
//! `[0, 1)`, and the reaction is the first `k` with cumulative propensity
//! exceeding `u' a₀`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::model::{DiscreteState, MassActionSystem, Measure, ModelError};
use crate::stoch::propensity;

pub const DEFAULT_MAX_JUMPS: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SsaError {
    #[error("t_end must be positive and finite, burn-in in [0, t_end)")]
    InvalidConfig,
    #[error("more than {0} jumps before t_end")]
    PathExplosionGuard(u64),
    #[error("measure is not normalized")]
    NotNormalized,
    #[error("initial state has {found} species, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SsaConfig {
    pub seed: u64,
    pub t_end: f64,
    pub burn_in: f64,
    pub max_jumps: u64,
}

impl SsaConfig {
    /// Burn-in defaults to 1% of `t_end`.
    pub fn new(seed: u64, t_end: f64) -> Self {
        Self { seed, t_end, burn_in: 0.01 * t_end, max_jumps: DEFAULT_MAX_JUMPS }
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_max_jumps(mut self, cap: u64) -> Self {
        self.max_jumps = cap;
        self
    }

    fn validate(&self) -> Result<(), SsaError> {
        let ok = self.t_end.is_finite() && self.t_end > 0.0 && self.burn_in >= 0.0 && self.burn_in < self.t_end;
        if ok {
            Ok(())
        } else {
            Err(SsaError::InvalidConfig)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsaPath {
    /// Jump times and the state entered; starts with `(0, x0)`.
    pub points: Vec<(f64, DiscreteState)>,
    /// The path stopped in a state with zero total propensity.
    pub absorbed: bool,
    pub jumps: u64,
}

/// Runs the chain up to `t_end`, calling `visit(t0, t1, x)` for each
/// holding interval. Returns `(jumps, absorbed)`.
fn run(
    sys: &MassActionSystem,
    x0: &DiscreteState,
    cfg: &SsaConfig,
    mut visit: impl FnMut(f64, f64, &DiscreteState),
) -> Result<(u64, bool), SsaError> {
    cfg.validate()?;
    if x0.len() != sys.n_species() {
        return Err(SsaError::DimensionMismatch { expected: sys.n_species(), found: x0.len() });
    }
    let vectors = sys.network().reaction_vectors();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut jumps = 0u64;
    loop {
        let a = propensity(sys, &x);
        let a0: f64 = a.iter().sum();
        if a0 <= 0.0 {
            visit(t, cfg.t_end, &x);
            return Ok((jumps, true));
        }
        let u: f64 = rng.random();
        let dt = -(1.0 - u).ln() / a0;
        if t + dt >= cfg.t_end {
            visit(t, cfg.t_end, &x);
            return Ok((jumps, false));
        }
        visit(t, t + dt, &x);
        if jumps >= cfg.max_jumps {
            return Err(SsaError::PathExplosionGuard(cfg.max_jumps));
        }
        let target = rng.random::<f64>() * a0;
        let mut acc = 0.0;
        let mut k = a.len() - 1;
        for (i, ai) in a.iter().enumerate() {
            acc += ai;
            if target < acc {
                k = i;
                break;
            }
        }
        // Guard against rounding picking a reaction with zero propensity.
        while a[k] == 0.0 {
            k -= 1;
        }
        x = x.offset(&vectors[k]);
        t += dt;
        jumps += 1;
    }
}

pub fn ssa_path(sys: &MassActionSystem, x0: &DiscreteState, cfg: &SsaConfig) -> Result<SsaPath, SsaError> {
    let mut points: Vec<(f64, DiscreteState)> = Vec::new();
    let (jumps, absorbed) = run(sys, x0, cfg, |t0, _, x| points.push((t0, x.clone())))?;
    Ok(SsaPath { points, absorbed, jumps })
}

/// Normalized time spent in each state over `(burn_in, t_end]`.
pub fn occupancy_measure(sys: &MassActionSystem, x0: &DiscreteState, cfg: &SsaConfig) -> Result<Measure, SsaError> {
    let mut time: HashMap<DiscreteState, f64> = HashMap::new();
    run(sys, x0, cfg, |t0, t1, x| {
        let lo = t0.max(cfg.burn_in);
        if t1 > lo {
            *time.entry(x.clone()).or_insert(0.0) += t1 - lo;
        }
    })?;
    Ok(Measure::from_weights(time)?.normalize()?)
}

/// Occupancy of `count` independent replicas (seeds `seed..seed + count`),
/// in replica order.
pub fn occupancy_replicas(
    sys: &MassActionSystem,
    x0: &DiscreteState,
    cfg: &SsaConfig,
    count: usize,
) -> Result<Vec<Measure>, SsaError> {
    let one = |i: usize| {
        let c = SsaConfig { seed: cfg.seed.wrapping_add(i as u64), ..*cfg };
        occupancy_measure(sys, x0, &c)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(one).collect()
    }
}

/// Equal-weight average of normalized measures.
pub fn average_measures(measures: &[Measure]) -> Result<Measure, SsaError> {
    let mut acc: std::collections::BTreeMap<DiscreteState, f64> = std::collections::BTreeMap::new();
    for m in measures {
        for (x, w) in m.iter() {
            *acc.entry(x.clone()).or_insert(0.0) += w;
        }
    }
    Ok(Measure::from_weights(acc)?.normalize()?)
}

/// `½ Σ |μ(x) − ν(x)|` over the union of supports.
pub fn tv_distance(mu: &Measure, nu: &Measure) -> Result<f64, SsaError> {
    if !mu.is_normalized() || !nu.is_normalized() {
        return Err(SsaError::NotNormalized);
    }
    let mut s = 0.0;
    for (x, w) in mu.iter() {
        s += (w - nu.get(x)).abs();
    }
    for (x, w) in nu.iter() {
        if mu.get(x) == 0.0 {
            s += w;
        }
    }
    Ok((0.5 * s).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_network;

    fn ds(v: &[i64]) -> DiscreteState {
        DiscreteState::new(v.to_vec())
    }

    fn measure(pairs: &[(i64, f64)]) -> Measure {
        Measure::from_weights(pairs.iter().map(|&(x, w)| (ds(&[x]), w))).unwrap().normalize().unwrap()
    }

    #[test]
    fn absorbing_start() {
        let sys = parse_network("A -> B : 1").unwrap();
        let cfg = SsaConfig::new(1, 10.0);
        let p = ssa_path(&sys, &ds(&[0, 4]), &cfg).unwrap();
        assert_eq!(p.points, vec![(0.0, ds(&[0, 4]))]);
        assert!(p.absorbed);
        let occ = occupancy_measure(&sys, &ds(&[0, 4]), &cfg).unwrap();
        assert_eq!(occ, Measure::point_mass(ds(&[0, 4])));
    }

    #[test]
    fn reproducible() {
        let sys = parse_network("0 <-> A : 1, 1").unwrap();
        let cfg = SsaConfig::new(42, 200.0);
        assert_eq!(ssa_path(&sys, &ds(&[0]), &cfg).unwrap(), ssa_path(&sys, &ds(&[0]), &cfg).unwrap());
        assert_eq!(
            occupancy_measure(&sys, &ds(&[0]), &cfg).unwrap(),
            occupancy_measure(&sys, &ds(&[0]), &cfg).unwrap()
        );
        let other = SsaConfig::new(43, 200.0);
        assert_ne!(ssa_path(&sys, &ds(&[0]), &cfg).unwrap(), ssa_path(&sys, &ds(&[0]), &other).unwrap());
    }

    #[test]
    fn jump_cap() {
        let sys = parse_network("0 <-> A : 1, 1").unwrap();
        let cfg = SsaConfig::new(1, 1e6).with_max_jumps(10);
        assert_eq!(ssa_path(&sys, &ds(&[0]), &cfg), Err(SsaError::PathExplosionGuard(10)));
        assert_eq!(ssa_path(&sys, &ds(&[0]), &SsaConfig::new(1, 1.0).with_burn_in(1.0)), Err(SsaError::InvalidConfig));
    }

    #[test]
    fn tv_examples() {
        let a = measure(&[(0, 0.25), (1, 0.5), (2, 0.25)]);
        let b = measure(&[(0, 0.5), (1, 0.5)]);
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert!((tv_distance(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(tv_distance(&measure(&[(0, 1.0)]), &measure(&[(1, 1.0)])).unwrap(), 1.0);
        let raw = Measure::from_weights([(ds(&[0]), 2.0)]).unwrap();
        assert_eq!(tv_distance(&raw, &a), Err(SsaError::NotNormalized));
    }
}
