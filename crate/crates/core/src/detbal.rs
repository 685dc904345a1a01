//! Deterministic mass-action kinetics: rates, drift, classification of a
//! state against the four balance conditions, equilibrium solvers and a
//! fixed-step RK4 integrator.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::graph::{self, DirectedCycle, GraphError, RateState};
use crate::model::{close, DetState, MassActionSystem, ReactionNetwork, Status, Verdict, Witness};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetError {
    #[error("network is not reversible")]
    NotReversible,
    #[error("network is not weakly reversible")]
    NotWeaklyReversible,
    #[error("Laplacian kernel of linkage class {class} is not one-dimensional and positive")]
    NumericalRankFailure { class: usize },
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("step size must be positive and t_end nonnegative")]
    InvalidStep,
    #[error("state has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// `λ(c) = 1{c ≥ 0} κ c^y` for every reaction, with `0⁰ = 1`.
pub fn det_rates(sys: &MassActionSystem, c: &DetState) -> Vec<f64> {
    let net = sys.network();
    if c.as_slice().iter().any(|&v| v < 0.0) {
        return vec![0.0; net.n_reactions()];
    }
    let monomials: Vec<f64> = net.complexes().iter().map(|y| monomial(c.as_slice(), y.coeffs())).collect();
    net.reactions()
        .iter()
        .zip(sys.kappa())
        .map(|(r, &k)| k * monomials[r.source])
        .collect()
}

fn monomial(c: &[f64], y: &[u32]) -> f64 {
    c.iter()
        .zip(y)
        .filter(|(_, &e)| e > 0)
        .map(|(&v, &e)| v.powi(e as i32))
        .product()
}

impl RateState for DetState {
    fn rates(&self, sys: &MassActionSystem) -> Vec<f64> {
        det_rates(sys, self)
    }
}

fn drift_from_rates(net: &ReactionNetwork, rates: &[f64]) -> Vec<f64> {
    let mut f = vec![0.0; net.n_species()];
    for (k, &rate) in rates.iter().enumerate() {
        if rate == 0.0 {
            continue;
        }
        let r = net.reactions()[k];
        let (y, yp) = (net.complex(r.source).coeffs(), net.complex(r.target).coeffs());
        for i in 0..f.len() {
            let d = yp[i] as f64 - y[i] as f64;
            if d != 0.0 {
                f[i] += d * rate;
            }
        }
    }
    f
}

/// `Σ (y' − y) λ(c)`.
pub fn drift(sys: &MassActionSystem, c: &DetState) -> Vec<f64> {
    drift_from_rates(sys.network(), &det_rates(sys, c))
}

fn equilibrium_verdict(sys: &MassActionSystem, c: &DetState, rates: &[f64], tol: f64) -> (Verdict, f64) {
    let f = drift_from_rates(sys.network(), rates);
    let norm = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_rate = rates.iter().fold(0.0f64, |a, &v| a.max(v));
    if norm <= tol * (1.0 + max_rate) {
        return (Verdict::holds(), norm);
    }
    let (i, v) = f
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("nonempty drift");
    let w = Witness {
        state: c.0.clone(),
        condition: format!("drift:{}", sys.network().species().name(i)),
        lhs: *v,
        rhs: 0.0,
    };
    (Verdict::fails(w), norm)
}

pub fn is_equilibrium(sys: &MassActionSystem, c: &DetState, tol: f64) -> Verdict {
    equilibrium_verdict(sys, c, &det_rates(sys, c), tol).0
}

/// One reaction-vector class: all reactions with `y' − y = ξ` (forward) or
/// `y' − y = −ξ` (backward). The first nonzero entry of `ξ` is positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RvClass {
    pub xi: Vec<i64>,
    pub forward: Vec<usize>,
    pub backward: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReactionVectorClasses {
    pub classes: Vec<RvClass>,
}

impl ReactionVectorClasses {
    pub fn new(net: &ReactionNetwork) -> Self {
        let mut map: BTreeMap<Vec<i64>, RvClass> = BTreeMap::new();
        for k in 0..net.n_reactions() {
            let v = net.reaction_vector_at(k);
            let positive = v.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0);
            let xi: Vec<i64> = if positive { v } else { v.iter().map(|x| -x).collect() };
            let class = map
                .entry(xi.clone())
                .or_insert_with(|| RvClass { xi, forward: Vec::new(), backward: Vec::new() });
            if positive {
                class.forward.push(k);
            } else {
                class.backward.push(k);
            }
        }
        Self { classes: map.into_values().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateBalanceReport {
    pub rb: Verdict,
    pub cb: Verdict,
    pub rvb: Verdict,
    pub cyb: Verdict,
    pub is_equilibrium: Verdict,
    pub drift_norm: f64,
}

/// Compares two cycle products given as `Σ ln` of their factors, where
/// `None` marks a product containing a zero factor.
fn log_products_close(lhs: Option<f64>, rhs: Option<f64>, tol: f64) -> bool {
    match (lhs, rhs) {
        (None, None) => true,
        (Some(a), Some(b)) => (a - b).abs() <= tol * (1.0 + a.abs() + b.abs()),
        _ => false,
    }
}

fn log_product(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut s = 0.0;
    for v in values {
        if v <= 0.0 {
            return None;
        }
        s += v.ln();
    }
    Some(s)
}

fn exp_or_zero(v: Option<f64>) -> f64 {
    v.map_or(0.0, f64::exp)
}

/// Cached structure for repeated classification of one system.
#[derive(Debug, Clone)]
pub struct StateClassifier<'a> {
    sys: &'a MassActionSystem,
    pairs: Vec<(usize, Option<usize>)>,
    rv: ReactionVectorClasses,
    cycles: Vec<DirectedCycle>,
}

impl<'a> StateClassifier<'a> {
    pub fn new(sys: &'a MassActionSystem) -> Result<Self, GraphError> {
        let cycles = graph::simple_cycles(sys.network(), 3)?;
        Ok(Self { cycles, ..Self::without_cycles(sys) })
    }

    /// Skips cycle enumeration; `cyb` then holds vacuously.
    fn without_cycles(sys: &'a MassActionSystem) -> Self {
        let net = sys.network();
        let mut pairs = Vec::new();
        for (k, r) in net.reactions().iter().enumerate() {
            let back = net.reaction_index(r.reversed());
            match back {
                Some(b) if b < k => {}
                _ => pairs.push((k, back)),
            }
        }
        Self { sys, pairs, rv: ReactionVectorClasses::new(net), cycles: Vec::new() }
    }

    pub fn cycles(&self) -> &[DirectedCycle] {
        &self.cycles
    }

    pub fn rv_classes(&self) -> &ReactionVectorClasses {
        &self.rv
    }

    pub fn classify(&self, c: &DetState, tol: f64) -> Result<StateBalanceReport, DetError> {
        let n = self.sys.n_species();
        if c.len() != n {
            return Err(DetError::DimensionMismatch { expected: n, found: c.len() });
        }
        let rates = det_rates(self.sys, c);
        let (eq, drift_norm) = equilibrium_verdict(self.sys, c, &rates, tol);
        Ok(StateBalanceReport {
            rb: self.rb(c, &rates, tol),
            cb: self.cb(c, &rates, tol),
            rvb: self.rvb(c, &rates, tol),
            cyb: self.cyb(c, &rates, tol),
            is_equilibrium: eq,
            drift_norm,
        })
    }

    fn witness(&self, c: &DetState, condition: String, lhs: f64, rhs: f64) -> Verdict {
        Verdict::fails(Witness { state: c.0.clone(), condition, lhs, rhs })
    }

    pub(crate) fn rb(&self, c: &DetState, rates: &[f64], tol: f64) -> Verdict {
        let net = self.sys.network();
        for &(k, back) in &self.pairs {
            let lhs = rates[k];
            let rhs = back.map_or(0.0, |b| rates[b]);
            if !close(lhs, rhs, tol) {
                let r = net.reactions()[k];
                let id = format!("rb:{} <-> {}", net.complex_label(r.source), net.complex_label(r.target));
                return self.witness(c, id, lhs, rhs);
            }
        }
        Verdict::holds()
    }

    pub(crate) fn cb(&self, c: &DetState, rates: &[f64], tol: f64) -> Verdict {
        let net = self.sys.network();
        let m = net.n_complexes();
        let (mut inflow, mut outflow) = (vec![0.0; m], vec![0.0; m]);
        for (k, r) in net.reactions().iter().enumerate() {
            outflow[r.source] += rates[k];
            inflow[r.target] += rates[k];
        }
        for y in 0..m {
            if !close(inflow[y], outflow[y], tol) {
                return self.witness(c, format!("cb:{}", net.complex_label(y)), inflow[y], outflow[y]);
            }
        }
        Verdict::holds()
    }

    pub(crate) fn rvb(&self, c: &DetState, rates: &[f64], tol: f64) -> Verdict {
        for class in &self.rv.classes {
            let lhs: f64 = class.forward.iter().map(|&k| rates[k]).sum();
            let rhs: f64 = class.backward.iter().map(|&k| rates[k]).sum();
            if !close(lhs, rhs, tol) {
                return self.witness(c, format!("rvb:{:?}", class.xi), lhs, rhs);
            }
        }
        Verdict::holds()
    }

    pub(crate) fn cyb(&self, c: &DetState, rates: &[f64], tol: f64) -> Verdict {
        let net = self.sys.network();
        let rate = |s: usize, t: usize| {
            net.reaction_index(crate::model::Reaction::new(s, t)).map_or(0.0, |k| rates[k])
        };
        for cycle in &self.cycles {
            let fwd = log_product(cycle.edges().map(|(s, t)| rate(s, t)));
            let bwd = log_product(cycle.edges().map(|(s, t)| rate(t, s)));
            if !log_products_close(fwd, bwd, tol) {
                return self.witness(c, cycle_id(net, cycle), exp_or_zero(fwd), exp_or_zero(bwd));
            }
        }
        Verdict::holds()
    }
}

pub(crate) fn cycle_id(net: &ReactionNetwork, cycle: &DirectedCycle) -> String {
    let labels: Vec<String> = cycle.complexes.iter().map(|&i| net.complex_label(i)).collect();
    format!("cyb:{}", labels.join(" -> "))
}

pub fn classify_state(sys: &MassActionSystem, c: &DetState, tol: f64) -> Result<StateBalanceReport, DetError> {
    StateClassifier::new(sys)?.classify(c, tol)
}

/// Rate-constant form of cycle balance: around every directed cycle the
/// reverse edges exist and `∏ κ_fwd = ∏ κ_bwd`.
pub fn system_cycle_balanced(sys: &MassActionSystem) -> Result<bool, GraphError> {
    let net = sys.network();
    for cycle in graph::simple_cycles(net, 3)? {
        let kappa = |s: usize, t: usize| {
            net.reaction_index(crate::model::Reaction::new(s, t)).map_or(0.0, |k| sys.kappa()[k])
        };
        let fwd = log_product(cycle.edges().map(|(s, t)| kappa(s, t)));
        let bwd = log_product(cycle.edges().map(|(s, t)| kappa(t, s)));
        if !log_products_close(fwd, bwd, DEFAULT_TOL) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Minimum-norm least-squares solution via SVD.
fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * 1e-12).max(f64::MIN_POSITIVE);
    svd.solve(b, eps).expect("u and v were computed")
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Positive state with every reversible pair in balance, if one exists.
pub fn solve_reaction_balanced(sys: &MassActionSystem) -> Result<Option<DetState>, DetError> {
    let net = sys.network();
    if !graph::is_reversible(net) {
        return Err(DetError::NotReversible);
    }
    let n = net.n_species();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (k, r) in net.reactions().iter().enumerate() {
        if r.source < r.target {
            let b = net.reaction_index(r.reversed()).expect("reversible");
            rows.push(net.reaction_vector_at(k));
            rhs.push((sys.kappa()[k] / sys.kappa()[b]).ln());
        }
    }
    let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j] as f64);
    let b = DVector::from_vec(rhs);
    let x = lstsq(&a, &b);
    let resid = if rows.is_empty() { 0.0 } else { max_abs(&(&a * &x - &b)) };
    if resid > 1e-9 * (1.0 + max_abs(&b)) {
        return Ok(None);
    }
    let c = DetState::new(x.iter().map(|v| v.exp()).collect());
    let rates = det_rates(sys, &c);
    let classifier = StateClassifier::without_cycles(sys);
    Ok(classifier.rb(&c, &rates, DEFAULT_TOL).is_holds().then_some(c))
}

/// Positive kernel vector of the κ-weighted Laplacian restricted to each
/// linkage class, indexed by complex.
pub fn laplacian_kernel(sys: &MassActionSystem) -> Result<Vec<f64>, DetError> {
    let net = sys.network();
    let lc = graph::linkage_classes(net);
    let mut kernel = vec![0.0; net.n_complexes()];
    for (ci, class) in lc.classes.iter().enumerate() {
        let size = class.len();
        let local = |i: usize| class.binary_search(&i).expect("complex in class");
        let mut lap = DMatrix::<f64>::zeros(size, size);
        for (k, r) in net.reactions().iter().enumerate() {
            if lc.class_of[r.source] != ci {
                continue;
            }
            let (s, t) = (local(r.source), local(r.target));
            let kap = sys.kappa()[k];
            lap[(t, s)] += kap;
            lap[(s, s)] -= kap;
        }
        let svd = lap.svd(false, true);
        let smax = svd.singular_values.max();
        let threshold = 1e-10 * smax;
        let null: Vec<usize> = (0..size).filter(|&i| svd.singular_values[i] <= threshold).collect();
        if null.len() != 1 {
            return Err(DetError::NumericalRankFailure { class: ci });
        }
        let v_t = svd.v_t.expect("v_t computed");
        let row = v_t.row(null[0]);
        let sign = if row.sum() < 0.0 { -1.0 } else { 1.0 };
        let scale = row.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for (j, &i) in class.iter().enumerate() {
            let v = sign * row[j] / scale;
            if v <= 0.0 {
                return Err(DetError::NumericalRankFailure { class: ci });
            }
            kernel[i] = v;
        }
    }
    Ok(kernel)
}

/// Positive complex balanced state, if one exists.
pub fn solve_complex_balanced(sys: &MassActionSystem) -> Result<Option<DetState>, DetError> {
    let net = sys.network();
    if !graph::is_weakly_reversible(net) {
        return Err(DetError::NotWeaklyReversible);
    }
    let kernel = laplacian_kernel(sys)?;
    let lc = graph::linkage_classes(net);
    let (n, l, m) = (net.n_species(), lc.len(), net.n_complexes());
    let a = DMatrix::from_fn(m, n + l, |y, j| {
        if j < n {
            net.complex(y).coeffs()[j] as f64
        } else if lc.class_of[y] == j - n {
            -1.0
        } else {
            0.0
        }
    });
    let b = DVector::from_iterator(m, kernel.iter().map(|k| k.ln()));
    let x = lstsq(&a, &b);
    let resid = if m == 0 { 0.0 } else { max_abs(&(&a * &x - &b)) };
    if resid > 1e-7 * (1.0 + max_abs(&b)) {
        return Ok(None);
    }
    let c = DetState::new(x.iter().take(n).map(|v| v.exp()).collect());
    let classifier = StateClassifier::without_cycles(sys);
    Ok(classifier.cb(&c, &det_rates(sys, &c), DEFAULT_TOL).is_holds().then_some(c))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RvbOptions {
    pub starts: usize,
    pub lower: f64,
    pub upper: f64,
    pub max_iter: usize,
}

impl Default for RvbOptions {
    fn default() -> Self {
        Self { starts: 32, lower: 1e-2, upper: 1e2, max_iter: 200 }
    }
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn halton(index: usize, base: u32) -> f64 {
    let (mut f, mut r, mut i) = (1.0, 0.0, index);
    let b = base as usize;
    while i > 0 {
        f /= base as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// Start points for the multi-start solvers, log-uniform in the box.
pub fn halton_starts(n: usize, count: usize, lower: f64, upper: f64) -> Vec<Vec<f64>> {
    let (lo, hi) = (lower.ln(), upper.ln());
    (1..=count)
        .map(|i| {
            (0..n)
                .map(|d| {
                    let base = PRIMES.get(d).copied().unwrap_or_else(|| nth_prime(d));
                    (lo + (hi - lo) * halton(i, base)).exp()
                })
                .collect()
        })
        .collect()
}

fn nth_prime(d: usize) -> u32 {
    (2u32..).filter(|p| (2..*p).take_while(|q| q * q <= *p).all(|q| p % q != 0)).nth(d).expect("infinite")
}

struct RvbSystem<'a> {
    sys: &'a MassActionSystem,
    rv: &'a ReactionVectorClasses,
}

/// `ln Σ exp(a_k)` with the gradient weights `exp(a_k − lse)`.
fn log_sum_exp(a: &[f64]) -> (f64, Vec<f64>) {
    let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = a.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = w.iter().sum();
    (m + s.ln(), w.into_iter().map(|v| v / s).collect())
}

impl RvbSystem<'_> {
    /// Per class `ln Σ_fwd λ − ln Σ_bwd λ` and its Jacobian in `u = ln c`.
    fn eval(&self, u: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let net = self.sys.network();
        let n = net.n_species();
        let log_rate = |k: usize| {
            let y = net.complex(net.reactions()[k].source).coeffs();
            self.sys.kappa()[k].ln() + y.iter().zip(u).map(|(&e, v)| e as f64 * v).sum::<f64>()
        };
        let rows = self.rv.classes.len();
        let mut g = DVector::zeros(rows);
        let mut jac = DMatrix::zeros(rows, n);
        for (row, cl) in self.rv.classes.iter().enumerate() {
            for (ks, sign) in [(&cl.forward, 1.0), (&cl.backward, -1.0)] {
                let logs: Vec<f64> = ks.iter().map(|&k| log_rate(k)).collect();
                let (lse, weights) = log_sum_exp(&logs);
                g[row] += sign * lse;
                for (&k, w) in ks.iter().zip(weights) {
                    let y = net.complex(net.reactions()[k].source).coeffs();
                    for i in 0..n {
                        jac[(row, i)] += sign * w * y[i] as f64;
                    }
                }
            }
        }
        (g, jac)
    }

    /// Damped Gauss-Newton in log coordinates, polished a few steps past
    /// the acceptance threshold.
    fn solve(&self, start: &[f64], max_iter: usize) -> Option<Vec<f64>> {
        const ACCEPT: f64 = 1e-10;
        let mut u: Vec<f64> = start.iter().map(|v| v.ln()).collect();
        let (mut g, mut jac) = self.eval(&u);
        let mut norm = g.norm();
        let mut polish = 0;
        for _ in 0..max_iter {
            if max_abs(&g) <= ACCEPT {
                polish += 1;
                if polish > 3 {
                    break;
                }
            }
            let step = lstsq(&jac, &(-&g));
            let mut t = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
                let (gt, jt) = self.eval(&trial);
                let nt = gt.norm();
                if nt.is_finite() && nt < norm {
                    (u, g, jac, norm) = (trial, gt, jt, nt);
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let ok = max_abs(&g) <= ACCEPT && u.iter().all(|v| v.is_finite() && v.abs() < 700.0);
        ok.then(|| u.iter().map(|v| v.exp()).collect())
    }
}

/// Positive reaction vector balanced states found by multi-start Newton.
/// The list is deduplicated and sorted but need not be exhaustive.
pub fn solve_rvb(sys: &MassActionSystem, opts: &RvbOptions) -> Vec<DetState> {
    let n = sys.n_species();
    if n == 0 {
        return Vec::new();
    }
    let rv = ReactionVectorClasses::new(sys.network());
    // A one-sided class cannot balance at a positive state.
    if rv.classes.iter().any(|c| c.forward.is_empty() || c.backward.is_empty()) {
        return Vec::new();
    }
    let problem = RvbSystem { sys, rv: &rv };
    let starts = halton_starts(n, opts.starts, opts.lower, opts.upper);
    #[cfg(feature = "parallel")]
    let found: Vec<Option<Vec<f64>>> = {
        use rayon::prelude::*;
        starts.par_iter().map(|s| problem.solve(s, opts.max_iter)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let found: Vec<Option<Vec<f64>>> = starts.iter().map(|s| problem.solve(s, opts.max_iter)).collect();

    let mut sols: Vec<Vec<f64>> = found.into_iter().flatten().collect();
    sols.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let classifier = StateClassifier::without_cycles(sys);
    let mut out: Vec<DetState> = Vec::new();
    for s in sols {
        let distinct = out.iter().all(|o| {
            o.0.iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() > 1e-6
        });
        if !distinct {
            continue;
        }
        let c = DetState::new(s);
        if classifier.rvb(&c, &det_rates(sys, &c), DEFAULT_TOL).status == Status::Holds {
            out.push(c);
        }
    }
    out
}

fn rk4_step(sys: &MassActionSystem, c: &[f64], h: f64) -> Vec<f64> {
    let f = |z: &[f64]| drift(sys, &DetState::new(z.to_vec()));
    let axpy = |a: &[f64], k: &[f64], s: f64| -> Vec<f64> { a.iter().zip(k).map(|(x, y)| x + s * y).collect() };
    let k1 = f(c);
    let k2 = f(&axpy(c, &k1, h / 2.0));
    let k3 = f(&axpy(c, &k2, h / 2.0));
    let k4 = f(&axpy(c, &k3, h));
    (0..c.len())
        .map(|i| c[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn integrate_impl(
    sys: &MassActionSystem,
    c0: &DetState,
    t_end: f64,
    dt: f64,
    mut record: impl FnMut(f64, &[f64]),
) -> Result<DetState, DetError> {
    if !(dt > 0.0 && t_end >= 0.0 && dt.is_finite() && t_end.is_finite()) {
        return Err(DetError::InvalidStep);
    }
    if c0.len() != sys.n_species() {
        return Err(DetError::DimensionMismatch { expected: sys.n_species(), found: c0.len() });
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as u64;
    let mut c = c0.0.clone();
    record(0.0, &c);
    for s in 0..steps {
        let t0 = s as f64 * dt;
        let t1 = if s + 1 == steps { t_end } else { (s + 1) as f64 * dt };
        c = rk4_step(sys, &c, t1 - t0);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(DetError::NonFiniteState { t: t1 });
        }
        record(t1, &c);
    }
    Ok(DetState::new(c))
}

/// Fixed-step RK4 trajectory, including the initial point.
pub fn integrate(
    sys: &MassActionSystem,
    c0: &DetState,
    t_end: f64,
    dt: f64,
) -> Result<Vec<(f64, DetState)>, DetError> {
    let mut traj = Vec::new();
    integrate_impl(sys, c0, t_end, dt, |t, c| traj.push((t, DetState::new(c.to_vec()))))?;
    Ok(traj)
}

/// Like [`integrate`] but keeps only the final state.
pub fn integrate_final(sys: &MassActionSystem, c0: &DetState, t_end: f64, dt: f64) -> Result<DetState, DetError> {
    integrate_impl(sys, c0, t_end, dt, |_, _| {})
}

/// Like [`integrate`] but records every `stride`-th step and the last.
pub fn integrate_sampled(
    sys: &MassActionSystem,
    c0: &DetState,
    t_end: f64,
    dt: f64,
    stride: usize,
) -> Result<Vec<(f64, DetState)>, DetError> {
    let stride = stride.max(1);
    let mut traj = Vec::new();
    let mut i = 0usize;
    let last = integrate_impl(sys, c0, t_end, dt, |t, c| {
        if i.is_multiple_of(stride) {
            traj.push((t, DetState::new(c.to_vec())));
        }
        i += 1;
    })?;
    if !(i - 1).is_multiple_of(stride) {
        traj.push((t_end, last));
    }
    Ok(traj)
}

/// Whether every conserved linear quantity agrees at `c1` and `c2`.
pub fn same_compatibility_class(net: &ReactionNetwork, c1: &DetState, c2: &DetState, tol: f64) -> bool {
    net.stoichiometric_basis().conserved_f64().iter().all(|w| {
        let a: f64 = w.iter().zip(c1.as_slice()).map(|(x, y)| x * y).sum();
        let b: f64 = w.iter().zip(c2.as_slice()).map(|(x, y)| x * y).sum();
        (a - b).abs() <= tol
    })
}
