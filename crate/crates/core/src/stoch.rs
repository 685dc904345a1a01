//! Stochastic mass-action kinetics on `ℤⁿ`: propensities, communicating
//! classes inside a finite box, stationary distributions, product-form
//! measures and classification of measures against the balance
//! conditions.
//!
//! Truncation is reflecting: transitions that leave the box are dropped
//! and the component is flagged `truncated`. Classification only trusts
//! terms far enough from the faces the measure leaks through; everything
//! else is counted as skipped rather than guessed.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::detbal::{cycle_id, ReactionVectorClasses};
use crate::graph::{self, DirectedCycle, GraphError, RateState};
use crate::model::{close, DetState, DiscreteState, MassActionSystem, Measure, ModelError, Verdict, Witness};

/// Default cap on the number of states explored in a box.
pub const DEFAULT_STATE_LIMIT: usize = 2_000_000;

/// Band storage above this many entries switches to power iteration.
const BAND_LIMIT: usize = 15_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StochError {
    #[error("seed {0} lies outside the box")]
    SeedOutsideBox(String),
    #[error("every transition from {0} leaves the box; enlarge it")]
    BoxTooSmall(String),
    #[error("more than {0} states reachable inside the box")]
    StateLimit(usize),
    #[error("component is not closed, so it has no stationary distribution")]
    NotClosed,
    #[error("component leaves the box; enlarge it or allow truncation")]
    Truncated,
    #[error("stationary solve failed: {0}")]
    SolveFailure(String),
    #[error("product-form measure needs at least one state")]
    EmptySupport,
    #[error("product-form measure needs positive concentrations and nonnegative states")]
    InvalidProductForm,
    #[error("measure has support outside the domain")]
    MeasureOutsideDomain,
    #[error("box has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("box lower bound exceeds upper bound")]
    EmptyBox,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn falling(x: i64, k: u32) -> f64 {
    (0..k as i64).map(|j| (x - j) as f64).product()
}

/// `κ x!/(x − y)! 1{x ≥ y}` for every reaction.
pub fn propensity(sys: &MassActionSystem, x: &DiscreteState) -> Vec<f64> {
    let net = sys.network();
    let xs = x.as_slice();
    let per_complex: Vec<f64> = net
        .complexes()
        .iter()
        .map(|y| {
            if xs.iter().zip(y.coeffs()).any(|(&xi, &yi)| xi < i64::from(yi)) {
                0.0
            } else {
                xs.iter().zip(y.coeffs()).map(|(&xi, &yi)| falling(xi, yi)).product()
            }
        })
        .collect();
    net.reactions().iter().zip(sys.kappa()).map(|(r, &k)| k * per_complex[r.source]).collect()
}

impl RateState for DiscreteState {
    fn rates(&self, sys: &MassActionSystem) -> Vec<f64> {
        propensity(sys, self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub reaction: usize,
    pub target: DiscreteState,
    pub rate: f64,
}

/// One entry per reaction with positive propensity at `x`; parallel
/// reactions to the same target stay separate.
pub fn transitions(sys: &MassActionSystem, x: &DiscreteState) -> Vec<Transition> {
    let net = sys.network();
    propensity(sys, x)
        .into_iter()
        .enumerate()
        .filter(|&(_, rate)| rate > 0.0)
        .map(|(k, rate)| Transition { reaction: k, target: x.offset(&net.reaction_vector_at(k)), rate })
        .collect()
}

/// Axis-aligned integer box `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateBox {
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
}

impl StateBox {
    pub fn new(lower: Vec<i64>, upper: Vec<i64>) -> Result<Self, StochError> {
        if lower.len() != upper.len() {
            return Err(StochError::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(StochError::EmptyBox);
        }
        Ok(Self { lower, upper })
    }

    /// `[0, size]ⁿ`.
    pub fn cube(n: usize, size: i64) -> Self {
        Self { lower: vec![0; n], upper: vec![size; n] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &DiscreteState) -> bool {
        x.len() == self.dim()
            && x.as_slice().iter().enumerate().all(|(i, &v)| v >= self.lower[i] && v <= self.upper[i])
    }
}

/// Communicating class of a seed inside a box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentResult {
    /// Sorted lexicographically; contains the seed.
    pub states: Vec<DiscreteState>,
    /// No transition leaves the class, inside or outside the box.
    pub closed: bool,
    /// Some transition from the class leaves the box.
    pub truncated: bool,
}

impl ComponentResult {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub fn communicating_class(
    sys: &MassActionSystem,
    seed: &DiscreteState,
    domain: &StateBox,
) -> Result<ComponentResult, StochError> {
    communicating_class_capped(sys, seed, domain, DEFAULT_STATE_LIMIT)
}

pub fn communicating_class_capped(
    sys: &MassActionSystem,
    seed: &DiscreteState,
    domain: &StateBox,
    limit: usize,
) -> Result<ComponentResult, StochError> {
    let n = sys.n_species();
    if domain.dim() != n || seed.len() != n {
        return Err(StochError::DimensionMismatch { expected: n, found: domain.dim().min(seed.len()) });
    }
    if !domain.contains(seed) {
        return Err(StochError::SeedOutsideBox(seed.to_string()));
    }
    // Forward exploration inside the box.
    let mut index: HashMap<DiscreteState, usize> = HashMap::new();
    let mut states = vec![seed.clone()];
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut exits_box: Vec<bool> = Vec::new();
    index.insert(seed.clone(), 0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let x = states[i].clone();
        let mut succ = Vec::new();
        let mut exits = false;
        for t in transitions(sys, &x) {
            if !domain.contains(&t.target) {
                exits = true;
                continue;
            }
            let j = match index.get(&t.target) {
                Some(&j) => j,
                None => {
                    if states.len() >= limit {
                        return Err(StochError::StateLimit(limit));
                    }
                    let j = states.len();
                    index.insert(t.target.clone(), j);
                    states.push(t.target);
                    queue.push_back(j);
                    j
                }
            };
            succ.push(j);
        }
        if out.len() <= i {
            out.resize(i + 1, Vec::new());
            exits_box.resize(i + 1, false);
        }
        out[i] = succ;
        exits_box[i] = exits;
    }
    out.resize(states.len(), Vec::new());
    exits_box.resize(states.len(), false);

    // Backward reachability to the seed within the explored set.
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
    for (i, succ) in out.iter().enumerate() {
        for &j in succ {
            rev[j].push(i);
        }
    }
    let mut back = vec![false; states.len()];
    back[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(j) = queue.pop_front() {
        for &i in &rev[j] {
            if !back[i] {
                back[i] = true;
                queue.push_back(i);
            }
        }
    }

    let members: Vec<usize> = (0..states.len()).filter(|&i| back[i]).collect();
    let truncated = members.iter().any(|&i| exits_box[i]);
    let leaks = members.iter().any(|&i| out[i].iter().any(|&j| !back[j]));
    if members.len() == 1 && truncated && out[0].is_empty() {
        return Err(StochError::BoxTooSmall(seed.to_string()));
    }
    let mut comp: Vec<DiscreteState> = members.into_iter().map(|i| states[i].clone()).collect();
    comp.sort();
    Ok(ComponentResult { states: comp, closed: !truncated && !leaks, truncated })
}

/// Output of [`stationary_distribution`].
#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub measure: Measure,
    /// `Σ_x |inflow − outflow| / Σ_x outflow` over the component.
    pub residual: f64,
    pub method: SolveMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Gth,
    Power,
}

/// Generator restricted to a component, transitions leaving it dropped.
struct Generator {
    /// Outgoing `(target, rate)` lists, parallel reactions merged.
    out: Vec<Vec<(usize, f64)>>,
}

impl Generator {
    fn build(sys: &MassActionSystem, states: &[DiscreteState]) -> Self {
        let index: HashMap<&DiscreteState, usize> = states.iter().enumerate().map(|(i, x)| (x, i)).collect();
        let out = states
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for t in transitions(sys, x) {
                    if let Some(&j) = index.get(&t.target) {
                        if j == i {
                            continue;
                        }
                        match row.iter_mut().find(|(k, _)| *k == j) {
                            Some(e) => e.1 += t.rate,
                            None => row.push((j, t.rate)),
                        }
                    }
                }
                row
            })
            .collect();
        Self { out }
    }

    fn permuted(&self, perm: &[usize]) -> Self {
        // perm[old] = new
        let mut out = vec![Vec::new(); self.out.len()];
        for (i, row) in self.out.iter().enumerate() {
            out[perm[i]] = row.iter().map(|&(j, r)| (perm[j], r)).collect();
        }
        Self { out }
    }

    fn bandwidth(&self) -> usize {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    fn residual(&self, pi: &[f64]) -> f64 {
        let mut inflow = vec![0.0; pi.len()];
        let mut total = 0.0;
        let mut outflow = vec![0.0; pi.len()];
        for (i, row) in self.out.iter().enumerate() {
            for &(j, r) in row {
                inflow[j] += pi[i] * r;
                outflow[i] += pi[i] * r;
                total += pi[i] * r;
            }
        }
        if total == 0.0 {
            return 0.0;
        }
        inflow.iter().zip(&outflow).map(|(a, b)| (a - b).abs()).sum::<f64>() / total
    }

    /// Grassmann-Taksar-Heyman state reduction in band storage.
    fn gth(&self, b: usize) -> Result<Vec<f64>, StochError> {
        let n = self.out.len();
        let w = 2 * b + 1;
        let mut p = vec![0.0; n * w];
        let at = |i: usize, j: usize| i * w + (j + b - i);
        for (i, row) in self.out.iter().enumerate() {
            for &(j, r) in row {
                p[at(i, j)] += r;
            }
        }
        for k in (1..n).rev() {
            let lo = k.saturating_sub(b);
            let s: f64 = (lo..k).map(|j| p[at(k, j)]).sum();
            if s <= 0.0 {
                return Err(StochError::SolveFailure(format!("state {k} cannot reach lower states")));
            }
            for i in lo..k {
                p[at(i, k)] /= s;
            }
            for i in lo..k {
                let pik = p[at(i, k)];
                if pik == 0.0 {
                    continue;
                }
                for j in lo..k {
                    if j != i {
                        let pkj = p[at(k, j)];
                        if pkj != 0.0 {
                            p[at(i, j)] += pik * pkj;
                        }
                    }
                }
            }
        }
        let mut pi = vec![0.0; n];
        pi[0] = 1.0;
        for j in 1..n {
            let lo = j.saturating_sub(b);
            pi[j] = (lo..j).map(|i| pi[i] * p[at(i, j)]).sum();
            if pi[j] > 1e150 {
                for v in &mut pi[..=j] {
                    *v *= 1e-150;
                }
            }
        }
        Ok(pi)
    }

    /// Power iteration on the uniformized chain.
    fn power(&self, tol: f64, max_iter: usize) -> Result<Vec<f64>, StochError> {
        let n = self.out.len();
        let exit: Vec<f64> = self.out.iter().map(|row| row.iter().map(|e| e.1).sum()).collect();
        let lambda = 1.05 * exit.iter().copied().fold(0.0, f64::max);
        let mut pi = vec![1.0 / n as f64; n];
        if lambda == 0.0 {
            return Ok(pi);
        }
        let mut next = vec![0.0; n];
        for it in 0..max_iter {
            for (i, v) in next.iter_mut().enumerate() {
                *v = pi[i] * (1.0 - exit[i] / lambda);
            }
            for (i, row) in self.out.iter().enumerate() {
                for &(j, r) in row {
                    next[j] += pi[i] * r / lambda;
                }
            }
            let s: f64 = next.iter().sum();
            for (a, b) in pi.iter_mut().zip(&next) {
                *a = b / s;
            }
            if it % 64 == 63 && self.residual(&pi) <= tol {
                return Ok(pi);
            }
        }
        Err(StochError::SolveFailure("power iteration did not converge".into()))
    }
}

/// Species permutation whose lexicographic state order has the smallest
/// generator bandwidth. Tries all orders for up to five species.
fn band_order(gen: &Generator, states: &[DiscreteState]) -> (Vec<usize>, usize) {
    let n = states.first().map_or(0, DiscreteState::len);
    let mut best: Option<(Vec<usize>, usize)> = None;
    let orders: Vec<Vec<usize>> = if n <= 5 { permutations(n) } else { vec![(0..n).collect()] };
    for order in orders {
        let mut idx: Vec<usize> = (0..states.len()).collect();
        idx.sort_by(|&a, &b| {
            order.iter().map(|&s| states[a].0[s]).cmp(order.iter().map(|&s| states[b].0[s]))
        });
        let mut perm = vec![0; states.len()];
        for (new, &old) in idx.iter().enumerate() {
            perm[old] = new;
        }
        let bw = gen.permuted(&perm).bandwidth();
        if best.as_ref().is_none_or(|(_, b)| bw < *b) {
            best = Some((perm, bw));
        }
    }
    best.unwrap_or((Vec::new(), 0))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Stationary distribution of the chain restricted to a component.
/// Transitions leaving the component are dropped, so a truncated box gives
/// the reflected chain; that needs `allow_truncated`.
pub fn stationary_distribution(
    sys: &MassActionSystem,
    component: &ComponentResult,
    allow_truncated: bool,
) -> Result<StationarySolution, StochError> {
    if !component.closed && !(component.truncated && allow_truncated) {
        return Err(if component.truncated { StochError::Truncated } else { StochError::NotClosed });
    }
    let states = &component.states;
    if states.len() == 1 {
        return Ok(StationarySolution {
            measure: Measure::point_mass(states[0].clone()),
            residual: 0.0,
            method: SolveMethod::Gth,
        });
    }
    let gen = Generator::build(sys, states);
    let (perm, bw) = band_order(&gen, states);
    let (pi, method) = if states.len().saturating_mul(2 * bw + 1) <= BAND_LIMIT {
        let banded = gen.permuted(&perm);
        let pi_perm = banded.gth(bw)?;
        ((0..states.len()).map(|old| pi_perm[perm[old]]).collect::<Vec<f64>>(), SolveMethod::Gth)
    } else {
        (gen.power(1e-12, 5_000_000)?, SolveMethod::Power)
    };
    let total: f64 = pi.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(StochError::SolveFailure("degenerate solution".into()));
    }
    let pi: Vec<f64> = pi.iter().map(|v| v / total).collect();
    let residual = gen.residual(&pi);
    let measure = Measure::from_weights(states.iter().cloned().zip(pi))?.normalize()?;
    Ok(StationarySolution { measure, residual, method })
}

fn ln_factorials(max: i64) -> Vec<f64> {
    let mut t = vec![0.0; (max.max(0) + 1) as usize];
    for k in 1..t.len() {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

/// Normalized `c^x / x!` over the given states, computed in log space.
pub fn poisson_product<'a>(
    c: &DetState,
    states: impl IntoIterator<Item = &'a DiscreteState>,
) -> Result<Measure, StochError> {
    let states: Vec<&DiscreteState> = states.into_iter().collect();
    if states.is_empty() {
        return Err(StochError::EmptySupport);
    }
    if !c.is_positive() || states.iter().any(|x| x.len() != c.len() || x.as_slice().iter().any(|&v| v < 0)) {
        return Err(StochError::InvalidProductForm);
    }
    let max = states.iter().flat_map(|x| x.as_slice().iter().copied()).max().unwrap_or(0);
    let lf = ln_factorials(max);
    let logc: Vec<f64> = c.as_slice().iter().map(|v| v.ln()).collect();
    let logs: Vec<f64> = states
        .iter()
        .map(|x| x.as_slice().iter().zip(&logc).map(|(&xi, lc)| xi as f64 * lc - lf[xi as usize]).sum())
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights = states.iter().zip(&logs).map(|(x, l)| ((*x).clone(), (l - top).exp()));
    Ok(Measure::from_weights(weights)?.normalize()?)
}

/// Number of equations evaluated and left undetermined for one condition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EquationCounts {
    pub checked: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureBalanceReport {
    pub rb: Verdict,
    pub cb: Verdict,
    pub rvb: Verdict,
    pub cyb: Verdict,
    pub stationary: Verdict,
    /// Equations left undetermined near truncation faces, all conditions.
    pub boundary_skipped: usize,
    pub counts: ConditionCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConditionCounts {
    pub rb: EquationCounts,
    pub cb: EquationCounts,
    pub rvb: EquationCounts,
    pub cyb: EquationCounts,
    pub stationary: EquationCounts,
}

/// A term `μ(z)λ(z)`; `None` when it cannot be trusted.
type Term = Option<f64>;

struct MeasureContext<'a> {
    sys: &'a MassActionSystem,
    mu: HashMap<DiscreteState, f64>,
    domain: &'a StateBox,
    /// Faces the support leaks through: `(species, is_upper)`.
    faces: Vec<(usize, bool)>,
    margin: i64,
    vectors: Vec<Vec<i64>>,
}

impl MeasureContext<'_> {
    fn trusted(&self, z: &DiscreteState) -> bool {
        self.faces.iter().all(|&(i, upper)| {
            let d = if upper { self.domain.upper[i] - z.0[i] } else { z.0[i] - self.domain.lower[i] };
            d >= self.margin
        })
    }

    fn weight(&self, z: &DiscreteState) -> f64 {
        self.mu.get(z).copied().unwrap_or(0.0)
    }

    /// `μ(z)λ_k(z)` for each reaction, `None` where untrusted.
    fn terms(&self, z: &DiscreteState) -> Vec<Term> {
        let trusted = self.trusted(z);
        let w = self.weight(z);
        propensity(self.sys, z)
            .into_iter()
            .map(|l| if l == 0.0 { Some(0.0) } else if trusted { Some(w * l) } else { None })
            .collect()
    }

    /// States at which some equation can be nonzero.
    fn candidates(&self, extra_shifts: &[Vec<i64>]) -> BTreeSet<DiscreteState> {
        let mut set = BTreeSet::new();
        for x in self.mu.keys() {
            set.insert(x.clone());
            for v in self.vectors.iter().chain(extra_shifts) {
                set.insert(x.offset(v));
                set.insert(x.offset(&v.iter().map(|a| -a).collect::<Vec<_>>()));
            }
        }
        set
    }
}

fn sum_terms(terms: impl IntoIterator<Item = Term>) -> Term {
    terms.into_iter().try_fold(0.0, |acc, t| t.map(|v| acc + v))
}

struct Tally {
    counts: EquationCounts,
    failure: Option<Witness>,
}

impl Tally {
    fn new() -> Self {
        Self { counts: EquationCounts::default(), failure: None }
    }

    fn record(&mut self, x: &DiscreteState, id: impl FnOnce() -> String, lhs: Term, rhs: Term, tol: f64) {
        match (lhs, rhs) {
            (Some(a), Some(b)) => {
                if a == 0.0 && b == 0.0 {
                    return;
                }
                self.counts.checked += 1;
                if self.failure.is_none() && !close(a, b, tol) {
                    self.failure = Some(Witness { state: x.to_f64(), condition: id(), lhs: a, rhs: b });
                }
            }
            _ => self.counts.skipped += 1,
        }
    }

    fn record_checked(&mut self, ok: bool, witness: impl FnOnce() -> Witness) {
        self.counts.checked += 1;
        if !ok && self.failure.is_none() {
            self.failure = Some(witness());
        }
    }

    fn verdict(self) -> (Verdict, EquationCounts) {
        let v = match self.failure {
            Some(w) => Verdict::fails(w),
            None if self.counts.checked == 0 && self.counts.skipped > 0 => Verdict::undetermined(),
            None => Verdict::holds(),
        };
        (v, self.counts)
    }
}

/// Checks a measure against the four balance conditions and global
/// balance. The measure is rescaled to unit maximum weight first, so the
/// verdicts do not depend on its normalization.
pub fn classify_measure(
    sys: &MassActionSystem,
    mu: &Measure,
    domain: &StateBox,
    tol: f64,
) -> Result<MeasureBalanceReport, StochError> {
    let cycles = graph::simple_cycles(sys.network(), 3)?;
    classify_measure_with_cycles(sys, mu, domain, tol, &cycles)
}

fn context<'a>(sys: &'a MassActionSystem, mu: &Measure, domain: &'a StateBox) -> Result<MeasureContext<'a>, StochError> {
    let n = sys.n_species();
    if domain.dim() != n {
        return Err(StochError::DimensionMismatch { expected: n, found: domain.dim() });
    }
    if mu.is_empty() {
        return Err(StochError::EmptySupport);
    }
    if mu.support().any(|x| !domain.contains(x)) {
        return Err(StochError::MeasureOutsideDomain);
    }
    let top = mu.iter().map(|(_, w)| w).fold(0.0, f64::max);
    let scaled: HashMap<DiscreteState, f64> = mu.iter().map(|(x, w)| (x.clone(), w / top)).collect();
    let mut faces = BTreeSet::new();
    for x in scaled.keys() {
        for t in transitions(sys, x) {
            for i in 0..n {
                if t.target.0[i] > domain.upper[i] {
                    faces.insert((i, true));
                }
                if t.target.0[i] < domain.lower[i] {
                    faces.insert((i, false));
                }
            }
        }
    }
    let net = sys.network();
    Ok(MeasureContext {
        sys,
        mu: scaled,
        domain,
        faces: faces.into_iter().collect(),
        margin: i64::from(net.max_complex_coeff()),
        vectors: net.reaction_vectors(),
    })
}

pub(crate) fn classify_measure_with_cycles(
    sys: &MassActionSystem,
    mu: &Measure,
    domain: &StateBox,
    tol: f64,
    cycles: &[DirectedCycle],
) -> Result<MeasureBalanceReport, StochError> {
    let ctx = context(sys, mu, domain)?;
    let net = sys.network();
    let rv = ReactionVectorClasses::new(net);
    let cycle_shifts: Vec<Vec<i64>> = cycles
        .iter()
        .flat_map(|c| c.complexes.iter().map(|&i| net.complex(i).as_i64()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let xs = ctx.candidates(&[]);
    let mut cache: HashMap<DiscreteState, Vec<Term>> = HashMap::new();
    let mut terms_at = |z: &DiscreteState| -> Vec<Term> {
        cache.entry(z.clone()).or_insert_with(|| ctx.terms(z)).clone()
    };

    let mut pairs = Vec::new();
    for (k, r) in net.reactions().iter().enumerate() {
        let back = net.reaction_index(r.reversed());
        if back.is_none_or(|b| b > k) {
            pairs.push((k, back));
        }
    }

    let (mut rb, mut cb, mut rvb, mut st) = (Tally::new(), Tally::new(), Tally::new(), Tally::new());
    let m = net.n_complexes();
    for x in &xs {
        let here = terms_at(x);
        // (a) reaction pairs
        for &(k, back) in &pairs {
            let z = x.offset(&ctx.vectors[k]);
            let rhs = match back {
                Some(b) => terms_at(&z)[b],
                None => Some(0.0),
            };
            rb.record(x, || format!("rb:{}", net.reaction_label(k)), here[k], rhs, tol);
        }
        // (b) complexes
        let mut out_terms: Vec<Vec<Term>> = vec![Vec::new(); m];
        let mut in_terms: Vec<Vec<Term>> = vec![Vec::new(); m];
        for (k, r) in net.reactions().iter().enumerate() {
            out_terms[r.source].push(here[k]);
            // y' -> y evaluated at x + y' - y, with y the target
            let shift: Vec<i64> = ctx.vectors[k].iter().map(|v| -v).collect();
            in_terms[r.target].push(terms_at(&x.offset(&shift))[k]);
        }
        for y in 0..m {
            cb.record(
                x,
                || format!("cb:{}", net.complex_label(y)),
                sum_terms(out_terms[y].iter().copied()),
                sum_terms(in_terms[y].iter().copied()),
                tol,
            );
        }
        // (c) reaction-vector classes
        for class in &rv.classes {
            let there = terms_at(&x.offset(&class.xi));
            rvb.record(
                x,
                || format!("rvb:{:?}", class.xi),
                sum_terms(class.forward.iter().map(|&k| here[k])),
                sum_terms(class.backward.iter().map(|&k| there[k])),
                tol,
            );
        }
        // global balance
        let outflow = sum_terms(here.iter().copied());
        let inflow = sum_terms((0..net.n_reactions()).map(|k| {
            let shift: Vec<i64> = ctx.vectors[k].iter().map(|v| -v).collect();
            terms_at(&x.offset(&shift))[k]
        }));
        st.record(x, || "stationary".to_string(), outflow, inflow, tol);
    }

    // (d) cycles: the same μ factors appear on both sides, so the equation
    // reduces to the λ products unless some μ(x + y_i) vanishes.
    let mut cyb = Tally::new();
    let cycle_xs: BTreeSet<DiscreteState> = ctx
        .mu
        .keys()
        .flat_map(|s| cycle_shifts.iter().map(move |y| s.offset(&y.iter().map(|v| -v).collect::<Vec<_>>())))
        .collect();
    for cycle in cycles {
        let ys: Vec<Vec<i64>> = cycle.complexes.iter().map(|&i| net.complex(i).as_i64()).collect();
        for x in &cycle_xs {
            let zs: Vec<DiscreteState> = ys.iter().map(|y| x.offset(y)).collect();
            let known_zero = zs.iter().any(|z| ctx.trusted(z) && ctx.weight(z) == 0.0);
            if known_zero {
                continue;
            }
            let j = zs.len();
            let mut fwd = Some(0.0);
            let mut bwd = Some(0.0);
            let mut lin_f = 1.0;
            let mut lin_b = 1.0;
            for i in 0..j {
                let (a, b) = (cycle.complexes[i], cycle.complexes[(i + 1) % j]);
                let kf = net.reaction_index(crate::model::Reaction::new(a, b)).expect("cycle edge");
                let lf = propensity(sys, &zs[i])[kf];
                let lb = net
                    .reaction_index(crate::model::Reaction::new(b, a))
                    .map_or(0.0, |kb| propensity(sys, &zs[(i + 1) % j])[kb]);
                lin_f *= lf;
                lin_b *= lb;
                fwd = fwd.and_then(|s| (lf > 0.0).then(|| s + lf.ln()));
                bwd = bwd.and_then(|s| (lb > 0.0).then(|| s + lb.ln()));
            }
            let lambda_equal = match (fwd, bwd) {
                (None, None) => true,
                (Some(a), Some(b)) => (a - b).abs() <= tol * (1.0 + a.abs() + b.abs()),
                _ => false,
            };
            let all_trusted_positive = zs.iter().all(|z| ctx.trusted(z));
            if lambda_equal || all_trusted_positive {
                cyb.record_checked(lambda_equal, || Witness {
                    state: x.to_f64(),
                    condition: cycle_id(net, cycle),
                    lhs: lin_f,
                    rhs: lin_b,
                });
            } else {
                cyb.counts.skipped += 1;
            }
        }
    }

    let (rb, rb_c) = rb.verdict();
    let (cb, cb_c) = cb.verdict();
    let (rvb, rvb_c) = rvb.verdict();
    let (cyb, cyb_c) = cyb.verdict();
    let (stationary, st_c) = st.verdict();
    let counts = ConditionCounts { rb: rb_c, cb: cb_c, rvb: rvb_c, cyb: cyb_c, stationary: st_c };
    let boundary_skipped = rb_c.skipped + cb_c.skipped + rvb_c.skipped + cyb_c.skipped + st_c.skipped;
    Ok(MeasureBalanceReport { rb, cb, rvb, cyb, stationary, boundary_skipped, counts })
}

/// Support states whose terms are trusted by [`classify_measure`], i.e. at
/// least the interior margin away from every face the measure leaks through.
pub fn interior_support(
    sys: &MassActionSystem,
    mu: &Measure,
    domain: &StateBox,
) -> Result<Vec<DiscreteState>, StochError> {
    let ctx = context(sys, mu, domain)?;
    Ok(mu.support().filter(|x| ctx.trusted(x)).cloned().collect())
}

/// Global balance only.
pub fn is_stationary_measure(
    sys: &MassActionSystem,
    mu: &Measure,
    domain: &StateBox,
    tol: f64,
) -> Result<Verdict, StochError> {
    Ok(classify_measure_with_cycles(sys, mu, domain, tol, &[])?.stationary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_network;

    fn sys(text: &str) -> MassActionSystem {
        parse_network(text).unwrap()
    }

    fn ds(v: &[i64]) -> DiscreteState {
        DiscreteState::new(v.to_vec())
    }

    #[test]
    fn propensities() {
        let s = sys("2A <-> 3A : 6, 1");
        let p = propensity(&s, &ds(&[3]));
        let lab: Vec<String> = (0..2).map(|k| s.network().reaction_label(k)).collect();
        let get = |l: &str| p[lab.iter().position(|x| x == l).unwrap()];
        assert_eq!((get("2A -> 3A"), get("3A -> 2A")), (36.0, 6.0));
        assert!(propensity(&s, &ds(&[1])).iter().all(|&v| v == 0.0));
        assert_eq!(propensity(&sys("0 -> A : 6"), &ds(&[0])), vec![6.0]);
    }

    #[test]
    fn transitions_birth_death() {
        let t = transitions(&sys("0 <-> A : 1, 1"), &ds(&[2]));
        let mut got: Vec<(i64, f64)> = t.iter().map(|t| (t.target.0[0], t.rate)).collect();
        got.sort_by_key(|a| a.0);
        assert_eq!(got, vec![(1, 2.0), (3, 1.0)]);
        assert!(transitions(&sys("A -> B : 1"), &ds(&[0, 3])).is_empty());
    }

    #[test]
    fn components() {
        let acr = sys("A + B -> 2B : 1\nB -> A : 1");
        let c = communicating_class(&acr, &ds(&[1, 1]), &StateBox::cube(2, 10)).unwrap();
        assert_eq!(c.states, vec![ds(&[0, 2]), ds(&[1, 1])]);
        assert!(!c.closed && !c.truncated);

        let bd = sys("0 <-> A : 1, 1");
        let c = communicating_class(&bd, &ds(&[0]), &StateBox::cube(1, 100)).unwrap();
        assert_eq!(c.len(), 101);
        assert!(c.truncated && !c.closed);

        let c = communicating_class(&bd, &ds(&[-1]), &StateBox::new(vec![-1], vec![5]).unwrap()).unwrap();
        assert_eq!(c.states, vec![ds(&[-1])]);
        assert!(c.closed);

        let grow = sys("A -> 2A : 1");
        assert!(matches!(
            communicating_class(&grow, &ds(&[3]), &StateBox::cube(1, 3)),
            Err(StochError::BoxTooSmall(_))
        ));
    }

    #[test]
    fn stationary_two_state_exchange() {
        let s = sys("A <-> B : 1, 1");
        let c = communicating_class(&s, &ds(&[2, 0]), &StateBox::cube(2, 5)).unwrap();
        assert!(c.closed);
        let pi = stationary_distribution(&s, &c, false).unwrap().measure;
        for (x, want) in [([0, 2], 0.25), ([1, 1], 0.5), ([2, 0], 0.25)] {
            assert!((pi.get(&ds(&x)) - want).abs() < 1e-14);
        }
        let pois = poisson_product(&DetState::new(vec![1.0, 1.0]), &c.states).unwrap();
        for x in &c.states {
            assert!((pois.get(x) - pi.get(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn truncation_requires_flag() {
        let s = sys("0 <-> A : 1, 1");
        let c = communicating_class(&s, &ds(&[0]), &StateBox::cube(1, 30)).unwrap();
        assert_eq!(stationary_distribution(&s, &c, false), Err(StochError::Truncated));
        let leaky = sys("A + B -> 2B : 1\nB -> A : 1");
        let d = communicating_class(&leaky, &ds(&[3, 1]), &StateBox::cube(2, 30)).unwrap();
        assert_eq!(stationary_distribution(&leaky, &d, true), Err(StochError::NotClosed));
        let pi = stationary_distribution(&s, &c, true).unwrap();
        assert!(pi.residual < 1e-12);
        // Truncated Poisson(1).
        let pois = poisson_product(&DetState::new(vec![1.0]), &c.states).unwrap();
        for x in &c.states {
            assert!((pois.get(x) - pi.measure.get(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn power_iteration_agrees_with_gth() {
        let s = sys("0 <-> A : 3, 1\n2A <-> 3A : 1, 2\nA <-> B : 1, 2");
        let c = communicating_class(&s, &ds(&[0, 0]), &StateBox::cube(2, 8)).unwrap();
        let gen = Generator::build(&s, &c.states);
        let a = gen.gth(gen.bandwidth()).unwrap();
        let b = gen.power(1e-12, 5_000_000).unwrap();
        let sa: f64 = a.iter().sum();
        for (x, y) in a.iter().zip(&b) {
            assert!((x / sa - y).abs() < 1e-9);
        }
    }

    #[test]
    fn poisson_examples() {
        let p = poisson_product(&DetState::new(vec![2.0, 3.0]), [&ds(&[0, 0])]).unwrap();
        assert_eq!(p.get(&ds(&[0, 0])), 1.0);
        assert!(matches!(poisson_product(&DetState::new(vec![1.0]), []), Err(StochError::EmptySupport)));
    }

    #[test]
    fn point_mass_at_absorbing_state() {
        let s = sys("A -> B : 1");
        let mu = Measure::point_mass(ds(&[0, 2]));
        let r = classify_measure(&s, &mu, &StateBox::cube(2, 5), 1e-9).unwrap();
        for v in [&r.rb, &r.cb, &r.rvb, &r.cyb, &r.stationary] {
            assert!(v.is_holds());
        }
    }

    #[test]
    fn uniform_measure_is_not_stationary() {
        let s = sys("0 <-> A : 1, 1");
        let mu = Measure::from_weights((0..=20).map(|x| (ds(&[x]), 1.0))).unwrap().normalize().unwrap();
        let v = is_stationary_measure(&s, &mu, &StateBox::cube(1, 20), 1e-9).unwrap();
        assert!(v.is_fails());
    }
}
