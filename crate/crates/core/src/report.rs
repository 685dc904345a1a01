//! Whole-system analysis tying the deterministic and stochastic regimes
//! together, and the per-instance check of every implication arrow between
//! the balance notions.
//!
//! Arrows are theorems, so `violated` always indicates a bug or a numerical
//! failure. An arrow whose hypothesis is not established on the instance
//! reports `not-applicable`; absence of a solver result never counts as
//! evidence.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::detbal::{
    self, is_equilibrium, solve_complex_balanced, solve_reaction_balanced, solve_rvb, system_cycle_balanced,
    DetError, ReactionVectorClasses, RvbOptions, StateBalanceReport, StateClassifier,
};
use crate::graph::{self, active_reactions, GraphError};
use crate::model::{DetState, DiscreteState, MassActionSystem, Measure, Status};
use crate::stoch::{
    classify_measure, communicating_class, interior_support, is_stationary_measure, poisson_product,
    stationary_distribution, MeasureBalanceReport, SolveMethod, StateBox, StochError,
};

/// Largest total-variation gap accepted between a solved stationary
/// distribution and the product form of a complex balanced equilibrium.
pub const PRODUCT_FORM_TV: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyzeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Det(#[from] DetError),
    #[error(transparent)]
    Stoch(#[from] StochError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub seeds: Vec<DiscreteState>,
    pub domain: Option<StateBox>,
    pub tol: f64,
    pub rvb: RvbOptions,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self { seeds: Vec::new(), domain: None, tol: detbal::DEFAULT_TOL, rvb: RvbOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSummary {
    pub species: Vec<String>,
    pub complexes: usize,
    pub reactions: usize,
    pub reversible: bool,
    pub weakly_reversible: bool,
    pub deficiency: usize,
    pub linkage_class_count: usize,
    pub stoich_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetSummary {
    pub rb_state: Option<Vec<f64>>,
    pub cb_state: Option<Vec<f64>>,
    pub cyb_system: bool,
    pub rvb_states: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub seed: Vec<i64>,
    pub states: usize,
    pub closed: bool,
    pub truncated: bool,
    /// Every reaction fires somewhere in the component.
    pub active: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<SolveMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary: Option<crate::model::Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureBalanceReport>,
    /// No nonzero polynomial of degree at most the largest source order
    /// vanishes on the trusted part of the support.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub property_p: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub product_form_tv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImplicationStatus {
    Verified,
    Violated,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Implication {
    pub id: String,
    pub status: ImplicationStatus,
    /// Number of instances on which the arrow was checked and held.
    pub checks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemReport {
    pub graph: GraphSummary,
    pub det: DetSummary,
    pub stoch: Vec<ComponentReport>,
    pub implications: Vec<Implication>,
}

impl SystemReport {
    pub fn violations(&self) -> impl Iterator<Item = &Implication> {
        self.implications.iter().filter(|i| i.status == ImplicationStatus::Violated)
    }
}

/// Every arrow id, in report order.
pub const ARROWS: &[&str] = &[
    "RB(D) => CB(D)",
    "RB(D) => RVB(D)",
    "RB(D) => CyB(D)",
    "CB(D) & CyB(D) => RB(D)",
    "balanced state => equilibrium",
    "RB(D) => E(D)",
    "CB(D) => E(D)",
    "RB(S) => CB(S)",
    "RB(S) => RVB(S)",
    "RB(S) => CyB(S)",
    "CB(S) & CyB(S) => RB(S)",
    "CB(S) & RVB(S) & P => RB(S)",
    "balanced measure => stationary",
    "RB(S) => reversible",
    "CB(S) => weakly reversible",
    "RVB(S) => opposing reactions",
    "RB(S) => E(S)",
    "CB(S) => E(S)",
    "RB(D) <=> RB(S)",
    "CB(D) <=> CB(S)",
    "CyB(D) <=> CyB(S)",
    "CB(D) => product form",
];

#[derive(Default)]
struct Ledger {
    arrows: BTreeMap<&'static str, (usize, Option<String>)>,
}

impl Ledger {
    /// Records one instance: `None` when the hypothesis is not established,
    /// otherwise whether the conclusion held.
    fn check(&mut self, id: &'static str, outcome: Option<bool>, detail: impl FnOnce() -> String) {
        let e = self.arrows.entry(id).or_insert((0, None));
        match outcome {
            Some(true) => e.0 += 1,
            Some(false) if e.1.is_none() => e.1 = Some(detail()),
            _ => {}
        }
    }

    fn finish(self) -> Vec<Implication> {
        ARROWS
            .iter()
            .map(|&id| {
                let (checks, violated) = self.arrows.get(id).cloned().unwrap_or((0, None));
                let status = match (&violated, checks) {
                    (Some(_), _) => ImplicationStatus::Violated,
                    (None, 0) => ImplicationStatus::NotApplicable,
                    (None, _) => ImplicationStatus::Verified,
                };
                Implication { id: id.to_string(), status, checks, detail: violated }
            })
            .collect()
    }
}

/// Outcome of a conclusion verdict: `None` when undetermined.
fn holds(v: &crate::model::Verdict) -> Option<bool> {
    match v.status {
        Status::Holds => Some(true),
        Status::Fails => Some(false),
        Status::Undetermined => None,
    }
}

const P_MOD: u64 = (1 << 61) - 1;

fn mul_mod(a: u64, b: u64) -> u64 {
    ((u128::from(a) * u128::from(b)) % u128::from(P_MOD)) as u64
}

fn pow_mod(mut a: u64, mut e: u64) -> u64 {
    let mut r = 1;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a);
        }
        a = mul_mod(a, a);
        e >>= 1;
    }
    r
}

fn exponents(n: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur.push(e);
            rec(n, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, degree, &mut Vec::new(), &mut out);
    out
}

/// True when no nonzero polynomial of total degree at most `degree`
/// vanishes on `states`: the monomial evaluation matrix has full column
/// rank. Rank is computed modulo the prime 2⁶¹ − 1, which can only
/// underestimate the rational rank, so `true` is always correct.
pub fn has_property_p(states: &[DiscreteState], degree: u32) -> bool {
    let Some(n) = states.first().map(DiscreteState::len) else {
        return false;
    };
    let monomials = exponents(n, degree);
    let cols = monomials.len();
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
    for x in states {
        let residues: Vec<u64> = x.as_slice().iter().map(|&v| v.rem_euclid(P_MOD as i64) as u64).collect();
        let mut row: Vec<u64> = monomials
            .iter()
            .map(|m| m.iter().zip(&residues).fold(1, |acc, (&e, &r)| mul_mod(acc, pow_mod(r, u64::from(e)))))
            .collect();
        for (pivot, b) in &basis {
            let f = row[*pivot];
            if f != 0 {
                for (r, bv) in row.iter_mut().zip(b) {
                    *r = (*r + P_MOD - mul_mod(f, *bv)) % P_MOD;
                }
            }
        }
        if let Some(pivot) = row.iter().position(|&v| v != 0) {
            let inv = pow_mod(row[pivot], P_MOD - 2);
            for r in &mut row {
                *r = mul_mod(*r, inv);
            }
            for (_, b) in &mut basis {
                let f = b[pivot];
                if f != 0 {
                    for (bv, r) in b.iter_mut().zip(&row) {
                        *bv = (*bv + P_MOD - mul_mod(f, *r)) % P_MOD;
                    }
                }
            }
            basis.push((pivot, row));
            if basis.len() == cols {
                return true;
            }
        }
    }
    false
}

/// The positive equilibrium `c ∘ exp(Lᵀu)` in the compatibility class of
/// `x0`, where `c` is complex balanced and the rows of `L` span the
/// conservation laws. Newton on the strictly convex dual
/// `Σ c e^{Lᵀu} − u·Lx0`; `None` if the class has no positive point or the
/// iteration stalls.
pub fn equilibrium_in_class(sys: &MassActionSystem, c: &DetState, x0: &[f64]) -> Option<DetState> {
    let laws = sys.network().stoichiometric_basis().conserved_f64();
    let n = c.len();
    if laws.is_empty() {
        return Some(c.clone());
    }
    let k = laws.len();
    let l = DMatrix::from_fn(k, n, |i, j| laws[i][j]);
    let target = &l * DVector::from_column_slice(x0);
    let logc = DVector::from_iterator(n, c.as_slice().iter().map(|v| v.ln()));
    let point = |u: &DVector<f64>| (&logc + l.transpose() * u).map(f64::exp);
    let objective = |u: &DVector<f64>| point(u).sum() - u.dot(&target);
    let scale = 1.0 + target.amax();
    let mut u = DVector::zeros(k);
    for _ in 0..200 {
        let w = point(&u);
        let g = &l * &w - &target;
        if g.amax() <= 1e-11 * scale {
            let eq = DetState::new(w.iter().copied().collect());
            // Iterates sliding towards the boundary signal a class with no positive point.
            let floor = 1e-8 * scale;
            return (w.min() > floor && is_equilibrium(sys, &eq, 1e-8).is_holds()).then_some(eq);
        }
        let h = &l * DMatrix::from_diagonal(&w) * l.transpose();
        let step = h.cholesky()?.solve(&(-&g));
        let f0 = objective(&u);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &u + &step * t;
            let f = objective(&cand);
            if f.is_finite() && f <= f0 {
                u = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || u.amax() > 700.0 {
            return None;
        }
    }
    None
}

fn opposing_reactions(net: &crate::model::ReactionNetwork) -> bool {
    ReactionVectorClasses::new(net).classes.iter().all(|c| !c.forward.is_empty() && !c.backward.is_empty())
}

fn tv(a: &Measure, b: &Measure) -> f64 {
    let mut s: f64 = a.iter().map(|(x, w)| (w - b.get(x)).abs()).sum();
    s += b.iter().filter(|(x, _)| a.get(x) == 0.0).map(|(_, w)| w).sum::<f64>();
    0.5 * s
}

fn det_state_checks(ledger: &mut Ledger, label: &str, r: &StateBalanceReport) {
    let rb = r.rb.is_holds();
    for (id, v) in [("RB(D) => CB(D)", &r.cb), ("RB(D) => RVB(D)", &r.rvb), ("RB(D) => CyB(D)", &r.cyb)] {
        ledger.check(id, rb.then(|| v.is_holds()), || format!("{label} state"));
    }
    ledger.check(
        "CB(D) & CyB(D) => RB(D)",
        (r.cb.is_holds() && r.cyb.is_holds()).then_some(rb),
        || format!("{label} state"),
    );
    let balanced = rb || r.cb.is_holds() || r.rvb.is_holds();
    ledger.check("balanced state => equilibrium", balanced.then(|| r.is_equilibrium.is_holds()), || {
        format!("{label} state")
    });
}

/// Runs every analysis on the system and checks the implication arrows.
pub fn analyze(sys: &MassActionSystem, opts: &AnalyzeOptions) -> Result<SystemReport, AnalyzeError> {
    let net = sys.network();
    let n = sys.n_species();
    let linkage = graph::linkage_classes(net);
    let graph = GraphSummary {
        species: net.species().names().to_vec(),
        complexes: net.n_complexes(),
        reactions: net.n_reactions(),
        reversible: graph::is_reversible(net),
        weakly_reversible: graph::is_weakly_reversible(net),
        deficiency: graph::deficiency(net)?,
        linkage_class_count: linkage.len(),
        stoich_dim: net.stoichiometric_basis().dim(),
    };

    let rb_state = match solve_reaction_balanced(sys) {
        Err(DetError::NotReversible) => None,
        other => other?,
    };
    let cb_state = match solve_complex_balanced(sys) {
        Err(DetError::NotWeaklyReversible) => None,
        other => other?,
    };
    let cyb_system = system_cycle_balanced(sys)?;
    let rvb_states = solve_rvb(sys, &opts.rvb);
    let det = DetSummary {
        rb_state: rb_state.as_ref().map(|c| c.0.clone()),
        cb_state: cb_state.as_ref().map(|c| c.0.clone()),
        cyb_system,
        rvb_states: rvb_states.iter().map(|c| c.0.clone()).collect(),
    };

    let mut ledger = Ledger::default();
    let classifier = StateClassifier::new(sys)?;
    let labelled = rb_state
        .iter()
        .map(|c| ("rb", c))
        .chain(cb_state.iter().map(|c| ("cb", c)))
        .chain(rvb_states.iter().map(|c| ("rvb", c)));
    for (label, c) in labelled {
        det_state_checks(&mut ledger, label, &classifier.classify(c, opts.tol)?);
    }
    ledger.check(
        "CB(D) & CyB(D) => RB(D)",
        (cb_state.is_some() && cyb_system).then_some(rb_state.is_some()),
        || "system has complex balanced and cycle balanced states but no reaction balanced state".into(),
    );
    ledger.check("RB(D) => CyB(D)", rb_state.is_some().then_some(cyb_system), || {
        "rate constants violate the cycle conditions".into()
    });
    ledger.check("RB(D) => CB(D)", rb_state.is_some().then_some(cb_state.is_some()), || {
        "complex balanced solver found nothing".into()
    });

    let domain = opts.domain.clone().unwrap_or_else(|| StateBox::cube(n, 20));
    let mut stoch = Vec::new();
    for seed in &opts.seeds {
        let x0: Vec<f64> = seed.to_f64();
        for (id, c) in [("RB(D) => E(D)", &rb_state), ("CB(D) => E(D)", &cb_state)] {
            if let Some(c) = c {
                // An empty class is not a counterexample, so failure is not-applicable.
                if equilibrium_in_class(sys, c, &x0).is_some() {
                    ledger.check(id, Some(true), String::new);
                }
            }
        }
        stoch.push(component_report(sys, seed, &domain, opts.tol, &det, &mut ledger)?);
    }

    Ok(SystemReport { graph, det, stoch, implications: ledger.finish() })
}

fn component_report(
    sys: &MassActionSystem,
    seed: &DiscreteState,
    domain: &StateBox,
    tol: f64,
    det: &DetSummary,
    ledger: &mut Ledger,
) -> Result<ComponentReport, AnalyzeError> {
    let net = sys.network();
    let comp = communicating_class(sys, seed, domain)?;
    let active = active_reactions(sys, &comp.states).len() == net.n_reactions();
    let mut rep = ComponentReport {
        seed: seed.0.clone(),
        states: comp.len(),
        closed: comp.closed,
        truncated: comp.truncated,
        active,
        method: None,
        residual: None,
        stationary: None,
        measure: None,
        property_p: None,
        product_form_tv: None,
        note: None,
    };
    if !comp.closed && !comp.truncated {
        rep.note = Some("transient class: probability leaks to other states".into());
        return Ok(rep);
    }
    let sol = stationary_distribution(sys, &comp, true)?;
    let pi = &sol.measure;
    let m = classify_measure(sys, pi, domain, tol)?;
    let stationary = is_stationary_measure(sys, pi, domain, tol)?;
    let interior = interior_support(sys, pi, domain)?;
    let p = interior.iter().all(|x| x.as_slice().iter().all(|&v| v >= 0))
        && has_property_p(&interior, net.max_source_order());
    let where_ = || format!("component of {seed}");

    // Relations among the measure conditions.
    let rb = holds(&m.rb);
    for (id, v) in [("RB(S) => CB(S)", &m.cb), ("RB(S) => RVB(S)", &m.rvb), ("RB(S) => CyB(S)", &m.cyb)] {
        ledger.check(id, if rb == Some(true) { holds(v) } else { None }, where_);
    }
    let cb_cyb = holds(&m.cb) == Some(true) && holds(&m.cyb) == Some(true);
    ledger.check("CB(S) & CyB(S) => RB(S)", if cb_cyb { rb } else { None }, where_);
    let cb_rvb = holds(&m.cb) == Some(true) && holds(&m.rvb) == Some(true) && p;
    ledger.check("CB(S) & RVB(S) & P => RB(S)", if cb_rvb { rb } else { None }, where_);
    let balanced = [&m.rb, &m.cb, &m.rvb].iter().any(|v| v.is_holds());
    ledger.check("balanced measure => stationary", if balanced { holds(&stationary) } else { None }, where_);

    // Structure of the active subnetwork; only meaningful on a closed component.
    if comp.closed {
        let sub = graph::active_subnetwork(sys, &comp.states);
        ledger.check("RB(S) => reversible", m.rb.is_holds().then(|| graph::is_reversible(&sub)), where_);
        ledger.check("CB(S) => weakly reversible", m.cb.is_holds().then(|| graph::is_weakly_reversible(&sub)), where_);
        ledger.check("RVB(S) => opposing reactions", m.rvb.is_holds().then(|| opposing_reactions(&sub)), where_);
        let solved = sol.residual <= 1e-9;
        ledger.check("RB(S) => E(S)", (m.rb.is_holds() || det.rb_state.is_some()).then_some(solved), where_);
        ledger.check("CB(S) => E(S)", (m.cb.is_holds() || det.cb_state.is_some()).then_some(solved), where_);
    }

    // Bridges between the regimes.
    let bridge = |det_side: bool, stoch_side: Option<bool>| -> Option<bool> {
        match (det_side, stoch_side) {
            (_, None) => None,
            (true, Some(s)) => Some(s),
            (false, Some(true)) if active => Some(false),
            (false, Some(false)) if active => Some(true),
            _ => None,
        }
    };
    ledger.check("RB(D) <=> RB(S)", bridge(det.rb_state.is_some(), rb), where_);
    ledger.check("CB(D) <=> CB(S)", bridge(det.cb_state.is_some(), holds(&m.cb)), where_);
    ledger.check("CyB(D) <=> CyB(S)", bridge(det.cyb_system, holds(&m.cyb)), where_);
    if let (Some(c), true) = (&det.cb_state, comp.closed) {
        let pois = poisson_product(&DetState::new(c.clone()), &comp.states)?;
        let d = tv(pi, &pois);
        rep.product_form_tv = Some(d);
        ledger.check("CB(D) => product form", Some(d <= PRODUCT_FORM_TV), || format!("{} (TV {d:e})", where_()));
    }

    rep.method = Some(sol.method);
    rep.residual = Some(sol.residual);
    rep.stationary = Some(stationary);
    rep.measure = Some(m);
    rep.property_p = Some(p);
    Ok(rep)
}
