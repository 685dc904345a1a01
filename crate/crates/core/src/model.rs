//! Core domain types: species, complexes, reactions, networks, mass-action
//! systems, states, measures and verdicts.
//!
//! Every value is validated at construction and immutable afterwards.
//! Complexes are stored deduplicated in ascending lexicographic order of
//! their coefficient vectors and reactions are sorted by
//! `(source, target)`, so two builds from permuted inputs are identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid species name `{0}`")]
    InvalidSpeciesName(String),
    #[error("duplicate species `{0}`")]
    DuplicateSpecies(String),
    #[error("vector has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("complex index {0} out of range")]
    ComplexIndexOutOfRange(usize),
    #[error("self-loop reaction {0}")]
    SelfLoop(String),
    #[error("duplicate reaction {0}")]
    DuplicateReaction(String),
    #[error("species `{0}` appears in no complex")]
    UnusedSpecies(String),
    #[error("complex `{0}` appears in no reaction")]
    OrphanComplex(String),
    #[error("reaction {0} is not part of the network")]
    UnknownReaction(String),
    #[error("rate constant of {reaction} must be positive and finite, got {value}")]
    NonpositiveRate { reaction: String, value: f64 },
    #[error("expected {expected} rate constants, got {found}")]
    RateCount { expected: usize, found: usize },
    #[error("measure weights must be finite and nonnegative")]
    InvalidWeight,
    #[error("measure has no mass")]
    EmptyMeasure,
}

/// Ordered table of species names. Every vector in the crate is indexed by
/// this order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize)]
pub struct SpeciesTable {
    names: Vec<String>,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl SpeciesTable {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, ModelError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = BTreeSet::new();
        for name in &names {
            if !is_identifier(name) {
                return Err(ModelError::InvalidSpeciesName(name.clone()));
            }
            if !seen.insert(name.as_str()) {
                return Err(ModelError::DuplicateSpecies(name.clone()));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn restrict(&self, keep: &[usize]) -> Self {
        Self {
            names: keep.iter().map(|&i| self.names[i].clone()).collect(),
        }
    }
}

/// A complex as a vector of nonnegative stoichiometric coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Complex(Vec<u32>);

impl Complex {
    pub fn new(coeffs: Vec<u32>) -> Self {
        Self(coeffs)
    }

    pub fn zero(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn coeffs(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `true` for the empty complex `0`.
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Molecularity `‖y‖₁`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Largest single coefficient `‖y‖∞`.
    pub fn max_coeff(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn as_i64(&self) -> Vec<i64> {
        self.0.iter().map(|&c| i64::from(c)).collect()
    }

    /// Human-readable form such as `2A + B`, or `0` for the empty complex.
    pub fn label(&self, species: &SpeciesTable) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let terms: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| {
                if c == 1 {
                    species.name(i).to_string()
                } else {
                    format!("{c}{}", species.name(i))
                }
            })
            .collect();
        terms.join(" + ")
    }
}

/// Directed edge between two complexes, referencing complex indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Reaction {
    pub source: usize,
    pub target: usize,
}

impl Reaction {
    pub fn new(source: usize, target: usize) -> Self {
        Self { source, target }
    }

    pub fn reversed(self) -> Self {
        Self::new(self.target, self.source)
    }
}

/// A validated reaction network `(S, C, R)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ReactionNetwork {
    species: SpeciesTable,
    complexes: Vec<Complex>,
    reactions: Vec<Reaction>,
}

impl ReactionNetwork {
    /// The empty network with `n = m = r = 0`.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates and canonicalizes a network. `reactions` index into
    /// `complexes`; duplicate complexes are merged.
    pub fn build(
        species: SpeciesTable,
        complexes: Vec<Complex>,
        reactions: Vec<Reaction>,
    ) -> Result<Self, ModelError> {
        Self::build_with_order(species, complexes, reactions).map(|(net, _)| net)
    }

    /// Like [`build`](Self::build), also returning for each canonical
    /// reaction the position of the input reaction it came from.
    pub(crate) fn build_with_order(
        species: SpeciesTable,
        complexes: Vec<Complex>,
        reactions: Vec<Reaction>,
    ) -> Result<(Self, Vec<usize>), ModelError> {
        let n = species.len();
        for c in &complexes {
            if c.len() != n {
                return Err(ModelError::DimensionMismatch { expected: n, found: c.len() });
            }
        }
        for r in &reactions {
            for idx in [r.source, r.target] {
                if idx >= complexes.len() {
                    return Err(ModelError::ComplexIndexOutOfRange(idx));
                }
            }
        }

        let canonical: Vec<Complex> = complexes.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let remap: Vec<usize> = complexes
            .iter()
            .map(|c| canonical.binary_search(c).expect("complex present"))
            .collect();

        let label = |r: Reaction| {
            format!(
                "{} -> {}",
                canonical[r.source].label(&species),
                canonical[r.target].label(&species)
            )
        };

        let mut mapped: Vec<(Reaction, usize)> = Vec::with_capacity(reactions.len());
        let mut seen = BTreeSet::new();
        for (k, r) in reactions.iter().enumerate() {
            let cr = Reaction::new(remap[r.source], remap[r.target]);
            if cr.source == cr.target {
                return Err(ModelError::SelfLoop(label(cr)));
            }
            if !seen.insert(cr) {
                return Err(ModelError::DuplicateReaction(label(cr)));
            }
            mapped.push((cr, k));
        }
        mapped.sort();

        let mut used = vec![false; canonical.len()];
        for (r, _) in &mapped {
            used[r.source] = true;
            used[r.target] = true;
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(ModelError::OrphanComplex(canonical[i].label(&species)));
        }
        for i in 0..n {
            if canonical.iter().all(|c| c.coeffs()[i] == 0) {
                return Err(ModelError::UnusedSpecies(species.name(i).to_string()));
            }
        }

        let order = mapped.iter().map(|&(_, k)| k).collect();
        let reactions = mapped.into_iter().map(|(r, _)| r).collect();
        Ok((Self { species, complexes: canonical, reactions }, order))
    }

    pub fn species(&self) -> &SpeciesTable {
        &self.species
    }

    pub fn complexes(&self) -> &[Complex] {
        &self.complexes
    }

    pub fn complex(&self, i: usize) -> &Complex {
        &self.complexes[i]
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_complexes(&self) -> usize {
        self.complexes.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reactions.is_empty()
    }

    pub fn reaction_index(&self, r: Reaction) -> Option<usize> {
        self.reactions.binary_search(&r).ok()
    }

    pub fn complex_index(&self, c: &Complex) -> Option<usize> {
        self.complexes.binary_search(c).ok()
    }

    /// `y' - y` for the `k`-th reaction.
    pub fn reaction_vector_at(&self, k: usize) -> Vec<i64> {
        let r = self.reactions[k];
        let (y, yp) = (&self.complexes[r.source], &self.complexes[r.target]);
        y.coeffs()
            .iter()
            .zip(yp.coeffs())
            .map(|(&a, &b)| i64::from(b) - i64::from(a))
            .collect()
    }

    pub fn reaction_vector(&self, r: Reaction) -> Result<Vec<i64>, ModelError> {
        match self.reaction_index(r) {
            Some(k) => Ok(self.reaction_vector_at(k)),
            None => Err(ModelError::UnknownReaction(format!("{} -> {}", r.source, r.target))),
        }
    }

    pub fn reaction_vectors(&self) -> Vec<Vec<i64>> {
        (0..self.n_reactions()).map(|k| self.reaction_vector_at(k)).collect()
    }

    pub fn reaction_label(&self, k: usize) -> String {
        let r = self.reactions[k];
        format!(
            "{} -> {}",
            self.complexes[r.source].label(&self.species),
            self.complexes[r.target].label(&self.species)
        )
    }

    pub fn complex_label(&self, i: usize) -> String {
        self.complexes[i].label(&self.species)
    }

    /// Largest coefficient over all complexes.
    pub fn max_complex_coeff(&self) -> u32 {
        self.complexes.iter().map(Complex::max_coeff).max().unwrap_or(0)
    }

    /// Largest reactant molecularity `max ‖y‖₁` over reactions.
    pub fn max_source_order(&self) -> u32 {
        self.reactions
            .iter()
            .map(|r| self.complexes[r.source].order())
            .max()
            .unwrap_or(0)
    }

    /// Network determined by a subset of reactions (indices into
    /// [`reactions`](Self::reactions)). Species and complexes are restricted
    /// to those the subset uses.
    pub fn subnetwork(&self, reaction_indices: &[usize]) -> Self {
        if reaction_indices.is_empty() {
            return Self::empty();
        }
        let mut complex_ids = BTreeSet::new();
        for &k in reaction_indices {
            complex_ids.insert(self.reactions[k].source);
            complex_ids.insert(self.reactions[k].target);
        }
        let keep: Vec<usize> = (0..self.n_species())
            .filter(|&i| complex_ids.iter().any(|&c| self.complexes[c].coeffs()[i] > 0))
            .collect();
        let species = self.species.restrict(&keep);
        let ids: Vec<usize> = complex_ids.into_iter().collect();
        let complexes: Vec<Complex> = ids
            .iter()
            .map(|&c| Complex::new(keep.iter().map(|&i| self.complexes[c].coeffs()[i]).collect()))
            .collect();
        let reactions = reaction_indices
            .iter()
            .map(|&k| {
                let r = self.reactions[k];
                Reaction::new(
                    ids.binary_search(&r.source).expect("source kept"),
                    ids.binary_search(&r.target).expect("target kept"),
                )
            })
            .collect();
        Self::build(species, complexes, reactions).expect("subnetwork of a valid network is valid")
    }

    /// Exact basis of the stoichiometric subspace and of its orthogonal
    /// complement.
    pub fn stoichiometric_basis(&self) -> StoichiometricBasis {
        StoichiometricBasis::compute(self.n_species(), &self.reaction_vectors())
    }
}

/// Basis of `S = span{y' - y}` (chosen among the reaction vectors) together
/// with a basis of `S⊥`, the conserved linear quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct StoichiometricBasis {
    pub basis: Vec<Vec<i64>>,
    pub conserved: Vec<Vec<BigRational>>,
}

impl StoichiometricBasis {
    fn compute(n: usize, vectors: &[Vec<i64>]) -> Self {
        let to_q = |v: &[i64]| -> Vec<BigRational> {
            v.iter().map(|&x| BigRational::from_integer(BigInt::from(x))).collect()
        };
        // Echelon rows with their pivot columns, kept in fully reduced form.
        let mut rows: Vec<(usize, Vec<BigRational>)> = Vec::new();
        let mut basis = Vec::new();
        for v in vectors {
            let mut w = to_q(v);
            for (p, row) in &rows {
                if !w[*p].is_zero() {
                    let f = w[*p].clone();
                    for j in 0..n {
                        let d = &f * &row[j];
                        w[j] -= d;
                    }
                }
            }
            if let Some(p) = w.iter().position(|x| !x.is_zero()) {
                let lead = w[p].clone();
                for x in w.iter_mut() {
                    *x /= lead.clone();
                }
                for (_, row) in rows.iter_mut() {
                    if !row[p].is_zero() {
                        let f = row[p].clone();
                        for j in 0..n {
                            let d = &f * &w[j];
                            row[j] -= d;
                        }
                    }
                }
                rows.push((p, w));
                basis.push(v.clone());
            }
        }
        let pivots: BTreeMap<usize, usize> = rows.iter().enumerate().map(|(i, (p, _))| (*p, i)).collect();
        let mut conserved = Vec::new();
        for free in (0..n).filter(|j| !pivots.contains_key(j)) {
            let mut w = vec![BigRational::zero(); n];
            w[free] = BigRational::from_integer(BigInt::from(1));
            for (&p, &i) in &pivots {
                w[p] = -rows[i].1[free].clone();
            }
            conserved.push(w);
        }
        Self { basis, conserved }
    }

    /// Dimension `s` of the stoichiometric subspace.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn conserved_f64(&self) -> Vec<Vec<f64>> {
        self.conserved
            .iter()
            .map(|w| w.iter().map(|q| q.to_f64().unwrap_or(f64::NAN)).collect())
            .collect()
    }
}

/// A reaction network equipped with positive mass-action rate constants,
/// one per reaction, aligned with [`ReactionNetwork::reactions`].
#[derive(Debug, Clone, PartialEq)]
pub struct MassActionSystem {
    network: ReactionNetwork,
    kappa: Vec<f64>,
}

impl MassActionSystem {
    pub fn new(network: ReactionNetwork, kappa: Vec<f64>) -> Result<Self, ModelError> {
        if kappa.len() != network.n_reactions() {
            return Err(ModelError::RateCount { expected: network.n_reactions(), found: kappa.len() });
        }
        for (k, &v) in kappa.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::NonpositiveRate { reaction: network.reaction_label(k), value: v });
            }
        }
        Ok(Self { network, kappa })
    }

    /// Builds a system from `(source, target, rate)` triples over a species
    /// table. Rates follow their reaction into canonical order.
    pub fn from_reactions(
        species: SpeciesTable,
        reactions: Vec<(Complex, Complex, f64)>,
    ) -> Result<Self, ModelError> {
        let mut complexes = Vec::with_capacity(2 * reactions.len());
        let mut edges = Vec::with_capacity(reactions.len());
        let mut rates = Vec::with_capacity(reactions.len());
        for (y, yp, k) in reactions {
            complexes.push(y);
            complexes.push(yp);
            edges.push(Reaction::new(complexes.len() - 2, complexes.len() - 1));
            rates.push(k);
        }
        let (network, order) = ReactionNetwork::build_with_order(species, complexes, edges)?;
        let kappa = order.iter().map(|&k| rates[k]).collect();
        Self::new(network, kappa)
    }

    pub fn network(&self) -> &ReactionNetwork {
        &self.network
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn n_species(&self) -> usize {
        self.network.n_species()
    }

    /// Same network with every rate constant multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, ModelError> {
        Self::new(self.network.clone(), self.kappa.iter().map(|k| k * factor).collect())
    }
}

/// Real concentration vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetState(pub Vec<f64>);

impl DetState {
    pub fn new(c: Vec<f64>) -> Self {
        Self(c)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }
}

/// Integer count vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiscreteState(pub Vec<i64>);

impl DiscreteState {
    pub fn new(x: Vec<i64>) -> Self {
        Self(x)
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn offset(&self, delta: &[i64]) -> Self {
        Self(self.0.iter().zip(delta).map(|(a, b)| a + b).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}

impl fmt::Display for DiscreteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Finitely supported nonnegative measure on `ℤⁿ`. Zero weights are not
/// stored, so the keys are exactly the support.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    weights: BTreeMap<DiscreteState, f64>,
    normalized: bool,
}

impl Measure {
    pub fn from_weights(weights: impl IntoIterator<Item = (DiscreteState, f64)>) -> Result<Self, ModelError> {
        let mut map = BTreeMap::new();
        for (x, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(ModelError::InvalidWeight);
            }
            if w > 0.0 {
                *map.entry(x).or_insert(0.0) += w;
            }
        }
        Ok(Self { weights: map, normalized: false })
    }

    pub fn point_mass(x: DiscreteState) -> Self {
        Self { weights: BTreeMap::from([(x, 1.0)]), normalized: true }
    }

    /// Rescales to total mass one.
    pub fn normalize(mut self) -> Result<Self, ModelError> {
        let total = self.total();
        if total <= 0.0 {
            return Err(ModelError::EmptyMeasure);
        }
        for w in self.weights.values_mut() {
            *w /= total;
        }
        self.normalized = true;
        Ok(self)
    }

    pub fn get(&self, x: &DiscreteState) -> f64 {
        self.weights.get(x).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = &DiscreteState> {
        self.weights.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DiscreteState, f64)> {
        self.weights.iter().map(|(x, &w)| (x, w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Holds,
    Fails,
    Undetermined,
}

/// The failing equation behind a `Fails` verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub state: Vec<f64>,
    pub condition: String,
    pub lhs: f64,
    pub rhs: f64,
}

/// Three-valued outcome of a balance check. A witness is present exactly
/// when the status is `Fails`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl Verdict {
    pub fn holds() -> Self {
        Self { status: Status::Holds, witness: None }
    }

    pub fn undetermined() -> Self {
        Self { status: Status::Undetermined, witness: None }
    }

    pub fn fails(witness: Witness) -> Self {
        Self { status: Status::Fails, witness: Some(witness) }
    }

    pub fn is_holds(&self) -> bool {
        self.status == Status::Holds
    }

    pub fn is_fails(&self) -> bool {
        self.status == Status::Fails
    }
}

/// Relative comparison used by every balance equation.
pub(crate) fn close(lhs: f64, rhs: f64, tol: f64) -> bool {
    (lhs - rhs).abs() <= tol * (1.0 + lhs.abs() + rhs.abs())
}
