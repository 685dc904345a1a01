//! Structure of the reaction graph: linkage classes, reversibility,
//! deficiency, directed simple cycles and active subnetworks.

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use petgraph::unionfind::UnionFind;
use petgraph::visit::NodeFiltered;
use serde::Serialize;
use thiserror::Error;

use crate::model::{MassActionSystem, ReactionNetwork};

/// Default ceiling on the number of enumerated cycles.
pub const DEFAULT_CYCLE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("operation undefined on the empty network")]
    EmptyNetwork,
    #[error("more than {cap} directed cycles")]
    CycleBudgetExceeded { cap: usize },
}

/// Connected components of the undirected reaction graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkagePartition {
    pub classes: Vec<Vec<usize>>,
    /// `class_of[i]` is the class containing complex `i`.
    pub class_of: Vec<usize>,
}

impl LinkagePartition {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Simple directed cycle `y₁ → y₂ → … → y_j → y₁`, rotated so the
/// smallest complex index comes first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DirectedCycle {
    pub complexes: Vec<usize>,
}

impl DirectedCycle {
    pub fn len(&self) -> usize {
        self.complexes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.complexes.is_empty()
    }

    /// Consecutive `(source, target)` pairs including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let j = self.complexes.len();
        (0..j).map(move |i| (self.complexes[i], self.complexes[(i + 1) % j]))
    }

    /// The same cycle traversed backwards, in canonical rotation.
    pub fn reversed(&self) -> Self {
        let mut c = self.complexes.clone();
        c[1..].reverse();
        Self { complexes: c }
    }
}

fn digraph(net: &ReactionNetwork) -> DiGraph<(), ()> {
    let mut g = DiGraph::with_capacity(net.n_complexes(), net.n_reactions());
    for _ in 0..net.n_complexes() {
        g.add_node(());
    }
    for r in net.reactions() {
        g.add_edge(NodeIndex::new(r.source), NodeIndex::new(r.target), ());
    }
    g
}

pub fn linkage_classes(net: &ReactionNetwork) -> LinkagePartition {
    let m = net.n_complexes();
    let mut uf = UnionFind::<usize>::new(m);
    for r in net.reactions() {
        uf.union(r.source, r.target);
    }
    let mut root_to_class = vec![usize::MAX; m];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut class_of = vec![0; m];
    for i in 0..m {
        let root = uf.find(i);
        if root_to_class[root] == usize::MAX {
            root_to_class[root] = classes.len();
            classes.push(Vec::new());
        }
        class_of[i] = root_to_class[root];
        classes[class_of[i]].push(i);
    }
    LinkagePartition { classes, class_of }
}

/// Strongly connected component index for every complex.
pub fn strong_components(net: &ReactionNetwork) -> Vec<usize> {
    let g = digraph(net);
    let mut comp = vec![0; net.n_complexes()];
    for (k, scc) in tarjan_scc(&g).into_iter().enumerate() {
        for v in scc {
            comp[v.index()] = k;
        }
    }
    comp
}

pub fn is_reversible(net: &ReactionNetwork) -> bool {
    net.reactions().iter().all(|r| net.reaction_index(r.reversed()).is_some())
}

pub fn is_weakly_reversible(net: &ReactionNetwork) -> bool {
    let comp = strong_components(net);
    net.reactions().iter().all(|r| comp[r.source] == comp[r.target])
}

/// `δ = m − ℓ − s`.
pub fn deficiency(net: &ReactionNetwork) -> Result<usize, GraphError> {
    if net.is_empty() {
        return Err(GraphError::EmptyNetwork);
    }
    let m = net.n_complexes();
    let l = linkage_classes(net).len();
    let s = net.stoichiometric_basis().dim();
    Ok(m - l - s)
}

struct Johnson<'a> {
    adj: &'a [Vec<usize>],
    in_scc: Vec<bool>,
    blocked: Vec<bool>,
    b: Vec<Vec<usize>>,
    stack: Vec<usize>,
    min_len: usize,
    cap: usize,
    out: Vec<DirectedCycle>,
}

impl Johnson<'_> {
    fn unblock(&mut self, u: usize) {
        let mut work = vec![u];
        while let Some(v) = work.pop() {
            if self.blocked[v] {
                self.blocked[v] = false;
                work.append(&mut self.b[v]);
            }
        }
    }

    fn circuit(&mut self, v: usize, s: usize) -> Result<bool, GraphError> {
        let mut found = false;
        self.stack.push(v);
        self.blocked[v] = true;
        for &w in &self.adj[v] {
            if !self.in_scc[w] {
                continue;
            }
            if w == s {
                if self.stack.len() >= self.min_len {
                    if self.out.len() >= self.cap {
                        return Err(GraphError::CycleBudgetExceeded { cap: self.cap });
                    }
                    self.out.push(DirectedCycle { complexes: self.stack.clone() });
                }
                found = true;
            } else if !self.blocked[w] && self.circuit(w, s)? {
                found = true;
            }
        }
        if found {
            self.unblock(v);
        } else {
            for &w in &self.adj[v] {
                if self.in_scc[w] && !self.b[w].contains(&v) {
                    self.b[w].push(v);
                }
            }
        }
        self.stack.pop();
        Ok(found)
    }
}

/// Every directed simple cycle with at least `min_len` complexes, each
/// once, in lexicographic order of the canonical rotation.
pub fn simple_cycles(net: &ReactionNetwork, min_len: usize) -> Result<Vec<DirectedCycle>, GraphError> {
    simple_cycles_capped(net, min_len, DEFAULT_CYCLE_CAP)
}

pub fn simple_cycles_capped(
    net: &ReactionNetwork,
    min_len: usize,
    cap: usize,
) -> Result<Vec<DirectedCycle>, GraphError> {
    let m = net.n_complexes();
    let g = digraph(net);
    let mut adj = vec![Vec::new(); m];
    for r in net.reactions() {
        adj[r.source].push(r.target);
    }
    let mut j = Johnson {
        adj: &adj,
        in_scc: vec![false; m],
        blocked: vec![false; m],
        b: vec![Vec::new(); m],
        stack: Vec::new(),
        min_len: min_len.max(2),
        cap,
        out: Vec::new(),
    };
    let mut s = 0;
    while s < m {
        let sub = NodeFiltered::from_fn(&g, |v: NodeIndex| v.index() >= s);
        let least = tarjan_scc(&sub)
            .into_iter()
            .filter(|c| c.len() > 1)
            .min_by_key(|c| c.iter().map(|v| v.index()).min());
        let Some(scc) = least else { break };
        s = scc.iter().map(|v| v.index()).min().expect("nonempty scc");
        j.in_scc.iter_mut().for_each(|f| *f = false);
        for v in &scc {
            let v = v.index();
            j.in_scc[v] = true;
            j.blocked[v] = false;
            j.b[v].clear();
        }
        j.circuit(s, s)?;
        s += 1;
    }
    let mut out = j.out;
    out.sort();
    Ok(out)
}

/// Anything at which mass-action rates can be evaluated.
pub trait RateState {
    fn rates(&self, sys: &MassActionSystem) -> Vec<f64>;
}

/// Indices of reactions with positive rate at some state in `states`.
pub fn active_reactions<'a, S: RateState + 'a>(
    sys: &MassActionSystem,
    states: impl IntoIterator<Item = &'a S>,
) -> Vec<usize> {
    let mut active = vec![false; sys.network().n_reactions()];
    for x in states {
        for (k, rate) in x.rates(sys).into_iter().enumerate() {
            if rate > 0.0 {
                active[k] = true;
            }
        }
    }
    active.iter().enumerate().filter(|(_, &a)| a).map(|(k, _)| k).collect()
}

pub fn active_subnetwork<'a, S: RateState + 'a>(
    sys: &MassActionSystem,
    states: impl IntoIterator<Item = &'a S>,
) -> ReactionNetwork {
    sys.network().subnetwork(&active_reactions(sys, states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_network;
    use std::collections::BTreeSet;

    fn net(text: &str) -> ReactionNetwork {
        parse_network(text).unwrap().network().clone()
    }

    const SQUARE: &str = "3A -> 2A + B : 2
2A + B -> 3B : 2
3B -> A + 2B : 2
A + 2B -> 3A : 2
\
                          3A -> A + 2B : 1
A + 2B -> 3B : 1
3B -> 2A + B : 1
2A + B -> 3A : 1";
    const TRIANGLE: &str = "2A <-> A + B : 1, 2\nA + B <-> 2B : 2, 1\n2B <-> 2A : 1, 1";

    /// Exhaustive DFS over all simple paths; canonical rotation.
    fn oracle_cycles(net: &ReactionNetwork, min_len: usize) -> BTreeSet<Vec<usize>> {
        fn dfs(net: &ReactionNetwork, start: usize, path: &mut Vec<usize>, out: &mut BTreeSet<Vec<usize>>, min_len: usize) {
            let v = *path.last().unwrap();
            for r in net.reactions().iter().filter(|r| r.source == v) {
                if r.target == start && path.len() >= min_len {
                    out.insert(path.clone());
                } else if r.target > start && !path.contains(&r.target) {
                    path.push(r.target);
                    dfs(net, start, path, out, min_len);
                    path.pop();
                }
            }
        }
        let mut out = BTreeSet::new();
        for s in 0..net.n_complexes() {
            dfs(net, s, &mut vec![s], &mut out, min_len);
        }
        out
    }

    #[test]
    fn linkage() {
        assert_eq!(linkage_classes(&net("A + B <-> 2C : 1, 1\nA <-> B : 1, 1")).len(), 2);
        assert_eq!(linkage_classes(&net(SQUARE)).len(), 1);
        assert_eq!(linkage_classes(&ReactionNetwork::empty()).len(), 0);
    }

    #[test]
    fn reversibility() {
        let intro = net("A + B <-> 2C : 1, 1\nA <-> B : 1, 1");
        assert!(is_reversible(&intro) && is_weakly_reversible(&intro));
        let sq = net(SQUARE);
        assert!(is_reversible(&sq) && is_weakly_reversible(&sq));
        let one_way = net("3A -> 2A + B : 2\n2A + B -> A + 2B : 2\nA + 2B -> 3B : 2\n3B -> 3A : 2");
        assert!(!is_reversible(&one_way) && is_weakly_reversible(&one_way));
        let acr = net("A + B -> 2B : 1\nB -> A : 1");
        assert!(!is_weakly_reversible(&acr));
        assert!(is_reversible(&ReactionNetwork::empty()) && is_weakly_reversible(&ReactionNetwork::empty()));
    }

    #[test]
    fn deficiencies() {
        assert_eq!(deficiency(&net("A + B <-> 2C : 1, 1\nA <-> B : 1, 1")), Ok(0));
        assert_eq!(deficiency(&net(SQUARE)), Ok(2));
        assert_eq!(deficiency(&net("0 <-> A : 6, 11\n2A <-> 3A : 6, 1")), Ok(1));
        assert_eq!(deficiency(&ReactionNetwork::empty()), Err(GraphError::EmptyNetwork));
    }

    #[test]
    fn cycles() {
        let tri = net(TRIANGLE);
        let c = simple_cycles(&tri, 3).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|c| c.len() == 3));
        assert_eq!(c[0].reversed(), c[1]);
        let sq = simple_cycles(&net(SQUARE), 3).unwrap();
        assert_eq!(sq.len(), 2);
        assert!(sq.iter().all(|c| c.len() == 4));
        assert!(simple_cycles(&net("0 <-> A : 1, 1"), 3).unwrap().is_empty());
        assert_eq!(simple_cycles(&net("0 <-> A : 1, 1"), 2).unwrap().len(), 1);
        for text in [TRIANGLE, SQUARE] {
            let n = net(text);
            let got: BTreeSet<Vec<usize>> =
                simple_cycles(&n, 3).unwrap().into_iter().map(|c| c.complexes).collect();
            assert_eq!(got, oracle_cycles(&n, 3));
        }
    }

    #[test]
    fn cycle_cap() {
        assert_eq!(
            simple_cycles_capped(&net(TRIANGLE), 3, 1),
            Err(GraphError::CycleBudgetExceeded { cap: 1 })
        );
    }
}
