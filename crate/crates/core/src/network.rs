//! Per-line evidence networks: construction, connectivity and DOT export.

use crate::emulation::{Design, TrialSummary};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

/// A comparison of `comparator` against `baseline` within one line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Contrast {
    pub baseline: String,
    pub comparator: String,
    pub line: usize,
}

impl Contrast {
    /// Unordered key: the pair sorted by code.
    pub fn key(&self) -> (String, String) {
        if self.baseline <= self.comparator {
            (self.baseline.clone(), self.comparator.clone())
        } else {
            (self.comparator.clone(), self.baseline.clone())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub contrast: Contrast,
    pub study_id: String,
    pub design: Design,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceNetwork {
    pub line: usize,
    pub nodes: BTreeSet<String>,
    pub edges: Vec<Edge>,
}

impl EvidenceNetwork {
    pub fn n_t(&self) -> usize {
        self.nodes.len()
    }

    /// Adds treatments without evidence as isolated nodes.
    pub fn with_nodes<'a>(mut self, codes: impl IntoIterator<Item = &'a str>) -> Self {
        self.nodes.extend(codes.into_iter().map(str::to_string));
        self
    }

    /// Number of studies per distinct (unordered) contrast.
    pub fn multiplicities(&self) -> BTreeMap<(String, String), usize> {
        let mut m = BTreeMap::new();
        for e in &self.edges {
            *m.entry(e.contrast.key()).or_insert(0) += 1;
        }
        m
    }
}

pub fn build_network(studies: &[TrialSummary], line: usize) -> EvidenceNetwork {
    let mut nodes = BTreeSet::new();
    let mut edges = Vec::new();
    for s in studies {
        if let Some(a) = s.line(line) {
            nodes.insert(a.treat_ctrl.clone());
            nodes.insert(a.treat_exp.clone());
            edges.push(Edge {
                contrast: Contrast { baseline: a.treat_ctrl.clone(), comparator: a.treat_exp.clone(), line },
                study_id: s.study_id.clone(),
                design: s.design,
            });
        }
    }
    EvidenceNetwork { line, nodes, edges }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityReport {
    pub reference: String,
    pub reference_present: bool,
    /// Components, each sorted by code; ordered by their smallest code.
    pub components: Vec<Vec<String>>,
    pub reachable: BTreeSet<String>,
    pub unreachable: BTreeSet<String>,
    pub connected: bool,
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components of the undirected network and reachability from
/// `reference`.
pub fn check_connectivity(net: &EvidenceNetwork, reference: &str) -> ConnectivityReport {
    let nodes: Vec<&String> = net.nodes.iter().collect();
    let index: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut sets = DisjointSets::new(nodes.len());
    for e in &net.edges {
        sets.union(index[e.contrast.baseline.as_str()], index[e.contrast.comparator.as_str()]);
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        groups.entry(sets.find(i)).or_default().push((*n).clone());
    }
    let components: Vec<Vec<String>> = groups.into_values().collect();
    let reference_present = index.contains_key(reference);
    let reachable: BTreeSet<String> = components
        .iter()
        .find(|c| c.iter().any(|n| n == reference))
        .map(|c| c.iter().cloned().collect())
        .unwrap_or_default();
    let unreachable = net.nodes.difference(&reachable).cloned().collect();
    ConnectivityReport {
        reference: reference.to_string(),
        reference_present,
        connected: reference_present && components.len() == 1,
        components,
        reachable,
        unreachable,
    }
}

fn colour(rct: usize, target: usize) -> &'static str {
    match (rct > 0, target > 0) {
        (true, false) => "black",
        (false, true) => "blue",
        _ => "purple",
    }
}

/// Graphviz text for the network: nodes sorted by code, one edge per distinct
/// contrast labelled with its study count and design mix.
pub fn export_dot(net: &EvidenceNetwork) -> String {
    let mut mix: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for e in &net.edges {
        let entry = mix.entry(e.contrast.key()).or_insert((0, 0));
        if e.design.is_rct() {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
    }
    let mut out = format!("graph line{} {{\n", net.line);
    for n in &net.nodes {
        let _ = writeln!(out, "  \"{n}\";");
    }
    for ((a, b), (rct, target)) in &mix {
        let _ = writeln!(
            out,
            "  \"{a}\" -- \"{b}\" [label=\"{}\", rct={rct}, target_trial={target}, color={}];",
            rct + target,
            colour(*rct, *target)
        );
    }
    out.push_str("}\n");
    out
}
