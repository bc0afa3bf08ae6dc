//! Undirected labeled graphs, chordal extensions and clique decompositions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::Exponent;
use crate::pop::Pop;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph is not chordal")]
    NotChordal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// Complete every connected component.
    Maximal,
    MinDegree,
    MinFillin,
}

impl std::str::FromStr for Extension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "maximal" => Ok(Extension::Maximal),
            "min_degree" => Ok(Extension::MinDegree),
            "min_fillin" => Ok(Extension::MinFillin),
            _ => Err(format!("unknown extension `{s}`")),
        }
    }
}

/// Graph on nodes `0..labels.len()` carrying one label per node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph<L> {
    labels: Vec<L>,
    adj: Vec<BTreeSet<usize>>,
}

impl<L: Clone> Graph<L> {
    pub fn new(labels: Vec<L>) -> Self {
        let n = labels.len();
        Graph {
            labels,
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn labels(&self) -> &[L] {
        &self.labels
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        if i != j {
            self.adj[i].insert(j);
            self.adj[j].insert(i);
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i].contains(&j)
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.adj[i]
    }

    /// Edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, nb) in self.adj.iter().enumerate() {
            for &j in nb.range(i + 1..) {
                out.push((i, j));
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Whether `self`'s edge set contains `other`'s (same node set).
    pub fn contains(&self, other: &Graph<L>) -> bool {
        other.num_nodes() == self.num_nodes()
            && other.edges().iter().all(|&(i, j)| self.has_edge(i, j))
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut k = 0;
            while k < comp.len() {
                let v = comp[k];
                for &w in &self.adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                    }
                }
                k += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Maximum cardinality search visiting order; ties broken by lowest index.
    pub fn mcs_order(&self) -> Vec<usize> {
        let n = self.num_nodes();
        let mut weight = vec![0usize; n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for _ in 0..n {
            let v = (0..n)
                .filter(|&v| !visited[v])
                .max_by(|&a, &b| weight[a].cmp(&weight[b]).then(b.cmp(&a)))
                .unwrap();
            visited[v] = true;
            order.push(v);
            for &w in &self.adj[v] {
                if !visited[w] {
                    weight[w] += 1;
                }
            }
        }
        order
    }

    /// Chordality via MCS plus a zero-fill check of the induced ordering.
    pub fn is_chordal(&self) -> bool {
        let order = self.mcs_order();
        let mut pos = vec![0; self.num_nodes()];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        for &v in &order {
            let earlier: Vec<usize> = self.adj[v]
                .iter()
                .copied()
                .filter(|&w| pos[w] < pos[v])
                .collect();
            // the latest earlier neighbour must see all the others
            if let Some(&p) = earlier.iter().max_by_key(|&&w| pos[w]) {
                for &w in &earlier {
                    if w != p && !self.adj[p].contains(&w) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Chordal supergraph of `g` on the same nodes.
pub fn chordal_extension<L: Clone>(g: &Graph<L>, strategy: Extension) -> Graph<L> {
    let mut h = g.clone();
    match strategy {
        Extension::Maximal => {
            for comp in g.components() {
                for (a, &i) in comp.iter().enumerate() {
                    for &j in &comp[a + 1..] {
                        h.add_edge(i, j);
                    }
                }
            }
        }
        Extension::MinDegree | Extension::MinFillin => {
            let n = g.num_nodes();
            let mut work: Vec<BTreeSet<usize>> = g.adj.clone();
            let mut alive = vec![true; n];
            for _ in 0..n {
                let score = |v: usize| -> usize {
                    match strategy {
                        Extension::MinDegree => work[v].len(),
                        _ => fill_count(&work, v),
                    }
                };
                let v = (0..n)
                    .filter(|&v| alive[v])
                    .min_by_key(|&v| (score(v), v))
                    .unwrap();
                let nb: Vec<usize> = work[v].iter().copied().collect();
                for (a, &i) in nb.iter().enumerate() {
                    for &j in &nb[a + 1..] {
                        if !work[i].contains(&j) {
                            work[i].insert(j);
                            work[j].insert(i);
                            h.add_edge(i, j);
                        }
                    }
                }
                for &i in &nb {
                    work[i].remove(&v);
                }
                work[v].clear();
                alive[v] = false;
            }
        }
    }
    h
}

fn fill_count(adj: &[BTreeSet<usize>], v: usize) -> usize {
    let nb: Vec<usize> = adj[v].iter().copied().collect();
    let mut c = 0;
    for (a, &i) in nb.iter().enumerate() {
        for &j in &nb[a + 1..] {
            if !adj[i].contains(&j) {
                c += 1;
            }
        }
    }
    c
}

/// Maximal cliques of a chordal graph in a running-intersection order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliqueDecomposition {
    /// Node indices of each clique, sorted increasingly.
    pub cliques: Vec<Vec<usize>>,
    pub rip_holds: bool,
}

/// Whether `cliques` satisfies the running intersection property in order.
pub fn check_rip(cliques: &[Vec<usize>]) -> bool {
    let mut union: BTreeSet<usize> = BTreeSet::new();
    for (k, c) in cliques.iter().enumerate() {
        if k > 0 {
            let inter: Vec<usize> = c.iter().copied().filter(|v| union.contains(v)).collect();
            if !cliques[..k]
                .iter()
                .any(|prev| inter.iter().all(|v| prev.contains(v)))
            {
                return false;
            }
        }
        union.extend(c.iter().copied());
    }
    true
}

pub fn maximal_cliques_rip<L: Clone>(g: &Graph<L>) -> Result<CliqueDecomposition, GraphError> {
    if !g.is_chordal() {
        return Err(GraphError::NotChordal);
    }
    let order = g.mcs_order();
    let mut pos = vec![0; g.num_nodes()];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    // candidate clique per vertex: itself plus earlier-visited neighbours
    let candidates: Vec<Vec<usize>> = order
        .iter()
        .map(|&v| {
            let mut c: Vec<usize> = g.adj[v]
                .iter()
                .copied()
                .filter(|&w| pos[w] < pos[v])
                .collect();
            c.push(v);
            c.sort_unstable();
            c
        })
        .collect();
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    for (k, c) in candidates.iter().enumerate() {
        let dominated = candidates.iter().enumerate().any(|(j, d)| {
            j != k && d.len() > c.len() && c.iter().all(|v| d.contains(v))
        }) || cliques.contains(c);
        if !dominated {
            cliques.push(c.clone());
        }
    }
    let rip_holds = check_rip(&cliques);
    Ok(CliqueDecomposition { cliques, rip_holds })
}

/// Correlative sparsity pattern graph on the variables `0..n`.
///
/// Constraints with `d_j = r` (the set `J'`) contribute edges monomial by
/// monomial like the objective; all others contribute a clique over their
/// full variable set.
pub fn csp_graph(pop: &Pop, r: usize) -> Graph<usize> {
    let mut g = Graph::new((0..pop.n).collect());
    let add_monomials = |g: &mut Graph<usize>, p: &crate::poly::Polynomial| {
        for (e, _) in p.terms() {
            let v = e.vars();
            for (a, &i) in v.iter().enumerate() {
                for &j in &v[a + 1..] {
                    g.add_edge(i, j);
                }
            }
        }
    };
    add_monomials(&mut g, &pop.objective);
    let d = pop.constraint_half_degrees();
    for (j, (_, c)) in pop.constraints().into_iter().enumerate() {
        if d[j] == r {
            add_monomials(&mut g, c);
        } else {
            let v = c.variables();
            for (a, &i) in v.iter().enumerate() {
                for &k in &v[a + 1..] {
                    g.add_edge(i, k);
                }
            }
        }
    }
    g
}

/// Graph with edges only from monomials shared by some term.
pub fn icsp_graph(pop: &Pop) -> Graph<usize> {
    let mut g = Graph::new((0..pop.n).collect());
    let polys = std::iter::once(&pop.objective)
        .chain(pop.inequalities.iter())
        .chain(pop.equalities.iter());
    for p in polys {
        for (e, _) in p.terms() {
            let v = e.vars();
            for (a, &i) in v.iter().enumerate() {
                for &j in &v[a + 1..] {
                    g.add_edge(i, j);
                }
            }
        }
    }
    g
}

/// Term sparsity pattern graph: `{β,γ}` is an edge iff `β+γ ∈ A ∪ 2·basis`.
pub fn tsp_graph(basis: &[Exponent], a: &BTreeSet<Exponent>) -> Graph<Exponent> {
    let doubled: BTreeSet<Exponent> = basis.iter().map(|b| b.scale(2)).collect();
    let mut g = Graph::new(basis.to_vec());
    for i in 0..basis.len() {
        for j in i + 1..basis.len() {
            let s = basis[i].add(&basis[j]);
            if a.contains(&s) || doubled.contains(&s) {
                g.add_edge(i, j);
            }
        }
    }
    g
}

/// Sorted clique sizes as a multiset.
pub fn clique_sizes(d: &CliqueDecomposition) -> Vec<usize> {
    let mut v: Vec<usize> = d.cliques.iter().map(Vec::len).collect();
    v.sort_unstable();
    v
}

/// Map labels to node indices.
pub fn label_index<L: Ord + Clone>(g: &Graph<L>) -> BTreeMap<L, usize> {
    g.labels()
        .iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), i))
        .collect()
}
