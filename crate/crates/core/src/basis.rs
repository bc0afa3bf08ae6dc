//! Monomial bases: standard, Newton-polytope and the ascending basis chain.

use std::collections::BTreeSet;

use crate::graph::Graph;
use crate::poly::Exponent;

/// All exponents in `n` variables of degree at most `d`, in graded-lex order.
pub fn standard_basis(n: usize, d: usize) -> Vec<Exponent> {
    let mut out = Vec::new();
    for deg in 0..=d {
        let mut cur = vec![0u32; n];
        homogeneous(n, deg as u32, 0, &mut cur, &mut out);
    }
    out
}

/// All exponents in `n` variables of degree exactly `d`, in graded-lex order.
pub fn homogeneous_basis(n: usize, d: usize) -> Vec<Exponent> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; n];
    homogeneous(n, d as u32, 0, &mut cur, &mut out);
    out
}

fn homogeneous(n: usize, left: u32, i: usize, cur: &mut Vec<u32>, out: &mut Vec<Exponent>) {
    if n == 0 {
        if left == 0 {
            out.push(Exponent::new(Vec::new()));
        }
        return;
    }
    if i == n - 1 {
        cur[i] = left;
        out.push(Exponent::new(cur.clone()));
        cur[i] = 0;
        return;
    }
    // larger leading entries first gives descending tuples
    for a in (0..=left).rev() {
        cur[i] = a;
        homogeneous(n, left - a, i + 1, cur, out);
    }
    cur[i] = 0;
}

/// Standard basis on the variables `vars`, embedded into `n` variables.
pub fn clique_basis(n: usize, vars: &[usize], d: usize) -> Vec<Exponent> {
    let mut v: Vec<Exponent> = standard_basis(vars.len(), d)
        .into_iter()
        .map(|e| e.embed(n, vars))
        .collect();
    v.sort();
    v
}

/// Ascending chain `B_1 ⊆ B_2 ⊆ …` produced by the basis-generation recurrence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisChain {
    pub stages: Vec<BTreeSet<Exponent>>,
    pub stabilized: bool,
}

impl BasisChain {
    pub fn last(&self) -> &BTreeSet<Exponent> {
        self.stages.last().expect("chain has at least one stage")
    }
}

/// One step: `{β ∈ B : ∃γ ∈ B, β+γ ∈ A ∪ 2·prev}`.
pub fn basis_step(
    a: &BTreeSet<Exponent>,
    b: &[Exponent],
    prev: &BTreeSet<Exponent>,
) -> BTreeSet<Exponent> {
    let doubled: BTreeSet<Exponent> = prev.iter().map(|e| e.scale(2)).collect();
    b.iter()
        .filter(|beta| {
            b.iter().any(|gamma| {
                let s = beta.add(gamma);
                a.contains(&s) || doubled.contains(&s)
            })
        })
        .cloned()
        .collect()
}

/// Iterate `basis_step` from `B_0 = ∅` until two consecutive stages agree.
pub fn generate_basis_chain(a: &BTreeSet<Exponent>, b: &[Exponent]) -> BasisChain {
    let mut stages = Vec::new();
    let mut prev = BTreeSet::new();
    loop {
        let next = basis_step(a, b, &prev);
        let done = next == prev;
        stages.push(next.clone());
        if done {
            return BasisChain {
                stages,
                stabilized: true,
            };
        }
        prev = next;
    }
}

/// `supp(G) = {β+γ : β = γ or {β,γ} ∈ E(G)}`.
pub fn graph_support(g: &Graph<Exponent>) -> BTreeSet<Exponent> {
    let mut out: BTreeSet<Exponent> = g.labels().iter().map(|b| b.scale(2)).collect();
    for (i, j) in g.edges() {
        out.insert(g.labels()[i].add(&g.labels()[j]));
    }
    out
}
