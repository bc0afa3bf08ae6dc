//! Moment relaxations: dense, correlative-sparse, term-sparse and combined.
//!
//! Every builder emits a [`BlockSDP`] whose variables are moments `y_α`
//! keyed by exponent, so moment matrices of overlapping cliques share
//! variables without explicit consistency constraints.

mod symbolic;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::basis::{self, clique_basis, graph_support, standard_basis};
use crate::graph::{
    chordal_extension, csp_graph, icsp_graph, maximal_cliques_rip, tsp_graph, Extension, Graph,
    GraphError,
};
use crate::poly::{newton_halfpolytope_of, Exponent, Polynomial};
use crate::pop::{ConstraintKind, Pop};

pub use symbolic::{
    localizing_matrix, AffineForm, BlockInfo, BlockOrigin, BlockSDP, Evaluation, Mode, RelaxMeta,
    SymbolicMatrix, VarKey,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error("relaxation order {r} is below the minimum order {r_min}")]
    OrderTooLow { r: usize, r_min: usize },
    #[error("sparse order must be at least 1")]
    SparseOrderZero,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn check_order(pop: &Pop, r: usize) -> Result<(), RelaxError> {
    let r_min = pop.r_min();
    if r < r_min {
        Err(RelaxError::OrderTooLow { r, r_min })
    } else {
        Ok(())
    }
}

fn objective_form(pop: &Pop) -> AffineForm {
    AffineForm::riesz(&pop.objective, &Exponent::zero(pop.n))
}

fn normalization(n: usize) -> AffineForm {
    let mut f = AffineForm::var(VarKey::Moment(Exponent::zero(n)), 1.0);
    f.constant = -1.0;
    f
}

/// Distinct exponent sums `β+γ` over the upper triangle of `rows`.
fn pair_sums(rows: &[Exponent]) -> BTreeSet<Exponent> {
    let mut s = BTreeSet::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i..] {
            s.insert(a.add(b));
        }
    }
    s
}

/// Scalar `L_y(g) ≥ 0` (or `= 0` for an equality).
fn push_scalar(sdp: &mut BlockSDP, kind: ConstraintKind, g: &Polynomial, j: usize) {
    let z = Exponent::zero(g.nvars());
    match kind {
        ConstraintKind::Inequality => sdp.push_block(
            localizing_matrix(std::slice::from_ref(&z), g),
            BlockOrigin::Scalar { constraint: j },
            vec![z],
        ),
        ConstraintKind::Equality => sdp.push_equalities([AffineForm::riesz(g, &z)]),
    }
}

/// Dense moment relaxation of order `r`.
pub fn build_dense(pop: &Pop, r: usize) -> Result<BlockSDP, RelaxError> {
    check_order(pop, r)?;
    let n = pop.n;
    let d = pop.constraint_half_degrees();
    let all: Vec<usize> = (0..n).collect();
    let mut sdp = BlockSDP::new(
        objective_form(pop),
        RelaxMeta {
            n,
            mode: Mode::Dense,
            r,
            s: None,
            cliques: vec![all],
            orders: vec![r],
            assignment: vec![(0..d.len()).collect()],
            scalar_constraints: Vec::new(),
        },
    );
    sdp.push_equalities([normalization(n)]);
    let one = Polynomial::constant(n, 1.0);
    let rows = standard_basis(n, r);
    sdp.push_block(
        localizing_matrix(&rows, &one),
        BlockOrigin::Moment { clique: 0, part: 0 },
        rows,
    );
    for (j, (kind, g)) in pop.constraints().into_iter().enumerate() {
        let rows = standard_basis(n, r - d[j]);
        match kind {
            ConstraintKind::Inequality => sdp.push_block(
                localizing_matrix(&rows, g),
                BlockOrigin::Localizing {
                    constraint: j,
                    clique: 0,
                    part: 0,
                },
                rows,
            ),
            ConstraintKind::Equality => {
                let forms: Vec<AffineForm> = pair_sums(&rows)
                    .iter()
                    .map(|e| AffineForm::riesz(g, e))
                    .collect();
                sdp.push_equalities(forms);
            }
        }
    }
    Ok(sdp)
}

/// Per-clique data of a (possibly term-sparse) clique decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct CliquePlan {
    pub vars: Vec<usize>,
    pub order: usize,
    /// Row monomials of the moment matrix (embedded in `n` variables).
    pub moment_basis: Vec<Exponent>,
    /// Indices into the combined constraint list.
    pub constraints: Vec<usize>,
}

/// A full clique decomposition with the constraint partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub n: usize,
    pub cliques: Vec<CliquePlan>,
    /// Constraints kept as scalar `L_y(g_j) ≥ 0` (the set `J'`).
    pub scalar: Vec<usize>,
}

impl Plan {
    /// Node set of slot `t` of clique `k` (slot 0 is the moment matrix).
    fn slot_nodes(&self, pop: &Pop, k: usize, t: usize) -> Vec<Exponent> {
        let c = &self.cliques[k];
        if t == 0 {
            c.moment_basis.clone()
        } else {
            let j = c.constraints[t - 1];
            let dj = pop.constraint_half_degrees()[j];
            clique_basis(self.n, &c.vars, c.order - dj)
        }
    }
}

/// Assign constraints to the smallest covering clique (ties: lowest index).
/// Constraints in `forced_scalar` or covered by no clique become scalars.
fn assign_constraints(
    pop: &Pop,
    cliques: &[Vec<usize>],
    forced_scalar: &BTreeSet<usize>,
) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut assign = vec![Vec::new(); cliques.len()];
    let mut scalar = Vec::new();
    for (j, (_, g)) in pop.constraints().into_iter().enumerate() {
        if forced_scalar.contains(&j) {
            scalar.push(j);
            continue;
        }
        let vars = g.variables();
        let best = cliques
            .iter()
            .enumerate()
            .filter(|(_, c)| vars.iter().all(|v| c.contains(v)))
            .min_by_key(|(k, c)| (c.len(), *k));
        match best {
            Some((k, _)) => assign[k].push(j),
            None => scalar.push(j),
        }
    }
    (assign, scalar)
}

/// Variable cliques of the chordally extended csp graph at order `r`.
pub fn cs_cliques(pop: &Pop, r: usize, ext: Extension) -> Result<Vec<Vec<usize>>, RelaxError> {
    let g = chordal_extension(&csp_graph(pop, r), ext);
    Ok(maximal_cliques_rip(&g)?.cliques)
}

/// Clique plan used by the CS and CS-TS builders at order `r`.
pub fn cs_plan(pop: &Pop, r: usize, ext: Extension) -> Result<Plan, RelaxError> {
    check_order(pop, r)?;
    let cliques = cs_cliques(pop, r, ext)?;
    let d = pop.constraint_half_degrees();
    let forced: BTreeSet<usize> = (0..d.len()).filter(|&j| d[j] == r).collect();
    let (assign, scalar) = assign_constraints(pop, &cliques, &forced);
    Ok(Plan {
        n: pop.n,
        cliques: cliques
            .into_iter()
            .zip(assign)
            .map(|(vars, constraints)| CliquePlan {
                moment_basis: clique_basis(pop.n, &vars, r),
                vars,
                order: r,
                constraints,
            })
            .collect(),
        scalar,
    })
}

/// Single-clique plan used by the TS builder.
pub fn ts_plan(pop: &Pop, r: usize, moment_basis: Option<Vec<Exponent>>) -> Plan {
    let basis = moment_basis.unwrap_or_else(|| default_ts_basis(pop, r));
    Plan {
        n: pop.n,
        cliques: vec![CliquePlan {
            vars: (0..pop.n).collect(),
            order: r,
            moment_basis: basis,
            constraints: (0..pop.constraints().len()).collect(),
        }],
        scalar: Vec::new(),
    }
}

/// Newton half-polytope of `f − λ` for unconstrained problems, standard
/// basis otherwise.
pub fn default_ts_basis(pop: &Pop, r: usize) -> Vec<Exponent> {
    if pop.is_unconstrained() {
        let mut pts: Vec<Exponent> = pop.objective.terms().map(|(e, _)| e.clone()).collect();
        pts.push(Exponent::zero(pop.n));
        newton_halfpolytope_of(&pts, pop.n)
            .into_iter()
            .filter(|e| e.degree() as usize <= r)
            .collect()
    } else {
        standard_basis(pop.n, r)
    }
}

/// History of term-sparsity graphs: `history[s][k][t]` is the graph of slot
/// `t` of clique `k` after `s` iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct TsState {
    pub history: Vec<Vec<Vec<Graph<Exponent>>>>,
    pub stabilized: bool,
}

impl TsState {
    /// Number of completed iterations.
    pub fn s(&self) -> usize {
        self.history.len() - 1
    }

    /// Graphs at sparse order `s` (the last available ones beyond it).
    pub fn graphs(&self, s: usize) -> &Vec<Vec<Graph<Exponent>>> {
        &self.history[s.min(self.s())]
    }
}

/// Run the support-extension / chordal-extension iteration on a plan.
pub fn iterate_plan(pop: &Pop, plan: &Plan, ext: Extension, s_max: usize) -> TsState {
    let constraints = pop.constraints();
    let a = pop.global_support();
    let mut g0: Vec<Vec<Graph<Exponent>>> = Vec::new();
    for (k, c) in plan.cliques.iter().enumerate() {
        let a_k: BTreeSet<Exponent> = a
            .iter()
            .filter(|e| e.supported_in(&c.vars))
            .cloned()
            .collect();
        let mut slots = vec![tsp_graph(&c.moment_basis, &a_k)];
        for t in 1..=c.constraints.len() {
            slots.push(Graph::new(plan.slot_nodes(pop, k, t)));
        }
        g0.push(slots);
    }
    let poly_of = |k: usize, t: usize| -> Polynomial {
        if t == 0 {
            Polynomial::constant(pop.n, 1.0)
        } else {
            constraints[plan.cliques[k].constraints[t - 1]].1.clone()
        }
    };
    let mut history = vec![g0];
    let mut stabilized = false;
    for s in 1..=s_max {
        let prev = &history[s - 1];
        let mut cover: BTreeSet<Exponent> = BTreeSet::new();
        for (k, slots) in prev.iter().enumerate() {
            for (t, g) in slots.iter().enumerate() {
                let p = poly_of(k, t);
                for b in graph_support(g) {
                    for (d, _) in p.terms() {
                        cover.insert(b.add(d));
                    }
                }
            }
        }
        let mut next = Vec::with_capacity(prev.len());
        for (k, slots) in prev.iter().enumerate() {
            let mut row = Vec::with_capacity(slots.len());
            for (t, g) in slots.iter().enumerate() {
                let p = poly_of(k, t);
                let nodes = g.labels().to_vec();
                let mut f = Graph::new(nodes.clone());
                for i in 0..nodes.len() {
                    for j in i + 1..nodes.len() {
                        let s = nodes[i].add(&nodes[j]);
                        if p.terms().any(|(d, _)| cover.contains(&s.add(d))) {
                            f.add_edge(i, j);
                        }
                    }
                }
                row.push(chordal_extension(&f, ext));
            }
            next.push(row);
        }
        let same = s >= 2 && next == history[s - 1];
        if same {
            stabilized = true;
            break;
        }
        history.push(next);
    }
    TsState {
        history,
        stabilized,
    }
}

/// Term-sparsity iteration for the single-clique (TS-only) setting.
///
/// `moment_basis` defaults to the Newton basis for unconstrained problems
/// and the standard basis otherwise.
pub fn ts_iterate(
    pop: &Pop,
    r: usize,
    moment_basis: Option<Vec<Exponent>>,
    ext: Extension,
    s_max: usize,
) -> Result<TsState, RelaxError> {
    check_order(pop, r)?;
    Ok(iterate_plan(pop, &ts_plan(pop, r, moment_basis), ext, s_max))
}

/// Realize a plan as a block SDP; `graphs = None` means no term sparsity.
fn realize(
    pop: &Pop,
    plan: &Plan,
    graphs: Option<&Vec<Vec<Graph<Exponent>>>>,
    meta: RelaxMeta,
) -> Result<BlockSDP, RelaxError> {
    let n = pop.n;
    let constraints = pop.constraints();
    let one = Polynomial::constant(n, 1.0);
    let mut sdp = BlockSDP::new(objective_form(pop), meta);
    sdp.push_equalities([normalization(n)]);
    for (k, c) in plan.cliques.iter().enumerate() {
        for t in 0..=c.constraints.len() {
            let (kind, g, j) = if t == 0 {
                (ConstraintKind::Inequality, &one, usize::MAX)
            } else {
                let j = c.constraints[t - 1];
                (constraints[j].0, constraints[j].1, j)
            };
            let nodes = plan.slot_nodes(pop, k, t);
            let parts: Vec<Vec<Exponent>> = match graphs {
                None => vec![nodes.clone()],
                Some(gs) => {
                    let gr = &gs[k][t];
                    maximal_cliques_rip(gr)?
                        .cliques
                        .into_iter()
                        .map(|cl| cl.into_iter().map(|i| gr.labels()[i].clone()).collect())
                        .collect()
                }
            };
            match kind {
                ConstraintKind::Inequality => {
                    for (part, rows) in parts.into_iter().enumerate() {
                        let origin = if t == 0 {
                            BlockOrigin::Moment { clique: k, part }
                        } else {
                            BlockOrigin::Localizing {
                                constraint: j,
                                clique: k,
                                part,
                            }
                        };
                        sdp.push_block(localizing_matrix(&rows, g), origin, rows);
                    }
                }
                ConstraintKind::Equality => {
                    let mut sums = BTreeSet::new();
                    for rows in &parts {
                        sums.extend(pair_sums(rows));
                    }
                    let forms: Vec<AffineForm> =
                        sums.iter().map(|e| AffineForm::riesz(g, e)).collect();
                    sdp.push_equalities(forms);
                }
            }
        }
    }
    for &j in &plan.scalar {
        push_scalar(&mut sdp, constraints[j].0, constraints[j].1, j);
    }
    Ok(sdp)
}

fn plan_meta(plan: &Plan, mode: Mode, r: usize, s: Option<usize>) -> RelaxMeta {
    RelaxMeta {
        n: plan.n,
        mode,
        r,
        s,
        cliques: plan.cliques.iter().map(|c| c.vars.clone()).collect(),
        orders: plan.cliques.iter().map(|c| c.order).collect(),
        assignment: plan.cliques.iter().map(|c| c.constraints.clone()).collect(),
        scalar_constraints: plan.scalar.clone(),
    }
}

/// Options of the correlative-sparse builder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsOptions {
    pub extension: Extension,
    /// When set to `N`, add the redundant constraint `N − Σ_{i∈I_k} x_i² ≥ 0`
    /// to every clique.
    pub add_ball: Option<f64>,
}

impl Default for CsOptions {
    fn default() -> Self {
        CsOptions {
            extension: Extension::MinFillin,
            add_ball: None,
        }
    }
}

/// Append ball constraints over each clique to a copy of `pop`.
fn with_ball(pop: &Pop, cliques: &[Vec<usize>], bound: f64) -> Pop {
    let mut p = pop.clone();
    for c in cliques {
        let mut ball = Polynomial::constant(pop.n, bound);
        for &i in c {
            ball = ball.sub(&Polynomial::var(pop.n, i).pow(2));
        }
        p.inequalities.push(ball);
    }
    p
}

/// Correlative-sparse moment relaxation of order `r`.
pub fn build_cs(pop: &Pop, r: usize, opts: CsOptions) -> Result<BlockSDP, RelaxError> {
    check_order(pop, r)?;
    let pop = match opts.add_ball {
        Some(b) => with_ball(pop, &cs_cliques(pop, r, opts.extension)?, b),
        None => pop.clone(),
    };
    let plan = cs_plan(&pop, r, opts.extension)?;
    realize(&pop, &plan, None, plan_meta(&plan, Mode::Cs, r, None))
}

/// Term-sparse moment relaxation at relaxation order `r` and sparse order `s`.
pub fn build_ts(pop: &Pop, r: usize, s: usize, ext: Extension) -> Result<BlockSDP, RelaxError> {
    if s == 0 {
        return Err(RelaxError::SparseOrderZero);
    }
    check_order(pop, r)?;
    let plan = ts_plan(pop, r, None);
    let state = iterate_plan(pop, &plan, ext, s);
    realize(pop, &plan, Some(state.graphs(s)), plan_meta(&plan, Mode::Ts, r, Some(s)))
}

/// Combined correlative and term sparsity; `ts_ext = None` disables TS.
pub fn build_cs_ts(
    pop: &Pop,
    r: usize,
    s: usize,
    cs_ext: Extension,
    ts_ext: Option<Extension>,
) -> Result<BlockSDP, RelaxError> {
    if s == 0 {
        return Err(RelaxError::SparseOrderZero);
    }
    let plan = cs_plan(pop, r, cs_ext)?;
    match ts_ext {
        None => realize(pop, &plan, None, plan_meta(&plan, Mode::Cs, r, None)),
        Some(ext) => {
            let state = iterate_plan(pop, &plan, ext, s);
            realize(
                pop,
                &plan,
                Some(state.graphs(s)),
                plan_meta(&plan, Mode::CsTs, r, Some(s)),
            )
        }
    }
}

/// Clique plan with per-clique minimal orders on the monomial-sharing graph.
pub fn minimal_initial_plan(pop: &Pop, cs_ext: Extension) -> Result<Plan, RelaxError> {
    let g = chordal_extension(&icsp_graph(pop), cs_ext);
    let cliques = maximal_cliques_rip(&g)?.cliques;
    let (assign, scalar) = assign_constraints(pop, &cliques, &BTreeSet::new());
    let d = pop.constraint_half_degrees();
    // objective terms go to their smallest covering clique
    let mut obj_deg = vec![0u32; cliques.len()];
    for (e, _) in pop.objective.terms() {
        let vars = e.vars();
        if let Some((k, _)) = cliques
            .iter()
            .enumerate()
            .filter(|(_, c)| vars.iter().all(|v| c.contains(v)))
            .min_by_key(|(k, c)| (c.len(), *k))
        {
            obj_deg[k] = obj_deg[k].max(e.degree());
        }
    }
    let cl = cliques
        .into_iter()
        .zip(assign)
        .enumerate()
        .map(|(k, (vars, constraints))| {
            let o = constraints
                .iter()
                .map(|&j| d[j])
                .chain(std::iter::once((obj_deg[k] as usize).div_ceil(2)))
                .max()
                .unwrap_or(0)
                .max(1);
            CliquePlan {
                moment_basis: clique_basis(pop.n, &vars, o),
                vars,
                order: o,
                constraints,
            }
        })
        .collect();
    Ok(Plan {
        n: pop.n,
        cliques: cl,
        scalar,
    })
}

/// CS-TS relaxation at the minimal per-clique orders.
pub fn minimal_initial_relaxation(
    pop: &Pop,
    s: usize,
    cs_ext: Extension,
    ts_ext: Option<Extension>,
) -> Result<BlockSDP, RelaxError> {
    if s == 0 {
        return Err(RelaxError::SparseOrderZero);
    }
    let plan = minimal_initial_plan(pop, cs_ext)?;
    let r = plan.cliques.iter().map(|c| c.order).max().unwrap_or(1);
    let meta = plan_meta(&plan, Mode::MinimalInitial, r, Some(s));
    match ts_ext {
        None => realize(pop, &plan, None, meta),
        Some(ext) => {
            let state = iterate_plan(pop, &plan, ext, s);
            realize(pop, &plan, Some(state.graphs(s)), meta)
        }
    }
}

/// Add a dense order-one moment matrix per clique.
pub fn augment_first_order(sdp: &BlockSDP, cliques: &[Vec<usize>]) -> BlockSDP {
    let n = sdp.meta.n;
    let one = Polynomial::constant(n, 1.0);
    let mut out = sdp.clone();
    for (k, c) in cliques.iter().enumerate() {
        let rows = clique_basis(n, c, 1);
        out.push_block(
            localizing_matrix(&rows, &one),
            BlockOrigin::FirstOrder { clique: k },
            rows,
        );
    }
    out
}

/// Two-step loop alternating the basis chain with TS graph recomputation.
///
/// Starts from the standard basis of order `r` and stops when the moment
/// basis no longer changes.
pub fn refine_constrained_basis(
    pop: &Pop,
    r: usize,
    s: usize,
    ext: Extension,
) -> Result<Vec<Exponent>, RelaxError> {
    check_order(pop, r)?;
    let constraints = pop.constraints();
    let mut current = standard_basis(pop.n, r);
    loop {
        let plan = ts_plan(pop, r, Some(current.clone()));
        let state = iterate_plan(pop, &plan, ext, s);
        let graphs = &state.graphs(s)[0];
        let mut f: BTreeSet<Exponent> = pop.objective.terms().map(|(e, _)| e.clone()).collect();
        for (t, g) in graphs.iter().enumerate().skip(1) {
            let poly = constraints[plan.cliques[0].constraints[t - 1]].1;
            for cl in maximal_cliques_rip(g)?.cliques {
                let rows: Vec<Exponent> = cl.iter().map(|&i| g.labels()[i].clone()).collect();
                for a in &rows {
                    for b in &rows {
                        let sum = a.add(b);
                        for (d, _) in poly.terms() {
                            f.insert(sum.add(d));
                        }
                    }
                }
            }
        }
        let chain = basis::generate_basis_chain(&f, &current);
        let next: Vec<Exponent> = chain.last().iter().cloned().collect();
        if next == current {
            return Ok(current);
        }
        current = next;
    }
}
