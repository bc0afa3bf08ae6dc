//! Homogeneous self-dual embedding solved by ADMM.
//!
//! Problem form: `min cᵀx s.t. Ax + s = b, s ∈ K` with `K` a product of a
//! zero cone and PSD cones in scaled-vectorized (svec) form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// `{0}^zero × S^{psd[0]}_+ × S^{psd[1]}_+ × …`, rows in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct Cone {
    pub zero: usize,
    pub psd: Vec<usize>,
}

impl Cone {
    pub fn rows(&self) -> usize {
        self.zero + self.psd.iter().map(|d| d * (d + 1) / 2).sum::<usize>()
    }

    /// Row ranges of the PSD blocks.
    fn psd_ranges(&self) -> Vec<(usize, usize)> {
        let mut start = self.zero;
        self.psd
            .iter()
            .map(|&d| {
                let len = d * (d + 1) / 2;
                let r = (start, d);
                start += len;
                r
            })
            .collect()
    }
}

/// Sparse matrix stored by rows.
#[derive(Clone, Debug, Default)]
pub struct SparseRows {
    pub ncols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    fn tmul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (r, &yi) in self.rows.iter().zip(y) {
            if yi != 0.0 {
                for &(j, v) in r {
                    out[j] += v * yi;
                }
            }
        }
        out
    }
}

/// `svec` weight of upper-triangle entry `(i, j)`.
pub fn svec_weight(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        SQRT2
    }
}

pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            out.push(m[(i, j)] * svec_weight(i, j));
        }
    }
    out
}

pub fn smat(v: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i..d {
            let x = v[k] / svec_weight(i, j);
            m[(i, j)] = x;
            m[(j, i)] = x;
            k += 1;
        }
    }
    m
}

/// Euclidean projection onto the PSD cone by eigenvalue clipping.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    if d == 1 {
        return DMatrix::from_element(1, 1, m[(0, 0)].max(0.0));
    }
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return m.clone();
    }
    let mut out = DMatrix::zeros(d, d);
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 0.0 {
            let q = eig.eigenvectors.column(k);
            out += l * &q * q.transpose();
        }
    }
    out
}

fn project_block_inplace(v: &mut [f64], d: usize) {
    if d == 1 {
        v[0] = v[0].max(0.0);
        return;
    }
    let p = project_psd(&smat(v, d));
    v.copy_from_slice(&svec(&p));
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmSettings {
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_iters: usize,
    pub alpha: f64,
    pub scale: bool,
    /// Rebalance the dual metric from residual ratios.
    pub adaptive: bool,
    pub check_every: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Solved,
    Inaccurate,
    Infeasible,
    Unbounded,
    MaxIters,
}

#[derive(Clone, Debug)]
pub struct AdmmResult {
    pub outcome: Outcome,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub primal_res: f64,
    pub dual_res: f64,
    pub gap: f64,
    pub iterations: usize,
}

struct Scaling {
    d: Vec<f64>,
    e: Vec<f64>,
}

/// Ruiz equilibration with one shared row factor per cone block.
fn ruiz(a: &SparseRows, cone: &Cone, iters: usize) -> Scaling {
    let m = a.rows.len();
    let n = a.ncols;
    let mut d = vec![1.0; m];
    let mut e = vec![1.0; n];
    let groups: Vec<(usize, usize)> = (0..cone.zero)
        .map(|i| (i, i + 1))
        .chain(
            cone.psd_ranges()
                .into_iter()
                .map(|(s, dim)| (s, s + dim * (dim + 1) / 2)),
        )
        .collect();
    for _ in 0..iters {
        let mut rmax = vec![0.0f64; m];
        let mut cmax = vec![0.0f64; n];
        for (i, r) in a.rows.iter().enumerate() {
            for &(j, v) in r {
                let w = (d[i] * v * e[j]).abs();
                rmax[i] = rmax[i].max(w);
                cmax[j] = cmax[j].max(w);
            }
        }
        for &(s, t) in &groups {
            let g = rmax[s..t].iter().cloned().fold(0.0, f64::max);
            if g > 0.0 {
                let f = 1.0 / g.sqrt();
                for di in &mut d[s..t] {
                    *di = (*di * f).clamp(1e-4, 1e4);
                }
            }
        }
        for j in 0..n {
            if cmax[j] > 0.0 {
                e[j] = (e[j] / cmax[j].sqrt()).clamp(1e-4, 1e4);
            }
        }
    }
    Scaling { d, e }
}

const RHO_X: f64 = 1e-6;
const TAU_WEIGHT: f64 = 10.0;
/// Zero-cone rows get a tighter dual metric than PSD rows.
const ZERO_CONE_FACTOR: f64 = 1e-3;
const INITIAL_SCALE: f64 = 0.1;

/// Factored `(R + Q)` for a given metric `R = diag(ρ_x I, R_y, TAU_WEIGHT)`.
struct LinSys {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    ry: Vec<f64>,
    g: (Vec<f64>, Vec<f64>),
    hg: f64,
}

impl LinSys {
    fn new(a: &SparseRows, b: &[f64], c: &[f64], ry: Vec<f64>) -> Self {
        let n = a.ncols;
        let mut k = DMatrix::<f64>::identity(n, n) * RHO_X;
        for (r, &w) in a.rows.iter().zip(&ry) {
            for &(i, vi) in r {
                for &(j, vj) in r {
                    k[(i, j)] += vi * vj / w;
                }
            }
        }
        let chol = k.cholesky().expect("ρI + AᵀR⁻¹A is positive definite");
        let mut ls = LinSys {
            chol,
            ry,
            g: (Vec::new(), Vec::new()),
            hg: 0.0,
        };
        let g = ls.solve_m(a, c, b);
        ls.hg = dot(c, &g.0) + dot(b, &g.1);
        ls.g = g;
        ls
    }

    /// `[[ρ_x I, Aᵀ], [−A, R_y]] [x; y] = [p; q]`.
    fn solve_m(&self, a: &SparseRows, p: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let qs: Vec<f64> = q.iter().zip(&self.ry).map(|(v, w)| v / w).collect();
        let atq = a.tmul(&qs);
        let rhs = DVector::from_iterator(p.len(), p.iter().zip(&atq).map(|(u, v)| u - v));
        let x: Vec<f64> = self.chol.solve(&rhs).iter().cloned().collect();
        let ax = a.mul(&x);
        let y = (0..q.len()).map(|i| (q[i] + ax[i]) / self.ry[i]).collect();
        (x, y)
    }
}

fn metric(cone: &Cone, scale: f64) -> Vec<f64> {
    let m = cone.rows();
    (0..m)
        .map(|i| {
            if i < cone.zero {
                ZERO_CONE_FACTOR / scale
            } else {
                1.0 / scale
            }
        })
        .collect()
}

const OBJECTIVE_LIFT_MAX: f64 = 1e8;

const AA_MEMORY: usize = 10;
/// Anderson steps are attempted only every this many iterations.
const AA_INTERVAL: usize = 10;
const AA_MAX_WEIGHT: f64 = 1e10;

/// One Douglas–Rachford step from `w`: returns `F(w)` with the primal
/// point `u ∈ C` and the complementary dual point `v ∈ C*`.
struct Step {
    fw: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

fn dr_step(
    a: &SparseRows,
    b: &[f64],
    c: &[f64],
    ls: &LinSys,
    w: &[f64],
    alpha: f64,
    project: &dyn Fn(&mut [f64]),
) -> Step {
    let n = a.ncols;
    let m = b.len();
    let l = n + m + 1;
    // ũ = (R + Q)⁻¹ R w
    let px: Vec<f64> = w[..n].iter().map(|v| RHO_X * v).collect();
    let py: Vec<f64> = w[n..n + m].iter().zip(&ls.ry).map(|(v, r)| r * v).collect();
    let (zx, zy) = ls.solve_m(a, &px, &py);
    let tt = (TAU_WEIGHT * w[l - 1] + dot(c, &zx) + dot(b, &zy)) / (TAU_WEIGHT + ls.hg);
    let mut ut: Vec<f64> = Vec::with_capacity(l);
    ut.extend(zx.iter().zip(&ls.g.0).map(|(z, g)| z - tt * g));
    ut.extend(zy.iter().zip(&ls.g.1).map(|(z, g)| z - tt * g));
    ut.push(tt);
    // u = Π_C(2ũ − w)
    let q: Vec<f64> = (0..l).map(|i| 2.0 * ut[i] - w[i]).collect();
    let mut u = q.clone();
    project(&mut u[n..n + m]);
    u[l - 1] = u[l - 1].max(0.0);
    // v = R(u − (2ũ − w)), complementary to u
    let mut v = vec![0.0; l];
    for i in 0..m {
        v[n + i] = ls.ry[i] * (u[n + i] - q[n + i]);
    }
    v[l - 1] = TAU_WEIGHT * (u[l - 1] - q[l - 1]);
    let fw = (0..l).map(|i| w[i] + alpha * (u[i] - ut[i])).collect();
    Step { fw, u, v }
}

/// Type-II Anderson acceleration of a fixed-point map.
struct Anderson {
    mem: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    dg: Vec<Vec<f64>>,
    df: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(_dim: usize, mem: usize) -> Self {
        Anderson {
            mem,
            prev: None,
            dg: Vec::new(),
            df: Vec::new(),
        }
    }

    fn reset(&mut self) {
        self.prev = None;
        self.dg.clear();
        self.df.clear();
    }

    /// Record `(w, F(w))`; return the extrapolated point when available.
    fn update(&mut self, w: &[f64], fw: &[f64]) -> Option<Vec<f64>> {
        if self.mem == 0 {
            return None;
        }
        let g: Vec<f64> = fw.iter().zip(w).map(|(f, v)| f - v).collect();
        if let Some((pg, pf)) = self.prev.take() {
            self.dg.push(g.iter().zip(&pg).map(|(a, b)| a - b).collect());
            self.df.push(fw.iter().zip(&pf).map(|(a, b)| a - b).collect());
            if self.dg.len() > self.mem {
                self.dg.remove(0);
                self.df.remove(0);
            }
        }
        self.prev = Some((g.clone(), fw.to_vec()));
        let k = self.dg.len();
        if k == 0 {
            return None;
        }
        let mut gram = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        for i in 0..k {
            for j in i..k {
                let v = dot(&self.dg[i], &self.dg[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
            rhs[i] = dot(&self.dg[i], &g);
        }
        let reg = 1e-10 * gram.trace().max(1e-300);
        for i in 0..k {
            gram[(i, i)] += reg;
        }
        let gamma = gram.cholesky()?.solve(&rhs);
        if gamma.iter().any(|v| !v.is_finite()) || gamma.norm() > AA_MAX_WEIGHT {
            self.reset();
            return None;
        }
        let mut out = fw.to_vec();
        for (i, df) in self.df.iter().enumerate() {
            for (o, d) in out.iter_mut().zip(df) {
                *o -= gamma[i] * d;
            }
        }
        Some(out)
    }
}

/// Solve the conic program; `x`, `y`, `s` in the result are unscaled.
pub fn solve(a: &SparseRows, b: &[f64], c: &[f64], cone: &Cone, st: &AdmmSettings) -> AdmmResult {
    let m = a.rows.len();
    let n = a.ncols;
    assert_eq!(m, cone.rows());
    let sc = if st.scale {
        ruiz(a, cone, 25)
    } else {
        Scaling {
            d: vec![1.0; m],
            e: vec![1.0; n],
        }
    };
    let ah = SparseRows {
        ncols: n,
        rows: a
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.iter().map(|&(j, v)| (j, sc.d[i] * v * sc.e[j])).collect())
            .collect(),
    };
    // lift a tiny objective to unit size; only y is rescaled by this
    let sc_ = {
        let nc: f64 = c.iter().zip(&sc.e).map(|(v, e)| (v * e).powi(2)).sum::<f64>().sqrt();
        if st.scale && nc > 0.0 {
            (1.0 / nc).clamp(1.0, OBJECTIVE_LIFT_MAX)
        } else {
            1.0
        }
    };
    let bh: Vec<f64> = b.iter().zip(&sc.d).map(|(v, d)| v * d).collect();
    let ch: Vec<f64> = c.iter().zip(&sc.e).map(|(v, e)| v * e * sc_).collect();

    let ranges = cone.psd_ranges();
    let project = |v: &mut [f64]| {
        for &(s, d) in &ranges {
            project_block_inplace(&mut v[s..s + d * (d + 1) / 2], d);
        }
    };

    let mut scale = INITIAL_SCALE;
    let mut ls = LinSys::new(&ah, &bh, &ch, metric(cone, scale));
    let l = n + m + 1;
    // w = (w_x, w_y, w_τ)
    let mut w = vec![0.0; l];
    w[l - 1] = 1.0;
    let mut aa = Anderson::new(l, AA_MEMORY);
    let mut safe_w = w.clone();
    let mut safe_norm = f64::INFINITY;
    let mut from_aa = false;

    let nb = norm(b);
    let nc = norm(c);
    let mut last_scale_it = 0;
    let mut log_ratio_sum = 0.0;
    let mut log_ratio_cnt = 0;
    let mut last = AdmmResult {
        outcome: Outcome::MaxIters,
        x: vec![0.0; n],
        y: vec![0.0; m],
        s: vec![0.0; m],
        primal_res: f64::INFINITY,
        dual_res: f64::INFINITY,
        gap: f64::INFINITY,
        iterations: 0,
    };
    for it in 1..=st.max_iters {
        let mut step = dr_step(&ah, &bh, &ch, &ls, &w, st.alpha, &project);
        let g: Vec<f64> = step.fw.iter().zip(&w).map(|(f, v)| f - v).collect();
        let gn = norm(&g);
        if from_aa && gn > safe_norm {
            // reject the accelerated point and fall back
            aa.reset();
            w.clone_from(&safe_w);
            step = dr_step(&ah, &bh, &ch, &ls, &w, st.alpha, &project);
            safe_norm = norm(&step.fw.iter().zip(&w).map(|(f, v)| f - v).collect::<Vec<_>>());
        } else {
            safe_norm = gn;
        }
        safe_w.clone_from(&step.fw);
        let next = if it % AA_INTERVAL == 0 {
            aa.update(&w, &step.fw)
        } else {
            None
        };
        from_aa = next.is_some();
        w = next.unwrap_or_else(|| step.fw.clone());

        if it % st.check_every != 0 && it != st.max_iters {
            continue;
        }
        let (ux, uy, ut) = (&step.u[..n], &step.u[n..n + m], step.u[l - 1]);
        let (vy, vt) = (&step.v[n..n + m], step.v[l - 1]);
        // unscale
        let xs: Vec<f64> = ux.iter().zip(&sc.e).map(|(v, e)| v * e).collect();
        let ys: Vec<f64> = uy.iter().zip(&sc.d).map(|(v, d)| v * d / sc_).collect();
        let ss: Vec<f64> = vy.iter().zip(&sc.d).map(|(v, d)| v / d).collect();
        if ut > 1e-12 * vt.max(1.0) {
            let x: Vec<f64> = xs.iter().map(|v| v / ut).collect();
            let y: Vec<f64> = ys.iter().map(|v| v / ut).collect();
            let s: Vec<f64> = ss.iter().map(|v| v / ut).collect();
            let ax = a.mul(&x);
            let pr: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - b[i]).collect();
            let aty = a.tmul(&y);
            let dr: Vec<f64> = (0..n).map(|i| aty[i] + c[i]).collect();
            let cx = dot(c, &x);
            let by = dot(b, &y);
            let p = norm(&pr);
            let d = norm(&dr);
            let g = (cx + by).abs();
            let ok = |f: f64| {
                p <= f * st.eps_primal * (1.0 + nb)
                    && d <= f * st.eps_dual * (1.0 + nc)
                    && g <= f * st.eps_dual * (1.0 + cx.abs() + by.abs())
            };
            let rel_p = p / (norm(&ax).max(norm(&s)).max(nb).max(1e-12));
            let rel_d = d / (norm(&aty).max(nc).max(1e-12));
            last = AdmmResult {
                outcome: if ok(1.0) {
                    Outcome::Solved
                } else if ok(1e3) {
                    Outcome::Inaccurate
                } else {
                    Outcome::MaxIters
                },
                x,
                y,
                s,
                primal_res: p,
                dual_res: d,
                gap: g,
                iterations: it,
            };
            if last.outcome == Outcome::Solved {
                return last;
            }
            // balance relative residuals by adapting the dual metric
            if st.scale && st.adaptive {
                if rel_p > 0.0 && rel_d > 0.0 {
                    log_ratio_sum += (rel_p / rel_d).ln();
                    log_ratio_cnt += 1;
                }
                let ratio = if log_ratio_cnt > 0 {
                    (0.5 * log_ratio_sum / log_ratio_cnt as f64).exp()
                } else {
                    1.0
                };
                if it - last_scale_it >= 100 && !(1.0 / 3.0..=3.0).contains(&ratio) {
                    let new_scale = (scale * ratio).clamp(1e-6, 1e6);
                    if new_scale != scale {
                        scale = new_scale;
                        ls = LinSys::new(&ah, &bh, &ch, metric(cone, scale));
                        // keep (u, v): w = u + R⁻¹v
                        w[..n].copy_from_slice(ux);
                        for i in 0..m {
                            w[n + i] = uy[i] + vy[i] / ls.ry[i];
                        }
                        w[l - 1] = ut + vt / TAU_WEIGHT;
                        aa.reset();
                        from_aa = false;
                        safe_norm = f64::INFINITY;
                    }
                    last_scale_it = it;
                    log_ratio_sum = 0.0;
                    log_ratio_cnt = 0;
                }
            }
        }
        // infeasibility certificates on the unnormalized iterates
        let by = dot(b, &ys);
        if by < 0.0 {
            let aty = a.tmul(&ys);
            if norm(&aty) <= st.eps_primal * (-by) {
                last.outcome = Outcome::Infeasible;
                last.iterations = it;
                return last;
            }
        }
        let cx = dot(c, &xs);
        if cx < 0.0 {
            let ax = a.mul(&xs);
            let r: Vec<f64> = (0..m).map(|i| ax[i] + ss[i]).collect();
            if norm(&r) <= st.eps_dual * (-cx) {
                last.outcome = Outcome::Unbounded;
                last.iterations = it;
                return last;
            }
        }
    }
    if last.outcome == Outcome::Solved {
        last.outcome = Outcome::Inaccurate;
    }
    last
}
