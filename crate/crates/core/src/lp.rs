//! Small dense two-phase simplex for `max cᵀx s.t. Ax = b, x ≥ 0`.
//!
//! Uses Bland's rule, so it terminates on degenerate problems. Intended for
//! the tiny programs arising in Newton-polytope membership and simplex
//! selection.

use nalgebra::DMatrix;

const TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum LpResult {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    t: DMatrix<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        let nc = self.t.ncols();
        for j in 0..nc {
            self.t[(row, j)] /= p;
        }
        for i in 0..self.t.nrows() {
            if i != row {
                let f = self.t[(i, col)];
                if f != 0.0 {
                    for j in 0..nc {
                        let v = self.t[(row, j)];
                        self.t[(i, j)] -= f * v;
                    }
                }
            }
        }
        self.basis[row] = col;
    }

    /// Maximize `cost` over the columns in `allowed`; returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        let rhs = self.rhs();
        loop {
            let mut enter = None;
            for j in 0..rhs {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (i, &b) in self.basis.iter().enumerate() {
                    d -= cost[b] * self.t[(i, j)];
                }
                if d > TOL {
                    enter = Some(j);
                    break;
                }
            }
            let Some(col) = enter else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.t.nrows() {
                let a = self.t[(i, col)];
                if a > TOL {
                    let ratio = self.t[(i, rhs)] / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - TOL
                                || (ratio <= lr + TOL && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            match leave {
                None => return false,
                Some((row, _)) => self.pivot(row, col),
            }
        }
    }
}

/// Solve `max cᵀx s.t. Ax = b, x ≥ 0`.
pub fn solve(a: &DMatrix<f64>, b: &[f64], c: &[f64]) -> LpResult {
    let m = a.nrows();
    let k = a.ncols();
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), k);
    let mut t = DMatrix::zeros(m, k + m + 1);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..k {
            t[(i, j)] = sign * a[(i, j)];
        }
        t[(i, k + i)] = 1.0;
        t[(i, k + m)] = sign * b[i];
    }
    let mut tab = Tableau {
        t,
        basis: (k..k + m).collect(),
    };
    // phase one: drive artificials to zero
    let mut cost1 = vec![0.0; k + m];
    for v in cost1.iter_mut().skip(k) {
        *v = -1.0;
    }
    tab.optimize(&cost1, &vec![true; k + m]);
    let rhs = tab.rhs();
    let infeas: f64 = tab
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &bv)| bv >= k)
        .map(|(i, _)| tab.t[(i, rhs)])
        .sum();
    let scale = 1.0 + b.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if infeas > 1e-8 * scale {
        return LpResult::Infeasible;
    }
    // pivot remaining artificials out, dropping redundant rows
    let mut row = 0;
    while row < tab.t.nrows() {
        if tab.basis[row] >= k {
            if let Some(col) = (0..k).find(|&j| tab.t[(row, j)].abs() > TOL) {
                tab.pivot(row, col);
                row += 1;
            } else {
                tab.t = tab.t.clone().remove_row(row);
                tab.basis.remove(row);
            }
        } else {
            row += 1;
        }
    }
    let mut cost2 = vec![0.0; k + m];
    cost2[..k].copy_from_slice(c);
    let allowed: Vec<bool> = (0..k + m).map(|j| j < k).collect();
    if !tab.optimize(&cost2, &allowed) {
        return LpResult::Unbounded;
    }
    let mut x = vec![0.0; k];
    for (i, &bv) in tab.basis.iter().enumerate() {
        if bv < k {
            x[bv] = tab.t[(i, rhs)].max(0.0);
        }
    }
    let value = x.iter().zip(c).map(|(a, b)| a * b).sum();
    LpResult::Optimal { x, value }
}

/// Feasibility of `Ax = b, x ≥ 0`.
pub fn feasible(a: &DMatrix<f64>, b: &[f64]) -> bool {
    !matches!(solve(a, b, &vec![0.0; a.ncols()]), LpResult::Infeasible)
}
