//! Polynomial optimization problems `min f(x) s.t. g_j(x) ≥ 0, h_i(x) = 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{Exponent, Polynomial};

#[derive(Debug, Error)]
pub enum PopError {
    #[error("variable count mismatch in {what}: expected {expected}, found {found}")]
    VarCount {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid problem JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pop {
    pub n: usize,
    pub objective: Polynomial,
    #[serde(default)]
    pub inequalities: Vec<Polynomial>,
    #[serde(default)]
    pub equalities: Vec<Polynomial>,
}

/// A constraint reference in the combined list `inequalities ++ equalities`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstraintKind {
    Inequality,
    Equality,
}

impl Pop {
    pub fn new(objective: Polynomial) -> Self {
        Pop {
            n: objective.nvars(),
            objective,
            inequalities: Vec::new(),
            equalities: Vec::new(),
        }
    }

    pub fn with_inequalities(mut self, g: Vec<Polynomial>) -> Self {
        self.inequalities = g;
        self
    }

    pub fn with_equalities(mut self, h: Vec<Polynomial>) -> Self {
        self.equalities = h;
        self
    }

    pub fn from_json(s: &str) -> Result<Self, PopError> {
        let p: Pop = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PopError> {
        let check = |what: String, p: &Polynomial| {
            if p.nvars() != self.n {
                Err(PopError::VarCount {
                    what,
                    expected: self.n,
                    found: p.nvars(),
                })
            } else {
                Ok(())
            }
        };
        check("objective".into(), &self.objective)?;
        for (j, g) in self.inequalities.iter().enumerate() {
            check(format!("inequalities[{j}]"), g)?;
        }
        for (j, h) in self.equalities.iter().enumerate() {
            check(format!("equalities[{j}]"), h)?;
        }
        Ok(())
    }

    pub fn is_unconstrained(&self) -> bool {
        self.inequalities.is_empty() && self.equalities.is_empty()
    }

    /// All constraints, inequalities first.
    pub fn constraints(&self) -> Vec<(ConstraintKind, &Polynomial)> {
        self.inequalities
            .iter()
            .map(|g| (ConstraintKind::Inequality, g))
            .chain(self.equalities.iter().map(|h| (ConstraintKind::Equality, h)))
            .collect()
    }

    /// `d_j = ⌈deg(g_j)/2⌉` over the combined constraint list.
    pub fn constraint_half_degrees(&self) -> Vec<usize> {
        self.constraints()
            .iter()
            .map(|(_, g)| g.half_degree())
            .collect()
    }

    /// Smallest admissible relaxation order.
    pub fn r_min(&self) -> usize {
        self.constraint_half_degrees()
            .into_iter()
            .chain(std::iter::once(self.objective.half_degree()))
            .max()
            .unwrap_or(0)
            .max(1)
    }

    /// Union of the supports of the objective and all constraints.
    pub fn global_support(&self) -> Vec<Exponent> {
        let mut set = std::collections::BTreeSet::new();
        for (e, _) in self.objective.terms() {
            set.insert(e.clone());
        }
        for (_, g) in self.constraints() {
            for (e, _) in g.terms() {
                set.insert(e.clone());
            }
        }
        set.into_iter().collect()
    }

    /// Whether `x` satisfies all constraints to `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.inequalities.iter().all(|g| g.eval(x) >= -tol)
            && self.equalities.iter().all(|h| h.eval(x).abs() <= tol)
    }
}
