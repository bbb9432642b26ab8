//! A small modelling layer: matrix and scalar variables, affine expressions
//! over their entries, equality constraints and linear matrix inequalities.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct VarId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarKind {
    /// Symmetric matrix constrained to be positive semidefinite.
    Psd,
    /// Unconstrained symmetric matrix.
    Symmetric,
    /// Unconstrained real scalar.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Upper-triangular entry `(i, j)`, `i <= j`, of a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Entry {
    pub var: VarId,
    pub i: usize,
    pub j: usize,
}

impl Entry {
    pub fn new(var: VarId, i: usize, j: usize) -> Self {
        Self {
            var,
            i: i.min(j),
            j: i.max(j),
        }
    }
}

/// `constant + Σ coef·entry`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(Entry, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn term(entry: Entry, coef: f64) -> Self {
        Self {
            terms: vec![(entry, coef)],
            constant: 0.0,
        }
    }

    pub fn add(mut self, other: &LinExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn scale(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }

    pub fn plus_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }
}

/// Symmetric affine matrix `constant + Σ entry·coef_matrix`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<(Entry, DMatrix<f64>)>,
}

impl MatExpr {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            constant: DMatrix::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            dim: m.nrows(),
            constant: m,
            terms: Vec::new(),
        }
    }

    pub fn add(mut self, other: &MatExpr) -> Self {
        assert_eq!(self.dim, other.dim, "matrix expression dimensions differ");
        self.constant += &other.constant;
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn add_constant(mut self, m: &DMatrix<f64>) -> Self {
        self.constant += m;
        self
    }

    pub fn scale(mut self, k: f64) -> Self {
        self.constant *= k;
        for t in &mut self.terms {
            t.1 *= k;
        }
        self
    }

    /// Adds `coef_matrix · entry`.
    pub fn add_term(mut self, entry: Entry, coef: DMatrix<f64>) -> Self {
        self.terms.push((entry, coef));
        self
    }

    pub fn trace(&self) -> LinExpr {
        LinExpr {
            terms: self.terms.iter().map(|(e, m)| (*e, m.trace())).collect(),
            constant: self.constant.trace(),
        }
    }

    /// `tr[A·self]` for a constant symmetric `A`.
    pub fn trace_with(&self, a: &DMatrix<f64>) -> LinExpr {
        LinExpr {
            terms: self.terms.iter().map(|(e, m)| (*e, a.component_mul(m).sum())).collect(),
            constant: a.component_mul(&self.constant).sum(),
        }
    }

    /// Scalar expression for element `(i, j)`.
    pub fn element(&self, i: usize, j: usize) -> LinExpr {
        LinExpr {
            terms: self.terms.iter().map(|(e, m)| (*e, m[(i, j)])).filter(|t| t.1 != 0.0).collect(),
            constant: self.constant[(i, j)],
        }
    }

    /// Evaluate at given variable values.
    pub fn evaluate(&self, values: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (e, m) in &self.terms {
            out += m * values[e.var.0][(e.i, e.j)];
        }
        out
    }
}

/// Symmetric unit matrix with ones at `(i, j)` and `(j, i)`.
pub fn sym_unit(dim: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    m[(i, j)] = 1.0;
    m[(j, i)] = 1.0;
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub name: String,
    /// Constraint is `expr == 0`.
    pub expr: LinExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lmi {
    pub name: String,
    /// Constraint is `expr ⪯ 0`.
    pub expr: MatExpr,
}

/// A semidefinite program in modelling form.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub sense: Sense,
    pub vars: Vec<VarDecl>,
    pub objective: LinExpr,
    pub equalities: Vec<Equality>,
    pub lmis: Vec<Lmi>,
}

impl SdpProblem {
    pub fn new(sense: Sense) -> Self {
        Self {
            sense,
            vars: Vec::new(),
            objective: LinExpr::zero(),
            equalities: Vec::new(),
            lmis: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, dim: usize) -> VarId {
        let dim = if kind == VarKind::Scalar { 1 } else { dim };
        self.vars.push(VarDecl {
            name: name.into(),
            kind,
            dim,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn scalar(&self, var: VarId) -> Entry {
        Entry::new(var, 0, 0)
    }

    /// The variable as a matrix expression.
    pub fn matrix(&self, var: VarId) -> MatExpr {
        let dim = self.vars[var.0].dim;
        let mut m = MatExpr::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.terms.push((Entry::new(var, i, j), sym_unit(dim, i, j)));
            }
        }
        m
    }

    /// `tr[A·V]` for a constant symmetric `A`.
    pub fn trace_product(&self, var: VarId, a: &DMatrix<f64>) -> LinExpr {
        self.matrix(var).trace_with(a)
    }

    pub fn set_objective(&mut self, expr: LinExpr) {
        self.objective = expr;
    }

    pub fn add_equality(&mut self, name: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.equalities.push(Equality {
            name: name.into(),
            expr: expr.plus_constant(-rhs),
        });
    }

    /// Entrywise equality `expr == 0` on the upper triangle.
    pub fn add_matrix_equality(&mut self, name: &str, expr: &MatExpr) {
        for i in 0..expr.dim {
            for j in i..expr.dim {
                self.equalities.push(Equality {
                    name: format!("{name}[{i},{j}]"),
                    expr: expr.element(i, j),
                });
            }
        }
    }

    /// `expr ⪯ 0`.
    pub fn add_lmi(&mut self, name: impl Into<String>, expr: MatExpr) {
        self.lmis.push(Lmi { name: name.into(), expr });
    }

    pub fn psd_vars(&self) -> impl Iterator<Item = (VarId, &VarDecl)> {
        self.vars.iter().enumerate().filter(|(_, v)| v.kind == VarKind::Psd).map(|(i, v)| (VarId(i), v))
    }

    fn check_entry(&self, e: &Entry, ctx: &str) -> Result<()> {
        let decl = self
            .vars
            .get(e.var.0)
            .ok_or_else(|| invalid(format!("{ctx}: reference to undeclared variable #{}", e.var.0)))?;
        if e.i > e.j || e.j >= decl.dim {
            return Err(invalid(format!("{ctx}: entry ({}, {}) outside {}x{} variable {}", e.i, e.j, decl.dim, decl.dim, decl.name)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.vars {
            if v.dim == 0 {
                return Err(invalid(format!("variable {} has zero size", v.name)));
            }
        }
        for (e, _) in &self.objective.terms {
            self.check_entry(e, "objective")?;
        }
        for eq in &self.equalities {
            for (e, _) in &eq.expr.terms {
                self.check_entry(e, &eq.name)?;
            }
        }
        for lmi in &self.lmis {
            let d = lmi.expr.dim;
            let sym = |m: &DMatrix<f64>| m.nrows() == d && m.ncols() == d && (m - m.transpose()).abs().max() <= 1e-14 * (1.0 + m.abs().max());
            if !sym(&lmi.expr.constant) {
                return Err(invalid(format!("{}: constant term is not a symmetric {d}x{d} matrix", lmi.name)));
            }
            for (e, m) in &lmi.expr.terms {
                self.check_entry(e, &lmi.name)?;
                if !sym(m) {
                    return Err(invalid(format!("{}: coefficient matrix is not symmetric {d}x{d}", lmi.name)));
                }
            }
        }
        Ok(())
    }
}
