//! Semidefinite programming: a modelling layer compiled to a block conic form
//! and solved with a primal-dual interior-point method.

mod ipm;
mod model;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use ipm::{SolveStatus, SolverOptions};
pub use model::{sym_unit, Entry, Equality, LinExpr, Lmi, MatExpr, SdpProblem, Sense, VarDecl, VarId, VarKind};

use crate::error::Result;
use ipm::{ConicProblem, ConicRow};

#[derive(Debug, Clone, Copy)]
enum Slot {
    Block(usize),
    /// Offset of entry (0, 0) in the free vector.
    Free(usize),
}

struct Layout {
    slots: Vec<Slot>,
    n_free: usize,
    block_dims: Vec<usize>,
    /// First slack block for LMIs.
    lmi_block0: usize,
}

fn upper_index(dim: usize, i: usize, j: usize) -> usize {
    // row-major upper triangle
    i * dim - i * (i + 1) / 2 + j
}

impl Layout {
    fn new(p: &SdpProblem) -> Self {
        let mut slots = Vec::with_capacity(p.vars.len());
        let mut n_free = 0;
        let mut block_dims = Vec::new();
        for v in &p.vars {
            match v.kind {
                VarKind::Psd => {
                    slots.push(Slot::Block(block_dims.len()));
                    block_dims.push(v.dim);
                }
                VarKind::Symmetric | VarKind::Scalar => {
                    slots.push(Slot::Free(n_free));
                    n_free += v.dim * (v.dim + 1) / 2;
                }
            }
        }
        let lmi_block0 = block_dims.len();
        block_dims.extend(p.lmis.iter().map(|l| l.expr.dim));
        Self {
            slots,
            n_free,
            block_dims,
            lmi_block0,
        }
    }

    fn empty_row(&self) -> (DVector<f64>, Vec<Option<DMatrix<f64>>>) {
        (DVector::zeros(self.n_free), vec![None; self.block_dims.len()])
    }

    fn add_entry(&self, p: &SdpProblem, free: &mut DVector<f64>, blocks: &mut [Option<DMatrix<f64>>], e: &Entry, coef: f64) {
        let dim = p.vars[e.var.0].dim;
        match self.slots[e.var.0] {
            Slot::Free(off) => free[off + upper_index(dim, e.i, e.j)] += coef,
            Slot::Block(k) => add_block_entry(blocks, k, dim, e.i, e.j, coef),
        }
    }

    fn to_row(free: DVector<f64>, blocks: Vec<Option<DMatrix<f64>>>) -> ConicRow {
        ConicRow {
            free: free.iter().enumerate().filter(|(_, &a)| a != 0.0).map(|(j, &a)| (j, a)).collect(),
            blocks,
        }
    }
}

fn add_block_entry(blocks: &mut [Option<DMatrix<f64>>], k: usize, dim: usize, i: usize, j: usize, coef: f64) {
    let m = blocks[k].get_or_insert_with(|| DMatrix::zeros(dim, dim));
    if i == j {
        m[(i, i)] += coef;
    } else {
        m[(i, j)] += coef * 0.5;
        m[(j, i)] += coef * 0.5;
    }
}

struct Compiled {
    conic: ConicProblem,
    layout: Layout,
    /// Internal objective = sign · user objective (without constant).
    sign: f64,
}

fn compile(p: &SdpProblem) -> Compiled {
    let layout = Layout::new(p);
    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    let (mut c_free, mut c_blocks) = layout.empty_row();
    for (e, a) in &p.objective.terms {
        layout.add_entry(p, &mut c_free, &mut c_blocks, e, sign * a);
    }
    let c_blocks = c_blocks
        .into_iter()
        .zip(&layout.block_dims)
        .map(|(m, &d)| m.unwrap_or_else(|| DMatrix::zeros(d, d)))
        .collect();

    let mut rows = Vec::new();
    let mut b = Vec::new();
    for eq in &p.equalities {
        let (mut f, mut blk) = layout.empty_row();
        for (e, a) in &eq.expr.terms {
            layout.add_entry(p, &mut f, &mut blk, e, *a);
        }
        rows.push(Layout::to_row(f, blk));
        b.push(-eq.expr.constant);
    }
    // expr ⪯ 0  ⇔  slack S ⪰ 0 with S + expr = 0.
    for (l, lmi) in p.lmis.iter().enumerate() {
        let d = lmi.expr.dim;
        let k = layout.lmi_block0 + l;
        for i in 0..d {
            for j in i..d {
                let (mut f, mut blk) = layout.empty_row();
                add_block_entry(&mut blk, k, d, i, j, 1.0);
                for (e, m) in &lmi.expr.terms {
                    let a = m[(i, j)];
                    if a != 0.0 {
                        layout.add_entry(p, &mut f, &mut blk, e, a);
                    }
                }
                rows.push(Layout::to_row(f, blk));
                b.push(-lmi.expr.constant[(i, j)]);
            }
        }
    }

    Compiled {
        conic: ConicProblem {
            n_free: layout.n_free,
            block_dims: layout.block_dims.clone(),
            c_free,
            c_blocks,
            rows,
            b: DVector::from_vec(b),
        },
        layout,
        sign,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Primal objective in the user's sense.
    pub objective: f64,
    /// Objective of the conic dual; a bound on `objective` in the user's sense.
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub values: Vec<DMatrix<f64>>,
    /// Multiplier of each `expr ⪯ 0`, a PSD matrix.
    #[serde(skip)]
    pub lmi_multipliers: Vec<DMatrix<f64>>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, var: VarId) -> &DMatrix<f64> {
        &self.values[var.0]
    }

    pub fn scalar(&self, var: VarId) -> f64 {
        self.values[var.0][(0, 0)]
    }

    pub fn eval(&self, expr: &LinExpr) -> f64 {
        expr.constant + expr.terms.iter().map(|(e, a)| a * self.values[e.var.0][(e.i, e.j)]).sum::<f64>()
    }
}

impl SdpProblem {
    pub fn solve(&self) -> Result<SdpSolution> {
        self.solve_with(&SolverOptions::default())
    }

    pub fn solve_with(&self, opts: &SolverOptions) -> Result<SdpSolution> {
        self.validate()?;
        let Compiled { conic, layout, sign } = compile(self);
        let sol = ipm::solve(&conic, opts);

        let values = self
            .vars
            .iter()
            .zip(&layout.slots)
            .map(|(v, slot)| match *slot {
                Slot::Block(k) => sol.x_blocks[k].clone(),
                Slot::Free(off) => {
                    let mut m = DMatrix::zeros(v.dim, v.dim);
                    for i in 0..v.dim {
                        for j in i..v.dim {
                            let val = sol.x_free[off + upper_index(v.dim, i, j)];
                            m[(i, j)] = val;
                            m[(j, i)] = val;
                        }
                    }
                    m
                }
            })
            .collect();
        let lmi_multipliers = (0..self.lmis.len()).map(|l| sol.s_blocks[layout.lmi_block0 + l].clone()).collect();
        let c0 = self.objective.constant;
        let objective = sign * sol.primal_obj + c0;
        let dual_objective = sign * sol.dual_obj + c0;
        Ok(SdpSolution {
            status: sol.status,
            objective,
            dual_objective,
            gap: (objective - dual_objective).abs(),
            primal_residual: sol.primal_res,
            dual_residual: sol.dual_res,
            iterations: sol.iterations,
            values,
            lmi_multipliers,
        })
    }
}
