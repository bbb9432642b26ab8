//! Infeasible-start primal-dual path-following method for
//!
//! ```text
//! min  c_fᵀ x_f + Σ_k ⟨C_k, X_k⟩
//! s.t. a_fiᵀ x_f + Σ_k ⟨A_ik, X_k⟩ = b_i,   X_k ⪰ 0,
//! ```
//!
//! with HKM search directions and Mehrotra predictor-corrector steps.
//! Dual: `max bᵀy  s.t.  A_fᵀ y = c_f,  S_k = C_k − Σ_i y_i A_ik ⪰ 0`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

#[derive(Debug, Clone)]
pub(crate) struct ConicRow {
    pub free: Vec<(usize, f64)>,
    /// Symmetric coefficient matrices per block; `None` is zero.
    pub blocks: Vec<Option<DMatrix<f64>>>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConicProblem {
    pub n_free: usize,
    pub block_dims: Vec<usize>,
    pub c_free: DVector<f64>,
    pub c_blocks: Vec<DMatrix<f64>>,
    pub rows: Vec<ConicRow>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub tol_infeas: f64,
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol_feas: 1e-8,
            tol_gap: 1e-8,
            tol_infeas: 1e-8,
            step_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SolveStatus {
    Optimal,
    /// No point satisfies the constraints.
    PrimalInfeasible,
    /// The dual is infeasible; a feasible primal would be unbounded.
    DualInfeasible,
    MaxIterations,
    NumericalError,
}

#[derive(Debug, Clone)]
pub(crate) struct ConicSolution {
    pub status: SolveStatus,
    pub x_free: DVector<f64>,
    pub x_blocks: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    pub s_blocks: Vec<DMatrix<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub iterations: usize,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Flattened row in an inner-product preserving coordinate system.
fn flatten(row: &ConicRow, n_free: usize, dims: &[usize]) -> DVector<f64> {
    let len = n_free + dims.iter().map(|d| d * (d + 1) / 2).sum::<usize>();
    let mut v = DVector::zeros(len);
    for &(j, a) in &row.free {
        v[j] += a;
    }
    let mut off = n_free;
    for (k, &d) in dims.iter().enumerate() {
        if let Some(m) = &row.blocks[k] {
            let mut idx = off;
            for i in 0..d {
                for j in i..d {
                    v[idx] = if i == j { m[(i, i)] } else { m[(i, j)] * std::f64::consts::SQRT_2 };
                    idx += 1;
                }
            }
        }
        off += d * (d + 1) / 2;
    }
    v
}

/// Search direction `(ΔX, Δy, Δx_free, ΔS)`.
type Step = (Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>);

#[allow(clippy::large_enum_variant)]
enum Presolved {
    Ready {
        problem: ConicProblem,
        kept_rows: Vec<usize>,
        /// Maps compressed free variables back: `x_f = basis · z`.
        basis: DMatrix<f64>,
    },
    Infeasible,
    Unbounded,
}

/// Drops linearly dependent rows and compresses the free columns to a full
/// column-rank basis.
fn presolve(p: &ConicProblem) -> Presolved {
    let flat: Vec<DVector<f64>> = p.rows.iter().map(|r| flatten(r, p.n_free, &p.block_dims)).collect();
    let mut q: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, v) in flat.iter().enumerate() {
        let scale = v.norm();
        if scale == 0.0 {
            dropped.push(i);
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for e in &q {
                let c = e.dot(&w);
                w.axpy(-c, e, 1.0);
            }
        }
        let nw = w.norm();
        if nw <= 1e-10 * scale {
            dropped.push(i);
        } else {
            q.push(w / nw);
            kept.push(i);
        }
    }

    // Dependent rows must be consistent with the kept ones.
    if !dropped.is_empty() {
        let bscale = 1.0 + p.b.amax();
        if kept.is_empty() {
            if dropped.iter().any(|&i| p.b[i].abs() > 1e-9 * bscale) {
                return Presolved::Infeasible;
            }
        } else {
            let k = DMatrix::from_columns(&kept.iter().map(|&i| flat[i].clone()).collect::<Vec<_>>());
            let gram = k.transpose() * &k;
            let chol = match Cholesky::new(gram) {
                Some(c) => c,
                None => return Presolved::Infeasible,
            };
            let bk = DVector::from_iterator(kept.len(), kept.iter().map(|&i| p.b[i]));
            for &i in &dropped {
                let coef = chol.solve(&(k.transpose() * &flat[i]));
                if (p.b[i] - coef.dot(&bk)).abs() > 1e-8 * bscale {
                    return Presolved::Infeasible;
                }
            }
        }
    }

    // Free-column compression.
    let m = kept.len();
    let mut af = DMatrix::zeros(m, p.n_free);
    for (r, &i) in kept.iter().enumerate() {
        for &(j, a) in &p.rows[i].free {
            af[(r, j)] += a;
        }
    }
    let basis = if p.n_free == 0 {
        DMatrix::zeros(0, 0)
    } else if m == 0 {
        DMatrix::zeros(p.n_free, 0)
    } else {
        let svd = af.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let smax: f64 = svd.singular_values.max();
        let cols: Vec<DVector<f64>> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 1e-10 * smax.max(1e-300))
            .map(|(r, _)| vt.row(r).transpose())
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(p.n_free, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    };
    if p.n_free > 0 {
        let proj = &basis * (basis.transpose() * &p.c_free);
        if (&p.c_free - proj).norm() > 1e-9 * (1.0 + p.c_free.norm()) {
            return Presolved::Unbounded;
        }
    }
    let af_c = &af * &basis;
    let c_free = if p.n_free > 0 { basis.transpose() * &p.c_free } else { DVector::zeros(0) };
    let rows = kept
        .iter()
        .enumerate()
        .map(|(r, &i)| ConicRow {
            free: (0..af_c.ncols()).map(|j| (j, af_c[(r, j)])).collect(),
            blocks: p.rows[i].blocks.clone(),
        })
        .collect();
    Presolved::Ready {
        problem: ConicProblem {
            n_free: af_c.ncols(),
            block_dims: p.block_dims.clone(),
            c_free,
            c_blocks: p.c_blocks.clone(),
            rows,
            b: DVector::from_iterator(m, kept.iter().map(|&i| p.b[i])),
        },
        kept_rows: kept,
        basis,
    }
}

pub(crate) fn solve(p: &ConicProblem, opts: &SolverOptions) -> ConicSolution {
    match presolve(p) {
        Presolved::Infeasible => trivial(p, SolveStatus::PrimalInfeasible),
        Presolved::Unbounded => trivial(p, SolveStatus::DualInfeasible),
        Presolved::Ready {
            problem,
            kept_rows,
            basis,
        } => {
            let mut s = solve_reduced(&problem, opts);
            let mut y = DVector::zeros(p.rows.len());
            for (r, &i) in kept_rows.iter().enumerate() {
                y[i] = s.y[r];
            }
            s.y = y;
            s.x_free = if p.n_free > 0 { &basis * &s.x_free } else { DVector::zeros(0) };
            s
        }
    }
}

fn trivial(p: &ConicProblem, status: SolveStatus) -> ConicSolution {
    ConicSolution {
        status,
        x_free: DVector::zeros(p.n_free),
        x_blocks: p.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect(),
        y: DVector::zeros(p.rows.len()),
        s_blocks: p.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect(),
        primal_obj: f64::NAN,
        dual_obj: f64::NAN,
        primal_res: f64::NAN,
        dual_res: f64::NAN,
        iterations: 0,
    }
}

/// Largest `α` with `X + α dX ⪰ 0` (infinite if unrestricted).
fn max_step(x: &[DMatrix<f64>], dx: &[DMatrix<f64>]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (xk, dk) in x.iter().zip(dx) {
        let l = match Cholesky::new(xk.clone()) {
            Some(c) => c.l(),
            None => return 0.0,
        };
        let linv = match l.clone().try_inverse() {
            Some(m) => m,
            None => return 0.0,
        };
        let m = sym(&(&linv * dk * linv.transpose()));
        let lmin = SymmetricEigen::new(m).eigenvalues.min();
        if lmin < 0.0 {
            alpha = alpha.min(-1.0 / lmin);
        }
    }
    alpha
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rf: DVector<f64>,
}

fn solve_reduced(p: &ConicProblem, opts: &SolverOptions) -> ConicSolution {
    let m = p.rows.len();
    let nf = p.n_free;
    let nb = p.block_dims.len();
    let n_tot: usize = p.block_dims.iter().sum();

    let apply_a = |x: &[DMatrix<f64>], xf: &DVector<f64>| -> DVector<f64> {
        DVector::from_iterator(
            m,
            p.rows.iter().map(|r| {
                let mut v: f64 = r.free.iter().map(|&(j, a)| a * xf[j]).sum();
                for (k, blk) in r.blocks.iter().enumerate() {
                    if let Some(a) = blk {
                        v += inner(a, &x[k]);
                    }
                }
                v
            }),
        )
    };
    let apply_at_blocks = |y: &DVector<f64>| -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = p.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
        for (i, r) in p.rows.iter().enumerate() {
            for (k, blk) in r.blocks.iter().enumerate() {
                if let Some(a) = blk {
                    out[k] += a * y[i];
                }
            }
        }
        out
    };
    let apply_at_free = |y: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(nf);
        for (i, r) in p.rows.iter().enumerate() {
            for &(j, a) in &r.free {
                out[j] += a * y[i];
            }
        }
        out
    };

    let b_norm = p.b.norm();
    let c_norm = (p.c_free.norm_squared() + p.c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>()).sqrt();

    // Starting point scaled to the data.
    let mut a_norm_max: f64 = 0.0;
    let mut xi: f64 = 1.0;
    for (i, r) in p.rows.iter().enumerate() {
        let an = (r.free.iter().map(|t| t.1 * t.1).sum::<f64>()
            + r.blocks.iter().flatten().map(|a| a.norm_squared()).sum::<f64>())
        .sqrt();
        a_norm_max = a_norm_max.max(an);
        xi = xi.max((1.0 + p.b[i].abs()) / (1.0 + an));
    }
    let xi = 10.0 * (n_tot.max(1) as f64).sqrt() * xi;
    let eta = 10.0 * (1.0 + a_norm_max.max(c_norm)) / (n_tot.max(1) as f64).sqrt();

    let mut x: Vec<DMatrix<f64>> = p.block_dims.iter().map(|&d| DMatrix::identity(d, d) * xi).collect();
    let mut s: Vec<DMatrix<f64>> = p.block_dims.iter().map(|&d| DMatrix::identity(d, d) * eta).collect();
    let mut xf = DVector::zeros(nf);
    let mut y = DVector::zeros(m);

    let residuals = |x: &[DMatrix<f64>], xf: &DVector<f64>, y: &DVector<f64>, s: &[DMatrix<f64>]| -> Residuals {
        let aty = apply_at_blocks(y);
        Residuals {
            rp: &p.b - apply_a(x, xf),
            rd: (0..nb).map(|k| &p.c_blocks[k] - &aty[k] - &s[k]).collect(),
            rf: &p.c_free - apply_at_free(y),
        }
    };

    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut stalls = 0;
    let mut last = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);

    for iter in 0..=opts.max_iter {
        let res = residuals(&x, &xf, &y, &s);
        let pobj = p.c_free.dot(&xf) + (0..nb).map(|k| inner(&p.c_blocks[k], &x[k])).sum::<f64>();
        let dobj = p.b.dot(&y);
        let xs: f64 = (0..nb).map(|k| inner(&x[k], &s[k])).sum();
        let pres = res.rp.norm() / (1.0 + b_norm);
        let dres = (res.rd.iter().map(|r| r.norm_squared()).sum::<f64>() + res.rf.norm_squared()).sqrt() / (1.0 + c_norm);
        let rel_gap = (pobj - dobj).abs().max(xs.abs()) / (1.0 + pobj.abs() + dobj.abs());
        last = (pobj, dobj, pres, dres);
        iterations = iter;

        if !(pobj.is_finite() && dobj.is_finite() && xs.is_finite()) {
            status = SolveStatus::NumericalError;
            break;
        }
        if pres <= opts.tol_feas && dres <= opts.tol_feas && rel_gap <= opts.tol_gap {
            status = SolveStatus::Optimal;
            break;
        }
        // Farkas rays.
        if dobj > 0.0 {
            let aty = apply_at_blocks(&y);
            // Σ y_i A_i should be ⪯ 0 and A_fᵀy = 0 relative to bᵀy.
            let pos: f64 = aty
                .iter()
                .map(|a| SymmetricEigen::new(sym(a)).eigenvalues.iter().map(|&e| e.max(0.0)).sum::<f64>())
                .sum();
            let free_part = apply_at_free(&y).norm();
            if (pos + free_part) / dobj < opts.tol_infeas && dobj > 1.0 / opts.tol_infeas.sqrt() * 1e-2 {
                status = SolveStatus::PrimalInfeasible;
                break;
            }
        }
        if pobj < 0.0 {
            let ax = apply_a(&x, &xf).norm();
            let min_eig: f64 = x
                .iter()
                .map(|xk| SymmetricEigen::new(xk.clone()).eigenvalues.min())
                .fold(f64::INFINITY, f64::min);
            if ax / -pobj < opts.tol_infeas && min_eig >= 0.0 && -pobj > 1.0 / opts.tol_infeas.sqrt() * 1e-2 {
                status = SolveStatus::DualInfeasible;
                break;
            }
        }
        if iter == opts.max_iter {
            break;
        }

        let s_inv: Vec<DMatrix<f64>> = match s.iter().map(|sk| Cholesky::new(sk.clone()).map(|c| c.inverse())).collect::<Option<Vec<_>>>() {
            Some(v) => v,
            None => {
                status = SolveStatus::NumericalError;
                break;
            }
        };

        // Schur complement with free columns.
        let mut xa_sinv: Vec<Vec<Option<DMatrix<f64>>>> = Vec::with_capacity(m);
        for r in &p.rows {
            xa_sinv.push(
                r.blocks
                    .iter()
                    .enumerate()
                    .map(|(k, blk)| blk.as_ref().map(|a| &x[k] * a * &s_inv[k]))
                    .collect(),
            );
        }
        let dim = m + nf;
        let mut kkt = DMatrix::zeros(dim, dim);
        for i in 0..m {
            for j in i..m {
                let mut v = 0.0;
                for k in 0..nb {
                    if let (Some(pi), Some(aj)) = (&xa_sinv[i][k], &p.rows[j].blocks[k]) {
                        v += inner(aj, pi);
                    }
                }
                kkt[(i, j)] = v;
                kkt[(j, i)] = v;
            }
            for &(jf, a) in &p.rows[i].free {
                kkt[(i, m + jf)] += a;
                kkt[(m + jf, i)] += a;
            }
        }
        let lu = kkt.clone().lu();
        let svd = std::cell::OnceCell::new();
        let solve_kkt = |rhs: &DVector<f64>| -> Option<DVector<f64>> {
            match lu.solve(rhs) {
                Some(v) if v.iter().all(|e| e.is_finite()) => Some(v),
                _ => {
                    // Degenerate Newton system: least-squares step.
                    let svd = svd.get_or_init(|| kkt.clone().svd(true, true));
                    let tol = 1e-14 * svd.singular_values.max();
                    svd.solve(rhs, tol).ok()
                }
            }
        };

        let direction = |tau: f64, corr: Option<&[DMatrix<f64>]>| -> Option<Step> {
            let t: Vec<DMatrix<f64>> = (0..nb)
                .map(|k| {
                    let mut tk = &s_inv[k] * tau - &x[k];
                    if let Some(c) = corr {
                        tk -= &c[k];
                    }
                    tk
                })
                .collect();
            let g: Vec<DMatrix<f64>> = (0..nb).map(|k| &x[k] * &res.rd[k] * &s_inv[k]).collect();
            let mut rhs = DVector::zeros(dim);
            for (i, r) in p.rows.iter().enumerate() {
                let mut v = res.rp[i];
                for (k, blk) in r.blocks.iter().enumerate() {
                    if let Some(a) = blk {
                        v += inner(a, &g[k]) - inner(a, &t[k]);
                    }
                }
                rhs[i] = v;
            }
            for j in 0..nf {
                rhs[m + j] = res.rf[j];
            }
            let sol = solve_kkt(&rhs)?;
            let dy = sol.rows(0, m).into_owned();
            let dxf = sol.rows(m, nf).into_owned();
            let aty = apply_at_blocks(&dy);
            let ds: Vec<DMatrix<f64>> = (0..nb).map(|k| &res.rd[k] - &aty[k]).collect();
            let dx: Vec<DMatrix<f64>> = (0..nb).map(|k| sym(&(&t[k] - &x[k] * &ds[k] * &s_inv[k]))).collect();
            if sol.iter().all(|v| v.is_finite()) {
                Some((dx, dxf, dy, ds))
            } else {
                None
            }
        };

        let mu = xs / n_tot.max(1) as f64;
        let Some((dxa, _, _, dsa)) = direction(0.0, None) else {
            status = SolveStatus::NumericalError;
            break;
        };
        let ap = max_step(&x, &dxa).min(1.0);
        let ad = max_step(&s, &dsa).min(1.0);
        let mu_aff: f64 = (0..nb)
            .map(|k| inner(&(&x[k] + &dxa[k] * ap), &(&s[k] + &dsa[k] * ad)))
            .sum::<f64>()
            / n_tot.max(1) as f64;
        let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };
        let corr: Vec<DMatrix<f64>> = (0..nb).map(|k| &dxa[k] * &dsa[k] * &s_inv[k]).collect();
        let Some((dx, dxf, dy, ds)) = direction(sigma * mu, Some(&corr)) else {
            status = SolveStatus::NumericalError;
            break;
        };

        let gamma = if iter < 3 { opts.step_fraction.min(0.9) } else { opts.step_fraction };
        let ap = (gamma * max_step(&x, &dx)).min(1.0);
        let ad = (gamma * max_step(&s, &ds)).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls > 3 {
                status = SolveStatus::NumericalError;
                break;
            }
        }
        for k in 0..nb {
            x[k] = sym(&(&x[k] + &dx[k] * ap));
            s[k] = sym(&(&s[k] + &ds[k] * ad));
        }
        xf.axpy(ap, &dxf, 1.0);
        y.axpy(ad, &dy, 1.0);
    }

    ConicSolution {
        status,
        x_free: xf,
        x_blocks: x,
        y,
        s_blocks: s,
        primal_obj: last.0,
        dual_obj: last.1,
        primal_res: last.2,
        dual_res: last.3,
        iterations,
    }
}
