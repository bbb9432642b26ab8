//! The guessing-probability programs over the four deterministic guess labels
//! `λ = (λ0, λ1)`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{embed_states, hoeffding_delta, OverlapConstraint};
use crate::error::{Error, Result};
use crate::probs::ProbTable;
use crate::sdp::{Entry, LinExpr, MatExpr, SdpProblem, SdpSolution, Sense, VarId, VarKind};

/// `(λ0, λ1)` for label index `l`.
pub const LABELS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

pub(crate) fn guess(l: usize, x: usize) -> usize {
    if x == 0 {
        LABELS[l].0
    } else {
        LABELS[l].1
    }
}

/// Matrix field the programs are posed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Field {
    /// Real symmetric 2×2 matrices.
    Real,
    /// Complex Hermitian 2×2 matrices `A + iB` in the real form `[[A, −B], [B, A]]`.
    Complex,
}

impl Field {
    fn dim(self) -> usize {
        match self {
            Field::Real => 2,
            Field::Complex => 4,
        }
    }

    /// Ratio between the trace of the represented matrix and the trace of its real form.
    fn trace_factor(self) -> f64 {
        match self {
            Field::Real => 1.0,
            Field::Complex => 0.5,
        }
    }

    fn embed(self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Field::Real => m.clone(),
            Field::Complex => {
                let mut out = DMatrix::zeros(4, 4);
                out.view_mut((0, 0), (2, 2)).copy_from(m);
                out.view_mut((2, 2), (2, 2)).copy_from(m);
                out
            }
        }
    }

    /// Equalities forcing a 4×4 variable to have the `[[A, −B], [B, A]]` shape.
    fn add_structure(self, p: &mut SdpProblem, v: VarId, name: &str) {
        if self == Field::Real {
            return;
        }
        let e = |i, j| Entry::new(v, i, j);
        for (k, (a, b)) in [((0, 0), (2, 2)), ((1, 1), (3, 3)), ((0, 1), (2, 3))].into_iter().enumerate() {
            p.add_equality(
                format!("{name}:A{k}"),
                LinExpr::term(e(a.0, a.1), 1.0).add(&LinExpr::term(e(b.0, b.1), -1.0)),
                0.0,
            );
        }
        p.add_equality(format!("{name}:B00"), LinExpr::term(e(2, 0), 1.0), 0.0);
        p.add_equality(format!("{name}:B11"), LinExpr::term(e(3, 1), 1.0), 0.0);
        p.add_equality(
            format!("{name}:B01"),
            LinExpr::term(e(2, 1), 1.0).add(&LinExpr::term(e(3, 0), 1.0)),
            0.0,
        );
    }
}

fn field_states(oc: &OverlapConstraint, field: Field) -> Result<[DMatrix<f64>; 2]> {
    let [r0, r1] = embed_states(oc.lambda)?;
    Ok([field.embed(&r0), field.embed(&r1)])
}

#[derive(Debug, Clone)]
pub struct PrimalProgram {
    pub problem: SdpProblem,
    /// `m[b][l]`.
    pub m: [[VarId; 4]; 2],
    pub field: Field,
}

/// PSD variables `M_b^λ` with the proportionality constraints `Σ_b M_b^λ ∝ 𝟙`.
fn add_measurements(p: &mut SdpProblem, field: Field) -> [[VarId; 4]; 2] {
    let d = field.dim();
    let f = field.trace_factor();
    let mut m = [[VarId(0); 4]; 2];
    for (b, row) in m.iter_mut().enumerate() {
        for (l, v) in row.iter_mut().enumerate() {
            let name = format!("M{b}^{}{}", LABELS[l].0, LABELS[l].1);
            *v = p.add_var(&name, VarKind::Psd, d);
            field.add_structure(p, *v, &name);
        }
    }
    for l in 0..4 {
        let sum = p.matrix(m[0][l]).add(&p.matrix(m[1][l]));
        let tr = sum.trace().scale(0.5 * f);
        let mut expr = sum;
        for (e, a) in tr.terms {
            expr = expr.add_term(e, DMatrix::identity(d, d) * -a);
        }
        p.add_matrix_equality(&format!("unital^{l}"), &expr);
    }
    m
}

fn data_expr(p: &SdpProblem, m: &[[VarId; 4]; 2], rho: &[DMatrix<f64>; 2], f: f64, b: usize, x: usize) -> LinExpr {
    (0..4).fold(LinExpr::zero(), |acc, l| acc.add(&p.trace_product(m[b][l], &rho[x]).scale(f)))
}

pub fn build_primal(pt: &ProbTable, oc: &OverlapConstraint) -> Result<PrimalProgram> {
    build_primal_in(pt, oc, Field::Real)
}

pub fn build_primal_in(pt: &ProbTable, oc: &OverlapConstraint, field: Field) -> Result<PrimalProgram> {
    pt.validate()?;
    let rho = field_states(oc, field)?;
    let f = field.trace_factor();
    let mut p = SdpProblem::new(Sense::Maximize);
    let m = add_measurements(&mut p, field);
    for b in 0..2 {
        for x in 0..2 {
            let e = data_expr(&p, &m, &rho, f, b, x);
            p.add_equality(format!("data[{b}|{x}]"), e, pt.p(b, x));
        }
    }
    let mut obj = LinExpr::zero();
    for x in 0..2 {
        for l in 0..4 {
            obj = obj.add(&p.trace_product(m[guess(l, x)][l], &rho[x]).scale(0.5 * f));
        }
    }
    p.set_objective(obj);
    Ok(PrimalProgram { problem: p, m, field })
}

/// Distance of `pt` from the set of tables the overlap constraint allows:
/// `min Σ |slack|` over the primal constraints.
pub fn build_feasibility(pt: &ProbTable, oc: &OverlapConstraint) -> Result<SdpProblem> {
    pt.validate()?;
    let rho = field_states(oc, Field::Real)?;
    let mut p = SdpProblem::new(Sense::Minimize);
    let m = add_measurements(&mut p, Field::Real);
    let mut obj = LinExpr::zero();
    for b in 0..2 {
        for x in 0..2 {
            let up = p.add_var(format!("u+[{b}|{x}]"), VarKind::Psd, 1);
            let down = p.add_var(format!("u-[{b}|{x}]"), VarKind::Psd, 1);
            let e = data_expr(&p, &m, &rho, 1.0, b, x)
                .add(&LinExpr::term(p.scalar(down), 1.0))
                .add(&LinExpr::term(p.scalar(up), -1.0));
            p.add_equality(format!("data[{b}|{x}]"), e, pt.p(b, x));
            obj = obj.add(&LinExpr::term(p.scalar(up), 1.0)).add(&LinExpr::term(p.scalar(down), 1.0));
        }
    }
    // Σ_λ p_λ = 1
    let mut norm = LinExpr::zero();
    for l in 0..4 {
        norm = norm.add(&p.matrix(m[0][l]).add(&p.matrix(m[1][l])).trace().scale(0.5));
    }
    p.add_equality("normalisation", norm, 1.0);
    p.set_objective(obj);
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct DualProgram {
    pub problem: SdpProblem,
    pub h: [VarId; 4],
    /// `nu[b][x]`.
    pub nu: [[VarId; 2]; 2],
    pub field: Field,
}

fn dual_skeleton(oc: &OverlapConstraint, field: Field) -> Result<(SdpProblem, [VarId; 4], [[VarId; 2]; 2])> {
    let rho = field_states(oc, field)?;
    let d = field.dim();
    let f = field.trace_factor();
    let mut p = SdpProblem::new(Sense::Minimize);
    let mut h = [VarId(0); 4];
    for (l, v) in h.iter_mut().enumerate() {
        let name = format!("H^{}{}", LABELS[l].0, LABELS[l].1);
        *v = p.add_var(&name, VarKind::Symmetric, d);
        field.add_structure(&mut p, *v, &name);
    }
    let mut nu = [[VarId(0); 2]; 2];
    for (b, row) in nu.iter_mut().enumerate() {
        for (x, v) in row.iter_mut().enumerate() {
            *v = p.add_var(format!("nu[{b}|{x}]"), VarKind::Scalar, 1);
        }
    }
    for b in 0..2 {
        for l in 0..4 {
            let mut expr = MatExpr::zeros(d);
            for x in 0..2 {
                if guess(l, x) == b {
                    expr = expr.add_constant(&(&rho[x] * 0.5));
                }
                expr = expr.add_term(p.scalar(nu[b][x]), rho[x].clone());
            }
            expr = expr.add(&p.matrix(h[l]));
            for i in 0..d {
                expr = expr.add_term(Entry::new(h[l], i, i), DMatrix::identity(d, d) * (-0.5 * f));
            }
            p.add_lmi(format!("F{b}^{}{}", LABELS[l].0, LABELS[l].1), expr);
        }
    }
    Ok((p, h, nu))
}

fn data_objective(p: &SdpProblem, nu: &[[VarId; 2]; 2], pt: &ProbTable) -> LinExpr {
    let mut obj = LinExpr::zero();
    for b in 0..2 {
        for x in 0..2 {
            obj = obj.add(&LinExpr::term(p.scalar(nu[b][x]), -pt.p(b, x)));
        }
    }
    obj
}

pub fn build_dual(pt: &ProbTable, oc: &OverlapConstraint) -> Result<DualProgram> {
    build_dual_in(pt, oc, Field::Real)
}

pub fn build_dual_in(pt: &ProbTable, oc: &OverlapConstraint, field: Field) -> Result<DualProgram> {
    pt.validate()?;
    let (mut p, h, nu) = dual_skeleton(oc, field)?;
    let obj = data_objective(&p, &nu, pt);
    p.set_objective(obj);
    Ok(DualProgram { problem: p, h, nu, field })
}

/// Dual with the objective `−Σ ν_bx p(b|x) + Σ |ν_bx| Δ(ε, n_x)`.
pub fn build_dual_finite_size(pt: &ProbTable, oc: &OverlapConstraint, epsilon: f64) -> Result<DualProgram> {
    pt.validate()?;
    let delta = table_deltas(pt, epsilon)?;
    let (mut p, h, nu) = dual_skeleton(oc, Field::Real)?;
    let mut obj = data_objective(&p, &nu, pt);
    for b in 0..2 {
        for x in 0..2 {
            let t = p.add_var(format!("|nu[{b}|{x}]|"), VarKind::Scalar, 1);
            let one = DMatrix::from_element(1, 1, 1.0);
            let (en, et) = (p.scalar(nu[b][x]), p.scalar(t));
            p.add_lmi(format!("nu-t[{b}|{x}]"), MatExpr::zeros(1).add_term(en, one.clone()).add_term(et, -one.clone()));
            p.add_lmi(format!("-nu-t[{b}|{x}]"), MatExpr::zeros(1).add_term(en, -one.clone()).add_term(et, -one));
            obj = obj.add(&LinExpr::term(et, delta[x]));
        }
    }
    p.set_objective(obj);
    Ok(DualProgram { problem: p, h, nu, field: Field::Real })
}

pub(crate) fn table_deltas(pt: &ProbTable, epsilon: f64) -> Result<[f64; 2]> {
    let n = pt
        .n_x
        .ok_or_else(|| Error::InsufficientData("finite-size correction needs per-input sample sizes".into()))?;
    Ok([hoeffding_delta(epsilon, n[0])?, hoeffding_delta(epsilon, n[1])?])
}

/// A dual point `(H, ν)`. Any such point bounds the guessing probability of
/// every table through [`DualMultipliers::bound`]; optimality only affects
/// tightness.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMultipliers {
    pub h: [DMatrix<f64>; 4],
    /// `nu[b][x]`.
    pub nu: [[f64; 2]; 2],
    pub field: Field,
}

impl DualMultipliers {
    pub fn from_solution(dp: &DualProgram, sol: &SdpSolution) -> Self {
        let mut nu = [[0.0; 2]; 2];
        for b in 0..2 {
            for x in 0..2 {
                nu[b][x] = sol.scalar(dp.nu[b][x]);
            }
        }
        Self {
            h: dp.h.map(|v| sol.value(v).clone()),
            nu,
            field: dp.field,
        }
    }

    /// Largest eigenvalue of any constraint matrix `F_b^λ`, i.e. how far the
    /// point is from dual feasibility.
    pub fn max_violation(&self, oc: &OverlapConstraint) -> Result<f64> {
        let rho = field_states(oc, self.field)?;
        let d = self.field.dim();
        let f = self.field.trace_factor();
        let mut worst = f64::NEG_INFINITY;
        for b in 0..2 {
            for l in 0..4 {
                let mut m = &self.h[l] - DMatrix::identity(d, d) * (0.5 * f * self.h[l].trace());
                for x in 0..2 {
                    let coef = self.nu[b][x] + if guess(l, x) == b { 0.5 } else { 0.0 };
                    m += &rho[x] * coef;
                }
                let m = (&m + m.transpose()) * 0.5;
                worst = worst.max(SymmetricEigen::new(m).eigenvalues.max());
            }
        }
        Ok(worst)
    }

    pub fn objective(&self, pt: &ProbTable) -> f64 {
        -(0..2).flat_map(|b| (0..2).map(move |x| (b, x))).map(|(b, x)| self.nu[b][x] * pt.p(b, x)).sum::<f64>()
    }

    /// Upper bound on the guessing probability of `pt`:
    /// `−Σ ν p + 2·max(0, λmax F)`. The second term repairs residual
    /// infeasibility, using `Σ_{b,λ} tr M_b^λ = 2` on every primal point.
    pub fn bound(&self, pt: &ProbTable, oc: &OverlapConstraint) -> Result<f64> {
        Ok(self.objective(pt) + 2.0 * self.max_violation(oc)?.max(0.0))
    }

    /// `Σ |ν_bx| Δ(ε, n_x)`.
    pub fn finite_size_penalty(&self, pt: &ProbTable, epsilon: f64) -> Result<f64> {
        let delta = table_deltas(pt, epsilon)?;
        Ok((0..2).map(|b| (0..2).map(|x| self.nu[b][x].abs() * delta[x]).sum::<f64>()).sum())
    }

    /// Bound valid for every table within `Δ(ε, n_x)` of `pt` entrywise.
    pub fn finite_size_bound(&self, pt: &ProbTable, oc: &OverlapConstraint, epsilon: f64) -> Result<f64> {
        Ok(self.bound(pt, oc)? + self.finite_size_penalty(pt, epsilon)?)
    }
}

/// `−Σ ν_bx p(b|x) + Σ |ν_bx| Δ(ε, n_x)` for a solved dual.
pub fn finite_size_objective(mult: &DualMultipliers, pt: &ProbTable, epsilon: f64) -> Result<f64> {
    Ok(mult.objective(pt) + mult.finite_size_penalty(pt, epsilon)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::prob_heterodyne;
    use crate::sdp::SolveStatus;

    fn het(mu: f64) -> ProbTable {
        prob_heterodyne(mu.sqrt())
    }

    fn oc(mu: f64) -> OverlapConstraint {
        OverlapConstraint::from_energy(mu).unwrap()
    }

    #[test]
    fn primal_shape() {
        let pp = build_primal(&het(0.1), &oc(0.1)).unwrap();
        assert_eq!(pp.problem.vars.len(), 8);
        assert!(pp.problem.vars.iter().all(|v| v.kind == VarKind::Psd && v.dim == 2));
        // 4 labels × 3 entries + 4 data rows
        assert_eq!(pp.problem.equalities.len(), 16);
        assert_eq!(pp.problem.sense, Sense::Maximize);
    }

    #[test]
    fn dual_shape() {
        let dp = build_dual(&het(0.1), &oc(0.1)).unwrap();
        assert_eq!(dp.problem.vars.len(), 8);
        assert_eq!(dp.problem.lmis.len(), 8);
        assert!(dp.problem.equalities.is_empty());
    }

    // Reference optima computed with an external conic solver on the same formulation.
    #[test]
    fn ideal_heterodyne_reference_values() {
        for (mu, pg) in [(0.05, 0.869945), (0.1, 0.884907), (0.2, 0.940886), (0.3, 0.974430)] {
            let dp = build_dual(&het(mu), &oc(mu)).unwrap();
            let s = dp.problem.solve().unwrap();
            assert!(s.is_optimal(), "{:?}", s.status);
            assert!((s.objective - pg).abs() < 2e-6, "mu {mu}: {} vs {pg}", s.objective);

            let pp = build_primal(&het(mu), &oc(mu)).unwrap();
            let sp = pp.problem.solve().unwrap();
            assert!(sp.is_optimal());
            assert!(sp.objective <= s.objective + 1e-6);
            assert!(s.objective - sp.objective < 1e-6);
        }
    }

    #[test]
    fn multipliers_are_a_certified_bound() {
        let (pt, o) = (het(0.1), oc(0.1));
        let dp = build_dual(&pt, &o).unwrap();
        let s = dp.problem.solve().unwrap();
        let mult = DualMultipliers::from_solution(&dp, &s);
        let bound = mult.bound(&pt, &o).unwrap();
        assert!(bound >= s.objective - 1e-9);
        assert!(bound - s.objective < 1e-6);
        for b in 0..2 {
            assert!((mult.nu[b][0] + mult.nu[b][1] + 1.0).abs() < 1e-6);
        }

        // Reuse on a perturbed table: still above that table's optimum.
        let moved = ProbTable::symmetric(pt.p(0, 0) - 0.01).unwrap();
        let reused = mult.bound(&moved, &o).unwrap();
        let fresh = build_dual(&moved, &o).unwrap().problem.solve().unwrap();
        assert!(reused >= fresh.objective - 1e-7);

        // A deliberately infeasible point is repaired by the eigenvalue term.
        let mut off = mult.clone();
        off.nu[0][0] += 0.05;
        let pg_opt = s.objective;
        assert!(off.bound(&pt, &o).unwrap() >= pg_opt - 1e-9);
    }

    #[test]
    fn finite_size_dual_program_matches_reevaluation() {
        let pt = het(0.1).with_counts([1_000_000, 1_000_000]);
        let o = oc(0.1);
        let eps = 1e-10;
        let asym = build_dual(&pt, &o).unwrap().problem.solve().unwrap();
        let fp = build_dual_finite_size(&pt, &o, eps).unwrap();
        let fs = fp.problem.solve().unwrap();
        assert!(fs.is_optimal());
        assert!(fs.objective > asym.objective);
        let mult = DualMultipliers::from_solution(&fp, &fs);
        let re = finite_size_objective(&mult, &pt, eps).unwrap();
        assert!((re - fs.objective).abs() < 1e-6);
        assert!(matches!(build_dual_finite_size(&het(0.1), &o, eps), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn feasibility_program_separates_at_discrimination_bound() {
        let o = oc(0.1);
        let bound = 0.4;
        let inside = ProbTable::symmetric(1.0 - (bound + 0.01) / 2.0).unwrap();
        let outside = ProbTable::symmetric(1.0 - (bound - 0.01) / 2.0).unwrap();
        let s_in = build_feasibility(&inside, &o).unwrap().solve().unwrap();
        let s_out = build_feasibility(&outside, &o).unwrap().solve().unwrap();
        assert_eq!(s_in.status, SolveStatus::Optimal);
        assert!(s_in.objective < 1e-7);
        assert!(s_out.objective > 1e-4, "{}", s_out.objective);
    }

    #[test]
    fn complex_embedding_matches_real() {
        for mu in [0.05, 0.2, 0.4] {
            let (pt, o) = (het(mu), oc(mu));
            let r = build_dual_in(&pt, &o, Field::Real).unwrap().problem.solve().unwrap();
            let c = build_dual_in(&pt, &o, Field::Complex).unwrap().problem.solve().unwrap();
            assert!(c.is_optimal());
            assert!((r.objective - c.objective).abs() < 1e-6);
            let cp = build_primal_in(&pt, &o, Field::Complex).unwrap().problem.solve().unwrap();
            assert!((cp.objective - r.objective).abs() < 1e-6);
        }
    }
}
