//! Randomness certification: bounds on the adversary's guessing probability
//! from the observed table `p(b|x)` and the energy bound `μ`.
//!
//! The two prepared states are modelled as `ψ0 = |0⟩` and
//! `ψ1 = Λ|0⟩ + √(1−Λ²)|1⟩` with `Λ = 1 − 2μ`. The guessing probability is
//! bounded from above by the dual program; the primal gives the matching
//! lower bound and [`oracle_pg`] an independent brute-force one.

mod programs;
mod validation;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use programs::{
    build_dual, build_dual_finite_size, build_dual_in, build_feasibility, build_primal, build_primal_in,
    finite_size_objective, DualMultipliers, DualProgram, Field, PrimalProgram, LABELS,
};
pub use validation::{fit_efficiency, oracle_pg, EfficiencyFit};

use crate::error::{invalid, Error, Result};
use crate::phase_space::MAX_CERTIFIABLE_MU;
use crate::probs::ProbTable;
use crate::sdp::{SolveStatus, SolverOptions};

/// Data tables farther than this (in summed absolute deviation) from every
/// achievable table are rejected.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapConstraint {
    pub lambda: f64,
    pub mu: f64,
}

impl OverlapConstraint {
    /// `Λ = 1 − 2μ`; refuses `μ > 0.5`, where the bound is void.
    pub fn from_energy(mu: f64) -> Result<Self> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(invalid(format!("mean photon number {mu} must be finite and non-negative")));
        }
        if mu > MAX_CERTIFIABLE_MU {
            return Err(Error::AssumptionViolated(format!(
                "mean photon number {mu} exceeds {MAX_CERTIFIABLE_MU}; the overlap bound 1 - 2mu would be negative"
            )));
        }
        Ok(Self { lambda: 1.0 - 2.0 * mu, mu })
    }

    pub fn from_lambda(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(invalid(format!("overlap {lambda} outside [0, 1]")));
        }
        Ok(Self {
            lambda,
            mu: (1.0 - lambda) / 2.0,
        })
    }
}

/// `ρ0 = |0⟩⟨0|` and `ρ1 = |ψ1⟩⟨ψ1|` with `ψ1 = (Λ, √(1−Λ²))`.
pub fn embed_states(lambda: f64) -> Result<[DMatrix<f64>; 2]> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(format!("overlap {lambda} outside [0, 1]")));
    }
    let s = (1.0 - lambda * lambda).max(0.0).sqrt();
    let r0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let r1 = DMatrix::from_row_slice(2, 2, &[lambda * lambda, lambda * s, lambda * s, s * s]);
    Ok([r0, r1])
}

/// Chernoff–Hoeffding half-width `√(−log2 ε / (2n))`.
pub fn hoeffding_delta(epsilon: f64, n: u64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("epsilon {epsilon} outside (0, 1)")));
    }
    if n == 0 {
        return Err(Error::InsufficientData("sample size is zero".into()));
    }
    Ok((-epsilon.log2() / (2.0 * n as f64)).sqrt())
}

pub fn min_entropy(pg: f64) -> f64 {
    (-pg.log2()).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    /// Confidence parameter of the finite-size correction.
    pub epsilon: f64,
    /// Extractor security parameter; carried into the certificate, not used here.
    pub epsilon_re: f64,
    pub finite_size: bool,
    /// Multiplies the declared `μ` before certification (power-meter margin).
    pub mu_inflation: f64,
    pub solver: SolverOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-10,
            epsilon_re: 1e-10,
            finite_size: false,
            mu_inflation: 1.0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigests {
    pub table_sha256: String,
    pub overlap_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: String,
    pub iterations: usize,
    pub objective: f64,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub pg_upper: f64,
    /// Bits per round, `−log2(pg_upper)`.
    pub hmin_rate: f64,
    pub finite_size: bool,
    pub epsilon: f64,
    pub epsilon_re: f64,
    /// Per-input half-widths when `finite_size` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<[f64; 2]>,
    pub declared_mu: f64,
    pub mu_inflation: f64,
    pub overlap: OverlapConstraint,
    pub table: ProbTable,
    /// Dual multipliers `nu[b][x]`; with the same overlap they bound any other table.
    pub nu_bx: [[f64; 2]; 2],
    pub duality_gap: f64,
    pub solver: SolverReport,
    pub inputs: InputDigests,
}

fn sha256_json<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}

/// Checks whether some strategy reproduces `pt` under the overlap constraint.
pub fn check_feasible(pt: &ProbTable, oc: &OverlapConstraint, solver: &SolverOptions) -> Result<()> {
    let sol = build_feasibility(pt, oc)?.solve_with(solver)?;
    match sol.status {
        SolveStatus::Optimal => {}
        s => return Err(Error::Solver(format!("feasibility program ended with {s:?}"))),
    }
    if sol.objective > FEASIBILITY_TOL {
        return Err(Error::Infeasible(format!(
            "table is {:.3e} (total deviation) away from any strategy with overlap {:.6}; error sum {:.6} vs minimum {:.6}",
            sol.objective,
            oc.lambda,
            pt.error_sum(),
            1.0 - (1.0 - oc.lambda * oc.lambda).sqrt(),
        )));
    }
    Ok(())
}

/// Upper bound on the guessing probability and the resulting min-entropy.
pub fn certify(pt: &ProbTable, mu: f64, opts: &CertifyOptions) -> Result<Certificate> {
    pt.validate()?;
    if !(opts.mu_inflation.is_finite() && opts.mu_inflation >= 1.0) {
        return Err(invalid(format!("mu inflation {} must be at least 1", opts.mu_inflation)));
    }
    let oc = OverlapConstraint::from_energy(mu * opts.mu_inflation)?;
    if !(opts.epsilon > 0.0 && opts.epsilon < 1.0) || !(opts.epsilon_re > 0.0 && opts.epsilon_re < 1.0) {
        return Err(invalid("epsilon values must lie in (0, 1)"));
    }
    if opts.finite_size && pt.n_x.is_none() {
        return Err(Error::InsufficientData("finite-size certification needs per-input sample sizes".into()));
    }

    check_feasible(pt, &oc, &opts.solver)?;

    let dp = if opts.finite_size {
        build_dual_finite_size(pt, &oc, opts.epsilon)?
    } else {
        build_dual(pt, &oc)?
    };
    let sol = dp.problem.solve_with(&opts.solver)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!(
            "dual program ended with {:?} after {} iterations",
            sol.status, sol.iterations
        )));
    }
    let mult = DualMultipliers::from_solution(&dp, &sol);
    let (bound, delta) = if opts.finite_size {
        let delta = programs::table_deltas(pt, opts.epsilon)?;
        (mult.finite_size_bound(pt, &oc, opts.epsilon)?, Some(delta))
    } else {
        (mult.bound(pt, &oc)?, None)
    };
    let pg_upper = bound.clamp(0.5, 1.0);

    Ok(Certificate {
        pg_upper,
        hmin_rate: min_entropy(pg_upper),
        finite_size: opts.finite_size,
        epsilon: opts.epsilon,
        epsilon_re: opts.epsilon_re,
        delta,
        declared_mu: mu,
        mu_inflation: opts.mu_inflation,
        overlap: oc,
        table: *pt,
        nu_bx: mult.nu,
        duality_gap: sol.gap,
        solver: SolverReport {
            status: format!("{:?}", sol.status),
            iterations: sol.iterations,
            objective: sol.objective,
            duality_gap: sol.gap,
        },
        inputs: InputDigests {
            table_sha256: sha256_json(pt),
            overlap_sha256: sha256_json(&oc),
        },
    })
}

/// Asymptotic min-entropy of `pt` under energy bound `mu`.
pub fn hmin(pt: &ProbTable, mu: f64) -> Result<f64> {
    certify(pt, mu, &CertifyOptions::default()).map(|c| c.hmin_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{discrimination_bound, prob_heterodyne};
    use proptest::prelude::*;

    #[test]
    fn states() {
        let [a, b] = embed_states(1.0).unwrap();
        assert_eq!(a, b);
        let [a, b] = embed_states(0.0).unwrap();
        assert_eq!((&a * &b).trace(), 0.0);
        let [a, b] = embed_states(0.8).unwrap();
        assert!(((&a * &b).trace() - 0.64).abs() < 1e-15);
        assert!((b.trace() - 1.0).abs() < 1e-15);
        assert!(((&b * &b) - &b).abs().max() < 1e-15);
        assert!(embed_states(1.1).is_err());
        assert!(embed_states(-0.1).is_err());
    }

    #[test]
    fn overlap_constraint() {
        let oc = OverlapConstraint::from_energy(0.1).unwrap();
        assert!((oc.lambda - 0.8).abs() < 1e-15);
        assert!(matches!(OverlapConstraint::from_energy(0.6), Err(Error::AssumptionViolated(_))));
        assert!(OverlapConstraint::from_energy(-0.1).is_err());
        assert!((OverlapConstraint::from_lambda(0.5).unwrap().mu - 0.25).abs() < 1e-15);
    }

    #[test]
    fn delta_value() {
        // √(−log2(1e−10) / 2e6)
        let want = (10.0 * 10f64.log2() / 2e6).sqrt();
        let d = hoeffding_delta(1e-10, 1_000_000).unwrap();
        assert!((d - want).abs() < 1e-15);
        assert!((d - 4.0755e-3).abs() < 1e-7);
        assert!(hoeffding_delta(0.0, 10).is_err());
        assert!(hoeffding_delta(0.5, 0).is_err());
    }

    #[test]
    fn certify_refuses_large_mu() {
        let pt = prob_heterodyne(0.6f64.sqrt());
        assert!(matches!(certify(&pt, 0.6, &CertifyOptions::default()), Err(Error::AssumptionViolated(_))));
        let inflated = CertifyOptions {
            mu_inflation: 1.05,
            ..Default::default()
        };
        assert!(matches!(certify(&pt, 0.49, &inflated), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn identical_states_give_no_entropy() {
        let pt = ProbTable::symmetric(0.5).unwrap();
        let c = certify(&pt, 0.0, &CertifyOptions::default()).unwrap();
        assert!(c.hmin_rate < 1e-6, "{}", c.hmin_rate);
        assert!((c.pg_upper - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_table_is_reported() {
        // heterodyne table far beyond what μ = 0.01 permits
        let pt = prob_heterodyne(10.0);
        assert!(matches!(certify(&pt, 0.01, &CertifyOptions::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn reference_point_and_certificate_contents() {
        let pt = prob_heterodyne(0.2f64.sqrt()).with_counts([5_000_000, 5_000_000]);
        let c = certify(&pt, 0.2, &CertifyOptions::default()).unwrap();
        assert!((c.hmin_rate - 0.0879079).abs() < 2e-6, "{}", c.hmin_rate);
        assert!((c.hmin_rate + c.pg_upper.log2()).abs() < 1e-15);
        assert!(c.duality_gap <= 1e-6);
        assert_eq!(c.inputs.table_sha256.len(), 64);

        let fs = certify(
            &pt,
            0.2,
            &CertifyOptions {
                finite_size: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(fs.hmin_rate < c.hmin_rate);
        assert!(fs.delta.is_some());

        let json = serde_json::to_string(&c).unwrap();
        let back: Certificate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn finite_size_needs_counts() {
        let pt = prob_heterodyne(0.3);
        let opts = CertifyOptions {
            finite_size: true,
            ..Default::default()
        };
        assert!(matches!(certify(&pt, 0.09, &opts), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn label_swap_symmetry() {
        for mu in [0.05, 0.15, 0.3] {
            let pt = ProbTable::from_errors(0.3, 0.25).unwrap();
            let a = hmin(&pt, mu);
            let b = hmin(&pt.relabelled(), mu);
            match (a, b) {
                (Ok(a), Ok(b)) => assert!((a - b).abs() < 1e-6),
                (Err(Error::Infeasible(_)), Err(Error::Infeasible(_))) => {}
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn more_overlap_never_increases_entropy() {
        // Larger Λ (smaller μ) constrains the adversary more, so the bound can only grow.
        let pt = prob_heterodyne(0.1f64.sqrt());
        let mut last = -1.0;
        for mu in [0.45, 0.4, 0.3, 0.2, 0.15, 0.1, 0.07, 0.05] {
            let h = hmin(&pt, mu).unwrap();
            assert!(h >= last - 1e-6, "mu {mu}: {h} < {last}");
            last = h;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn honest_tables_certify_within_unit_interval(mu in 0.01f64..0.5) {
            let c = certify(&prob_heterodyne(mu.sqrt()), mu, &CertifyOptions::default()).unwrap();
            prop_assert!((0.5..=1.0).contains(&c.pg_upper));
            prop_assert!(c.hmin_rate >= 0.0 && c.hmin_rate <= 1.0);
            prop_assert!(prob_heterodyne(mu.sqrt()).error_sum() >= discrimination_bound(mu).unwrap());
        }

        #[test]
        fn finite_size_penalty_shrinks_with_n(k in 4u32..9) {
            let n = 10u64.pow(k);
            let a = hoeffding_delta(1e-10, n).unwrap();
            let b = hoeffding_delta(1e-10, n * 10).unwrap();
            prop_assert!(b < a);
            prop_assert!(hoeffding_delta(1e-20, n).unwrap() > a);
        }
    }
}
