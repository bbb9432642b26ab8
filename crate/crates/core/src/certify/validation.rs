//! Independent checks: a brute-force strategy search that bounds the guessing
//! probability from below, and the detector-efficiency fit.

use std::f64::consts::PI;

use libm::erf;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use super::programs::{guess, LABELS};
use super::{embed_states, OverlapConstraint};
use crate::error::{invalid, Error, Result};
use crate::probs::ProbTable;

/// Best guessing probability over convex mixtures of (guess label,
/// two-outcome measurement) pairs that reproduce `pt` exactly.
///
/// Measurements are the projectors `|v⟩⟨v|` onto real Bloch-circle vectors
/// at spacing `resolution` radians, plus the two trivial ones. Returns `None`
/// when no mixture on the grid reproduces the table.
pub fn oracle_pg(pt: &ProbTable, oc: &OverlapConstraint, resolution: f64) -> Result<Option<f64>> {
    pt.validate()?;
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(invalid(format!("grid resolution {resolution} outside (0, 1]")));
    }
    let [r0, r1] = embed_states(oc.lambda)?;
    let steps = (2.0 * PI / resolution).ceil() as usize;

    // p(b = 0 | x) for each measurement
    let mut outcomes: Vec<[f64; 2]> = vec![[1.0, 1.0], [0.0, 0.0]];
    for k in 0..steps {
        let half = 0.5 * (k as f64) * 2.0 * PI / steps as f64;
        let (c, s) = (half.cos(), half.sin());
        let proj = |r: &nalgebra::DMatrix<f64>| c * c * r[(0, 0)] + 2.0 * c * s * r[(0, 1)] + s * s * r[(1, 1)];
        outcomes.push([proj(&r0), proj(&r1)]);
    }

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let mut norm = Vec::new();
    let mut match0 = Vec::new();
    let mut match1 = Vec::new();
    for l in 0..LABELS.len() {
        for q in &outcomes {
            let win = |x: usize| if guess(l, x) == 0 { q[x] } else { 1.0 - q[x] };
            let v = lp.add_var(0.5 * (win(0) + win(1)), (0.0, f64::INFINITY));
            norm.push((v, 1.0));
            match0.push((v, q[0]));
            match1.push((v, q[1]));
        }
    }
    lp.add_constraint(&norm, ComparisonOp::Eq, 1.0);
    lp.add_constraint(&match0, ComparisonOp::Eq, pt.p(0, 0));
    lp.add_constraint(&match1, ComparisonOp::Eq, pt.p(0, 1));
    match lp.solve() {
        Ok(sol) => Ok(Some(sol.objective().min(1.0))),
        Err(minilp::Error::Infeasible) => Ok(None),
        Err(e) => Err(Error::Solver(format!("oracle LP: {e}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyFit {
    pub eta: f64,
    /// One standard deviation from the curvature of the log-likelihood.
    pub sigma: f64,
    pub log_likelihood: f64,
}

struct Obs {
    a: f64,
    right: f64,
    wrong: f64,
}

fn log_likelihood(obs: &[Obs], eta: f64) -> f64 {
    obs.iter()
        .map(|o| {
            let q = 0.5 * (1.0 + erf(eta.sqrt() * o.a));
            let q = q.clamp(1e-300, 1.0 - 1e-16);
            o.right * q.ln() + o.wrong * (1.0 - q).ln()
        })
        .sum()
}

/// Maximum-likelihood detector efficiency from tables measured at several
/// amplitudes `|α|`, under `p(0|0) = p(1|1) = ½(1 + erf(√η·|α|))`.
pub fn fit_efficiency(tables: &[(f64, ProbTable)]) -> Result<EfficiencyFit> {
    let mut obs = Vec::with_capacity(tables.len());
    for (a, t) in tables {
        if !a.is_finite() || *a < 0.0 {
            return Err(invalid(format!("amplitude {a} must be finite and non-negative")));
        }
        t.validate()?;
        let n = t
            .n_x
            .ok_or_else(|| Error::InsufficientData(format!("table at |alpha| = {a} has no sample sizes")))?;
        let (n0, n1) = (n[0] as f64, n[1] as f64);
        let right = (t.p(0, 0) * n0).round() + (t.p(1, 1) * n1).round();
        obs.push(Obs {
            a: *a,
            right,
            wrong: n0 + n1 - right,
        });
    }
    let mut distinct: Vec<f64> = obs.iter().filter(|o| o.right + o.wrong > 0.0).map(|o| o.a).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InsufficientData("need at least two distinct amplitudes with counts".into()));
    }
    if obs.iter().all(|o| o.a == 0.0 || o.right + o.wrong == 0.0) {
        return Err(Error::InsufficientData("zero amplitude carries no information on efficiency".into()));
    }

    let ll = |eta: f64| log_likelihood(&obs, eta);
    let (lo_lim, hi_lim) = (1e-6, 1.0);
    // coarse scan, then golden section around the best cell
    let grid = 400;
    let at = |k: usize| lo_lim + (hi_lim - lo_lim) * k as f64 / grid as f64;
    let best = (0..=grid).max_by(|&i, &j| ll(at(i)).total_cmp(&ll(at(j)))).unwrap();
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(grid)));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while b - a > 1e-12 {
        if ll(c) > ll(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    let eta = 0.5 * (a + b);
    if ll(eta) == ll(at(0)) && ll(eta) == ll(at(grid)) {
        return Err(Error::InsufficientData("likelihood is flat in efficiency".into()));
    }

    let h = 1e-4 * eta.max(1e-3);
    let second = if eta + h <= hi_lim {
        (ll(eta + h) - 2.0 * ll(eta) + ll(eta - h)) / (h * h)
    } else {
        (ll(eta) - 2.0 * ll(eta - h) + ll(eta - 2.0 * h)) / (h * h)
    };
    let sigma = if second < 0.0 { (-1.0 / second).sqrt() } else { f64::INFINITY };
    Ok(EfficiencyFit {
        eta,
        sigma,
        log_likelihood: ll(eta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{build_dual, hmin};
    use crate::phase_space::prob_heterodyne;
    use rand::SeedableRng;
    use rand_distr::{Binomial, Distribution};

    #[test]
    fn oracle_trivial_cases() {
        let half = ProbTable::symmetric(0.5).unwrap();
        let v = oracle_pg(&half, &OverlapConstraint::from_lambda(1.0).unwrap(), 0.01).unwrap().unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        let perfect = ProbTable::symmetric(1.0).unwrap();
        let v = oracle_pg(&perfect, &OverlapConstraint::from_lambda(0.0).unwrap(), 0.01).unwrap().unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn oracle_below_and_near_dual() {
        let mu: f64 = 0.1;
        let pt = prob_heterodyne(mu.sqrt());
        let oc = OverlapConstraint::from_energy(mu).unwrap();
        let dual = build_dual(&pt, &oc).unwrap().problem.solve().unwrap().objective;
        let o = oracle_pg(&pt, &oc, 0.01).unwrap().unwrap();
        assert!(o <= dual + 1e-6, "{o} > {dual}");
        assert!(dual - o < 0.02, "{o} vs {dual}");
        let coarse = oracle_pg(&pt, &oc, 0.5).unwrap().unwrap();
        assert!(coarse <= dual + 1e-6);
    }

    #[test]
    fn oracle_reports_unreachable_table() {
        let pt = prob_heterodyne(10.0);
        let oc = OverlapConstraint::from_energy(0.01).unwrap();
        assert_eq!(oracle_pg(&pt, &oc, 0.01).unwrap(), None);
        assert!(hmin(&pt, 0.01).is_err());
    }

    fn synthetic(eta: f64, amps: &[f64], n: u64, seed: u64) -> Vec<(f64, ProbTable)> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        amps.iter()
            .map(|&a| {
                let q = 0.5 * (1.0 + erf(eta.sqrt() * a));
                let k0 = Binomial::new(n, q).unwrap().sample(&mut rng);
                let k1 = Binomial::new(n, q).unwrap().sample(&mut rng);
                let (p0, p1) = (k0 as f64 / n as f64, k1 as f64 / n as f64);
                (a, ProbTable::new(p0, 1.0 - p1, 1.0 - p0, p1).unwrap().with_counts([n, n]))
            })
            .collect()
    }

    #[test]
    fn fit_recovers_efficiency() {
        let amps = [0.2, 0.4, 0.6, 0.8, 1.0];
        let fit = fit_efficiency(&synthetic(0.173, &amps, 500_000, 1)).unwrap();
        assert!((fit.eta - 0.173).abs() < 3.0 * fit.sigma, "{fit:?}");
        assert!(fit.sigma < 0.01);

        let fit = fit_efficiency(&synthetic(1.0, &amps, 500_000, 2)).unwrap();
        assert!(fit.eta > 0.99, "{fit:?}");
    }

    #[test]
    fn fit_rejects_uninformative_data() {
        let t = ProbTable::symmetric(0.5).unwrap().with_counts([1000, 1000]);
        assert!(matches!(fit_efficiency(&[(0.0, t)]), Err(Error::InsufficientData(_))));
        assert!(matches!(fit_efficiency(&[(0.5, t), (0.5, t)]), Err(Error::InsufficientData(_))));
        let no_counts = ProbTable::symmetric(0.6).unwrap();
        assert!(fit_efficiency(&[(0.2, no_counts), (0.4, no_counts)]).is_err());
    }
}
