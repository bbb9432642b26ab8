//! Min-entropy curves over the mean photon number: ideal heterodyne,
//! inefficient heterodyne, and homodyne at fixed measurement angles.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use sdiq::certify::hmin;
use sdiq::phase_space::{prob_heterodyne, prob_homodyne};

use crate::config::{PipelineConfig, SWEEP_CSV, SWEEP_THETA_CSV};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mu: f64,
    pub ideal: f64,
    pub inefficient: f64,
    /// One entry per configured angle.
    pub homodyne: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMax {
    pub theta_deg: f64,
    pub max_hmin: f64,
    pub argmax_mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub eta: f64,
    pub theta_deg: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

fn point(mu: f64, column: &str, table: sdiq::ProbTable) -> Result<f64, CliError> {
    hmin(&table, mu).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("sweep point mu={mu}, {column}: {}", err.message);
        err
    })
}

pub fn compute_sweep(mus: &[f64], eta: f64, thetas_deg: &[f64]) -> Result<SweepTable, CliError> {
    if mus.is_empty() || thetas_deg.is_empty() {
        return Err(CliError::usage("sweep grids must be non-empty"));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(CliError::usage(format!("efficiency {eta} outside (0, 1]")));
    }
    let rows = mus
        .par_iter()
        .map(|&mu| {
            if !(mu.is_finite() && mu >= 0.0) {
                return Err(CliError::usage(format!("invalid mu {mu} in sweep grid")));
            }
            let a = mu.sqrt();
            let homodyne = thetas_deg
                .iter()
                .map(|&t| point(mu, &format!("homodyne theta={t}deg"), prob_homodyne(a, t.to_radians())))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(SweepRow {
                mu,
                ideal: point(mu, "ideal", prob_heterodyne(a))?,
                inefficient: point(mu, &format!("eta={eta}"), prob_heterodyne((eta * mu).sqrt()))?,
                homodyne,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepTable {
        eta,
        theta_deg: thetas_deg.to_vec(),
        rows,
    })
}

impl SweepTable {
    fn argmax(&self, f: impl Fn(&SweepRow) -> f64) -> (f64, f64) {
        self.rows
            .iter()
            .map(|r| (f(r), r.mu))
            .fold((f64::NEG_INFINITY, f64::NAN), |best, c| if c.0 > best.0 { c } else { best })
    }

    /// `(max Hmin, μ at max)` of the ideal curve.
    pub fn ideal_max(&self) -> (f64, f64) {
        self.argmax(|r| r.ideal)
    }

    pub fn inefficient_max(&self) -> (f64, f64) {
        self.argmax(|r| r.inefficient)
    }

    pub fn theta_max(&self) -> Vec<ThetaMax> {
        self.theta_deg
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let (max_hmin, argmax_mu) = self.argmax(|r| r.homodyne[k]);
                ThetaMax {
                    theta_deg: t,
                    max_hmin,
                    argmax_mu,
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mu,hmin_ideal,hmin_eta");
        for t in &self.theta_deg {
            write!(s, ",hmin_homodyne_{t}deg").unwrap();
        }
        s.push('\n');
        for r in &self.rows {
            write!(s, "{},{:.9},{:.9}", r.mu, r.ideal, r.inefficient).unwrap();
            for h in &r.homodyne {
                write!(s, ",{h:.9}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn theta_csv(&self) -> String {
        let mut s = String::from("theta_deg,max_hmin,argmax_mu\n");
        for t in self.theta_max() {
            writeln!(s, "{},{:.9},{}", t.theta_deg, t.max_hmin, t.argmax_mu).unwrap();
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(SWEEP_CSV), self.to_csv())?;
        std::fs::write(dir.join(SWEEP_THETA_CSV), self.theta_csv())?;
        Ok(())
    }
}

pub fn cmd_sweep(cfg: &PipelineConfig) -> Result<SweepTable, CliError> {
    cfg.validate()?;
    let table = compute_sweep(&cfg.sweep_mu, cfg.sweep_eta, &cfg.sweep_theta_deg)?;
    table.write(&cfg.output_dir)?;
    Ok(table)
}
