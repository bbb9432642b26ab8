use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const COLUMN_TOL: f64 = 1e-9;

/// Conditional output probabilities `p(b|x)` of the binary prepare-and-measure
/// box, stored as `p_bx[b][x]`, optionally with the per-input sample sizes
/// they were estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbTable {
    pub p_bx: [[f64; 2]; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_x: Option<[u64; 2]>,
}

impl ProbTable {
    /// Builds a table from `(p00, p01, p10, p11)`, i.e. `p(0|0), p(0|1), p(1|0), p(1|1)`.
    pub fn new(p00: f64, p01: f64, p10: f64, p11: f64) -> Result<Self> {
        let table = Self {
            p_bx: [[p00, p01], [p10, p11]],
            n_x: None,
        };
        table.validate()?;
        Ok(table)
    }

    /// Table of a channel that flips the input with probability `p10` for
    /// `x = 0` and `p01` for `x = 1`.
    pub fn from_errors(p10: f64, p01: f64) -> Result<Self> {
        Self::new(1.0 - p10, p01, p10, 1.0 - p01)
    }

    /// Symmetric table with `p(0|0) = p(1|1) = success`.
    pub fn symmetric(success: f64) -> Result<Self> {
        Self::new(success, 1.0 - success, 1.0 - success, success)
    }

    pub fn with_counts(mut self, n_x: [u64; 2]) -> Self {
        self.n_x = Some(n_x);
        self
    }

    pub fn p(&self, b: usize, x: usize) -> f64 {
        self.p_bx[b][x]
    }

    /// `p(1|0) + p(0|1)`, the total discrimination error.
    pub fn error_sum(&self) -> f64 {
        self.p_bx[1][0] + self.p_bx[0][1]
    }

    /// The table with outcome labels exchanged.
    pub fn relabelled(&self) -> Self {
        Self {
            p_bx: [self.p_bx[1], self.p_bx[0]],
            n_x: self.n_x,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for x in 0..2 {
            for b in 0..2 {
                let p = self.p_bx[b][x];
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    return Err(invalid(format!("p({b}|{x}) = {p} is not a probability")));
                }
            }
            let col = self.p_bx[0][x] + self.p_bx[1][x];
            if (col - 1.0).abs() > COLUMN_TOL {
                return Err(invalid(format!("column x={x} sums to {col}, not 1")));
            }
        }
        Ok(())
    }
}
