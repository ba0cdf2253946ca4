//! Residual reports: per-level norms, convergence orders, pass/fail gates and
//! JSON/CSV emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::field::{pairwise_sum, Field};
use crate::grid::DomainGrid;

/// Residuals below this level count as converged to rounding error; orders
/// are not estimated from them.
pub const EXACT_THRESHOLD: f64 = 1e-9;

/// Norms of one residual field at one resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub resolution: Vec<usize>,
    pub h: f64,
    pub linf: f64,
    pub l2: f64,
}

impl Level {
    /// Pointwise Euclidean norm of the residual components, L∞ and L²(dv_g).
    pub fn measure(grid: &DomainGrid, residual: &Field) -> Self {
        let nc = residual.ncomp();
        let sq: Vec<f64> = residual
            .data()
            .chunks(nc)
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect();
        let linf = sq.iter().fold(0.0f64, |m, v| m.max(v.sqrt()));
        let l2 = grid.integrate(&sq).max(0.0).sqrt();
        Self {
            resolution: grid.resolution(),
            h: grid.step(),
            linf,
            l2,
        }
    }

    pub fn from_values(resolution: Vec<usize>, h: f64, linf: f64, l2: f64) -> Self {
        Self {
            resolution,
            h,
            linf,
            l2,
        }
    }
}

/// How a report decides pass/fail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gate {
    /// Finest-level L∞ at most `tol`.
    Absolute { tol: f64 },
    /// Finest-level L∞ at most `c·h²`.
    Scaled { c: f64 },
    /// Order estimated from the two finest levels within `target ± band`,
    /// or every level already below `exact_below`.
    Order {
        target: f64,
        band: f64,
        exact_below: f64,
    },
    /// Every level's L∞ at least `min` (negative controls).
    BoundedBelow { min: f64 },
    /// Diagnostic only.
    Report,
}

/// Residual norms of one identity across resolutions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub identity: String,
    pub levels: Vec<Level>,
    /// `orders[i]` is estimated from levels `i` and `i+1`; `None` when either
    /// residual is below the exactness threshold.
    pub orders: Vec<Option<f64>>,
    pub gate: Gate,
    pub pass: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub killing_residual: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub info: BTreeMap<String, serde_json::Value>,
}

/// `log(r₁/r₂)/log(h₁/h₂)`.
pub fn estimate_order(h1: f64, r1: f64, h2: f64, r2: f64) -> Option<f64> {
    if r1 < EXACT_THRESHOLD || r2 < EXACT_THRESHOLD || r1 <= 0.0 || r2 <= 0.0 || h1 == h2 {
        return None;
    }
    Some((r1 / r2).ln() / (h1 / h2).ln())
}

impl ResidualReport {
    pub fn new(identity: impl Into<String>, levels: Vec<Level>, gate: Gate) -> Self {
        let orders = levels
            .windows(2)
            .map(|w| estimate_order(w[0].h, w[0].linf, w[1].h, w[1].linf))
            .collect();
        let mut r = Self {
            identity: identity.into(),
            levels,
            orders,
            gate,
            pass: None,
            killing_residual: None,
            info: BTreeMap::new(),
        };
        r.pass = r.evaluate();
        r
    }

    /// Single-level report.
    pub fn single(
        identity: impl Into<String>,
        grid: &DomainGrid,
        residual: &Field,
        gate: Gate,
    ) -> Self {
        Self::new(identity, vec![Level::measure(grid, residual)], gate)
    }

    pub fn with_info(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.info.insert(key.to_string(), value.into());
        self
    }

    pub fn with_killing_residual(mut self, value: f64) -> Self {
        self.killing_residual = Some(value);
        self
    }

    pub fn finest(&self) -> &Level {
        self.levels.last().expect("report has at least one level")
    }

    /// Order from the two finest levels.
    pub fn finest_order(&self) -> Option<f64> {
        self.orders.last().copied().flatten()
    }

    /// Residuals below the exactness threshold on every level.
    pub fn is_exact(&self) -> bool {
        self.levels.iter().all(|l| l.linf < EXACT_THRESHOLD)
    }

    fn evaluate(&self) -> Option<bool> {
        let last = self.levels.last()?;
        match self.gate {
            Gate::Absolute { tol } => Some(last.linf <= tol),
            Gate::Scaled { c } => Some(last.linf <= c * last.h * last.h),
            Gate::Order {
                target,
                band,
                exact_below,
            } => {
                if self.levels.iter().all(|l| l.linf < exact_below) {
                    return Some(true);
                }
                if self.levels.len() < 2 {
                    return Some(false);
                }
                Some(
                    self.finest_order()
                        .is_some_and(|o| (o - target).abs() <= band),
                )
            }
            Gate::BoundedBelow { min } => Some(self.levels.iter().all(|l| l.linf >= min)),
            Gate::Report => None,
        }
    }

    /// Pass unless the gate failed (diagnostic reports count as passing).
    pub fn passed(&self) -> bool {
        self.pass != Some(false)
    }

    /// CSV rows `identity,h,linf,l2,order,pass`; the order column holds the
    /// order estimated against the previous (coarser) level.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        let exact = self.is_exact();
        for (i, l) in self.levels.iter().enumerate() {
            let order = if exact {
                "exact".to_string()
            } else if i == 0 {
                String::new()
            } else {
                self.orders[i - 1].map_or(String::new(), |o| format!("{o:.4}"))
            };
            let pass = match self.pass {
                Some(true) => "true",
                Some(false) => "false",
                None => "",
            };
            let _ = writeln!(
                out,
                "{},{:.6e},{:.6e},{:.6e},{},{}",
                self.identity, l.h, l.linf, l.l2, order, pass
            );
        }
        out
    }
}

pub const CSV_HEADER: &str = "identity,h,linf,l2,order,pass";

/// Concatenated CSV for several reports with the header row.
pub fn reports_to_csv(reports: &[ResidualReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_rows());
    }
    out
}

/// Deterministic maximum of a slice.
pub fn max_of(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(*v))
}

/// Deterministic mean of a slice.
pub fn mean_of(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}
