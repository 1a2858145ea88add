//! Extended BIC scoring and model choice over the `(λ, γ)` grid.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::FitResult;

/// Relative floor on the residual sum of squares inside the log term.
const RSS_FLOOR: f64 = 1e-12;

/// `n ln(rss / n) + k ln n + 2 ξ k ln p`, with `k` the active-set size.
///
/// The residual sum of squares is floored at `1e-12 ‖y‖²` so that exact fits
/// score finitely.
pub fn ebic_score(fit: &FitResult, n: usize, p: usize, xi: f64) -> f64 {
    let n = n as f64;
    let k = fit.n_active as f64;
    let floor = (RSS_FLOOR * fit.signal_norm_sq).max(f64::MIN_POSITIVE);
    n * (fit.rss.max(floor) / n).ln() + k * n.ln() + 2.0 * xi * k * (p as f64).ln()
}

/// One grid point in a selection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub lambda: f64,
    pub gamma: f64,
    pub rss: f64,
    pub n_active: usize,
    pub converged: bool,
    /// `None` for fits that did not converge.
    pub ebic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub scores: Vec<GridScore>,
    pub best: (f64, f64),
    pub best_fit: FitResult,
    pub ebic_xi: f64,
}

/// Lower score wins; ties go to the larger `λ`, then the larger `γ`.
fn rank(a: (f64, &FitResult), b: (f64, &FitResult)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then_with(|| b.1.lambda.total_cmp(&a.1.lambda))
        .then_with(|| b.1.gamma.total_cmp(&a.1.gamma))
}

/// Picks the converged fit with the smallest EBIC.
pub fn select_model(results: &[FitResult], n: usize, p: usize, xi: f64) -> Result<SelectionReport> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::Usage(format!("ebic xi must lie in [0, 1], got {xi}")));
    }
    if n == 0 || p == 0 {
        return Err(Error::Usage("n and p must be positive".into()));
    }
    let scores: Vec<GridScore> = results
        .iter()
        .map(|fit| GridScore {
            lambda: fit.lambda,
            gamma: fit.gamma,
            rss: fit.rss,
            n_active: fit.n_active,
            converged: fit.converged,
            ebic: fit.converged.then(|| ebic_score(fit, n, p, xi)),
        })
        .collect();
    let best_fit = results
        .iter()
        .zip(&scores)
        .filter_map(|(fit, s)| s.ebic.map(|e| (e, fit)))
        .min_by(|a, b| rank(*a, *b))
        .map(|(_, fit)| fit.clone())
        .ok_or_else(|| Error::Selection(format!("none of the {} fits converged", results.len())))?;
    Ok(SelectionReport {
        scores,
        best: (best_fit.lambda, best_fit.gamma),
        best_fit,
        ebic_xi: xi,
    })
}
