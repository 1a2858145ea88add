//! Adaptive ℓ1 trend filter.
//!
//! A noisy series `y` is decomposed into a piecewise-linear trend, sparse
//! level shifts, sparse outliers and a sparse set of sinusoids drawn from an
//! over-complete frequency set. Coefficients are estimated by adaptive-lasso
//! coordinate descent over a `(λ, γ)` grid and the final model is chosen by
//! the extended BIC.
//!
//! ```
//! use l1trend::{generate, DictionarySpec, Grid, SolverConfig, SyntheticSpec};
//!
//! let mut synth = SyntheticSpec::new(60);
//! synth.steps.push((30, 4.0));
//! let (signal, _) = generate(&synth).unwrap();
//! let dict = DictionarySpec::new(signal.len(), vec![]).unwrap();
//! let out = l1trend::run(&dict, &signal, &Grid::default(), &SolverConfig::default(), 1.0).unwrap();
//! assert!(out.decomposition.events.iter().any(|e| e.sample() == Some(30)));
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dictionary;
pub mod error;
pub mod oracle;
pub mod selection;
pub mod signals;
pub mod solver;

pub use dictionary::{Bounds, ColumnId, ColumnKind, DictionarySpec, SignalCorrelations};
pub use error::{Error, Result};
pub use selection::{ebic_score, select_model, GridScore, SelectionReport};
pub use signals::{generate, reconstruct, Decomposition, Event, EventKind, EventLocation, SyntheticSpec};
pub use solver::{
    fit_path, fit_single, lambda_max, ols_init, soft_threshold, AdaptiveWeights, FitResult, Grid, LambdaGrid,
    PreparedSignal, Signal, SolverConfig, SparseCoefficients,
};

/// Angular frequencies `2π / period` for the given periods, in increasing order.
pub fn omega_from_periods(periods: &[f64]) -> Result<Vec<f64>> {
    let mut omega = Vec::with_capacity(periods.len());
    for &period in periods {
        if !(period >= 2.0 && period.is_finite()) {
            return Err(Error::Usage(format!("period {period} must be finite and >= 2 samples")));
        }
        omega.push(std::f64::consts::TAU / period);
    }
    omega.sort_by(f64::total_cmp);
    omega.dedup();
    Ok(omega)
}

/// `count` periods evenly spaced between `min` and `max` inclusive.
pub fn period_range(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 || !(min > 0.0 && max >= min) {
        return Err(Error::Usage(format!("invalid period range {min}..{max} x {count}")));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let step = (max - min) / (count - 1) as f64;
    Ok((0..count).map(|k| min + step * k as f64).collect())
}

/// Output of a complete filter run.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub fits: Vec<FitResult>,
    pub selection: SelectionReport,
    pub decomposition: Decomposition,
}

/// Fits the whole grid, selects by EBIC and reconstructs the chosen model.
pub fn run(
    spec: &DictionarySpec,
    signal: &Signal,
    grid: &Grid,
    config: &SolverConfig,
    ebic_xi: f64,
) -> Result<FilterOutput> {
    let fits = fit_path(spec, signal, grid, config)?;
    let selection = select_model(&fits, spec.n(), spec.p(), ebic_xi)?;
    let decomposition = reconstruct(spec, &selection.best_fit);
    Ok(FilterOutput {
        fits,
        selection,
        decomposition,
    })
}
