//! Adaptive-lasso coordinate descent with covariance updates.
//!
//! The objective minimised at a grid point `(λ, γ)` is
//!
//! ```text
//! 1/(2n) ‖y − Aθ‖² + λ Σ_i w_i |θ_i|,   w_i = 1 / |θ_i^ols|^γ
//! ```
//!
//! subject to optional per-block box constraints. Each coordinate update needs
//! only `<A_i, y>` (precomputed once per signal) and Gram entries against the
//! current active set, which the dictionary supplies in closed form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Bounds, ColumnId, DictionarySpec, SignalCorrelations};
use crate::error::{Error, Result};

/// Observed series. Timestamps are carried along for output only.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<f64>,
    timestamps: Option<Vec<String>>,
}

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::Usage(format!(
                "signal needs at least 3 samples, got {}",
                values.len()
            )));
        }
        if let Some(t) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at sample {t}")));
        }
        Ok(Signal {
            values,
            timestamps: None,
        })
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self> {
        if timestamps.len() != self.values.len() {
            return Err(Error::Usage(format!(
                "{} timestamps for {} samples",
                timestamps.len(),
                self.values.len()
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Signal prepared for one dictionary: optionally centred, with its column
/// correlations cached.
#[derive(Debug, Clone)]
pub struct PreparedSignal {
    y: Vec<f64>,
    baseline: f64,
    correlations: SignalCorrelations,
    norm_sq: f64,
    norm_inf: f64,
}

impl PreparedSignal {
    pub fn new(spec: &DictionarySpec, signal: &Signal, center: bool) -> Result<Self> {
        let values = signal.values();
        let baseline = if center {
            values.iter().sum::<f64>() / values.len() as f64
        } else {
            0.0
        };
        let y: Vec<f64> = values.iter().map(|v| v - baseline).collect();
        let correlations = spec.correlate(&y)?;
        let norm_sq = y.iter().map(|v| v * v).sum();
        let norm_inf = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(PreparedSignal {
            y,
            baseline,
            correlations,
            norm_sq,
            norm_inf,
        })
    }

    /// The (possibly centred) series the coefficients explain.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn correlations(&self) -> &SignalCorrelations {
        &self.correlations
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn norm_inf(&self) -> f64 {
        self.norm_inf
    }
}

/// Entry-wise least-squares estimates and the adaptive exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveWeights {
    pub theta_ols: Vec<f64>,
    pub gamma: f64,
}

impl AdaptiveWeights {
    pub fn new(theta_ols: Vec<f64>, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Usage(format!("gamma must be finite and >= 0, got {gamma}")));
        }
        if theta_ols.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("least-squares estimate is not finite".into()));
        }
        Ok(AdaptiveWeights { theta_ols, gamma })
    }

    /// Penalty multiplier `1/|θ^ols_i|^γ`; `+∞` when the estimate is zero and
    /// `γ > 0`. With `γ = 0` every weight is exactly one.
    pub fn weight(&self, i: usize) -> f64 {
        if self.gamma == 0.0 {
            return 1.0;
        }
        let base = self.theta_ols[i].abs();
        if base == 0.0 {
            f64::INFINITY
        } else {
            base.powf(-self.gamma)
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.theta_ols.len()).map(|i| self.weight(i)).collect()
    }
}

/// Univariate least-squares fit of `y` on each column: `<A_i, y> / <A_i, A_i>`.
pub fn ols_init(spec: &DictionarySpec, prepared: &PreparedSignal) -> Vec<f64> {
    spec.columns()
        .enumerate()
        .map(|(pos, c)| match spec.gram_entry(c, c) {
            0.0 => 0.0,
            norm2 => prepared.correlations().at(pos) / norm2,
        })
        .collect()
}

/// `sign(z) · max(|z| − threshold, 0)`.
pub fn soft_threshold(z: f64, threshold: f64) -> f64 {
    debug_assert!(threshold >= 0.0);
    if z > threshold {
        z - threshold
    } else if z < -threshold {
        z + threshold
    } else {
        0.0
    }
}

/// Smallest `λ` at which the zero vector is optimal.
pub fn lambda_max(spec: &DictionarySpec, prepared: &PreparedSignal, weights: &[f64]) -> Result<f64> {
    let n = spec.n() as f64;
    let corr = prepared.correlations();
    let mut usable = false;
    let mut best = 0.0_f64;
    for (pos, &w) in weights.iter().enumerate() {
        if w.is_finite() {
            usable = true;
            if w > 0.0 {
                best = best.max(corr.at(pos).abs() / (n * w));
            }
        }
    }
    if !usable {
        return Err(Error::NoUsableColumns);
    }
    // rounding in |c|/(n w) can leave the update's own threshold test an ulp short
    let short = |lambda: f64| {
        weights
            .iter()
            .enumerate()
            .any(|(pos, &w)| w.is_finite() && w > 0.0 && corr.at(pos).abs() / n > lambda * w)
    };
    while short(best) {
        best = best.next_up();
    }
    Ok(best)
}

/// Nonzero coefficients keyed by column, in cycling order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseCoefficients {
    entries: Vec<(ColumnId, f64)>,
}

impl SparseCoefficients {
    pub fn zeros() -> Self {
        SparseCoefficients::default()
    }

    pub fn from_dense(spec: &DictionarySpec, theta: &[f64]) -> Self {
        let entries = theta
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(pos, &v)| (spec.column_at(pos), v))
            .collect();
        SparseCoefficients { entries }
    }

    /// Builds from arbitrary entries, dropping zeros and merging repeats.
    pub fn from_entries(spec: &DictionarySpec, entries: &[(ColumnId, f64)]) -> Result<Self> {
        let mut dense = vec![0.0; spec.p()];
        for &(c, v) in entries {
            if !v.is_finite() {
                return Err(Error::Data(format!("coefficient for {c} is not finite")));
            }
            spec.column(c.kind, c.index)?;
            let pos = spec
                .position(c)
                .ok_or_else(|| Error::Usage(format!("column {c} is not in an enabled block")))?;
            dense[pos] += v;
        }
        Ok(SparseCoefficients::from_dense(spec, &dense))
    }

    pub fn to_dense(&self, spec: &DictionarySpec) -> Vec<f64> {
        let mut dense = vec![0.0; spec.p()];
        for &(c, v) in &self.entries {
            if let Some(pos) = spec.position(c) {
                dense[pos] = v;
            }
        }
        dense
    }

    pub fn get(&self, c: ColumnId) -> f64 {
        self.entries.iter().find(|(id, _)| *id == c).map_or(0.0, |(_, v)| *v)
    }

    pub fn entries(&self) -> &[(ColumnId, f64)] {
        &self.entries
    }

    /// Active set: the columns with nonzero coefficients.
    pub fn active(&self) -> impl Iterator<Item = ColumnId> + '_ {
        self.entries.iter().map(|(c, _)| *c)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Convergence tolerance, relative to `max(1, ‖y‖∞)`.
    pub tol: f64,
    /// Cap on passes per grid point.
    pub max_cycles: usize,
    /// Subtract the mean of `y` before fitting.
    pub center_signal: bool,
    /// Run the γ paths of a grid concurrently.
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-7,
            max_cycles: 10_000,
            center_signal: true,
            parallel: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Usage(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_cycles == 0 {
            return Err(Error::Usage("max_cycles must be at least 1".into()));
        }
        Ok(())
    }
}

/// Solution at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub lambda: f64,
    pub gamma: f64,
    pub coefficients: SparseCoefficients,
    /// `‖y − Aθ‖²` on the centred series.
    pub rss: f64,
    pub n_active: usize,
    pub converged: bool,
    pub cycles_used: usize,
    /// Mean removed before fitting (zero when centring is off).
    pub baseline: f64,
    /// `‖y‖²` of the centred series; floors the log-likelihood in scoring.
    pub signal_norm_sq: f64,
}

/// Coordinate-descent state for one `λ`.
///
/// Exposed so that individual updates can be inspected; [`fit_single`] drives
/// it to convergence.
pub struct CoordinateDescent<'a> {
    spec: &'a DictionarySpec,
    prepared: &'a PreparedSignal,
    weights: &'a [f64],
    lambda: f64,
    columns: Vec<ColumnId>,
    bounds: Vec<Option<Bounds>>,
    /// `<A_i, A_i> / n`.
    sigma2: Vec<f64>,
    theta: Vec<f64>,
    active: Vec<usize>,
    /// Index into `active`, `usize::MAX` when inactive.
    slot: Vec<usize>,
    active_changed: bool,
}

impl<'a> CoordinateDescent<'a> {
    pub fn new(
        spec: &'a DictionarySpec,
        prepared: &'a PreparedSignal,
        weights: &'a [f64],
        lambda: f64,
        warm: &[f64],
    ) -> Result<Self> {
        let p = spec.p();
        if weights.len() != p || warm.len() != p {
            return Err(Error::Usage(format!(
                "weights ({}) and warm start ({}) must have p = {p} entries",
                weights.len(),
                warm.len()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Usage(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let n = spec.n() as f64;
        let columns: Vec<ColumnId> = spec.columns().collect();
        let bounds: Vec<Option<Bounds>> = columns.iter().map(|c| spec.bounds(c.kind)).collect();
        let sigma2 = columns.iter().map(|&c| spec.gram_entry(c, c) / n).collect();
        let mut state = CoordinateDescent {
            spec,
            prepared,
            weights,
            lambda,
            columns,
            bounds,
            sigma2,
            theta: vec![0.0; p],
            active: Vec::new(),
            slot: vec![usize::MAX; p],
            active_changed: false,
        };
        for (pos, &v) in warm.iter().enumerate() {
            if v == 0.0 || !weights[pos].is_finite() || state.sigma2[pos] == 0.0 {
                continue;
            }
            if let Some(b) = state.bounds[pos] {
                if v < b.lower || v > b.upper {
                    return Err(Error::Usage(format!(
                        "warm start for {} violates its bounds",
                        state.columns[pos]
                    )));
                }
            }
            state.set(pos, v);
        }
        Ok(state)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Positions of the nonzero coefficients, in insertion order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn sigma2(&self, pos: usize) -> f64 {
        self.sigma2[pos]
    }

    /// `<r, A_i>` for the partial residual `r = y − Σ_{j≠i} A_j θ_j`,
    /// by covariance update over the active set.
    pub fn partial_correlation(&self, pos: usize) -> f64 {
        let c = self.columns[pos];
        let mut acc = self.prepared.correlations().at(pos);
        for &j in &self.active {
            if j != pos {
                acc -= self.spec.gram_entry(c, self.columns[j]) * self.theta[j];
            }
        }
        acc
    }

    /// `<y − Aθ, A_i>`.
    pub fn residual_correlation(&self, pos: usize) -> f64 {
        self.partial_correlation(pos) - self.sigma2[pos] * self.spec.n() as f64 * self.theta[pos]
    }

    /// Exact minimiser of the objective along coordinate `pos`, others fixed.
    pub fn coordinate_update(&self, pos: usize) -> f64 {
        let weight = self.weights[pos];
        if !weight.is_finite() || self.sigma2[pos] == 0.0 {
            return 0.0;
        }
        let n = self.spec.n() as f64;
        let z = self.partial_correlation(pos) / n;
        let value = soft_threshold(z, self.lambda * weight) / self.sigma2[pos];
        match self.bounds[pos] {
            Some(b) => b.clamp(value),
            None => value,
        }
    }

    /// Applies one coordinate update and returns the coefficient change.
    pub fn update(&mut self, pos: usize) -> Result<f64> {
        let value = self.coordinate_update(pos);
        if !value.is_finite() {
            return Err(Error::Numerical {
                column: self.columns[pos],
                message: format!("update produced {value}"),
            });
        }
        let delta = value - self.theta[pos];
        if delta != 0.0 {
            self.set(pos, value);
        }
        Ok(delta)
    }

    fn set(&mut self, pos: usize, value: f64) {
        let was_active = self.slot[pos] != usize::MAX;
        self.theta[pos] = value;
        if value != 0.0 && !was_active {
            self.slot[pos] = self.active.len();
            self.active.push(pos);
            self.active_changed = true;
        } else if value == 0.0 && was_active {
            let at = self.slot[pos];
            self.active.swap_remove(at);
            if let Some(&moved) = self.active.get(at) {
                self.slot[moved] = at;
            }
            self.slot[pos] = usize::MAX;
            self.active_changed = true;
        }
    }

    /// One pass over the given coordinates; returns the largest change in
    /// gradient units, `|Δθ_i| σ_i²`.
    fn pass(&mut self, positions: &[usize]) -> Result<f64> {
        let mut largest = 0.0_f64;
        for &pos in positions {
            let delta = self.update(pos)?;
            largest = largest.max(delta.abs() * self.sigma2[pos]);
        }
        Ok(largest)
    }

    /// Exact minimisation over the free active coordinates with their signs
    /// held fixed, truncated at the first sign change or bound hit.
    ///
    /// Coordinates sitting on a bound stay put. The step is taken only if it
    /// does not increase the objective. Returns whether anything moved.
    pub fn block_update(&mut self) -> Result<bool> {
        let mut free = Vec::new();
        let mut pinned = Vec::new();
        for &pos in &self.active {
            let at_bound = self.bounds[pos].is_some_and(|b| self.theta[pos] == b.lower || self.theta[pos] == b.upper);
            if at_bound {
                pinned.push(pos);
            } else {
                free.push(pos);
            }
        }
        free.sort_unstable();
        let k = free.len();
        if k == 0 {
            return Ok(false);
        }
        let n = self.spec.n() as f64;
        let mut gram = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        for (a, &i) in free.iter().enumerate() {
            let ci = self.columns[i];
            for (b, &j) in free.iter().enumerate().take(a + 1) {
                let g = self.spec.gram_entry(ci, self.columns[j]);
                gram[a * k + b] = g;
                gram[b * k + a] = g;
            }
            let mut r = self.prepared.correlations().at(i) - n * self.lambda * self.weights[i] * self.theta[i].signum();
            for &j in &pinned {
                r -= self.spec.gram_entry(ci, self.columns[j]) * self.theta[j];
            }
            rhs[a] = r;
        }
        let Some(target) = regularized_solve(&gram, &rhs, k) else {
            return Ok(false);
        };

        let mut alpha = 1.0_f64;
        let mut limiting: Option<(usize, f64)> = None;
        for (a, &i) in free.iter().enumerate() {
            let (from, to) = (self.theta[i], target[a]);
            let mut stop = |value: f64| {
                let frac = (value - from) / (to - from);
                if frac < alpha {
                    alpha = frac;
                    limiting = Some((a, value));
                }
            };
            if to.signum() != from.signum() {
                stop(0.0);
            }
            if let Some(b) = self.bounds[i] {
                if to > b.upper {
                    stop(b.upper);
                } else if to < b.lower {
                    stop(b.lower);
                }
            }
        }
        if !(alpha > 0.0) {
            return Ok(false);
        }
        let mut next: Vec<f64> = free
            .iter()
            .zip(&target)
            .map(|(&i, &to)| self.theta[i] + alpha * (to - self.theta[i]))
            .collect();
        if let Some((a, value)) = limiting {
            next[a] = value;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Ok(false);
        }

        // objective change, evaluated without ‖y‖²
        let delta: Vec<f64> = free.iter().zip(&next).map(|(&i, v)| v - self.theta[i]).collect();
        let mut change = 0.0;
        for (a, &i) in free.iter().enumerate() {
            let ci = self.columns[i];
            let mut cross = -self.prepared.correlations().at(i);
            for &j in &self.active {
                cross += self.spec.gram_entry(ci, self.columns[j]) * self.theta[j];
            }
            let quad: f64 = (0..k).map(|b| gram[a * k + b] * delta[b]).sum();
            change += delta[a] * (cross + 0.5 * quad) / n;
            change += self.lambda * self.weights[i] * (next[a].abs() - self.theta[i].abs());
        }
        if !(change <= 0.0) {
            return Ok(false);
        }
        for (&i, &v) in free.iter().zip(&next) {
            let v = match self.bounds[i] {
                Some(b) => b.clamp(v),
                None => v,
            };
            self.set(i, v);
        }
        Ok(true)
    }

    /// Cycles to convergence. Returns `(converged, cycles_used)`.
    ///
    /// A full pass over every usable column must leave the active set
    /// unchanged with all changes below the threshold. Between full passes the
    /// current active set is iterated on its own, with a block update after
    /// every pass, until it settles.
    pub fn run(&mut self, config: &SolverConfig) -> Result<(bool, usize)> {
        let threshold = config.tol * self.prepared.norm_inf().max(1.0);
        let all: Vec<usize> = (0..self.theta.len())
            .filter(|&pos| self.weights[pos].is_finite() && self.sigma2[pos] > 0.0)
            .collect();
        let mut cycles = 0;
        loop {
            self.active_changed = false;
            let largest = self.pass(&all)?;
            cycles += 1;
            if !self.active_changed && largest < threshold {
                return Ok((true, cycles));
            }
            while cycles < config.max_cycles {
                let mut order = self.active.clone();
                order.sort_unstable();
                let largest = self.pass(&order)?;
                cycles += 1;
                if largest < threshold {
                    break;
                }
                self.block_update()?;
            }
            if cycles >= config.max_cycles {
                return Ok((false, cycles));
            }
        }
    }

    /// `1/(2n) ‖y − Aθ‖² + λ Σ w_i |θ_i|`.
    pub fn objective(&self) -> f64 {
        objective(self.spec, self.prepared, self.weights, self.lambda, &self.theta)
    }
}

/// Solves `G x = b` for the Gram matrix of the free active columns.
///
/// The system is scaled to unit diagonal first, since slope and spike columns
/// differ in squared norm by a factor of order `n³`. When the columns are
/// (nearly) dependent the factorisation is retried with a growing diagonal
/// shift. The solution is then polished by iterative refinement against the
/// unshifted matrix. A shifted solution is still a descent target; the caller
/// checks the objective before moving.
fn regularized_solve(gram: &[f64], rhs: &[f64], k: usize) -> Option<Vec<f64>> {
    let d: Vec<f64> = (0..k).map(|i| gram[i * k + i].sqrt().recip()).collect();
    let mut scaled = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            scaled[i * k + j] = gram[i * k + j] * d[i] * d[j];
        }
    }
    let b: Vec<f64> = rhs.iter().zip(&d).map(|(r, di)| r * di).collect();
    let mut factor = cholesky(&scaled, k);
    for shift in [1e-12, 1e-10, 1e-8, 1e-6] {
        if factor.is_some() {
            break;
        }
        let mut shifted = scaled.clone();
        for i in 0..k {
            shifted[i * k + i] += shift;
        }
        factor = cholesky(&shifted, k);
    }
    let l = factor?;
    let mut x = triangular_solve(&l, &b, k);
    let residual = |x: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|i| b[i] - (0..k).map(|j| scaled[i * k + j] * x[j]).sum::<f64>())
            .collect()
    };
    let norm = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>();
    let mut r = residual(&x);
    for _ in 0..3 {
        let dx = triangular_solve(&l, &r, k);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        let next = residual(&candidate);
        if !(norm(&next) < norm(&r)) {
            break;
        }
        x = candidate;
        r = next;
    }
    Some(x.iter().zip(&d).map(|(xi, di)| xi * di).collect())
}

/// Lower Cholesky factor of a symmetric matrix with unit diagonal, or `None`
/// when a pivot collapses.
fn cholesky(a: &[f64], k: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let (li, lj) = (&l[i * k..i * k + j], &l[j * k..j * k + j]);
            let sum = a[i * k + j] - li.iter().zip(lj).map(|(x, y)| x * y).sum::<f64>();
            if i == j {
                if !(sum > 1e-12) {
                    return None;
                }
                l[i * k + i] = sum.sqrt();
            } else {
                l[i * k + j] = sum / l[j * k + j];
            }
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the lower factor `L`.
fn triangular_solve(l: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..k {
        for m in 0..i {
            x[i] -= l[i * k + m] * x[m];
        }
        x[i] /= l[i * k + i];
    }
    for i in (0..k).rev() {
        for m in i + 1..k {
            x[i] -= l[m * k + i] * x[m];
        }
        x[i] /= l[i * k + i];
    }
    x
}

/// Objective value of a dense coefficient vector.
pub fn objective(spec: &DictionarySpec, prepared: &PreparedSignal, weights: &[f64], lambda: f64, theta: &[f64]) -> f64 {
    let n = spec.n() as f64;
    let penalty: f64 = theta
        .iter()
        .zip(weights)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, w)| w * t.abs())
        .sum();
    residual_sum_of_squares(spec, prepared, theta) / (2.0 * n) + lambda * penalty
}

pub fn residual_sum_of_squares(spec: &DictionarySpec, prepared: &PreparedSignal, theta: &[f64]) -> f64 {
    spec.apply(theta)
        .iter()
        .zip(prepared.y())
        .map(|(f, y)| (y - f) * (y - f))
        .sum()
}

/// Coordinate descent at one `(λ, γ)` from a warm start.
pub fn fit_single(
    spec: &DictionarySpec,
    prepared: &PreparedSignal,
    lambda: f64,
    weights: &AdaptiveWeights,
    warm: &SparseCoefficients,
    config: &SolverConfig,
) -> Result<FitResult> {
    config.validate()?;
    let w = weights.weights();
    let mut state = CoordinateDescent::new(spec, prepared, &w, lambda, &warm.to_dense(spec))?;
    let (converged, cycles_used) = state.run(config)?;
    let theta = state.theta().to_vec();
    let rss = residual_sum_of_squares(spec, prepared, &theta);
    let coefficients = SparseCoefficients::from_dense(spec, &theta);
    Ok(FitResult {
        lambda,
        gamma: weights.gamma,
        n_active: coefficients.len(),
        coefficients,
        rss,
        converged,
        cycles_used,
        baseline: prepared.baseline(),
        signal_norm_sq: prepared.norm_sq(),
    })
}

/// Penalty levels for a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LambdaGrid {
    /// `count` values log-spaced from `λ_max(γ)` down to `min_ratio · λ_max(γ)`.
    Auto { count: usize, min_ratio: f64 },
    /// Fixed values shared by every γ.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lambdas: LambdaGrid,
    pub gammas: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            lambdas: LambdaGrid::Auto {
                count: 50,
                min_ratio: 1e-4,
            },
            gammas: vec![0.0, 0.5, 1.0, 2.0],
        }
    }
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() {
            return Err(Error::Usage("gamma grid is empty".into()));
        }
        if let Some(g) = self.gammas.iter().find(|g| !(**g >= 0.0 && g.is_finite())) {
            return Err(Error::Usage(format!("gamma {g} must be finite and >= 0")));
        }
        match &self.lambdas {
            LambdaGrid::Auto { count, min_ratio } => {
                if *count == 0 {
                    return Err(Error::Usage("lambda grid is empty".into()));
                }
                if !(*min_ratio > 0.0 && *min_ratio <= 1.0) {
                    return Err(Error::Usage(format!(
                        "lambda min ratio must lie in (0, 1], got {min_ratio}"
                    )));
                }
            }
            LambdaGrid::Explicit(values) => {
                if values.is_empty() {
                    return Err(Error::Usage("lambda grid is empty".into()));
                }
                if let Some(l) = values.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
                    return Err(Error::Usage(format!("lambda {l} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }

    /// Decreasing penalty values for one γ.
    pub fn lambdas_for(&self, lambda_max: f64) -> Vec<f64> {
        let mut values = match &self.lambdas {
            LambdaGrid::Auto { count, min_ratio } => {
                if *count == 1 {
                    vec![lambda_max]
                } else {
                    let step = min_ratio.ln() / (*count - 1) as f64;
                    (0..*count).map(|k| lambda_max * (step * k as f64).exp()).collect()
                }
            }
            LambdaGrid::Explicit(values) => values.clone(),
        };
        values.sort_by(|a, b| b.total_cmp(a));
        values
    }
}

/// Fits every grid point: for each γ the weights are computed once and `λ`
/// decreases along a warm-started path.
pub fn fit_path(spec: &DictionarySpec, signal: &Signal, grid: &Grid, config: &SolverConfig) -> Result<Vec<FitResult>> {
    grid.validate()?;
    config.validate()?;
    let prepared = PreparedSignal::new(spec, signal, config.center_signal)?;
    let theta_ols = ols_init(spec, &prepared);
    let run = |gamma: f64| gamma_path(spec, &prepared, &theta_ols, gamma, grid, config);
    let paths: Vec<Vec<FitResult>> = if config.parallel {
        grid.gammas.par_iter().map(|&g| run(g)).collect::<Result<_>>()?
    } else {
        grid.gammas.iter().map(|&g| run(g)).collect::<Result<_>>()?
    };
    Ok(paths.into_iter().flatten().collect())
}

fn gamma_path(
    spec: &DictionarySpec,
    prepared: &PreparedSignal,
    theta_ols: &[f64],
    gamma: f64,
    grid: &Grid,
    config: &SolverConfig,
) -> Result<Vec<FitResult>> {
    let weights = AdaptiveWeights::new(theta_ols.to_vec(), gamma)?;
    let lmax = lambda_max(spec, prepared, &weights.weights())?;
    let mut warm = SparseCoefficients::zeros();
    let mut out = Vec::new();
    for lambda in grid.lambdas_for(lmax) {
        let fit = fit_single(spec, prepared, lambda, &weights, &warm, config).map_err(|e| Error::Grid {
            lambda,
            gamma,
            source: Box::new(e),
        })?;
        warm = fit.coefficients.clone();
        out.push(fit);
    }
    Ok(out)
}

/// Worst violations of the optimality conditions of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktReport {
    /// Over nonzero coefficients.
    pub active: f64,
    /// Over zero coefficients with finite weight.
    pub inactive: f64,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.active.max(self.inactive)
    }
}

/// Distance of the scaled residual correlation `g = <A_i, r>/n` to the set of
/// values that make coordinate `i` optimal, given its value, penalty and bounds.
pub fn coordinate_violation(g: f64, theta: f64, penalty: f64, bounds: Option<Bounds>) -> f64 {
    let (lower, upper) = bounds.map_or((f64::NEG_INFINITY, f64::INFINITY), |b| (b.lower, b.upper));
    let (lo, hi) = if theta > 0.0 {
        (penalty, if theta >= upper { f64::INFINITY } else { penalty })
    } else if theta < 0.0 {
        (if theta <= lower { f64::NEG_INFINITY } else { -penalty }, -penalty)
    } else {
        (
            if lower >= 0.0 { f64::NEG_INFINITY } else { -penalty },
            if upper <= 0.0 { f64::INFINITY } else { penalty },
        )
    };
    if g < lo {
        lo - g
    } else if g > hi {
        g - hi
    } else {
        0.0
    }
}

/// Matrix-free optimality check of a solution at penalty `lambda`.
pub fn kkt_report(
    spec: &DictionarySpec,
    prepared: &PreparedSignal,
    weights: &[f64],
    lambda: f64,
    theta: &[f64],
) -> Result<KktReport> {
    let state = CoordinateDescent::new(spec, prepared, weights, lambda, theta)?;
    let n = spec.n() as f64;
    let mut report = KktReport::default();
    for (pos, c) in spec.columns().enumerate() {
        let w = weights[pos];
        if !w.is_finite() {
            continue;
        }
        let g = state.residual_correlation(pos) / n;
        let v = coordinate_violation(g, state.theta[pos], lambda * w, spec.bounds(c.kind));
        if state.theta[pos] != 0.0 {
            report.active = report.active.max(v);
        } else {
            report.inactive = report.inactive.max(v);
        }
    }
    Ok(report)
}
