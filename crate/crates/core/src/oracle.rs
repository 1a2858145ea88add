//! Dense reference solver and optimality check for small problems.
//!
//! Everything here works on the materialised matrix with plain dense algebra
//! and never touches the closed-form Gram entries or coordinate descent, so
//! agreement with [`crate::solver`] is a meaningful cross-check.

use crate::dictionary::{Bounds, DictionarySpec};
use crate::error::{Error, Result};

/// Largest signal length the oracle accepts.
pub const MAX_ORACLE_N: usize = 256;

/// `min 1/(2n) ‖y − Aθ‖² + λ Σ w_i |θ_i|` subject to per-column boxes.
#[derive(Debug, Clone)]
pub struct DenseProblem {
    /// Row-major `n x p`.
    pub matrix: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub bounds: Vec<Option<Bounds>>,
}

impl DenseProblem {
    pub fn new(matrix: Vec<f64>, n: usize, p: usize, y: Vec<f64>, weights: Vec<f64>, lambda: f64) -> Result<Self> {
        if n > MAX_ORACLE_N {
            return Err(Error::Usage(format!(
                "oracle is limited to n <= {MAX_ORACLE_N}, got {n}"
            )));
        }
        if matrix.len() != n * p || y.len() != n || weights.len() != p {
            return Err(Error::Usage("dense problem dimensions disagree".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Usage(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(DenseProblem {
            matrix,
            n,
            p,
            y,
            weights,
            lambda,
            bounds: vec![None; p],
        })
    }

    /// Materialises the enabled columns of a dictionary, including its bounds.
    pub fn from_dictionary(spec: &DictionarySpec, y: &[f64], weights: &[f64], lambda: f64) -> Result<Self> {
        let mut prob = DenseProblem::new(
            spec.materialize(),
            spec.n(),
            spec.p(),
            y.to_vec(),
            weights.to_vec(),
            lambda,
        )?;
        prob.bounds = spec.columns().map(|c| spec.bounds(c.kind)).collect();
        Ok(prob)
    }

    fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |t| self.matrix[t * self.p + j])
    }

    fn mul(&self, theta: &[f64]) -> Vec<f64> {
        self.matrix
            .chunks_exact(self.p)
            .map(|row| row.iter().zip(theta).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn mul_transpose(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        for (row, &rt) in self.matrix.chunks_exact(self.p).zip(r) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * rt;
            }
        }
        out
    }

    pub fn residual(&self, theta: &[f64]) -> Vec<f64> {
        self.mul(theta).iter().zip(&self.y).map(|(f, y)| y - f).collect()
    }

    pub fn objective(&self, theta: &[f64]) -> f64 {
        let rss: f64 = self.residual(theta).iter().map(|r| r * r).sum();
        let penalty: f64 = theta
            .iter()
            .zip(&self.weights)
            .filter(|(t, _)| **t != 0.0)
            .map(|(t, w)| w * t.abs())
            .sum();
        rss / (2.0 * self.n as f64) + self.lambda * penalty
    }
}

/// Accelerated proximal gradient with backtracking and adaptive restart.
///
/// Runs in the column-normalised variables `φ_i = ‖A_i‖ θ_i`. Stops when the
/// gradient-mapping residual `L ‖φ − prox(φ − ∇f/L)‖∞` drops below `tol`.
pub fn oracle_solve(prob: &DenseProblem, tol: f64) -> Result<Vec<f64>> {
    const MAX_ITER: usize = 2_000_000;
    let (n, p) = (prob.n, prob.p);
    let nf = n as f64;
    let scale: Vec<f64> = (0..p)
        .map(|j| {
            let norm = prob.column(j).map(|a| a * a).sum::<f64>().sqrt();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = prob.matrix.clone();
    for row in scaled.chunks_exact_mut(p) {
        for (a, s) in row.iter_mut().zip(&scale) {
            *a /= s;
        }
    }
    let unit = DenseProblem {
        matrix: scaled,
        ..prob.clone()
    };
    // penalty and box per scaled coordinate
    let penalty: Vec<f64> = (0..p).map(|j| prob.lambda * prob.weights[j] / scale[j]).collect();
    let boxes: Vec<(f64, f64)> = (0..p)
        .map(|j| match prob.bounds[j] {
            _ if !prob.weights[j].is_finite() => (0.0, 0.0),
            Some(b) => (b.lower * scale[j], b.upper * scale[j]),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        })
        .collect();
    let prox = |v: f64, step: f64, j: usize| -> f64 {
        let thr = step * penalty[j];
        let st = if v > thr {
            v - thr
        } else if v < -thr {
            v + thr
        } else {
            0.0
        };
        st.clamp(boxes[j].0, boxes[j].1)
    };
    let smooth = |phi: &[f64]| -> (f64, Vec<f64>) {
        let r = unit.residual(phi);
        let loss = r.iter().map(|v| v * v).sum::<f64>() / (2.0 * nf);
        let grad = unit.mul_transpose(&r).iter().map(|g| -g / nf).collect();
        (loss, grad)
    };

    let mut phi = vec![0.0; p];
    let mut momentum = phi.clone();
    let mut t_acc = 1.0_f64;
    let mut lipschitz = 1.0_f64;
    for _ in 0..MAX_ITER {
        let (f_m, g_m) = smooth(&momentum);
        let next = loop {
            let step = 1.0 / lipschitz;
            let cand: Vec<f64> = (0..p).map(|j| prox(momentum[j] - step * g_m[j], step, j)).collect();
            let diff: Vec<f64> = cand.iter().zip(&momentum).map(|(a, b)| a - b).collect();
            let (f_c, _) = smooth(&cand);
            let model = f_m
                + g_m.iter().zip(&diff).map(|(g, d)| g * d).sum::<f64>()
                + 0.5 * lipschitz * diff.iter().map(|d| d * d).sum::<f64>();
            if f_c <= model + 1e-15 * f_m.abs().max(1.0) {
                break cand;
            }
            lipschitz *= 2.0;
        };

        // stationarity of the new point
        let (_, g_n) = smooth(&next);
        let step = 1.0 / lipschitz;
        let residual = (0..p)
            .map(|j| (next[j] - prox(next[j] - step * g_n[j], step, j)).abs() * lipschitz)
            .fold(0.0_f64, f64::max);
        if residual < tol {
            return Ok(next.iter().zip(&scale).map(|(v, s)| v / s).collect());
        }

        // restart momentum when it points uphill
        let uphill: f64 = (0..p).map(|j| (momentum[j] - next[j]) * (next[j] - phi[j])).sum();
        let t_next = if uphill > 0.0 {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t_acc * t_acc).sqrt())
        };
        let beta = if uphill > 0.0 { 0.0 } else { (t_acc - 1.0) / t_next };
        momentum = (0..p).map(|j| next[j] + beta * (next[j] - phi[j])).collect();
        phi = next;
        t_acc = t_next;
        lipschitz *= 0.9;
    }
    Err(Error::OracleNonConvergence(MAX_ITER))
}

/// Worst optimality-condition violations of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktViolations {
    /// Nonzero coordinates: distance of `<A_i, r>/n` from `λ w_i sign(θ_i)`
    /// (one-sided at an active bound).
    pub active: f64,
    /// Zero coordinates: excess of `|<A_i, r>/n|` over `λ w_i`
    /// (one-sided when a bound sits at zero).
    pub inactive: f64,
}

impl KktViolations {
    pub fn max(&self) -> f64 {
        self.active.max(self.inactive)
    }
}

pub fn kkt_check(prob: &DenseProblem, theta: &[f64]) -> KktViolations {
    let r = prob.residual(theta);
    let corr = prob.mul_transpose(&r);
    let nf = prob.n as f64;
    let mut out = KktViolations::default();
    for j in 0..prob.p {
        let w = prob.weights[j];
        if !w.is_finite() {
            continue;
        }
        let g = corr[j] / nf;
        let tau = prob.lambda * w;
        let (lower, upper) = prob.bounds[j].map_or((f64::NEG_INFINITY, f64::INFINITY), |b| (b.lower, b.upper));
        let th = theta[j];
        if th == 0.0 {
            let mut v = 0.0_f64;
            if lower < 0.0 {
                v = v.max(-tau - g);
            }
            if upper > 0.0 {
                v = v.max(g - tau);
            }
            out.inactive = out.inactive.max(v);
        } else {
            let target = tau * th.signum();
            let v = if th >= upper {
                (target - g).max(0.0)
            } else if th <= lower {
                (g - target).max(0.0)
            } else {
                (g - target).abs()
            };
            out.active = out.active.max(v);
        }
    }
    out
}
