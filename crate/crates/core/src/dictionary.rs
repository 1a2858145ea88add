//! Implicit over-complete dictionary `A = [slope | step | spike | sine | cosine]`.
//!
//! Sample index `t` runs from `0` to `n - 1`. The columns are
//!
//! * `Slope j`  (`j < n - 1`): `max(t - j, 0)`
//! * `Step j`   (`j < n - 1`): `1` if `t > j`, else `0`
//! * `Spike j`  (`j < n`):     `1` if `t == j`, else `0`
//! * `Sine k`   (`k < |Ω|`):   `sin(ω_k t)`
//! * `Cosine k` (`k < |Ω|`):   `cos(ω_k t)`
//!
//! The matrix is never stored. Inner products between columns are evaluated
//! from closed forms in a bounded number of operations, and inner products
//! with a signal are precomputed once per signal in [`SignalCorrelations`].

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Block a dictionary column belongs to.
///
/// The declaration order is the cycling order of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ColumnKind {
    Slope,
    Step,
    Spike,
    Sine,
    Cosine,
}

impl ColumnKind {
    pub const ALL: [ColumnKind; 5] = [
        ColumnKind::Slope,
        ColumnKind::Step,
        ColumnKind::Spike,
        ColumnKind::Sine,
        ColumnKind::Cosine,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ColumnKind::Slope => "slope",
            ColumnKind::Step => "step",
            ColumnKind::Spike => "spike",
            ColumnKind::Sine => "sine",
            ColumnKind::Cosine => "cosine",
        }
    }

    pub fn is_trig(self) -> bool {
        matches!(self, ColumnKind::Sine | ColumnKind::Cosine)
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ColumnKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Usage(format!("unknown column kind `{s}`")))
    }
}

/// A column of the dictionary, identified by block and index within the block.
///
/// Obtain validated ids through [`DictionarySpec::column`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnId {
    pub kind: ColumnKind,
    pub index: usize,
}

impl fmt::Display for ColumnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.kind, self.index)
    }
}

/// Box constraint on the coefficients of one block. Zero is always feasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > 0.0 || upper < 0.0 {
            return Err(Error::Usage(format!(
                "bounds [{lower}, {upper}] must satisfy lower <= 0 <= upper"
            )));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn non_negative() -> Self {
        Bounds {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn non_positive() -> Self {
        Bounds {
            lower: f64::NEG_INFINITY,
            upper: 0.0,
        }
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.lower, self.upper)
    }
}

/// Implicit description of the dictionary: signal length, frequency set,
/// enabled blocks and optional per-block bounds.
#[derive(Debug, Clone)]
pub struct DictionarySpec {
    n: usize,
    omega: Vec<f64>,
    enabled: [bool; 5],
    bounds: [Option<Bounds>; 5],
    /// Start of each enabled block in the flat column ordering.
    offsets: [Option<usize>; 5],
    p: usize,
    trig_gram: OnceLock<Vec<f64>>,
}

impl DictionarySpec {
    /// All blocks enabled, no bounds.
    pub fn new(n: usize, omega: Vec<f64>) -> Result<Self> {
        Self::with_blocks(n, omega, &ColumnKind::ALL)
    }

    pub fn with_blocks(n: usize, omega: Vec<f64>, blocks: &[ColumnKind]) -> Result<Self> {
        if n < 3 {
            return Err(Error::Usage(format!("signal length must be at least 3, got {n}")));
        }
        for (k, &w) in omega.iter().enumerate() {
            if !(w > 0.0 && w <= PI) {
                return Err(Error::Usage(format!(
                    "frequency {w} at position {k} is outside (0, pi]"
                )));
            }
            if k > 0 && w <= omega[k - 1] {
                return Err(Error::Usage(format!(
                    "frequencies must be strictly increasing ({} then {w})",
                    omega[k - 1]
                )));
            }
        }
        let mut enabled = [false; 5];
        for kind in blocks {
            enabled[kind.slot()] = true;
        }
        let mut spec = DictionarySpec {
            n,
            omega,
            enabled,
            bounds: [None; 5],
            offsets: [None; 5],
            p: 0,
            trig_gram: OnceLock::new(),
        };
        let mut offset = 0;
        for kind in ColumnKind::ALL {
            if spec.enabled[kind.slot()] {
                spec.offsets[kind.slot()] = Some(offset);
                offset += spec.block_len(kind);
            }
        }
        spec.p = offset;
        if spec.p == 0 {
            return Err(Error::Usage("dictionary has no columns".into()));
        }
        Ok(spec)
    }

    /// Sets bounds for one block.
    pub fn with_bounds(mut self, kind: ColumnKind, bounds: Bounds) -> Self {
        self.bounds[kind.slot()] = Some(bounds);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Number of columns in the enabled blocks.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn is_enabled(&self, kind: ColumnKind) -> bool {
        self.enabled[kind.slot()]
    }

    pub fn bounds(&self, kind: ColumnKind) -> Option<Bounds> {
        self.bounds[kind.slot()]
    }

    /// Number of columns a block has for this signal length, enabled or not.
    pub fn block_len(&self, kind: ColumnKind) -> usize {
        match kind {
            ColumnKind::Slope | ColumnKind::Step => self.n - 1,
            ColumnKind::Spike => self.n,
            ColumnKind::Sine | ColumnKind::Cosine => self.omega.len(),
        }
    }

    /// Validated column id.
    pub fn column(&self, kind: ColumnKind, index: usize) -> Result<ColumnId> {
        let len = self.block_len(kind);
        if index >= len {
            return Err(Error::Usage(format!(
                "{kind} index {index} out of range (block has {len} columns)"
            )));
        }
        Ok(ColumnId { kind, index })
    }

    /// Position of an enabled column in the flat ordering.
    pub fn position(&self, c: ColumnId) -> Option<usize> {
        self.offsets[c.kind.slot()].map(|off| off + c.index)
    }

    /// Column at a flat position.
    pub fn column_at(&self, pos: usize) -> ColumnId {
        assert!(pos < self.p, "column position {pos} out of range");
        let kind = ColumnKind::ALL
            .into_iter()
            .rev()
            .find(|k| matches!(self.offsets[k.slot()], Some(off) if off <= pos))
            .expect("position maps to an enabled block");
        let off = self.offsets[kind.slot()].unwrap_or(0);
        ColumnId { kind, index: pos - off }
    }

    /// All enabled columns in cycling order.
    pub fn columns(&self) -> impl Iterator<Item = ColumnId> + '_ {
        (0..self.p).map(move |pos| self.column_at(pos))
    }

    fn frequency(&self, c: ColumnId) -> f64 {
        self.omega[c.index]
    }

    /// `A[t, c]`.
    pub fn column_value(&self, c: ColumnId, t: usize) -> Result<f64> {
        if t >= self.n {
            return Err(Error::Usage(format!(
                "sample index {t} out of range for n = {}",
                self.n
            )));
        }
        self.column(c.kind, c.index)?;
        Ok(self.value_unchecked(c, t))
    }

    fn value_unchecked(&self, c: ColumnId, t: usize) -> f64 {
        match c.kind {
            ColumnKind::Slope => t.saturating_sub(c.index) as f64,
            ColumnKind::Step => f64::from(u8::from(t > c.index)),
            ColumnKind::Spike => f64::from(u8::from(t == c.index)),
            ColumnKind::Sine if self.is_zero_column(c) => 0.0,
            ColumnKind::Sine => (self.frequency(c) * t as f64).sin(),
            ColumnKind::Cosine => (self.frequency(c) * t as f64).cos(),
        }
    }

    /// True for `Sine` at `ω = π`, where `sin(πt)` vanishes at every sample.
    /// Such a column is carried as an exact zero and can never become active.
    pub fn is_zero_column(&self, c: ColumnId) -> bool {
        c.kind == ColumnKind::Sine && self.frequency(c) == PI
    }

    /// Dense copy of a column. Intended for tests and the dense oracle.
    pub fn materialize_column(&self, c: ColumnId) -> Vec<f64> {
        (0..self.n).map(|t| self.value_unchecked(c, t)).collect()
    }

    /// Dense `n x p` matrix in row-major order over the enabled columns.
    pub fn materialize(&self) -> Vec<f64> {
        let cols: Vec<Vec<f64>> = self.columns().map(|c| self.materialize_column(c)).collect();
        let mut dense = vec![0.0; self.n * self.p];
        for (j, col) in cols.iter().enumerate() {
            for (t, v) in col.iter().enumerate() {
                dense[t * self.p + j] = *v;
            }
        }
        dense
    }

    /// `<A_a, A_b>` from closed forms.
    pub fn gram_entry(&self, a: ColumnId, b: ColumnId) -> f64 {
        use ColumnKind::*;
        if self.is_zero_column(a) || self.is_zero_column(b) {
            return 0.0;
        }
        let (a, b) = if a.kind <= b.kind { (a, b) } else { (b, a) };
        let last = self.n - 1;
        match (a.kind, b.kind) {
            (Slope, Slope) => {
                let (lo, hi) = (a.index.min(b.index), a.index.max(b.index));
                // sum_{s=1}^{m} s (s + d), m = n - 1 - hi, d = hi - lo
                let m = (last - hi) as f64;
                let d = (hi - lo) as f64;
                m * (m + 1.0) * (2.0 * m + 1.0) / 6.0 + d * m * (m + 1.0) / 2.0
            }
            (Slope, Step) => {
                // sum_{t=lo}^{n-1} (t - a), lo = max(a, b) + 1
                let lo = a.index.max(b.index) + 1;
                let count = (self.n - lo) as f64;
                let first = (lo - a.index) as f64;
                let end = (last - a.index) as f64;
                count * (first + end) / 2.0
            }
            (Step, Step) => (last - a.index.max(b.index)) as f64,
            (Spike, Spike) => f64::from(u8::from(a.index == b.index)),
            (Slope | Step, Spike) => self.value_unchecked(a, b.index),
            (Spike, Sine | Cosine) => self.value_unchecked(b, a.index),
            (Slope, Sine | Cosine) => {
                let z = ramp_sum(self.frequency(b), a.index + 1, last, a.index as f64);
                trig_part(b.kind, z)
            }
            (Step, Sine | Cosine) => {
                let z = exp_sum(self.frequency(b), a.index + 1, last);
                trig_part(b.kind, z)
            }
            (Sine | Cosine, Sine | Cosine) => {
                let m = self.omega.len();
                let table = self.trig_gram.get_or_init(|| self.trig_table());
                let row = trig_slot(a, m);
                let col = trig_slot(b, m);
                table[row * 2 * m + col]
            }
            _ => unreachable!("pairs are ordered by kind"),
        }
    }

    fn trig_table(&self) -> Vec<f64> {
        let m = self.omega.len();
        let mut table = vec![0.0; 4 * m * m];
        for row in 0..2 * m {
            for col in 0..2 * m {
                let a = trig_id(row, m);
                let b = trig_id(col, m);
                table[row * 2 * m + col] = self.trig_pair(a, b);
            }
        }
        table
    }

    /// Product-to-sum reduction of a trigonometric pair to two exponential sums.
    fn trig_pair(&self, a: ColumnId, b: ColumnId) -> f64 {
        let (wa, wb) = (self.frequency(a), self.frequency(b));
        let last = self.n - 1;
        let diff = exp_sum(wa - wb, 0, last);
        let sum = exp_sum(wa + wb, 0, last);
        match (a.kind, b.kind) {
            (ColumnKind::Sine, ColumnKind::Sine) => 0.5 * (diff.re - sum.re),
            (ColumnKind::Cosine, ColumnKind::Cosine) => 0.5 * (diff.re + sum.re),
            // sin(x) cos(y) = (sin(x + y) + sin(x - y)) / 2
            (ColumnKind::Sine, ColumnKind::Cosine) => 0.5 * (sum.im + diff.im),
            (ColumnKind::Cosine, ColumnKind::Sine) => 0.5 * (sum.im - diff.im),
            _ => unreachable!("trig pair"),
        }
    }

    /// Precomputes `<A_c, y>` for every enabled column.
    pub fn correlate(&self, y: &[f64]) -> Result<SignalCorrelations> {
        SignalCorrelations::new(self, y)
    }

    /// `A θ` for a dense coefficient vector over the enabled columns.
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        let parts = self.apply_by_block(theta);
        (0..self.n).map(|t| parts.iter().map(|part| part[t]).sum()).collect()
    }

    /// `A θ` split per block, in [`ColumnKind::ALL`] order (slope, step,
    /// spike, sine, cosine). Disabled blocks yield zero series.
    pub fn apply_by_block(&self, theta: &[f64]) -> [Vec<f64>; 5] {
        assert_eq!(theta.len(), self.p, "coefficient length must equal p");
        let n = self.n;
        let mut out: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        let block = |kind: ColumnKind| -> &[f64] {
            match self.offsets[kind.slot()] {
                Some(off) => &theta[off..off + self.block_len(kind)],
                None => &[],
            }
        };

        // slope: x[t] = sum_{j < t} θ_j (t - j), via running slope
        let slope = block(ColumnKind::Slope);
        if !slope.is_empty() {
            let (mut level, mut rate) = (0.0, 0.0);
            for t in 1..n {
                rate += slope[t - 1];
                level += rate;
                out[0][t] = level;
            }
        }
        let step = block(ColumnKind::Step);
        if !step.is_empty() {
            let mut level = 0.0;
            for t in 1..n {
                level += step[t - 1];
                out[1][t] = level;
            }
        }
        let spike = block(ColumnKind::Spike);
        if !spike.is_empty() {
            out[2].copy_from_slice(spike);
        }
        for (slot, kind) in [(3, ColumnKind::Sine), (4, ColumnKind::Cosine)] {
            for (k, &coef) in block(kind).iter().enumerate() {
                if coef == 0.0 || self.is_zero_column(ColumnId { kind, index: k }) {
                    continue;
                }
                let w = self.omega[k];
                for (t, v) in out[slot].iter_mut().enumerate() {
                    let arg = w * t as f64;
                    *v += coef * if kind == ColumnKind::Sine { arg.sin() } else { arg.cos() };
                }
            }
        }
        out
    }
}

fn trig_part(kind: ColumnKind, z: Complex64) -> f64 {
    if kind == ColumnKind::Sine {
        z.im
    } else {
        z.re
    }
}

fn trig_slot(c: ColumnId, m: usize) -> usize {
    if c.kind == ColumnKind::Sine {
        c.index
    } else {
        m + c.index
    }
}

fn trig_id(slot: usize, m: usize) -> ColumnId {
    if slot < m {
        ColumnId {
            kind: ColumnKind::Sine,
            index: slot,
        }
    } else {
        ColumnId {
            kind: ColumnKind::Cosine,
            index: slot - m,
        }
    }
}

/// Maps an angle onto `(-π, π]`; integer sample times make this exact.
fn reduce_angle(theta: f64) -> f64 {
    let r = theta - TAU * (theta / TAU).round();
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// `sin(N x) / sin(x)` and its derivative in `x` times 1/2, i.e. the symmetric
/// kernel `K(θ) = Σ_s cos(θ s)` over the `N` half-integer offsets `s` centred on
/// zero, and `K'(θ)`.
fn dirichlet_kernel(theta: f64, count: f64) -> (f64, f64) {
    if (count * theta).abs() < 1e-3 {
        // Σ s² = N(N²-1)/12, Σ s⁴ = N(N²-1)(3N²-7)/240 over the centred grid
        let s2 = count * (count * count - 1.0) / 12.0;
        let s4 = count * (count * count - 1.0) * (3.0 * count * count - 7.0) / 240.0;
        let th2 = theta * theta;
        let k = count - th2 * s2 / 2.0 + th2 * th2 * s4 / 24.0;
        let dk = -theta * s2 + theta * th2 * s4 / 6.0;
        return (k, dk);
    }
    let x = theta / 2.0;
    let (sx, cx) = x.sin_cos();
    let (snx, cnx) = (count * x).sin_cos();
    let k = snx / sx;
    let dk = (count * cnx * sx - snx * cx) / (2.0 * sx * sx);
    (k, dk)
}

/// `Σ_{t=lo}^{hi} e^{iθt}`.
fn exp_sum(theta: f64, lo: usize, hi: usize) -> Complex64 {
    if hi < lo {
        return Complex64::new(0.0, 0.0);
    }
    let theta = reduce_angle(theta);
    let count = (hi - lo + 1) as f64;
    let centre = (lo + hi) as f64 / 2.0;
    let (k, _) = dirichlet_kernel(theta, count);
    Complex64::from_polar(k, theta * centre)
}

/// `Σ_{t=lo}^{hi} (t - origin) e^{iθt}`.
///
/// Around the centre `c` of the range the sum is
/// `e^{iθc} [(c - origin) K(θ) - i K'(θ)]`.
fn ramp_sum(theta: f64, lo: usize, hi: usize, origin: f64) -> Complex64 {
    if hi < lo {
        return Complex64::new(0.0, 0.0);
    }
    let theta = reduce_angle(theta);
    let count = (hi - lo + 1) as f64;
    let centre = (lo + hi) as f64 / 2.0;
    let (k, dk) = dirichlet_kernel(theta, count);
    Complex64::from_polar(1.0, theta * centre) * Complex64::new((centre - origin) * k, -dk)
}

/// `<A_c, y>` for every enabled column of a dictionary, computed once per
/// signal in `O(n (1 + |Ω|))`.
#[derive(Debug, Clone)]
pub struct SignalCorrelations {
    values: Vec<f64>,
    n: usize,
}

impl SignalCorrelations {
    fn new(spec: &DictionarySpec, y: &[f64]) -> Result<Self> {
        let n = spec.n();
        if y.len() != n {
            return Err(Error::Usage(format!(
                "signal has {} samples but the dictionary expects {n}",
                y.len()
            )));
        }
        // step_dot[j] = Σ_{t>j} y_t, slope_dot[j] = Σ_{t>j} (t - j) y_t
        let mut step_dot = vec![0.0; n - 1];
        let mut slope_dot = vec![0.0; n - 1];
        let (mut tail, mut ramp) = (0.0, 0.0);
        for j in (0..n - 1).rev() {
            tail += y[j + 1];
            ramp += tail;
            step_dot[j] = tail;
            slope_dot[j] = ramp;
        }
        let trig: Vec<(f64, f64)> = spec
            .omega()
            .iter()
            .map(|&w| {
                y.iter().enumerate().fold((0.0, 0.0), |(s, c), (t, &v)| {
                    let (sin, cos) = (w * t as f64).sin_cos();
                    (s + v * sin, c + v * cos)
                })
            })
            .collect();
        let values = spec
            .columns()
            .map(|c| match c.kind {
                ColumnKind::Slope => slope_dot[c.index],
                ColumnKind::Step => step_dot[c.index],
                ColumnKind::Spike => y[c.index],
                ColumnKind::Sine if spec.is_zero_column(c) => 0.0,
                ColumnKind::Sine => trig[c.index].0,
                ColumnKind::Cosine => trig[c.index].1,
            })
            .collect();
        Ok(SignalCorrelations { values, n })
    }

    /// `<A_c, y>` by flat position.
    pub fn at(&self, pos: usize) -> f64 {
        self.values[pos]
    }

    /// `<A_c, y>` for a column of the dictionary this was built from.
    pub fn column_dot_signal(&self, spec: &DictionarySpec, c: ColumnId) -> Result<f64> {
        if spec.n() != self.n {
            return Err(Error::Usage("correlations belong to another dictionary".into()));
        }
        spec.position(c)
            .map(|pos| self.values[pos])
            .ok_or_else(|| Error::Usage(format!("column {c} is not in an enabled block")))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}
