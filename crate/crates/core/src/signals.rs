//! Component reconstruction, event extraction and synthetic signals with
//! planted ground truth.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dictionary::{ColumnId, ColumnKind, DictionarySpec};
use crate::error::{Error, Result};
use crate::solver::{FitResult, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    LevelShift,
    Outlier,
    Knot,
    Frequency,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::LevelShift => "level_shift",
            EventKind::Outlier => "outlier",
            EventKind::Knot => "knot",
            EventKind::Frequency => "frequency",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EventLocation {
    /// Sample index.
    Sample(usize),
    /// Angular frequency in radians per sample.
    Frequency(f64),
}

/// A nonzero feature of a fit.
///
/// * `LevelShift` at `t`: the level changes between samples `t - 1` and `t`.
/// * `Knot` at `t`: the slope changes after sample `t`.
/// * `Outlier` at `t`: isolated spike at sample `t`.
/// * `Frequency` at `ω`: sinusoid with amplitude `sqrt(a² + b²)`.
///
/// Magnitudes are signed coefficients except for frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub location: EventLocation,
    pub magnitude: f64,
}

impl Event {
    pub fn sample(&self) -> Option<usize> {
        match self.location {
            EventLocation::Sample(t) => Some(t),
            EventLocation::Frequency(_) => None,
        }
    }

    pub fn frequency(&self) -> Option<f64> {
        match self.location {
            EventLocation::Frequency(w) => Some(w),
            EventLocation::Sample(_) => None,
        }
    }
}

/// `fitted = baseline + x + w + u + s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// Piecewise-linear trend.
    pub x: Vec<f64>,
    /// Level.
    pub w: Vec<f64>,
    /// Outliers.
    pub u: Vec<f64>,
    /// Seasonal.
    pub s: Vec<f64>,
    pub baseline: f64,
    pub fitted: Vec<f64>,
    pub events: Vec<Event>,
}

impl Decomposition {
    fn from_parts(x: Vec<f64>, w: Vec<f64>, u: Vec<f64>, s: Vec<f64>, baseline: f64, events: Vec<Event>) -> Self {
        let fitted = (0..x.len()).map(|t| baseline + x[t] + w[t] + u[t] + s[t]).collect();
        Decomposition {
            x,
            w,
            u,
            s,
            baseline,
            fitted,
            events,
        }
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// The frequency event with the largest amplitude.
    pub fn dominant_frequency(&self) -> Option<&Event> {
        self.events_of(EventKind::Frequency)
            .max_by(|a, b| a.magnitude.total_cmp(&b.magnitude))
    }
}

/// Events for a set of coefficients. Sine and cosine terms of the same
/// frequency merge into one event.
pub fn extract_events(spec: &DictionarySpec, coefficients: &[(ColumnId, f64)]) -> Vec<Event> {
    let mut events = Vec::new();
    let m = spec.omega().len();
    let mut trig = vec![(0.0, 0.0); m];
    for &(c, v) in coefficients {
        if v == 0.0 {
            continue;
        }
        let (kind, t) = match c.kind {
            ColumnKind::Slope => (EventKind::Knot, c.index),
            ColumnKind::Step => (EventKind::LevelShift, c.index + 1),
            ColumnKind::Spike => (EventKind::Outlier, c.index),
            ColumnKind::Sine => {
                trig[c.index].0 = v;
                continue;
            }
            ColumnKind::Cosine => {
                trig[c.index].1 = v;
                continue;
            }
        };
        events.push(Event {
            kind,
            location: EventLocation::Sample(t),
            magnitude: v,
        });
    }
    for (k, (a, b)) in trig.into_iter().enumerate() {
        if a != 0.0 || b != 0.0 {
            events.push(Event {
                kind: EventKind::Frequency,
                location: EventLocation::Frequency(spec.omega()[k]),
                magnitude: a.hypot(b),
            });
        }
    }
    events
}

/// Component series and events of a fit.
pub fn reconstruct(spec: &DictionarySpec, fit: &FitResult) -> Decomposition {
    let theta = fit.coefficients.to_dense(spec);
    let [x, w, u, sine, cosine] = spec.apply_by_block(&theta);
    let s = sine.iter().zip(&cosine).map(|(a, b)| a + b).collect();
    let events = extract_events(spec, fit.coefficients.entries());
    Decomposition::from_parts(x, w, u, s, fit.baseline, events)
}

/// Planted components of a synthetic series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    /// `(j, m)`: adds `m · max(t - j, 0)`.
    pub slopes: Vec<(usize, f64)>,
    /// `(t0, m)`: adds `m` to every sample from `t0` on.
    pub steps: Vec<(usize, f64)>,
    /// `(t0, m)`: adds `m` at sample `t0`.
    pub spikes: Vec<(usize, f64)>,
    /// `(ω, a, b)`: adds `a sin(ωt) + b cos(ωt)`.
    pub sinusoids: Vec<(f64, f64, f64)>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize) -> Self {
        SyntheticSpec {
            n,
            slopes: Vec::new(),
            steps: Vec::new(),
            spikes: Vec::new(),
            sinusoids: Vec::new(),
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if n < 3 {
            return Err(Error::Usage(format!("synthetic length must be at least 3, got {n}")));
        }
        let check = |what: &str, idx: usize, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::Usage(format!("{what} index {idx} out of range for n = {n}")))
            }
        };
        for &(j, _) in &self.slopes {
            check("slope", j, j + 1 < n)?;
        }
        for &(t, _) in &self.steps {
            check("step", t, t >= 1 && t < n)?;
        }
        for &(t, _) in &self.spikes {
            check("spike", t, t < n)?;
        }
        for &(w, _, _) in &self.sinusoids {
            if !(w > 0.0 && w <= std::f64::consts::PI) {
                return Err(Error::Usage(format!("sinusoid frequency {w} outside (0, pi]")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Usage(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// Dictionary columns matching the planted components. Sinusoid
    /// frequencies must appear in the dictionary's frequency set; zero
    /// sine or cosine amplitudes contribute no column.
    pub fn planted_columns(&self, spec: &DictionarySpec) -> Result<Vec<ColumnId>> {
        let mut cols = Vec::new();
        for &(j, _) in &self.slopes {
            cols.push(spec.column(ColumnKind::Slope, j)?);
        }
        for &(t, _) in &self.steps {
            cols.push(spec.column(ColumnKind::Step, t - 1)?);
        }
        for &(t, _) in &self.spikes {
            cols.push(spec.column(ColumnKind::Spike, t)?);
        }
        for &(w, a, b) in &self.sinusoids {
            let k = spec
                .omega()
                .iter()
                .position(|&o| (o - w).abs() <= 1e-12 * w)
                .ok_or_else(|| Error::Usage(format!("frequency {w} is not in the dictionary")))?;
            if a != 0.0 {
                cols.push(spec.column(ColumnKind::Sine, k)?);
            }
            if b != 0.0 {
                cols.push(spec.column(ColumnKind::Cosine, k)?);
            }
        }
        cols.sort();
        cols.dedup();
        Ok(cols)
    }

    /// Roughly an optical-fibre trace: descending line, two losses and a
    /// reflective spike.
    pub fn otdr_like(seed: u64) -> Self {
        SyntheticSpec {
            n: 400,
            slopes: vec![(0, -0.02)],
            steps: vec![(140, -1.5), (290, -0.8)],
            spikes: vec![(210, 2.5)],
            sinusoids: Vec::new(),
            noise_sigma: 0.05,
            seed,
        }
    }

    /// Fourteen days of hourly data: a daily cycle and a shutdown that drops
    /// the level between samples 200 and 250.
    pub fn wind_like(seed: u64) -> Self {
        SyntheticSpec {
            n: 336,
            slopes: Vec::new(),
            steps: vec![(200, -6.0), (250, 6.0)],
            spikes: Vec::new(),
            sinusoids: vec![(TAU / 24.0, 4.0, 3.0)],
            noise_sigma: 0.5,
            seed,
        }
    }
}

/// Clean ground truth plus seeded Gaussian noise.
pub fn generate(spec: &SyntheticSpec) -> Result<(Signal, Decomposition)> {
    spec.validate()?;
    let n = spec.n;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut events = Vec::new();
    for &(j, m) in &spec.slopes {
        for (t, v) in x.iter_mut().enumerate().skip(j + 1) {
            *v += m * (t - j) as f64;
        }
        events.push(Event {
            kind: EventKind::Knot,
            location: EventLocation::Sample(j),
            magnitude: m,
        });
    }
    for &(t0, m) in &spec.steps {
        for v in &mut w[t0..] {
            *v += m;
        }
        events.push(Event {
            kind: EventKind::LevelShift,
            location: EventLocation::Sample(t0),
            magnitude: m,
        });
    }
    for &(t0, m) in &spec.spikes {
        u[t0] += m;
        events.push(Event {
            kind: EventKind::Outlier,
            location: EventLocation::Sample(t0),
            magnitude: m,
        });
    }
    for &(omega, a, b) in &spec.sinusoids {
        for (t, v) in s.iter_mut().enumerate() {
            let (sin, cos) = (omega * t as f64).sin_cos();
            *v += a * sin + b * cos;
        }
        events.push(Event {
            kind: EventKind::Frequency,
            location: EventLocation::Frequency(omega),
            magnitude: a.hypot(b),
        });
    }
    let truth = Decomposition::from_parts(x, w, u, s, 0.0, events);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let values = if spec.noise_sigma > 0.0 {
        let normal =
            Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Usage(format!("noise distribution: {e}")))?;
        truth.fitted.iter().map(|c| c + normal.sample(&mut rng)).collect()
    } else {
        truth.fitted.clone()
    };
    Ok((Signal::new(values)?, truth))
}
