//! Globally coupled neuron ensembles.
//!
//! Two single-neuron models are provided:
//!
//! * Bonhoeffer–van der Pol (regular and chaotic regimes)
//!   ```text
//!   dx/dt = x - x^3/3 - y + I_i + eps * X + a
//!   dy/dt = phi * (x + a0 - b0 * y)
//!   ```
//! * Hindmarsh–Rose (bursting regime)
//!   ```text
//!   dx/dt = y + 3x^2 - x^3 - z + I_i + eps * X + a
//!   dy/dt = 1 - 5x^2 - y
//!   dz/dt = r * (s * (x - x0) - z)
//!   ```
//!
//! `X` is the instantaneous mean of `x` over the ensemble and `a` the common
//! stimulation current. Heterogeneity enters through the per-neuron bias
//! current `I_i`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Bonhoeffer–van der Pol recovery rate `phi`.
pub const BVDP_RECOVERY_RATE: f64 = 0.1;
/// Bonhoeffer–van der Pol recovery offset `a0`.
pub const BVDP_RECOVERY_OFFSET: f64 = 0.7;
/// Bonhoeffer–van der Pol recovery damping `b0`.
pub const BVDP_RECOVERY_DAMPING: f64 = 0.8;
/// Hindmarsh–Rose adaptation rate `r`.
pub const HR_ADAPTATION_RATE: f64 = 0.006;
/// Hindmarsh–Rose adaptation gain `s`.
pub const HR_ADAPTATION_GAIN: f64 = 4.0;
/// Hindmarsh–Rose resting potential `x0`.
pub const HR_REST_POTENTIAL: f64 = -1.6;

/// Magnitude above which a state variable counts as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeKind {
    Regular,
    Chaotic,
    Bursting,
}

impl RegimeKind {
    pub const ALL: [RegimeKind; 3] = [RegimeKind::Regular, RegimeKind::Chaotic, RegimeKind::Bursting];

    /// Number of state variables per neuron.
    pub fn dim(self) -> usize {
        match self {
            RegimeKind::Regular | RegimeKind::Chaotic => 2,
            RegimeKind::Bursting => 3,
        }
    }

    pub fn default_coupling(self) -> f64 {
        match self {
            RegimeKind::Regular => 0.03,
            RegimeKind::Chaotic => 0.02,
            RegimeKind::Bursting => 0.2,
        }
    }

    pub fn default_heterogeneity(self) -> Heterogeneity<f64> {
        let (current_min, current_max) = match self {
            RegimeKind::Regular => (0.55, 0.65),
            RegimeKind::Chaotic => (0.45, 0.75),
            RegimeKind::Bursting => (2.9, 3.1),
        };
        Heterogeneity { current_min, current_max }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RegimeKind::Regular => "regular",
            RegimeKind::Chaotic => "chaotic",
            RegimeKind::Bursting => "bursting",
        }
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegimeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "regular" => Ok(RegimeKind::Regular),
            "chaotic" => Ok(RegimeKind::Chaotic),
            "bursting" => Ok(RegimeKind::Bursting),
            other => Err(Error::InvalidConfig(format!("unknown regime `{other}`"))),
        }
    }
}

/// Range of the per-neuron bias current, drawn uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heterogeneity<T> {
    pub current_min: T,
    pub current_max: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig<T> {
    pub regime: RegimeKind,
    pub n_neurons: usize,
    pub coupling: T,
    pub dt: T,
    pub substeps_per_env_step: usize,
    pub heterogeneity: Heterogeneity<T>,
    pub seed: u64,
}

impl<T: Scalar> EnsembleConfig<T> {
    /// Regime defaults: RK4 with `dt = 0.05` and two substeps per env step.
    pub fn new(regime: RegimeKind, n_neurons: usize) -> Self {
        let h = regime.default_heterogeneity();
        Self {
            regime,
            n_neurons,
            coupling: T::lit(regime.default_coupling()),
            dt: T::lit(0.05),
            substeps_per_env_step: 2,
            heterogeneity: Heterogeneity {
                current_min: T::lit(h.current_min),
                current_max: T::lit(h.current_max),
            },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_neurons == 0 {
            return bad("ensemble.n_neurons must be at least 1");
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return bad("ensemble.dt must be positive");
        }
        if self.substeps_per_env_step == 0 {
            return bad("ensemble.substeps must be at least 1");
        }
        if !(self.coupling >= T::zero()) || !self.coupling.is_finite() {
            return bad("ensemble.coupling must be non-negative");
        }
        let h = &self.heterogeneity;
        if !h.current_min.is_finite() || !h.current_max.is_finite() || h.current_min > h.current_max {
            return bad("ensemble.current_min must not exceed ensemble.current_max");
        }
        Ok(())
    }

    /// Simulation time covered by one env step.
    pub fn env_step_duration(&self) -> T {
        self.dt * T::from_usize(self.substeps_per_env_step).unwrap()
    }
}

/// Ensemble state: `n` rows of `dim` variables stored row-major, one bias
/// current per neuron, and the simulation clock.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState<T> {
    regime: RegimeKind,
    states: Vec<T>,
    currents: Vec<T>,
    time: T,
}

impl<T: Scalar> EnsembleState<T> {
    /// Builds a state from explicit rows; mostly useful in tests.
    pub fn from_rows(regime: RegimeKind, rows: &[Vec<T>], currents: Vec<T>) -> Result<Self> {
        let dim = regime.dim();
        if rows.is_empty() {
            return Err(Error::InvalidConfig("ensemble must contain at least one neuron".into()));
        }
        if currents.len() != rows.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), actual: currents.len() });
        }
        let mut states = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: row.len() });
            }
            states.extend_from_slice(row);
        }
        Ok(Self { regime, states, currents, time: T::zero() })
    }

    pub fn regime(&self) -> RegimeKind {
        self.regime
    }

    pub fn n_neurons(&self) -> usize {
        self.currents.len()
    }

    pub fn dim(&self) -> usize {
        self.regime.dim()
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn row(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.states[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.states.chunks_exact(self.dim())
    }

    pub fn currents(&self) -> &[T] {
        &self.currents
    }

    /// Flat row-major view of all state variables.
    pub fn as_flat(&self) -> &[T] {
        &self.states
    }

    pub fn mean_field(&self) -> T {
        mean_of_first(&self.states, self.dim())
    }

    /// Reorders neurons so that new row `i` is old row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let d = self.dim();
        let mut states = Vec::with_capacity(self.states.len());
        let mut currents = Vec::with_capacity(self.currents.len());
        for &p in perm {
            states.extend_from_slice(&self.states[p * d..(p + 1) * d]);
            currents.push(self.currents[p]);
        }
        Self { regime: self.regime, states, currents, time: self.time }
    }

    /// Pure single env step; see [`Integrator::advance`] for the in-place form.
    pub fn step(&self, action: T, config: &EnsembleConfig<T>) -> Result<Self> {
        let mut next = self.clone();
        Integrator::new(next.states.len()).advance(&mut next, action, config)?;
        Ok(next)
    }
}

fn mean_of_first<T: Scalar>(flat: &[T], dim: usize) -> T {
    let n = flat.len() / dim;
    let sum = flat.iter().step_by(dim).fold(T::zero(), |acc, &x| acc + x);
    sum / T::from_usize(n).unwrap()
}

/// Mean of the first state variable over all neurons.
pub fn mean_field<T: Scalar>(state: &EnsembleState<T>) -> T {
    state.mean_field()
}

/// Draws initial conditions and per-neuron currents from `rng`.
///
/// Draw order: all bias currents first, then each neuron's state row.
pub fn init_ensemble<T: Scalar>(config: &EnsembleConfig<T>, rng: &mut ChaCha8Rng) -> Result<EnsembleState<T>> {
    config.validate()?;
    let n = config.n_neurons;
    let lo = config.heterogeneity.current_min.to_f64_exact();
    let hi = config.heterogeneity.current_max.to_f64_exact();
    let currents: Vec<T> = (0..n)
        .map(|_| if hi > lo { T::lit(rng.random_range(lo..hi)) } else { T::lit(lo) })
        .collect();
    let dim = config.regime.dim();
    let mut states = Vec::with_capacity(n * dim);
    for _ in 0..n {
        states.push(T::lit(rng.random_range(-1.0..1.0)));
        states.push(T::lit(rng.random_range(-1.0..1.0)));
        if dim == 3 {
            states.push(T::lit(rng.random_range(2.5..3.5)));
        }
    }
    Ok(EnsembleState { regime: config.regime, states, currents, time: T::zero() })
}

/// Time derivative of one neuron given the ensemble mean field and the common drive.
///
/// `neuron` and `out` must both have `regime.dim()` entries.
#[inline]
pub fn derivatives<T: Scalar>(
    regime: RegimeKind,
    neuron: &[T],
    current: T,
    mean_field: T,
    drive: T,
    coupling: T,
    out: &mut [T],
) {
    let x = neuron[0];
    let y = neuron[1];
    let input = current + coupling * mean_field + drive;
    match regime {
        RegimeKind::Regular | RegimeKind::Chaotic => {
            let third = T::lit(1.0 / 3.0);
            out[0] = x - x * x * x * third - y + input;
            out[1] = T::lit(BVDP_RECOVERY_RATE) * (x + T::lit(BVDP_RECOVERY_OFFSET) - T::lit(BVDP_RECOVERY_DAMPING) * y);
        }
        RegimeKind::Bursting => {
            let z = neuron[2];
            let x2 = x * x;
            out[0] = y + T::lit(3.0) * x2 - x2 * x - z + input;
            out[1] = T::one() - T::lit(5.0) * x2 - y;
            out[2] = T::lit(HR_ADAPTATION_RATE) * (T::lit(HR_ADAPTATION_GAIN) * (x - T::lit(HR_REST_POTENTIAL)) - z);
        }
    }
}

/// Classical fourth-order Runge–Kutta stepper with reusable stage buffers.
#[derive(Debug, Clone, Default)]
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    stage: Vec<T>,
}

impl<T: Scalar> Rk4<T> {
    pub fn new(len: usize) -> Self {
        Self {
            k1: vec![T::zero(); len],
            k2: vec![T::zero(); len],
            k3: vec![T::zero(); len],
            k4: vec![T::zero(); len],
            stage: vec![T::zero(); len],
        }
    }

    /// Advances `y` by one step of size `h` for the autonomous system
    /// `dy/dt = f(y)`, where `f(y, out)` writes the derivative into `out`.
    pub fn step<F>(&mut self, y: &mut [T], h: T, mut f: F)
    where
        F: FnMut(&[T], &mut [T]),
    {
        let len = y.len();
        if self.k1.len() != len {
            *self = Self::new(len);
        }
        let half = h * T::lit(0.5);
        let sixth = h / T::lit(6.0);

        f(y, &mut self.k1);
        for i in 0..len {
            self.stage[i] = y[i] + half * self.k1[i];
        }
        f(&self.stage, &mut self.k2);
        for i in 0..len {
            self.stage[i] = y[i] + half * self.k2[i];
        }
        f(&self.stage, &mut self.k3);
        for i in 0..len {
            self.stage[i] = y[i] + h * self.k3[i];
        }
        f(&self.stage, &mut self.k4);
        let two = T::lit(2.0);
        for i in 0..len {
            y[i] = y[i] + sixth * (self.k1[i] + two * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

/// Advances ensembles in place, holding scratch space between calls.
#[derive(Debug, Clone, Default)]
pub struct Integrator<T> {
    rk4: Rk4<T>,
}

impl<T: Scalar> Integrator<T> {
    pub fn new(len: usize) -> Self {
        Self { rk4: Rk4::new(len) }
    }

    /// One env step: `substeps_per_env_step` RK4 substeps with the drive held
    /// constant. The mean field is recomputed from each stage's states.
    pub fn advance(&mut self, state: &mut EnsembleState<T>, action: T, config: &EnsembleConfig<T>) -> Result<()> {
        let regime = state.regime;
        let dim = regime.dim();
        let coupling = config.coupling;
        let currents = &state.currents;
        for _ in 0..config.substeps_per_env_step {
            self.rk4.step(&mut state.states, config.dt, |ys, out| {
                let field = mean_of_first(ys, dim);
                for ((row, d), &current) in ys.chunks_exact(dim).zip(out.chunks_exact_mut(dim)).zip(currents) {
                    derivatives(regime, row, current, field, action, coupling, d);
                }
            });
            state.time = state.time + config.dt;
            let limit = T::lit(DIVERGENCE_THRESHOLD);
            if let Some(bad) = state.states.iter().find(|v| !v.is_finite() || v.abs() > limit) {
                return Err(Error::NumericalDivergence {
                    time: state.time.to_f64_exact(),
                    value: bad.to_f64_exact(),
                });
            }
        }
        Ok(())
    }
}

/// Pure single env step of the coupled ensemble.
pub fn step_ensemble<T: Scalar>(state: &EnsembleState<T>, action: T, config: &EnsembleConfig<T>) -> Result<EnsembleState<T>> {
    state.step(action, config)
}
