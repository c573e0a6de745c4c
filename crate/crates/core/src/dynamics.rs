//! Time integration of the damped, stochastically forced vorticity equation
//! `dξ + u·∇ξ dt + γξ dt = dW^curl`, `u = K★ξ`.
//!
//! One step of length `dt` is a Strang splitting: an exact half step of the
//! linear damping plus noise (solved mode by mode as an OU transition), a
//! full SSP-RK3 step of the dealiased transport `ξ' = −u·∇ξ`, and a second
//! exact half step.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::ergodics::Observable;
use crate::error::{Error, Result};
use crate::noise::{
    ForcedModes, IncrementSource, NoiseSpectrum, RefinedSource, RngStream, NEGATIVE_TIME_TAG,
};
use crate::ou::{exact_noise_std, OUState, OuStepper};
use crate::spectral::{FourierGrid, ScalarField, TransportKernel};

/// Upper bound on `dt · max|u| · N / (2π)`.
pub const COURANT_LIMIT: f64 = 0.5;
/// Runs are aborted once `|ξ|_∞` exceeds this value.
pub const BLOWUP_LINF: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub grid: FourierGrid,
    pub dt: f64,
    /// Linear damping rate `γ ≥ 0`.
    pub gamma: f64,
    pub spectrum: NoiseSpectrum,
    pub t0: f64,
    pub t1: f64,
    pub seed: u64,
    pub stream_id: u64,
    /// Snapshot cadence in steps; 0 disables snapshots.
    pub snapshot_every: u64,
    pub observables: Vec<Observable>,
    /// Switches the transport term off (pure linear damping plus noise).
    pub advection: bool,
}

impl SimConfig {
    /// Defaults on an `n × n` grid: `dt = 1e-3`, `γ = 0.5`, default spectrum, `[0, 1]`.
    pub fn new(grid: FourierGrid) -> Self {
        Self {
            grid,
            dt: 1e-3,
            gamma: 0.5,
            spectrum: NoiseSpectrum::default(),
            t0: 0.0,
            t1: 1.0,
            seed: 42,
            stream_id: 0,
            snapshot_every: 0,
            observables: Vec::new(),
            advection: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be > 0 (got {})", self.dt)));
        }
        if !(self.t1 >= self.t0) {
            return Err(Error::Config(format!(
                "t1 must not precede t0 (t0 = {}, t1 = {})",
                self.t0, self.t1
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be >= 0 (got {})", self.gamma)));
        }
        self.spectrum.validate()?;
        self.spectrum.check_grid(&self.grid)?;
        for obs in &self.observables {
            obs.check_grid(&self.grid)?;
        }
        self.steps().map(|_| ())
    }

    /// Number of steps covering `[t0, t1]`; the interval must be a multiple of `dt`.
    pub fn steps(&self) -> Result<u64> {
        steps_for(self.t1 - self.t0, self.dt)
    }

    pub fn with_interval(&self, t0: f64, t1: f64) -> Self {
        Self {
            t0,
            t1,
            ..self.clone()
        }
    }

    pub fn with_stream(&self, stream_id: u64) -> Self {
        Self {
            stream_id,
            ..self.clone()
        }
    }

    pub fn rng(&self) -> RngStream {
        RngStream::new(self.seed, self.stream_id)
    }
}

/// Steps needed to cover `span` with step `dt`.
pub fn steps_for(span: f64, dt: f64) -> Result<u64> {
    let steps = (span / dt).round();
    if (steps * dt - span).abs() > 1e-9 * span.abs().max(1.0) {
        return Err(Error::Config(format!(
            "interval {span} is not a multiple of dt = {dt}"
        )));
    }
    Ok(steps.max(0.0) as u64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryState {
    pub xi: ScalarField,
    pub time: f64,
    pub rng: RngStream,
    pub step_count: u64,
}

impl TrajectoryState {
    /// Initial state at `cfg.t0`. The data are restricted to the retained modes.
    pub fn new(chi: &ScalarField, cfg: &SimConfig) -> Result<Self> {
        if chi.grid() != &cfg.grid {
            return Err(Error::Config(format!(
                "initial data on N = {} but config uses N = {}",
                chi.grid().n(),
                cfg.grid.n()
            )));
        }
        if !chi.is_mean_zero() {
            return Err(Error::Invariant(format!(
                "initial vorticity must be mean-zero (mean = {:.3e})",
                chi.mean()
            )));
        }
        let mut xi = chi.clone();
        xi.remove_mean();
        xi.dealias();
        Ok(Self {
            xi,
            time: cfg.t0,
            rng: cfg.rng(),
            step_count: 0,
        })
    }
}

/// Step machinery for one configuration; owns all scratch buffers.
pub struct Integrator {
    grid: FourierGrid,
    dt: f64,
    gamma: f64,
    advection: bool,
    modes: ForcedModes,
    half_decay: f64,
    kernel: TransportKernel,
    base: Vec<Complex64>,
    stage: Vec<Complex64>,
    tend: Vec<Complex64>,
    omega: Vec<Complex64>,
    normals: Vec<f64>,
}

impl Integrator {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let modes = ForcedModes::new(&cfg.spectrum, &cfg.grid)?;
        let len = cfg.grid.spectral_len();
        let z = Complex64::new(0.0, 0.0);
        Ok(Self {
            grid: cfg.grid.clone(),
            dt: cfg.dt,
            gamma: cfg.gamma,
            advection: cfg.advection,
            normals: vec![0.0; modes.draws()],
            modes,
            half_decay: (-cfg.gamma * cfg.dt / 2.0).exp(),
            kernel: TransportKernel::new(&cfg.grid),
            base: vec![z; len],
            stage: vec![z; len],
            tend: vec![z; len],
            omega: vec![z; len],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn draws(&self) -> usize {
        self.modes.draws()
    }

    /// Exact half step of damping plus noise from the given standard normals.
    pub fn linear_half(&self, xi: &mut ScalarField, normals: &[f64]) {
        let h = self.dt / 2.0;
        let d = self.half_decay;
        xi.spectral_mut().iter_mut().for_each(|v| *v *= d);
        let gamma = self.gamma;
        self.modes
            .add_scaled(xi.spectral_mut(), normals, |q| exact_noise_std(q, gamma, h));
    }

    /// SSP-RK3 transport step on `target`, where the advected vorticity is
    /// `target + offset` and only `target` is updated. Returns `max|u|` at the
    /// start of the step.
    fn transport(&mut self, target: &mut [Complex64], offset: Option<&[Complex64]>) -> f64 {
        let dt = self.dt;
        self.base.copy_from_slice(target);
        let mut max_u = 0.0;
        // stage 1
        self.fill_omega(target, offset);
        max_u = f64::max(max_u, self.kernel.tendency(&self.omega, &mut self.tend));
        for ((s, b), t) in self.stage.iter_mut().zip(&self.base).zip(&self.tend) {
            *s = b + t * dt;
        }
        // stage 2
        let stage = std::mem::take(&mut self.stage);
        self.fill_omega(&stage, offset);
        self.stage = stage;
        self.kernel.tendency(&self.omega, &mut self.tend);
        for ((s, b), t) in self.stage.iter_mut().zip(&self.base).zip(&self.tend) {
            *s = 0.75 * b + 0.25 * (*s + t * dt);
        }
        // stage 3
        let stage = std::mem::take(&mut self.stage);
        self.fill_omega(&stage, offset);
        self.stage = stage;
        self.kernel.tendency(&self.omega, &mut self.tend);
        for (((x, b), s), t) in target.iter_mut().zip(&self.base).zip(&self.stage).zip(&self.tend) {
            *x = b / 3.0 + (2.0 / 3.0) * (s + t * dt);
        }
        max_u
    }

    fn fill_omega(&mut self, x: &[Complex64], offset: Option<&[Complex64]>) {
        match offset {
            Some(o) => {
                for ((w, a), b) in self.omega.iter_mut().zip(x).zip(o) {
                    *w = a + b;
                }
            }
            None => self.omega.copy_from_slice(x),
        }
    }

    fn courant(&self, max_u: f64) -> f64 {
        self.dt * max_u * self.grid.n() as f64 / (2.0 * PI)
    }

    fn transport_checked(
        &mut self,
        target: &mut ScalarField,
        offset: Option<&ScalarField>,
        step: u64,
    ) -> Result<f64> {
        if !self.advection {
            return Ok(0.0);
        }
        let max_u = self.transport(target.spectral_mut(), offset.map(|o| o.spectral()));
        let courant = self.courant(max_u);
        if courant > COURANT_LIMIT {
            return Err(Error::Cfl {
                step,
                courant,
                max_u,
            });
        }
        Ok(max_u)
    }

    /// One full Strang step of `xi` driven by `src`. Returns `max|u|`.
    pub fn step_field<S: IncrementSource>(
        &mut self,
        xi: &mut ScalarField,
        src: &mut S,
        step: u64,
    ) -> Result<f64> {
        let mut z = std::mem::take(&mut self.normals);
        src.fill(&mut z);
        self.linear_half(xi, &z);
        let max_u = match self.transport_checked(xi, None, step) {
            Ok(v) => v,
            Err(e) => {
                self.normals = z;
                return Err(e);
            }
        };
        src.fill(&mut z);
        self.linear_half(xi, &z);
        self.normals = z;
        xi.remove_mean();
        check_blowup(xi, step)?;
        Ok(max_u)
    }

    pub fn step(&mut self, state: &mut TrajectoryState) -> Result<f64> {
        let step = state.step_count + 1;
        let max_u = self.step_field(&mut state.xi, &mut state.rng, step)?;
        state.step_count = step;
        state.time += self.dt;
        Ok(max_u)
    }
}

fn check_blowup(xi: &ScalarField, step: u64) -> Result<()> {
    if !xi.is_finite() {
        return Err(Error::Divergence {
            step,
            reason: "non-finite vorticity".into(),
        });
    }
    // Σ|ξ̂_k| bounds |ξ|_∞; only evaluate the grid when the bound is large.
    let bound: f64 = xi.spectral().iter().map(|v| 2.0 * v.norm()).sum();
    if bound > BLOWUP_LINF {
        let linf = xi.max_abs();
        if linf > BLOWUP_LINF {
            return Err(Error::Divergence {
                step,
                reason: format!("|xi|_inf = {linf:.3e} exceeds {BLOWUP_LINF:.0e}"),
            });
        }
    }
    Ok(())
}

/// A single Strang step. Builds the step machinery on every call; use
/// [`Integrator`] in loops.
pub fn sde_step(state: &TrajectoryState, cfg: &SimConfig) -> Result<TrajectoryState> {
    let mut integ = Integrator::new(cfg)?;
    let mut next = state.clone();
    integ.step(&mut next)?;
    Ok(next)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub time: f64,
    pub field: ScalarField,
}

/// Observable series and snapshots of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub observable_names: Vec<String>,
    pub times: Vec<f64>,
    /// One row per recorded time, one column per observable.
    pub observable_series: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: TrajectoryState,
}

/// Runs from `cfg.t0` to `cfg.t1`, calling `observe` on the initial state and
/// after every step.
pub fn integrate_observed<F>(chi: &ScalarField, cfg: &SimConfig, mut observe: F) -> Result<TrajectoryState>
where
    F: FnMut(&TrajectoryState) -> Result<()>,
{
    let steps = cfg.steps()?;
    let mut integ = Integrator::new(cfg)?;
    let mut state = TrajectoryState::new(chi, cfg)?;
    observe(&state)?;
    for _ in 0..steps {
        integ.step(&mut state)?;
        observe(&state)?;
    }
    Ok(state)
}

/// Continues an existing state for `steps` steps.
pub fn advance(state: &mut TrajectoryState, integ: &mut Integrator, steps: u64) -> Result<()> {
    for _ in 0..steps {
        integ.step(state)?;
    }
    Ok(())
}

/// Repeated [`sde_step`] from `t0` to `t1` with observables recorded at every
/// step and snapshots every `snapshot_every` steps.
pub fn integrate(chi: &ScalarField, cfg: &SimConfig) -> Result<Trajectory> {
    let names = cfg.observables.iter().map(|o| o.name.clone()).collect();
    let mut times = Vec::new();
    let mut series = Vec::new();
    let mut snapshots = Vec::new();
    let final_state = integrate_observed(chi, cfg, |s| {
        times.push(s.time);
        let row = cfg
            .observables
            .iter()
            .map(|o| o.eval(&s.xi))
            .collect::<Result<Vec<_>>>()?;
        series.push(row);
        if cfg.snapshot_every > 0 && s.step_count % cfg.snapshot_every == 0 {
            snapshots.push(Snapshot {
                step: s.step_count,
                time: s.time,
                field: s.xi.clone(),
            });
        }
        Ok(())
    })?;
    Ok(Trajectory {
        observable_names: names,
        times,
        observable_series: series,
        snapshots,
        final_state,
    })
}

/// Real orthonormal-basis coefficients of one mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeSpec {
    pub k1: i64,
    pub k2: i64,
    pub cos: f64,
    pub sin: f64,
}

/// Initial vorticity presets.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// Random field on `0 < |k| ≤ band` rescaled to the given `|ξ|_∞`.
    RandomBandLimited { band: usize, linf: f64, seed: u64 },
    Modes(Vec<ModeSpec>),
    /// Grid values, row-major.
    Values(Vec<f64>),
}

impl InitialCondition {
    pub fn build(&self, grid: &FourierGrid) -> Result<ScalarField> {
        let mut f = match self {
            InitialCondition::Zero => ScalarField::zeros(grid),
            InitialCondition::RandomBandLimited { band, linf, seed } => {
                let mut rng = RngStream::new(*seed, 0x1c);
                random_band_limited(grid, *band, *linf, &mut rng)?
            }
            InitialCondition::Modes(modes) => {
                let mut f = ScalarField::zeros(grid);
                for m in modes {
                    if m.k1 == 0 && m.k2 == 0 {
                        return Err(Error::Invariant("mode (0, 0) would give a nonzero mean".into()));
                    }
                    let (a0, b0) = f.real_mode(m.k1, m.k2);
                    f.set_real_mode(m.k1, m.k2, a0 + m.cos, b0 + m.sin)?;
                }
                f
            }
            InitialCondition::Values(v) => ScalarField::from_values(grid, v)?,
        };
        if !f.is_mean_zero() {
            return Err(Error::Invariant(format!(
                "initial vorticity must be mean-zero (mean = {:.3e})",
                f.mean()
            )));
        }
        f.remove_mean();
        Ok(f)
    }
}

/// Gaussian coefficients with variance `|k|^{-2}` on `0 < |k| ≤ band`, rescaled
/// so that the grid maximum of `|ξ|` equals `linf`.
pub fn random_band_limited(
    grid: &FourierGrid,
    band: usize,
    linf: f64,
    rng: &mut RngStream,
) -> Result<ScalarField> {
    if band == 0 || band > grid.kmax_dealias() {
        return Err(Error::Config(format!(
            "band must lie in [1, kmax_dealias = {}] (got {band})",
            grid.kmax_dealias()
        )));
    }
    if !(linf >= 0.0) {
        return Err(Error::Domain(format!("linf must be >= 0 (got {linf})")));
    }
    let b = band as i64;
    let mut f = ScalarField::zeros(grid);
    for k1 in 0..=b {
        for k2 in -b..=b {
            let half = k1 > 0 || (k1 == 0 && k2 > 0);
            let r2 = k1 * k1 + k2 * k2;
            if !half || r2 > b * b {
                continue;
            }
            let s = 1.0 / (r2 as f64).sqrt();
            let a = s * rng.standard_normal();
            let c = s * rng.standard_normal();
            f.set_real_mode(k1, k2, a, c)?;
        }
    }
    let m = f.max_abs();
    if m > 0.0 {
        f.scale(linf / m);
    }
    Ok(f)
}

/// Outcome of the `ξ = η_λ + ζ_λ` decomposition check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrosscheckReport {
    pub lambda: f64,
    pub dt: f64,
    pub steps: u64,
    /// `max_t ‖η_λ(t) + ζ_λ(t) − ξ(t)‖₂`.
    pub max_discrepancy: f64,
    pub final_discrepancy: f64,
}

/// Integrates `(η_λ, ζ_λ)` and the direct equation side by side under one
/// noise realization and reports how far `η_λ + ζ_λ` drifts from `ξ`.
///
/// `zeta_stream` names the `(seed, stream_id)` driving `ζ_λ`; it must be the
/// stream of `cfg`.
pub fn eta_step_crosscheck(
    chi: &ScalarField,
    cfg: &SimConfig,
    lambda: f64,
    zeta_stream: (u64, u64),
) -> Result<CrosscheckReport> {
    if zeta_stream != (cfg.seed, cfg.stream_id) {
        return Err(Error::Config(format!(
            "zeta stream {:?} differs from the main noise stream {:?}",
            zeta_stream,
            (cfg.seed, cfg.stream_id)
        )));
    }
    let mut src = cfg.rng();
    run_crosscheck(chi, cfg, lambda, &mut src)
}

/// Discrepancies at `dt` and `dt/2` on a shared Brownian path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinementReport {
    pub coarse: CrosscheckReport,
    pub fine: CrosscheckReport,
    /// `coarse.max_discrepancy / fine.max_discrepancy`; ≈ 2 for first order.
    pub ratio: f64,
}

pub fn eta_crosscheck_refinement(chi: &ScalarField, cfg: &SimConfig, lambda: f64) -> Result<RefinementReport> {
    let mut coarse_src = RefinedSource::new(cfg.rng(), 1);
    let coarse = run_crosscheck(chi, cfg, lambda, &mut coarse_src)?;
    let fine_cfg = SimConfig {
        dt: cfg.dt / 2.0,
        ..cfg.clone()
    };
    let mut fine_src = cfg.rng();
    let fine = run_crosscheck(chi, &fine_cfg, lambda, &mut fine_src)?;
    Ok(RefinementReport {
        coarse,
        fine,
        ratio: coarse.max_discrepancy / fine.max_discrepancy,
    })
}

fn l2_distance(a: &ScalarField, b: &ScalarField, c: &ScalarField) -> f64 {
    let w = a.grid().weight();
    let s: f64 = a
        .spectral()
        .iter()
        .zip(b.spectral())
        .zip(c.spectral())
        .zip(w)
        .map(|(((x, y), z), w)| w * (x + y - z).norm_sqr())
        .sum();
    2.0 * PI * s.sqrt()
}

fn run_crosscheck<S: IncrementSource>(
    chi: &ScalarField,
    cfg: &SimConfig,
    lambda: f64,
    src: &mut S,
) -> Result<CrosscheckReport> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be > 0 (got {lambda})")));
    }
    let steps = cfg.steps()?;
    let mut direct = Integrator::new(cfg)?;
    let mut pair = Integrator::new(cfg)?;
    let mut ou = OuStepper::new(&cfg.spectrum, &cfg.grid)?;

    let mut xi = TrajectoryState::new(chi, cfg)?.xi;
    // ζ(t₀) from the stationary law, drawn on the negative-time sub-stream.
    let mut neg = cfg.rng().substream(NEGATIVE_TIME_TAG, 0);
    let mut zeta = ou.stationary(&cfg.grid, lambda, &mut neg)?;
    zeta.time = cfg.t0;
    let mut eta = &xi - &zeta.zeta;

    let h = cfg.dt / 2.0;
    let g_decay = (-cfg.gamma * h).exp();
    let coupling = g_decay - (-lambda * h).exp();
    let mut z = vec![0.0; direct.draws()];

    let half = |eta: &mut ScalarField, zeta: &mut OUState, z: &[f64]| {
        eta.scale(g_decay);
        eta.axpy(coupling, &zeta.zeta).expect("same grid");
        ou.step_with(zeta, h, z);
    };

    let mut max_d = l2_distance(&eta, &zeta.zeta, &xi);
    for step in 1..=steps {
        src.fill(&mut z);
        direct.linear_half(&mut xi, &z);
        half(&mut eta, &mut zeta, &z);

        direct.transport_checked(&mut xi, None, step)?;
        pair.transport_checked(&mut eta, Some(&zeta.zeta), step)?;

        src.fill(&mut z);
        direct.linear_half(&mut xi, &z);
        half(&mut eta, &mut zeta, &z);
        xi.remove_mean();
        eta.remove_mean();
        check_blowup(&xi, step)?;
        max_d = max_d.max(l2_distance(&eta, &zeta.zeta, &xi));
    }
    Ok(CrosscheckReport {
        lambda,
        dt: cfg.dt,
        steps,
        max_discrepancy: max_d,
        final_discrepancy: l2_distance(&eta, &zeta.zeta, &xi),
    })
}
