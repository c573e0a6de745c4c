//! The auxiliary Ornstein–Uhlenbeck vorticity `dζ + λζ dt = dW^curl`.
//!
//! The process is linear and diagonal in Fourier space, so every transition
//! is sampled from its exact Gaussian law.

use crate::error::{Error, Result};
use crate::noise::{curl_growth_rate, ForcedModes, IncrementSource, NoiseSpectrum, RngStream};
use crate::spectral::{norm, sobolev_norm, FourierGrid, NormKind, ScalarField};

#[derive(Clone, Debug, PartialEq)]
pub struct OUState {
    pub zeta: ScalarField,
    pub lambda: f64,
    pub time: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be > 0 (got {lambda})")));
    }
    Ok(())
}

/// Standard deviation of the noise injected over `dt` by a linear decay at
/// `rate`: `sqrt(q (1 − e^{−2 rate dt}) / (2 rate))`, or `sqrt(q dt)` at rate 0.
pub fn exact_noise_std(q: f64, rate: f64, dt: f64) -> f64 {
    if rate == 0.0 {
        (q * dt).sqrt()
    } else {
        (q * -(-2.0 * rate * dt).exp_m1() / (2.0 * rate)).sqrt()
    }
}

/// Stepper that reuses the forced-mode table of one `(spectrum, grid)` pair.
#[derive(Clone, Debug)]
pub struct OuStepper {
    modes: ForcedModes,
    normals: Vec<f64>,
}

impl OuStepper {
    pub fn new(spec: &NoiseSpectrum, grid: &FourierGrid) -> Result<Self> {
        let modes = ForcedModes::new(spec, grid)?;
        let normals = vec![0.0; modes.draws()];
        Ok(Self { modes, normals })
    }

    pub fn modes(&self) -> &ForcedModes {
        &self.modes
    }

    /// Advances with externally supplied standard normals (one per forced
    /// real coefficient).
    pub fn step_with(&self, state: &mut OUState, dt: f64, normals: &[f64]) {
        let decay = (-state.lambda * dt).exp();
        state.zeta.scale(decay);
        let lambda = state.lambda;
        self.modes
            .add_scaled(state.zeta.spectral_mut(), normals, |q| exact_noise_std(q, lambda, dt));
        state.time += dt;
    }

    pub fn step<S: IncrementSource>(&mut self, state: &mut OUState, dt: f64, src: &mut S) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("dt must be > 0 (got {dt})")));
        }
        let mut z = std::mem::take(&mut self.normals);
        src.fill(&mut z);
        self.step_with(state, dt, &z);
        self.normals = z;
        Ok(())
    }

    /// Draws from the stationary law: variance `σ² c_k² |k|² / (2λ)` per coefficient.
    pub fn stationary<S: IncrementSource>(&mut self, grid: &FourierGrid, lambda: f64, src: &mut S) -> Result<OUState> {
        check_lambda(lambda)?;
        let mut zeta = ScalarField::zeros(grid);
        let mut z = std::mem::take(&mut self.normals);
        src.fill(&mut z);
        self.modes
            .add_scaled(zeta.spectral_mut(), &z, |q| (q / (2.0 * lambda)).sqrt());
        self.normals = z;
        Ok(OUState {
            zeta,
            lambda,
            time: 0.0,
        })
    }
}

/// Exact transition of the OU process over `dt`:
/// `ζ̂ ← e^{−λdt} ζ̂ + G`, `Var G = σ² c_k² |k|² (1 − e^{−2λdt}) / (2λ)`.
pub fn ou_exact_step(state: &OUState, dt: f64, spec: &NoiseSpectrum, rng: &mut RngStream) -> Result<OUState> {
    check_lambda(state.lambda)?;
    let mut stepper = OuStepper::new(spec, state.zeta.grid())?;
    let mut next = state.clone();
    stepper.step(&mut next, dt, rng)?;
    Ok(next)
}

pub fn stationary_sample(
    spec: &NoiseSpectrum,
    grid: &FourierGrid,
    lambda: f64,
    rng: &mut RngStream,
) -> Result<OUState> {
    check_lambda(lambda)?;
    OuStepper::new(spec, grid)?.stationary(grid, lambda, rng)
}

/// `E‖ζ_λ‖²_{H^a} = S_a / (2λ)` in the stationary regime.
pub fn stationary_sobolev_moment(spec: &NoiseSpectrum, lambda: f64, a: f64) -> f64 {
    curl_growth_rate(spec, a) / (2.0 * lambda)
}

/// Smallest embedding index for which `H^{a−1} ⊂ L^∞` in two dimensions.
pub const MIN_CALIBRATION_INDEX: f64 = 2.0;

/// Chooses `λ` so that `c̃ √(S_a / (2λ)) < γ/2` with a factor-two margin in `λ`:
/// `λ = 2 · 2 c̃² S_a / γ²`. Falls back to `λ = γ` when the forcing vanishes.
pub fn calibrate_lambda(gamma: f64, spec: &NoiseSpectrum, a: f64, c_tilde: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be > 0 (got {gamma})")));
    }
    if !(c_tilde > 0.0) {
        return Err(Error::Domain(format!("c_tilde must be > 0 (got {c_tilde})")));
    }
    if !(a > MIN_CALIBRATION_INDEX) {
        return Err(Error::Domain(format!(
            "a must exceed 2 so that H^(a-1) embeds in L^inf (got {a})"
        )));
    }
    let s_a = curl_growth_rate(spec, a);
    if s_a == 0.0 {
        return Ok(gamma);
    }
    let threshold = 2.0 * c_tilde * c_tilde * s_a / (gamma * gamma);
    Ok(2.0 * threshold)
}

/// `γ/2 − c̃ √(S_a / (2λ))`; positive when the calibration inequality holds.
pub fn calibration_margin(gamma: f64, spec: &NoiseSpectrum, a: f64, c_tilde: f64, lambda: f64) -> f64 {
    gamma / 2.0 - c_tilde * stationary_sobolev_moment(spec, lambda, a).sqrt()
}

/// Empirical embedding constant from samples of `ζ`: the through-origin
/// least-squares slope of `|ζ|_∞` against `‖ζ‖_{H^a}`, and the largest ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddingEstimate {
    pub slope: f64,
    pub max_ratio: f64,
}

pub fn estimate_c_tilde(samples: &[ScalarField], a: f64) -> Result<EmbeddingEstimate> {
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut max_ratio: f64 = 0.0;
    for z in samples {
        let x = sobolev_norm(z, a);
        if x == 0.0 {
            continue;
        }
        let y = norm(z, NormKind::Linf)?;
        sxy += x * y;
        sxx += x * x;
        max_ratio = max_ratio.max(y / x);
    }
    if sxx == 0.0 {
        return Err(Error::Undefined("no nonzero samples to regress".into()));
    }
    Ok(EmbeddingEstimate {
        slope: sxy / sxx,
        max_ratio,
    })
}

/// `max_t ‖ζ(t)‖_{H^a} / (|t| + 1)` over a sampled path.
pub fn linear_growth_ratio(times: &[f64], sobolev: &[f64]) -> f64 {
    times
        .iter()
        .zip(sobolev)
        .map(|(t, s)| s / (t.abs() + 1.0))
        .fold(0.0, f64::max)
}
