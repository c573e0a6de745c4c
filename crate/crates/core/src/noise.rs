//! Additive Wiener forcing acting on the vorticity through `W^curl`.
//!
//! The forcing is diagonal in the orthonormal real Fourier basis: every
//! half-lattice mode `k` with `0 < |k| ≤ kcut` carries two independent
//! Brownian coefficients (cosine and sine) whose variance grows at rate
//! `σ² c_k² |k|²`, with `c_k = |k|^{-α}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectral::{FourierGrid, ScalarField};

/// Sub-stream tag for increments on the negative time axis.
pub const NEGATIVE_TIME_TAG: u64 = 0x6e65_6761_7469_7665;

/// Reproducible Gaussian stream identified by `(seed, stream_id)`.
///
/// The counter is the ChaCha word position, so any state can be recreated
/// exactly with [`RngStream::at`].
#[derive(Clone, Debug, PartialEq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn at(seed: u64, stream_id: u64, counter: u128) -> Self {
        let mut s = Self::new(seed, stream_id);
        s.rng.set_word_pos(counter);
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen()
    }

    /// A fresh stream with the same seed and a stream id derived from
    /// `(stream_id, tag, index)`.
    pub fn substream(&self, tag: u64, index: u64) -> RngStream {
        RngStream::new(self.seed, derive_stream(self.stream_id, tag, index))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_stream(stream_id: u64, tag: u64, index: u64) -> u64 {
    let h = splitmix64(stream_id);
    let h = splitmix64(h ^ splitmix64(tag));
    splitmix64(h ^ index.wrapping_mul(0xd605_bbb5_8c8a_bd7d))
}

/// Supplier of standard normal draws, one batch per forcing substep.
pub trait IncrementSource {
    fn fill(&mut self, out: &mut [f64]);
}

impl IncrementSource for RngStream {
    fn fill(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }
}

/// Draws `2^level` fine batches per call and returns their normalized sum,
/// so that a run at step `dt` sees the same Brownian path as a run at
/// `dt / 2^level` fed from an identical stream.
pub struct RefinedSource<S> {
    inner: S,
    level: u32,
    buf: Vec<f64>,
}

impl<S: IncrementSource> RefinedSource<S> {
    pub fn new(inner: S, level: u32) -> Self {
        Self {
            inner,
            level,
            buf: Vec::new(),
        }
    }
}

impl<S: IncrementSource> IncrementSource for RefinedSource<S> {
    fn fill(&mut self, out: &mut [f64]) {
        let parts = 1usize << self.level;
        self.buf.resize(out.len(), 0.0);
        out.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..parts {
            self.inner.fill(&mut self.buf);
            for (o, b) in out.iter_mut().zip(&self.buf) {
                *o += b;
            }
        }
        let s = 1.0 / (parts as f64).sqrt();
        out.iter_mut().for_each(|v| *v *= s);
    }
}

/// Power-law forcing spectrum `c_k = |k|^{-α}` with overall amplitude `σ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpectrum {
    pub alpha: f64,
    /// Regularity index of the forcing.
    pub h: f64,
    /// Largest forced wavenumber modulus.
    pub kcut: f64,
    /// Overall scale `σ ≥ 0`.
    pub amplitude: f64,
}

impl Default for NoiseSpectrum {
    fn default() -> Self {
        Self {
            alpha: 6.0,
            h: 4.5,
            kcut: 8.0,
            amplitude: 1.0,
        }
    }
}

impl NoiseSpectrum {
    pub fn new(alpha: f64, h: f64, kcut: f64, amplitude: f64) -> Result<Self> {
        let s = Self {
            alpha,
            h,
            kcut,
            amplitude,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h >= 0.0) {
            return Err(Error::Config(format!("h must be >= 0 (got {})", self.h)));
        }
        if !(self.alpha > self.h + 1.0) {
            return Err(Error::Config(format!(
                "alpha must exceed h+1 per noise regularity condition (alpha = {}, h + 1 = {})",
                self.alpha,
                self.h + 1.0
            )));
        }
        if !(self.kcut > 0.0) {
            return Err(Error::Config(format!("kcut must be > 0 (got {})", self.kcut)));
        }
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::Config(format!(
                "amplitude must be finite and >= 0 (got {})",
                self.amplitude
            )));
        }
        Ok(())
    }

    /// Forced modes must fit under the 2/3-rule cutoff.
    pub fn check_grid(&self, grid: &FourierGrid) -> Result<()> {
        if self.kcut > grid.kmax_dealias() as f64 {
            return Err(Error::Config(format!(
                "kcut = {} exceeds kmax_dealias = {} of the N = {} grid",
                self.kcut,
                grid.kmax_dealias(),
                grid.n()
            )));
        }
        Ok(())
    }

    pub fn c(&self, kmod: f64) -> f64 {
        kmod.powf(-self.alpha)
    }

    /// Variance growth rate `σ² c_k² |k|²` of one real curl coefficient.
    pub fn curl_rate(&self, kmod: f64) -> f64 {
        let c = self.amplitude * self.c(kmod);
        c * c * kmod * kmod
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    /// Full-lattice wavevectors with `0 < |k| ≤ kcut`.
    pub fn full_lattice(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        let kc = self.kcut.floor() as i64;
        let cut2 = self.kcut * self.kcut;
        (-kc..=kc).flat_map(move |k1| {
            (-kc..=kc)
                .filter(move |&k2| (k1 != 0 || k2 != 0) && ((k1 * k1 + k2 * k2) as f64) <= cut2)
                .map(move |k2| (k1, k2))
        })
    }

    /// Half lattice (`k₁ > 0`, or `k₁ = 0, k₂ > 0`) with `0 < |k| ≤ kcut`.
    pub fn half_lattice(&self) -> Vec<(i64, i64)> {
        self.full_lattice()
            .filter(|&(k1, k2)| k1 > 0 || (k1 == 0 && k2 > 0))
            .collect()
    }
}

/// Result of [`check_regularity`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularity {
    /// `Σ_{0<|k|≤kcut} σ² c_k² |k|^{2h}` over the full lattice.
    pub finite_sum: f64,
    /// Whether the untruncated series converges, i.e. `α > h + 1`.
    pub convergent: bool,
}

pub fn check_regularity(spec: &NoiseSpectrum, h_query: f64) -> Regularity {
    let finite_sum = spec
        .full_lattice()
        .map(|(k1, k2)| {
            let kmod = ((k1 * k1 + k2 * k2) as f64).sqrt();
            let c = spec.amplitude * spec.c(kmod);
            c * c * kmod.powf(2.0 * h_query)
        })
        .sum();
    Regularity {
        finite_sum,
        convergent: spec.alpha > h_query + 1.0,
    }
}

/// `S_a = σ² Σ_{0<|k|≤kcut} c_k² |k|² |k|^{2a}`: the growth rate of
/// `E‖W^curl(t)‖²_{H^a}` per unit time.
pub fn curl_growth_rate(spec: &NoiseSpectrum, a: f64) -> f64 {
    spec.full_lattice()
        .map(|(k1, k2)| {
            let kmod = ((k1 * k1 + k2 * k2) as f64).sqrt();
            spec.curl_rate(kmod) * kmod.powf(2.0 * a)
        })
        .sum()
}

#[derive(Clone, Debug)]
struct ForcedMode {
    idx: usize,
    conj: bool,
    mirror: Option<usize>,
    rate: f64,
}

/// Forced modes of a spectrum laid out on a particular grid, in the fixed
/// half-lattice order used for RNG draws.
#[derive(Clone, Debug)]
pub struct ForcedModes {
    modes: Vec<ForcedMode>,
    wavevectors: Vec<(i64, i64)>,
}

const BASIS: f64 = std::f64::consts::SQRT_2 / (4.0 * PI);

impl ForcedModes {
    pub fn new(spec: &NoiseSpectrum, grid: &FourierGrid) -> Result<Self> {
        spec.validate()?;
        spec.check_grid(grid)?;
        let n = grid.n();
        let wavevectors = if spec.is_zero() {
            Vec::new()
        } else {
            spec.half_lattice()
        };
        let modes = wavevectors
            .iter()
            .map(|&(k1, k2)| {
                let (idx, conj) = grid.locate(k1, k2).expect("kcut below kmax");
                let col = idx / n;
                let mirror = (col == 0).then(|| (n - idx % n) % n);
                let kmod = ((k1 * k1 + k2 * k2) as f64).sqrt();
                ForcedMode {
                    idx,
                    conj,
                    mirror,
                    rate: spec.curl_rate(kmod),
                }
            })
            .collect();
        Ok(Self { modes, wavevectors })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Number of standard normals consumed per substep (cosine and sine per mode).
    pub fn draws(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn wavevectors(&self) -> &[(i64, i64)] {
        &self.wavevectors
    }

    /// Per-mode variance rates `σ² c_k² |k|²`.
    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.modes.iter().map(|m| m.rate)
    }

    /// Adds `Σ_k std(rate_k) (z_a cos + z_b sin)` in the orthonormal basis.
    pub(crate) fn add_scaled(
        &self,
        spec: &mut [Complex64],
        normals: &[f64],
        std: impl Fn(f64) -> f64,
    ) {
        debug_assert_eq!(normals.len(), self.draws());
        for (m, z) in self.modes.iter().zip(normals.chunks_exact(2)) {
            let s = std(m.rate) * BASIS;
            let c = Complex64::new(s * z[0], -s * z[1]);
            let v = if m.conj { c.conj() } else { c };
            spec[m.idx] += v;
            if let Some(mirror) = m.mirror {
                spec[mirror] += v.conj();
            }
        }
    }
}

/// Increment `ΔW^curl` over a step of length `dt`: each forced real
/// coefficient is Gaussian with variance `σ² c_k² |k|² dt`.
pub fn sample_curl_increment(
    spec: &NoiseSpectrum,
    grid: &FourierGrid,
    dt: f64,
    rng: &mut RngStream,
) -> Result<ScalarField> {
    if !(dt >= 0.0) {
        return Err(Error::Domain(format!("dt must be >= 0 (got {dt})")));
    }
    let modes = ForcedModes::new(spec, grid)?;
    let mut field = ScalarField::zeros(grid);
    if dt == 0.0 {
        return Ok(field);
    }
    let mut z = vec![0.0; modes.draws()];
    rng.fill(&mut z);
    modes.add_scaled(field.spectral_mut(), &z, |rate| (rate * dt).sqrt());
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Explicit double loop over the square `[-K, K]²`.
    fn regularity_oracle(alpha: f64, kcut: f64, sigma: f64, h: f64) -> f64 {
        let k = kcut.ceil() as i64 + 1;
        let mut s = 0.0;
        for k1 in -k..=k {
            for k2 in -k..=k {
                let r = ((k1 * k1 + k2 * k2) as f64).sqrt();
                if r > 0.0 && r <= kcut {
                    s += sigma * sigma * r.powf(-2.0 * alpha) * r.powf(2.0 * h);
                }
            }
        }
        s
    }

    #[test]
    fn regularity_examples() {
        let s6 = NoiseSpectrum::new(6.0, 4.5, 8.0, 1.0).unwrap();
        assert!(check_regularity(&s6, 4.5).convergent);
        let s4 = NoiseSpectrum::new(4.0, 2.5, 8.0, 1.0).unwrap();
        assert!(!check_regularity(&s4, 4.5).convergent);
        let unit = NoiseSpectrum::new(6.0, 4.5, 1.0, 1.0).unwrap();
        let r = check_regularity(&unit, 0.0);
        assert_eq!(r.finite_sum, 4.0);
        assert_eq!(r.finite_sum, regularity_oracle(6.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn regularity_matches_enumeration() {
        for &(alpha, kcut, sigma, h) in &[(6.0, 8.0, 1.0, 4.5), (7.5, 5.5, 0.3, 2.0), (6.0, 3.0, 2.0, 0.0)] {
            let s = NoiseSpectrum::new(alpha, 4.5, kcut, sigma).unwrap();
            assert_relative_eq!(
                check_regularity(&s, h).finite_sum,
                regularity_oracle(alpha, kcut, sigma, h),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn growth_rate_examples() {
        let mut s = NoiseSpectrum::new(6.0, 4.5, 1.0, 0.0).unwrap();
        assert_eq!(curl_growth_rate(&s, 0.0), 0.0);
        s.amplitude = 1.0;
        assert_eq!(curl_growth_rate(&s, 0.0), 4.0);
        // consistency identity: S_0 equals the regularity sum at h = 1
        let d = NoiseSpectrum::default();
        assert_relative_eq!(
            curl_growth_rate(&d, 0.0),
            check_regularity(&d, 1.0).finite_sum,
            max_relative = 1e-14
        );
    }

    #[test]
    fn spectrum_validation() {
        let e = NoiseSpectrum::new(5.0, 4.5, 8.0, 1.0).unwrap_err();
        assert!(e.to_string().contains("alpha must exceed h+1"));
        assert!(NoiseSpectrum::new(6.0, 4.5, 0.0, 1.0).is_err());
        assert!(NoiseSpectrum::new(6.0, 4.5, 8.0, -1.0).is_err());
        let g = FourierGrid::new(16).unwrap();
        assert!(NoiseSpectrum::default().check_grid(&g).is_err());
    }

    #[test]
    fn half_lattice_is_half() {
        let s = NoiseSpectrum::default();
        assert_eq!(2 * s.half_lattice().len(), s.full_lattice().count());
    }

    #[test]
    fn zero_dt_gives_zero_field() {
        let g = FourierGrid::new(32).unwrap();
        let mut rng = RngStream::new(1, 0);
        let f = sample_curl_increment(&NoiseSpectrum::default(), &g, 0.0, &mut rng).unwrap();
        assert_eq!(f.spectral_energy(), 0.0);
        assert!(matches!(
            sample_curl_increment(&NoiseSpectrum::default(), &g, -1.0, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn increments_are_reproducible_and_real() {
        let g = FourierGrid::new(32).unwrap();
        let spec = NoiseSpectrum::default();
        let mut a = RngStream::new(42, 3);
        let _ = a.standard_normal();
        let at = a.counter();
        let f1 = sample_curl_increment(&spec, &g, 0.1, &mut a).unwrap();
        let mut b = RngStream::at(42, 3, at);
        let f2 = sample_curl_increment(&spec, &g, 0.1, &mut b).unwrap();
        assert_eq!(f1, f2);
        assert!(f1.is_conjugate_symmetric());
        assert!(f1.is_dealiased());
        assert_eq!(f1.mean(), 0.0);
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let xa: Vec<f64> = (0..8).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.standard_normal()).collect();
        assert_ne!(xa, xb);
        let s1 = a.substream(NEGATIVE_TIME_TAG, 0);
        let s2 = a.substream(NEGATIVE_TIME_TAG, 1);
        assert_ne!(s1.stream_id(), s2.stream_id());
        assert_ne!(s1.stream_id(), a.stream_id());
    }

    #[test]
    fn refined_source_sums_fine_draws() {
        let mut fine = RngStream::new(9, 9);
        let mut coarse = RefinedSource::new(RngStream::new(9, 9), 1);
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        fine.fill(&mut a);
        fine.fill(&mut b);
        let mut c = [0.0; 3];
        coarse.fill(&mut c);
        for i in 0..3 {
            assert_relative_eq!(c[i], (a[i] + b[i]) / 2f64.sqrt(), epsilon = 1e-15);
        }
    }
}
