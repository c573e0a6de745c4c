//! Krylov–Bogoliubov statistics: cylindrical observables, Cesàro time
//! averages, the Markov/semigroup identity and tail reports.
//!
//! Invariant measures are never represented directly; they are probed through
//! their action on a fixed catalog of bounded observables that depend on the
//! vorticity only through finitely many pairings `⟨ξ, g_i⟩`.

use std::f64::consts::PI;

use crate::dynamics::{advance, integrate_observed, steps_for, Integrator, SimConfig, TrajectoryState};
use crate::error::{Error, Result};
use crate::noise::{derive_stream, RngStream};
use crate::spectral::{norm, pairing, FourierGrid, NormKind, ScalarField};

const OUTER_TAG: u64 = 0x6f_7574_6572;
const INNER_TAG: u64 = 0x69_6e6e_6572;
const TAIL_TAG: u64 = 0x7461_696c;
const CESARO_TAG: u64 = 0x6365_7361_726f;

/// Bounded continuous maps `f: ℝ^m → ℝ` making up the observable catalog.
#[derive(Clone, Debug, PartialEq)]
pub enum OuterMap {
    /// `p[index]`. Unbounded; excluded from the statistical tests.
    Coordinate { index: usize },
    /// `clamp(Σ_j coeffs[j] p[index]^j, −clip, clip)`.
    ClippedPolynomial { index: usize, coeffs: Vec<f64>, clip: f64 },
    /// `tanh(Σ_i weights[i] p[i] + offset)`.
    TanhLinear { weights: Vec<f64>, offset: f64 },
    /// Logistic-smoothed indicator of `lo ≤ p[index] ≤ hi`.
    SmoothBand { index: usize, lo: f64, hi: f64, width: f64 },
}

fn logistic(x: f64) -> f64 {
    0.5 * (1.0 + (0.5 * x).tanh())
}

impl OuterMap {
    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            OuterMap::Coordinate { index } => p[*index],
            OuterMap::ClippedPolynomial { index, coeffs, clip } => {
                let x = p[*index];
                let v = coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
                v.clamp(-clip, *clip)
            }
            OuterMap::TanhLinear { weights, offset } => {
                let s: f64 = weights.iter().zip(p).map(|(w, x)| w * x).sum();
                (s + offset).tanh()
            }
            OuterMap::SmoothBand { index, lo, hi, width } => {
                let x = p[*index];
                logistic((x - lo) / width) * logistic((hi - x) / width)
            }
        }
    }

    /// `sup |f|`; infinite for the coordinate map.
    pub fn sup_abs(&self) -> f64 {
        match self {
            OuterMap::Coordinate { .. } => f64::INFINITY,
            OuterMap::ClippedPolynomial { clip, .. } => *clip,
            OuterMap::TanhLinear { .. } | OuterMap::SmoothBand { .. } => 1.0,
        }
    }

    fn check_arity(&self, m: usize) -> Result<()> {
        let ok = match self {
            OuterMap::Coordinate { index } => *index < m,
            OuterMap::ClippedPolynomial { index, coeffs, clip } => {
                *index < m && !coeffs.is_empty() && *clip > 0.0 && clip.is_finite()
            }
            OuterMap::TanhLinear { weights, .. } => weights.len() == m,
            OuterMap::SmoothBand { index, lo, hi, width } => *index < m && lo < hi && *width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("outer map {self:?} is invalid for {m} pairings")))
        }
    }
}

/// `φ(ξ) = f(⟨ξ, g₁⟩, …, ⟨ξ, g_m⟩)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    pub name: String,
    pub test_functions: Vec<ScalarField>,
    pub outer: OuterMap,
}

impl Observable {
    pub fn new(name: impl Into<String>, test_functions: Vec<ScalarField>, outer: OuterMap) -> Result<Self> {
        let name = name.into();
        if test_functions.is_empty() {
            return Err(Error::Config(format!("observable {name}: at least one test function required")));
        }
        let grid = test_functions[0].grid().clone();
        if test_functions.iter().any(|g| g.grid() != &grid) {
            return Err(Error::Config(format!("observable {name}: test functions on different grids")));
        }
        outer.check_arity(test_functions.len())?;
        Ok(Self {
            name,
            test_functions,
            outer,
        })
    }

    pub fn check_grid(&self, grid: &FourierGrid) -> Result<()> {
        if self.test_functions[0].grid() != grid {
            return Err(Error::Config(format!(
                "observable {} lives on N = {}, not N = {}",
                self.name,
                self.test_functions[0].grid().n(),
                grid.n()
            )));
        }
        Ok(())
    }

    pub fn pairings(&self, xi: &ScalarField) -> Result<Vec<f64>> {
        self.test_functions.iter().map(|g| pairing(xi, g)).collect()
    }

    pub fn eval(&self, xi: &ScalarField) -> Result<f64> {
        Ok(self.outer.eval(&self.pairings(xi)?))
    }

    pub fn sup_abs(&self) -> f64 {
        self.outer.sup_abs()
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_abs().is_finite()
    }
}

pub fn observable_eval(phi: &Observable, xi: &ScalarField) -> Result<f64> {
    phi.eval(xi)
}

/// Orthonormal cosine/sine basis function of wavevector `k`.
pub fn basis_function(grid: &FourierGrid, k1: i64, k2: i64, sine: bool) -> ScalarField {
    let s = std::f64::consts::SQRT_2 / (2.0 * PI);
    let (a1, a2) = (k1 as f64, k2 as f64);
    if sine {
        ScalarField::from_fn(grid, |x, y| s * (a1 * x + a2 * y).sin())
    } else {
        ScalarField::from_fn(grid, |x, y| s * (a1 * x + a2 * y).cos())
    }
}

/// Five bounded observables on the largest forced scales.
pub fn default_catalog(grid: &FourierGrid) -> Vec<Observable> {
    let c10 = basis_function(grid, 1, 0, false);
    let s10 = basis_function(grid, 1, 0, true);
    let s01 = basis_function(grid, 0, 1, true);
    let c11 = basis_function(grid, 1, 1, false);
    let c1m1 = basis_function(grid, 1, -1, false);
    let mk = |name: &str, g: Vec<ScalarField>, outer| Observable::new(name, g, outer).expect("catalog entry");
    vec![
        mk(
            "tanh_c10",
            vec![c10.clone()],
            OuterMap::TanhLinear {
                weights: vec![1.0],
                offset: 0.0,
            },
        ),
        mk(
            "band_s01",
            vec![s01.clone()],
            OuterMap::SmoothBand {
                index: 0,
                lo: -0.5,
                hi: 0.5,
                width: 0.1,
            },
        ),
        mk(
            "clip_sq_c11",
            vec![c11],
            OuterMap::ClippedPolynomial {
                index: 0,
                coeffs: vec![0.0, 0.0, 1.0],
                clip: 4.0,
            },
        ),
        mk(
            "tanh_mix",
            vec![c10, s01, c1m1],
            OuterMap::TanhLinear {
                weights: vec![0.5, -0.5, 0.3],
                offset: 0.1,
            },
        ),
        mk(
            "clip_cubic_s10",
            vec![s10],
            OuterMap::ClippedPolynomial {
                index: 0,
                coeffs: vec![0.0, 1.0, 0.0, -0.2],
                clip: 2.0,
            },
        ),
    ]
}

/// Running trapezoid-rule time average of an observable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CesaroAccumulator {
    integral: f64,
    t_start: f64,
    t_now: f64,
    last: f64,
    count: u64,
}

impl Default for CesaroAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl CesaroAccumulator {
    pub fn new() -> Self {
        Self {
            integral: 0.0,
            t_start: 0.0,
            t_now: 0.0,
            last: 0.0,
            count: 0,
        }
    }

    pub fn update(&mut self, value: f64, t: f64) -> Result<()> {
        if self.count == 0 {
            self.t_start = t;
        } else {
            if !(t > self.t_now) {
                return Err(Error::Ordering {
                    t,
                    previous: self.t_now,
                });
            }
            self.integral += 0.5 * (value + self.last) * (t - self.t_now);
        }
        self.t_now = t;
        self.last = value;
        self.count += 1;
        Ok(())
    }

    pub fn estimate(&self) -> Result<f64> {
        if self.count < 2 {
            return Err(Error::Undefined(
                "Cesaro estimate needs at least two samples".into(),
            ));
        }
        Ok(self.integral / (self.t_now - self.t_start))
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t_start, self.t_now)
    }

    /// Joins an accumulator over `[a, T]` with one over `[T, b]`.
    pub fn merge(&self, later: &CesaroAccumulator) -> Result<CesaroAccumulator> {
        if self.count == 0 {
            return Ok(*later);
        }
        if later.count == 0 {
            return Ok(*self);
        }
        if later.t_start != self.t_now {
            return Err(Error::Ordering {
                t: later.t_start,
                previous: self.t_now,
            });
        }
        Ok(CesaroAccumulator {
            integral: self.integral + later.integral,
            t_start: self.t_start,
            t_now: later.t_now,
            last: later.last,
            count: self.count + later.count - 1,
        })
    }
}

pub fn cesaro_update(acc: &CesaroAccumulator, value: f64, t: f64) -> Result<CesaroAccumulator> {
    let mut next = *acc;
    next.update(value, t)?;
    Ok(next)
}

pub fn cesaro_estimate(acc: &CesaroAccumulator) -> Result<f64> {
    acc.estimate()
}

/// Mean and batch-means standard error of a correlated series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchMeans {
    pub mean: f64,
    pub se: f64,
    pub batches: usize,
}

pub const DEFAULT_BATCHES: usize = 10;

pub fn batch_means(series: &[f64], batches: usize) -> Result<BatchMeans> {
    if batches < 2 || series.len() < batches {
        return Err(Error::Undefined(format!(
            "batch means need >= 2 batches and at least one sample per batch ({} samples, {batches} batches)",
            series.len()
        )));
    }
    let size = series.len() / batches;
    let means: Vec<f64> = series
        .chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let b = batches as f64;
    let mean = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
    Ok(BatchMeans {
        mean,
        se: (var / b).sqrt(),
        batches,
    })
}

/// Fixed-range histogram of pairing values.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            lo,
            hi,
            counts: vec![0; bins],
            below: 0,
            above: 0,
        }
    }

    pub fn add(&mut self, x: f64) {
        if x < self.lo {
            self.below += 1;
        } else if x >= self.hi {
            self.above += 1;
        } else {
            let bins = self.counts.len();
            let i = ((x - self.lo) / (self.hi - self.lo) * bins as f64) as usize;
            self.counts[i.min(bins - 1)] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.below + self.above
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }
}

/// Maps `f` over `0..count` on a pool of `workers` threads, preserving order.
pub fn par_map<T, F>(workers: usize, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| (0..count).into_par_iter().map(&f).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkovReport {
    /// Mean of `φ(ξ(t+s))` over full paths.
    pub lhs: f64,
    /// Mean over outer paths of the inner estimate of `(P_s φ)(ξ(t))`.
    pub rhs: f64,
    pub se: f64,
    pub z_score: f64,
    pub m_outer: usize,
    pub m_inner: usize,
}

fn sample_mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo check of `E[φ(ξ(t+s))] = E[(P_s φ)(ξ(t))]`.
///
/// Outer path `i` runs on its own stream to `t` and on to `t+s` (the left
/// side). From the frozen state `ξ_i(t)`, `m_inner` continuations with fresh
/// streams estimate `(P_s φ)(ξ_i(t))` (the right side).
#[allow(clippy::too_many_arguments)]
pub fn markov_semigroup_test(
    chi: &ScalarField,
    cfg: &SimConfig,
    t: f64,
    s: f64,
    phi: &Observable,
    m_outer: usize,
    m_inner: usize,
    workers: usize,
) -> Result<MarkovReport> {
    if !(t > 0.0) || !(s >= 0.0) {
        return Err(Error::Domain(format!(
            "horizons must satisfy t > 0 and s >= 0 (t = {t}, s = {s})"
        )));
    }
    if m_outer < 2 || m_inner < 2 {
        return Err(Error::Domain(format!(
            "M_outer and M_inner must be >= 2 (got {m_outer}, {m_inner})"
        )));
    }
    phi.check_grid(&cfg.grid)?;
    cfg.validate()?;
    let t_steps = steps_for(t, cfg.dt)?;
    let s_steps = steps_for(s, cfg.dt)?;

    if cfg.spectrum.is_zero() {
        let mut integ = Integrator::new(cfg)?;
        let mut state = TrajectoryState::new(chi, cfg)?;
        advance(&mut state, &mut integ, t_steps + s_steps)?;
        let v = phi.eval(&state.xi)?;
        return Ok(MarkovReport {
            lhs: v,
            rhs: v,
            se: 0.0,
            z_score: 0.0,
            m_outer: 1,
            m_inner: 1,
        });
    }

    let pairs = par_map(workers, m_outer, |i| {
        let outer_cfg = cfg.with_stream(derive_stream(cfg.stream_id, OUTER_TAG, i as u64));
        let mut integ = Integrator::new(&outer_cfg)?;
        let mut state = TrajectoryState::new(chi, &outer_cfg)?;
        advance(&mut state, &mut integ, t_steps)?;
        let frozen = state.clone();
        advance(&mut state, &mut integ, s_steps)?;
        let lhs = phi.eval(&state.xi)?;
        if s_steps == 0 {
            return Ok((lhs, lhs));
        }
        let mut acc = 0.0;
        for j in 0..m_inner {
            let mut cont = frozen.clone();
            let id = derive_stream(cfg.stream_id, INNER_TAG, (i * m_inner + j) as u64);
            cont.rng = RngStream::new(cfg.seed, id);
            advance(&mut cont, &mut integ, s_steps)?;
            acc += phi.eval(&cont.xi)?;
        }
        Ok((lhs, acc / m_inner as f64))
    })?;

    let lhs_samples: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rhs_samples: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (lhs, se_l) = sample_mean_se(&lhs_samples);
    let (rhs, se_r) = sample_mean_se(&rhs_samples);
    let se = se_l.hypot(se_r);
    let diff = (lhs - rhs).abs();
    let z_score = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(MarkovReport {
        lhs,
        rhs,
        se,
        z_score,
        m_outer,
        m_inner,
    })
}

pub const TAIL_EPS: [f64; 3] = [0.1, 0.05, 0.01];

#[derive(Clone, Debug, PartialEq)]
pub struct TailRow {
    pub time: f64,
    /// `(1−ε)`-quantiles of `|ξ(t)|_∞`, one per entry of [`TAIL_EPS`].
    pub quantiles: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailReport {
    pub rows: Vec<TailRow>,
    /// Uniform-in-time maximum of each quantile.
    pub r_eps: [f64; 3],
    /// `|ξ(t)|_∞` per sample time (outer) and trajectory (inner).
    pub samples: Vec<Vec<f64>>,
    pub warning: Option<String>,
}

/// Empirical `q`-quantile: the smallest sample with at least a fraction `q`
/// of the data at or below it.
pub fn empirical_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

/// Quantiles of `|ξ(t)|_∞` over `m` trajectories started from `ξ(t₀) = 0`.
/// Sample times are measured from `cfg.t0`.
pub fn tail_bound_report(cfg: &SimConfig, sample_times: &[f64], m: usize, workers: usize) -> Result<TailReport> {
    if m == 0 {
        return Err(Error::Domain("M must be >= 1".into()));
    }
    cfg.validate()?;
    let warning = (cfg.gamma == 0.0)
        .then(|| "gamma = 0: the uniform boundedness hypothesis (gamma > 0) is violated".to_string());
    let mut marks = sample_times
        .iter()
        .map(|&t| {
            if t < 0.0 {
                return Err(Error::Domain(format!("sample time {t} is negative")));
            }
            steps_for(t, cfg.dt)
        })
        .collect::<Result<Vec<u64>>>()?;
    let order = {
        let mut o: Vec<usize> = (0..marks.len()).collect();
        o.sort_by_key(|&i| marks[i]);
        o
    };
    marks.sort_unstable();
    let zero = ScalarField::zeros(&cfg.grid);

    let per_traj = par_map(workers, m, |i| {
        let c = cfg.with_stream(derive_stream(cfg.stream_id, TAIL_TAG, i as u64));
        let mut integ = Integrator::new(&c)?;
        let mut state = TrajectoryState::new(&zero, &c)?;
        let mut out = Vec::with_capacity(marks.len());
        let mut done = 0;
        for &mk in &marks {
            advance(&mut state, &mut integ, mk - done)?;
            done = mk;
            out.push(norm(&state.xi, NormKind::Linf)?);
        }
        Ok(out)
    })?;

    let mut samples = vec![Vec::new(); marks.len()];
    for (sorted_pos, &orig) in order.iter().enumerate() {
        samples[orig] = per_traj.iter().map(|r| r[sorted_pos]).collect();
    }
    let rows: Vec<TailRow> = sample_times
        .iter()
        .zip(&samples)
        .map(|(&time, v)| TailRow {
            time,
            quantiles: TAIL_EPS.map(|e| empirical_quantile(v, 1.0 - e)),
        })
        .collect();
    let mut r_eps = [0.0; 3];
    for row in &rows {
        for (r, q) in r_eps.iter_mut().zip(row.quantiles) {
            *r = f64::max(*r, q);
        }
    }
    Ok(TailReport {
        rows,
        r_eps,
        samples,
        warning,
    })
}

/// Cesàro averages of several observables along one run.
#[derive(Clone, Debug, PartialEq)]
pub struct CesaroRun {
    pub names: Vec<String>,
    pub horizons: Vec<f64>,
    /// `estimates[obs][h]`: average over `[t₀+burn_in, t₀+burn_in+horizons[h]]`.
    pub estimates: Vec<Vec<f64>>,
    /// Per-step values after burn-in, `series[obs][step]`.
    pub series: Vec<Vec<f64>>,
    /// Histogram of the first pairing of each observable after burn-in.
    pub histograms: Vec<Histogram>,
}

pub fn cesaro_run(
    chi: &ScalarField,
    cfg: &SimConfig,
    observables: &[Observable],
    burn_in: f64,
    horizons: &[f64],
) -> Result<CesaroRun> {
    if !(burn_in >= 0.0) {
        return Err(Error::Domain(format!("burn-in must be >= 0 (got {burn_in})")));
    }
    if horizons.iter().any(|h| !(*h > 0.0)) || horizons.is_empty() {
        return Err(Error::Domain("horizons must be positive".into()));
    }
    for o in observables {
        o.check_grid(&cfg.grid)?;
    }
    let burn_steps = steps_for(burn_in, cfg.dt)?;
    let marks = horizons
        .iter()
        .map(|&h| steps_for(h, cfg.dt).map(|s| s + burn_steps))
        .collect::<Result<Vec<u64>>>()?;
    let last = *marks.iter().max().expect("non-empty");
    let run_cfg = cfg.with_interval(cfg.t0, cfg.t0 + last as f64 * cfg.dt);

    let k = observables.len();
    let mut acc = vec![CesaroAccumulator::new(); k];
    let mut estimates = vec![vec![f64::NAN; horizons.len()]; k];
    let mut series = vec![Vec::new(); k];
    let mut histograms = vec![Histogram::new(-5.0, 5.0, 50); k];
    integrate_observed(chi, &run_cfg, |s| {
        if s.step_count < burn_steps {
            return Ok(());
        }
        for (j, o) in observables.iter().enumerate() {
            let p = o.pairings(&s.xi)?;
            let v = o.outer.eval(&p);
            histograms[j].add(p[0]);
            series[j].push(v);
            acc[j].update(v, s.time)?;
            for (h, &mk) in marks.iter().enumerate() {
                if mk == s.step_count {
                    estimates[j][h] = acc[j].estimate()?;
                }
            }
        }
        Ok(())
    })?;
    Ok(CesaroRun {
        names: observables.iter().map(|o| o.name.clone()).collect(),
        horizons: horizons.to_vec(),
        estimates,
        series,
        histograms,
    })
}

/// Decay of `|estimate(n) − estimate(2n)|` across replicated runs.
#[derive(Clone, Debug, PartialEq)]
pub struct CesaroConvergence {
    pub names: Vec<String>,
    pub ns: Vec<f64>,
    /// `mean_abs_diff[obs][i]`: replicate average of `|estimate(n_i) − estimate(2n_i)|`.
    pub mean_abs_diff: Vec<Vec<f64>>,
    pub decreasing: Vec<bool>,
    pub replicates: usize,
}

impl CesaroConvergence {
    pub fn all_decreasing(&self) -> bool {
        self.decreasing.iter().all(|d| *d)
    }
}

/// Runs `replicates` independent trajectories from `chi`, each on its own
/// stream, and averages the Cesàro increments over them.
pub fn cesaro_convergence(
    chi: &ScalarField,
    cfg: &SimConfig,
    observables: &[Observable],
    burn_in: f64,
    ns: &[f64],
    replicates: usize,
    workers: usize,
) -> Result<CesaroConvergence> {
    if replicates == 0 {
        return Err(Error::Domain("replicates must be >= 1".into()));
    }
    let mut horizons: Vec<f64> = ns.to_vec();
    horizons.extend(ns.iter().map(|n| 2.0 * n));
    let runs = par_map(workers, replicates, |r| {
        let c = cfg.with_stream(derive_stream(cfg.stream_id, CESARO_TAG, r as u64));
        let run = cesaro_run(chi, &c, observables, burn_in, &horizons)?;
        Ok(run.estimates)
    })?;
    let k = observables.len();
    let mut mean_abs_diff = vec![vec![0.0; ns.len()]; k];
    for est in &runs {
        for (j, row) in est.iter().enumerate() {
            for i in 0..ns.len() {
                mean_abs_diff[j][i] += (row[i] - row[i + ns.len()]).abs() / replicates as f64;
            }
        }
    }
    let decreasing = mean_abs_diff
        .iter()
        .map(|d| d.windows(2).all(|w| w[1] < w[0]))
        .collect();
    Ok(CesaroConvergence {
        names: observables.iter().map(|o| o.name.clone()).collect(),
        ns: ns.to_vec(),
        mean_abs_diff,
        decreasing,
        replicates,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedAgreement {
    pub name: String,
    pub a: BatchMeans,
    pub b: BatchMeans,
    /// `|mean_a − mean_b| / sqrt(se_a² + se_b²)`.
    pub z: f64,
}

/// Compares Cesàro estimates from two runs with different seeds using
/// batch-means standard errors.
pub fn seed_agreement(
    chi: &ScalarField,
    cfg_a: &SimConfig,
    cfg_b: &SimConfig,
    observables: &[Observable],
    burn_in: f64,
    horizon: f64,
    batches: usize,
) -> Result<Vec<SeedAgreement>> {
    if cfg_a.seed == cfg_b.seed && cfg_a.stream_id == cfg_b.stream_id {
        return Err(Error::Config("seed agreement needs two distinct noise streams".into()));
    }
    let ra = cesaro_run(chi, cfg_a, observables, burn_in, &[horizon])?;
    let rb = cesaro_run(chi, cfg_b, observables, burn_in, &[horizon])?;
    agreement_of_runs(&ra, &rb, batches)
}

/// Batch-means comparison of two finished runs over the same observables.
pub fn agreement_of_runs(ra: &CesaroRun, rb: &CesaroRun, batches: usize) -> Result<Vec<SeedAgreement>> {
    if ra.names != rb.names {
        return Err(Error::Config("runs record different observables".into()));
    }
    ra.names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let a = batch_means(&ra.series[j], batches)?;
            let b = batch_means(&rb.series[j], batches)?;
            let se = a.se.hypot(b.se);
            Ok(SeedAgreement {
                name: name.clone(),
                a,
                b,
                z: if se > 0.0 { (a.mean - b.mean).abs() / se } else { 0.0 },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> FourierGrid {
        FourierGrid::new(32).unwrap()
    }

    #[test]
    fn identity_observable_equals_pairing() {
        let g = grid();
        let s = ScalarField::from_fn(&g, |x, _| x.sin());
        let phi = Observable::new("id", vec![s.clone()], OuterMap::Coordinate { index: 0 }).unwrap();
        assert_relative_eq!(observable_eval(&phi, &s).unwrap(), 2.0 * PI * PI, max_relative = 1e-12);
        assert!(!phi.is_bounded());
    }

    #[test]
    fn odd_maps_vanish_at_zero() {
        let g = grid();
        let zero = ScalarField::zeros(&g);
        for o in default_catalog(&g) {
            let v = o.eval(&zero).unwrap();
            assert!(v.abs() <= o.sup_abs());
            if o.outer.eval(&vec![0.0; o.test_functions.len()]) == 0.0 {
                assert_eq!(v, 0.0);
            }
        }
        let tanh = &default_catalog(&g)[0];
        assert_eq!(tanh.eval(&zero).unwrap(), 0.0);
    }

    #[test]
    fn tanh_is_bounded() {
        let g = grid();
        let big = ScalarField::from_fn(&g, |x, y| 1e4 * (x.cos() + y.sin()));
        for o in default_catalog(&g) {
            assert!(o.eval(&big).unwrap().abs() <= o.sup_abs());
        }
    }

    #[test]
    fn observable_validation() {
        let g = grid();
        let f = basis_function(&g, 1, 0, false);
        assert!(Observable::new("x", vec![], OuterMap::Coordinate { index: 0 }).is_err());
        assert!(Observable::new("x", vec![f.clone()], OuterMap::Coordinate { index: 1 }).is_err());
        assert!(Observable::new(
            "x",
            vec![f.clone()],
            OuterMap::TanhLinear {
                weights: vec![1.0, 2.0],
                offset: 0.0
            }
        )
        .is_err());
        let other = basis_function(&FourierGrid::new(16).unwrap(), 1, 0, false);
        let phi = Observable::new("x", vec![f], OuterMap::Coordinate { index: 0 }).unwrap();
        assert!(phi.eval(&other).is_err());
    }

    #[test]
    fn basis_functions_are_orthonormal() {
        let g = grid();
        let a = basis_function(&g, 2, -1, false);
        let b = basis_function(&g, 2, -1, true);
        assert_relative_eq!(pairing(&a, &a).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(pairing(&b, &b).unwrap(), 1.0, max_relative = 1e-12);
        assert!(pairing(&a, &b).unwrap().abs() < 1e-14);
        let mut f = ScalarField::zeros(&g);
        f.set_real_mode(2, -1, 0.3, -0.7).unwrap();
        assert_relative_eq!(pairing(&f, &a).unwrap(), 0.3, max_relative = 1e-12);
        assert_relative_eq!(pairing(&f, &b).unwrap(), -0.7, max_relative = 1e-12);
    }

    #[test]
    fn cesaro_constant_and_linear() {
        let mut acc = CesaroAccumulator::new();
        for i in 0..=100 {
            acc.update(3.5, i as f64 * 0.1).unwrap();
        }
        assert_relative_eq!(acc.estimate().unwrap(), 3.5, max_relative = 1e-14);

        let mut acc = CesaroAccumulator::new();
        for i in 0..=1000 {
            let t = i as f64 * 1e-3;
            acc.update(t, t).unwrap();
        }
        assert!((acc.estimate().unwrap() - 0.5).abs() <= 1e-6);
    }

    #[test]
    fn cesaro_errors() {
        let mut acc = CesaroAccumulator::new();
        assert!(matches!(acc.estimate(), Err(Error::Undefined(_))));
        acc.update(1.0, 0.0).unwrap();
        assert!(matches!(acc.estimate(), Err(Error::Undefined(_))));
        acc.update(1.0, 1.0).unwrap();
        assert!(matches!(acc.update(1.0, 1.0), Err(Error::Ordering { .. })));
        assert!(matches!(acc.update(1.0, 0.5), Err(Error::Ordering { .. })));
    }

    #[test]
    fn cesaro_merge_matches_single_run() {
        let f = |t: f64| (3.0 * t).sin() + 0.2 * t * t;
        let dt = 0.01;
        let mut full = CesaroAccumulator::new();
        let mut first = CesaroAccumulator::new();
        let mut second = CesaroAccumulator::new();
        for i in 0..=400 {
            let t = i as f64 * dt;
            full.update(f(t), t).unwrap();
            if i <= 200 {
                first.update(f(t), t).unwrap();
            }
            if i >= 200 {
                second.update(f(t), t).unwrap();
            }
        }
        let merged = first.merge(&second).unwrap();
        assert!((merged.estimate().unwrap() - full.estimate().unwrap()).abs() <= 1e-12);
        assert_eq!(merged.count(), full.count());
        assert!(second.merge(&first).is_err());
    }

    #[test]
    fn batch_means_of_iid_series() {
        let mut rng = RngStream::new(4, 4);
        let x: Vec<f64> = (0..10_000).map(|_| rng.standard_normal()).collect();
        let bm = batch_means(&x, 10).unwrap();
        assert!(bm.mean.abs() < 4.0 * 0.01);
        assert!(bm.se > 0.004 && bm.se < 0.02, "{}", bm.se);
        assert!(batch_means(&x[..5], 10).is_err());
    }

    #[test]
    fn quantile_definition() {
        let v: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        assert_eq!(empirical_quantile(&v, 0.9), 9.0);
        assert_eq!(empirical_quantile(&v, 0.95), 10.0);
        assert_eq!(empirical_quantile(&v, 0.0), 1.0);
    }

    #[test]
    fn histogram_counts() {
        let mut h = Histogram::new(-1.0, 1.0, 4);
        for x in [-2.0, -0.9, -0.1, 0.0, 0.6, 1.0] {
            h.add(x);
        }
        assert_eq!(h.counts, vec![1, 1, 1, 1]);
        assert_eq!((h.below, h.above), (1, 1));
        assert_eq!(h.total(), 6);
        assert_eq!(h.bin_edges(1), (-0.5, 0.0));
    }

    #[test]
    fn par_map_is_ordered_and_worker_independent() {
        let a = par_map(1, 20, |i| Ok(i * i)).unwrap();
        let b = par_map(3, 20, |i| Ok(i * i)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
        let e: Result<Vec<usize>> = par_map(2, 5, |i| {
            if i == 3 {
                Err(Error::Domain("x".into()))
            } else {
                Ok(i)
            }
        });
        assert!(e.is_err());
    }

    fn small_cfg() -> SimConfig {
        let mut c = SimConfig::new(FourierGrid::new(32).unwrap());
        c.dt = 0.02;
        c
    }

    #[test]
    fn markov_deterministic_and_degenerate_cases() {
        let mut c = small_cfg();
        let phi = default_catalog(&c.grid)[3].clone();
        let chi = ScalarField::from_fn(&c.grid, |x, y| (x + y).sin() + 0.5 * (2.0 * y).cos());
        c.spectrum.amplitude = 0.0;
        let r = markov_semigroup_test(&chi, &c, 0.2, 0.2, &phi, 4, 4, 1).unwrap();
        assert_eq!(r.lhs, r.rhs);
        assert_eq!(r.z_score, 0.0);

        let c = small_cfg();
        let r = markov_semigroup_test(&chi, &c, 0.2, 0.0, &phi, 4, 3, 1).unwrap();
        assert_eq!(r.lhs, r.rhs);

        assert!(markov_semigroup_test(&chi, &c, 0.0, 1.0, &phi, 4, 4, 1).is_err());
        assert!(markov_semigroup_test(&chi, &c, 1.0, -1.0, &phi, 4, 4, 1).is_err());
        assert!(markov_semigroup_test(&chi, &c, 1.0, 1.0, &phi, 1, 4, 1).is_err());
    }

    #[test]
    fn tail_report_trivial_cases() {
        let mut c = small_cfg();
        c.spectrum.amplitude = 0.0;
        let r = tail_bound_report(&c, &[0.0, 0.2, 0.4], 3, 1).unwrap();
        assert!(r.rows.iter().all(|row| row.quantiles == [0.0; 3]));
        assert!(r.warning.is_none());

        let mut c = small_cfg();
        c.gamma = 0.0;
        let r = tail_bound_report(&c, &[0.4, 0.0], 5, 2).unwrap();
        assert_eq!(r.rows[1].quantiles, [0.0; 3]);
        assert!(r.rows[0].quantiles[0] > 0.0);
        assert!(r.warning.is_some());
    }

    #[test]
    fn tail_report_worker_independent() {
        let c = small_cfg();
        let a = tail_bound_report(&c, &[0.2, 0.4], 4, 1).unwrap();
        let b = tail_bound_report(&c, &[0.2, 0.4], 4, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cesaro_run_marks() {
        let c = small_cfg();
        let obs = default_catalog(&c.grid);
        let r = cesaro_run(&ScalarField::zeros(&c.grid), &c, &obs, 0.2, &[0.2, 0.4]).unwrap();
        assert_eq!(r.estimates.len(), 5);
        assert!(r.estimates.iter().flatten().all(|v| v.is_finite()));
        // 0.4 / 0.02 steps after burn-in plus the starting sample
        assert_eq!(r.series[0].len(), 21);
        assert_eq!(r.histograms[0].total(), 21);
    }
}
