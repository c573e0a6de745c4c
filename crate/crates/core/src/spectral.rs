//! Fourier pseudo-spectral representation of mean-zero fields on the periodic
//! square `[0, 2π)²`.
//!
//! Grid values are stored row-major with the first index along `x₁`:
//! `values[i * n + j] = f(2πi/n, 2πj/n)`. Spectral coefficients follow the
//! convention `f(x) = Σ_k f̂_k e^{i k·x}`, i.e. the forward transform is
//! normalized by `1/n²`. Only the half plane `k₂ ≥ 0` is stored, laid out
//! column-major so that each `k₂` column of `n` rows is contiguous:
//! `spec[k₂ * n + row(k₁)]`.
//!
//! Derivatives at the Nyquist wavenumber `n/2` are set to zero, as usual for
//! real-valued collocation.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative tolerance for the mean-zero invariant.
pub const MEAN_ZERO_TOL: f64 = 1e-12;

pub const MIN_GRID: usize = 16;
pub const MAX_GRID: usize = 4096;

struct Tables {
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `k₁` and `k₂` per stored coefficient, zero at Nyquist.
    k1: Vec<f64>,
    k2: Vec<f64>,
    /// `|k|²` per stored coefficient (true wavenumbers, Nyquist included).
    ksq: Vec<f64>,
    /// Retained under the 2/3 rule.
    retained: Vec<bool>,
    /// Multiplicity of each stored coefficient in full-lattice sums.
    weight: Vec<f64>,
}

/// Periodic collocation grid with `n × n` nodes on `[0, 2π)²`.
#[derive(Clone)]
pub struct FourierGrid {
    n: usize,
    kmax: usize,
    tables: Arc<Tables>,
}

impl PartialEq for FourierGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl Eq for FourierGrid {}

impl fmt::Debug for FourierGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierGrid")
            .field("n", &self.n)
            .field("kmax_dealias", &self.kmax)
            .finish()
    }
}

impl FourierGrid {
    /// Builds a grid with `n` nodes per axis and 2/3-rule cutoff `floor(n/3)`.
    pub fn new(n: usize) -> Result<Self> {
        if !n.is_multiple_of(2) {
            return Err(Error::Config(format!("N must be even (got {n})")));
        }
        if !(MIN_GRID..=MAX_GRID).contains(&n) {
            return Err(Error::Config(format!(
                "N must lie in [{MIN_GRID}, {MAX_GRID}] (got {n})"
            )));
        }
        let kmax = n / 3;
        let m = n / 2 + 1;
        let mut real_planner = RealFftPlanner::<f64>::new();
        let mut planner = FftPlanner::<f64>::new();

        let len = n * m;
        let mut k1 = vec![0.0; len];
        let mut k2 = vec![0.0; len];
        let mut ksq = vec![0.0; len];
        let mut retained = vec![false; len];
        let mut weight = vec![0.0; len];
        let half = (n / 2) as i64;
        for c in 0..m {
            for r in 0..n {
                let idx = c * n + r;
                let kr = wavenumber(r, n);
                let kc = c as i64;
                ksq[idx] = (kr * kr + kc * kc) as f64;
                k1[idx] = if kr.abs() == half { 0.0 } else { kr as f64 };
                k2[idx] = if kc == half { 0.0 } else { kc as f64 };
                retained[idx] = kr.unsigned_abs() as usize <= kmax && (kc as usize) <= kmax;
                weight[idx] = if c == 0 || c == m - 1 { 1.0 } else { 2.0 };
            }
        }

        let tables = Tables {
            r2c: real_planner.plan_fft_forward(n),
            c2r: real_planner.plan_fft_inverse(n),
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            k1,
            k2,
            ksq,
            retained,
            weight,
        };
        Ok(Self {
            n,
            kmax,
            tables: Arc::new(tables),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Largest retained wavenumber per axis under the 2/3 rule.
    pub fn kmax_dealias(&self) -> usize {
        self.kmax
    }

    /// Node spacing `2π/n`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    /// Coordinate of node `j` along either axis.
    pub fn node(&self, j: usize) -> f64 {
        self.spacing() * j as f64
    }

    /// Number of stored `k₂` columns, `n/2 + 1`.
    pub fn columns(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn spectral_len(&self) -> usize {
        self.n * self.columns()
    }

    pub fn grid_len(&self) -> usize {
        self.n * self.n
    }

    /// Storage index of `(k₁, k₂)` and whether the stored value must be conjugated.
    pub fn locate(&self, k1: i64, k2: i64) -> Option<(usize, bool)> {
        let half = (self.n / 2) as i64;
        if k1.abs() > half || k2.abs() > half {
            return None;
        }
        let (k1, k2, conj) = if k2 < 0 { (-k1, -k2, true) } else { (k1, k2, false) };
        let row = k1.rem_euclid(self.n as i64) as usize;
        Some((k2 as usize * self.n + row, conj))
    }

    /// Wavevector `(k₁, k₂)` of a stored coefficient.
    pub fn wavevector(&self, idx: usize) -> (i64, i64) {
        ((wavenumber(idx % self.n, self.n)), (idx / self.n) as i64)
    }

    pub(crate) fn ksq(&self) -> &[f64] {
        &self.tables.ksq
    }

    pub(crate) fn k1(&self) -> &[f64] {
        &self.tables.k1
    }

    pub(crate) fn k2(&self) -> &[f64] {
        &self.tables.k2
    }

    pub(crate) fn retained(&self) -> &[bool] {
        &self.tables.retained
    }

    pub(crate) fn weight(&self) -> &[f64] {
        &self.tables.weight
    }

    pub fn check_same(&self, other: &FourierGrid) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Config(format!(
                "grid mismatch: N = {} vs N = {}",
                self.n, other.n
            )));
        }
        Ok(())
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self)
    }

    /// Grid values to spectral coefficients.
    pub fn forward(&self, values: &[f64], out: &mut [Complex64], ws: &mut Workspace) {
        let n = self.n;
        let m = self.columns();
        debug_assert_eq!(values.len(), n * n);
        debug_assert_eq!(out.len(), n * m);
        let t = &self.tables;
        for i in 0..n {
            ws.row_r.copy_from_slice(&values[i * n..(i + 1) * n]);
            t.r2c
                .process_with_scratch(&mut ws.row_r, &mut ws.row_c, &mut ws.scratch)
                .expect("buffer sizes fixed by the grid");
            for (c, v) in ws.row_c.iter().enumerate() {
                out[c * n + i] = *v;
            }
        }
        t.fwd.process_with_scratch(out, &mut ws.scratch);
        let scale = 1.0 / (n * n) as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        enforce_symmetry(out, n);
    }

    /// Spectral coefficients to grid values. Only the first `cols` columns of
    /// `spec` are read; the rest are treated as zero.
    pub fn inverse_cols(
        &self,
        spec: &[Complex64],
        out: &mut [f64],
        ws: &mut Workspace,
        cols: usize,
    ) {
        let n = self.n;
        let m = self.columns();
        let cols = cols.min(m);
        debug_assert_eq!(out.len(), n * n);
        let t = &self.tables;
        let work = &mut ws.work[..cols * n];
        work.copy_from_slice(&spec[..cols * n]);
        if cols > 0 {
            t.inv.process_with_scratch(work, &mut ws.scratch);
        }
        for i in 0..n {
            for c in 0..cols {
                ws.row_c[c] = work[c * n + i];
            }
            for v in ws.row_c[cols..].iter_mut() {
                *v = ZERO;
            }
            ws.row_c[0].im = 0.0;
            ws.row_c[m - 1].im = 0.0;
            // Imaginary parts at DC/Nyquist were zeroed, so only size errors remain.
            let _ = t
                .c2r
                .process_with_scratch(&mut ws.row_c, &mut out[i * n..(i + 1) * n], &mut ws.scratch);
        }
    }

    pub fn inverse(&self, spec: &[Complex64], out: &mut [f64], ws: &mut Workspace) {
        self.inverse_cols(spec, out, ws, self.columns());
    }
}

fn wavenumber(r: usize, n: usize) -> i64 {
    if r <= n / 2 {
        r as i64
    } else {
        r as i64 - n as i64
    }
}

/// Makes the self-conjugate columns `k₂ = 0` and `k₂ = n/2` exactly
/// Hermitian in `k₁`.
fn enforce_symmetry(spec: &mut [Complex64], n: usize) {
    let m = n / 2 + 1;
    for c in [0, m - 1] {
        let col = &mut spec[c * n..(c + 1) * n];
        col[0].im = 0.0;
        col[n / 2].im = 0.0;
        for r in 1..n / 2 {
            let avg = (col[r] + col[n - r].conj()) * 0.5;
            col[r] = avg;
            col[n - r] = avg.conj();
        }
    }
}

/// Scratch buffers for transforms on one grid. Not shared between threads.
pub struct Workspace {
    work: Vec<Complex64>,
    row_c: Vec<Complex64>,
    row_r: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl Workspace {
    fn new(grid: &FourierGrid) -> Self {
        let t = &grid.tables;
        let scratch_len = t
            .r2c
            .get_scratch_len()
            .max(t.c2r.get_scratch_len())
            .max(t.fwd.get_inplace_scratch_len())
            .max(t.inv.get_inplace_scratch_len());
        Self {
            work: vec![ZERO; grid.spectral_len()],
            row_c: vec![ZERO; grid.columns()],
            row_r: vec![0.0; grid.n()],
            scratch: vec![ZERO; scratch_len],
        }
    }
}

/// A real scalar field on the torus, held by its Fourier coefficients.
///
/// The grid view is produced on demand by [`ScalarField::values`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: FourierGrid,
    spec: Vec<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: &FourierGrid) -> Self {
        Self {
            grid: grid.clone(),
            spec: vec![ZERO; grid.spectral_len()],
        }
    }

    pub fn from_values(grid: &FourierGrid, values: &[f64]) -> Result<Self> {
        if values.len() != grid.grid_len() {
            return Err(Error::Config(format!(
                "expected {} grid values, got {}",
                grid.grid_len(),
                values.len()
            )));
        }
        let mut field = Self::zeros(grid);
        let mut ws = grid.workspace();
        grid.forward(values, &mut field.spec, &mut ws);
        Ok(field)
    }

    /// Samples `f(x₁, x₂)` at the grid nodes.
    pub fn from_fn(grid: &FourierGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(grid.node(i), grid.node(j)));
            }
        }
        Self::from_values(grid, &values).expect("length matches grid")
    }

    /// Builds a field from stored half-plane coefficients; the self-conjugate
    /// columns are symmetrized.
    pub fn from_spectral(grid: &FourierGrid, mut spec: Vec<Complex64>) -> Result<Self> {
        if spec.len() != grid.spectral_len() {
            return Err(Error::Config(format!(
                "expected {} spectral coefficients, got {}",
                grid.spectral_len(),
                spec.len()
            )));
        }
        enforce_symmetry(&mut spec, grid.n());
        Ok(Self {
            grid: grid.clone(),
            spec,
        })
    }

    pub fn grid(&self) -> &FourierGrid {
        &self.grid
    }

    pub fn spectral(&self) -> &[Complex64] {
        &self.spec
    }

    pub(crate) fn spectral_mut(&mut self) -> &mut [Complex64] {
        &mut self.spec
    }

    /// Grid values, row-major with the first index along `x₁`.
    pub fn values(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.grid_len()];
        let mut ws = self.grid.workspace();
        self.grid.inverse(&self.spec, &mut out, &mut ws);
        out
    }

    /// Coefficient `f̂_k` for any `k` with `|k|_∞ ≤ n/2`; zero outside.
    pub fn coefficient(&self, k1: i64, k2: i64) -> Complex64 {
        match self.grid.locate(k1, k2) {
            Some((idx, false)) => self.spec[idx],
            Some((idx, true)) => self.spec[idx].conj(),
            None => ZERO,
        }
    }

    /// Sets `f̂_k = c` and `f̂_{-k} = conj(c)`.
    pub fn set_coefficient(&mut self, k1: i64, k2: i64, c: Complex64) -> Result<()> {
        let (idx, conj) = self.grid.locate(k1, k2).ok_or_else(|| {
            Error::Config(format!("mode ({k1}, {k2}) not representable on this grid"))
        })?;
        let v = if conj { c.conj() } else { c };
        self.spec[idx] = v;
        let n = self.grid.n();
        let col = idx / n;
        if col == 0 || col == n / 2 {
            let row = idx % n;
            let mirror = col * n + (n - row) % n;
            if mirror == idx {
                self.spec[idx].im = 0.0;
            } else {
                self.spec[mirror] = v.conj();
            }
        }
        Ok(())
    }

    /// Coefficients `(a, b)` of `k` in the orthonormal real basis
    /// `{√2/(2π) cos(k·x), √2/(2π) sin(k·x)}`.
    pub fn real_mode(&self, k1: i64, k2: i64) -> (f64, f64) {
        let c = self.coefficient(k1, k2);
        let s = 2.0 * std::f64::consts::SQRT_2 * PI;
        (s * c.re, -s * c.im)
    }

    pub fn set_real_mode(&mut self, k1: i64, k2: i64, a: f64, b: f64) -> Result<()> {
        let s = std::f64::consts::SQRT_2 / (4.0 * PI);
        self.set_coefficient(k1, k2, Complex64::new(s * a, -s * b))
    }

    /// Spatial mean.
    pub fn mean(&self) -> f64 {
        self.spec[0].re
    }

    pub fn max_abs(&self) -> f64 {
        self.values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `|mean| ≤ 1e-12 · max|f|` on the grid.
    pub fn is_mean_zero(&self) -> bool {
        let mean = self.mean().abs();
        mean == 0.0 || mean <= MEAN_ZERO_TOL * self.max_abs()
    }

    pub fn remove_mean(&mut self) {
        self.spec[0] = ZERO;
    }

    /// Zeroes every mode with `|k|_∞ > kmax`.
    pub fn truncate(&mut self, kmax: usize) {
        let n = self.grid.n();
        for (idx, v) in self.spec.iter_mut().enumerate() {
            let (k1, k2) = (wavenumber(idx % n, n), idx / n);
            if k1.unsigned_abs() as usize > kmax || k2 > kmax {
                *v = ZERO;
            }
        }
    }

    /// Applies the 2/3 rule.
    pub fn dealias(&mut self) {
        for (v, keep) in self.spec.iter_mut().zip(self.grid.retained()) {
            if !keep {
                *v = ZERO;
            }
        }
    }

    pub fn is_dealiased(&self) -> bool {
        self.spec
            .iter()
            .zip(self.grid.retained())
            .all(|(v, keep)| *keep || *v == ZERO)
    }

    /// Hermitian symmetry of the self-conjugate columns, checked exactly.
    pub fn is_conjugate_symmetric(&self) -> bool {
        let n = self.grid.n();
        [0, n / 2].iter().all(|&c| {
            let col = &self.spec[c * n..(c + 1) * n];
            col[0].im == 0.0
                && col[n / 2].im == 0.0
                && (1..n / 2).all(|r| col[r] == col[n - r].conj())
        })
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &ScalarField) -> Result<()> {
        self.grid.check_same(&x.grid)?;
        for (s, v) in self.spec.iter_mut().zip(&x.spec) {
            *s += v * a;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.spec.iter_mut().for_each(|v| *v *= s);
    }

    /// `Σ_k |f̂_k|²` over the full lattice.
    pub fn spectral_energy(&self) -> f64 {
        self.spec
            .iter()
            .zip(self.grid.weight())
            .map(|(v, w)| w * v.norm_sqr())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.spec.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        let mut out = self.clone();
        out.axpy(1.0, rhs).expect("fields on different grids");
        out
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs).expect("fields on different grids");
        out
    }
}

impl Mul<f64> for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: f64) -> ScalarField {
        let mut out = self.clone();
        out.scale(rhs);
        out
    }
}

impl Neg for &ScalarField {
    type Output = ScalarField;
    fn neg(self) -> ScalarField {
        self * -1.0
    }
}

/// A divergence-free, mean-zero velocity `u = (u₁, u₂)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub u1: ScalarField,
    pub u2: ScalarField,
}

impl VelocityField {
    pub fn grid(&self) -> &FourierGrid {
        self.u1.grid()
    }

    /// Largest `|k·û_k|` over all stored modes.
    pub fn divergence_residual(&self) -> f64 {
        let g = self.grid();
        self.u1
            .spectral()
            .iter()
            .zip(self.u2.spectral())
            .enumerate()
            .map(|(idx, (a, b))| (a * g.k1()[idx] + b * g.k2()[idx]).norm())
            .fold(0.0, f64::max)
    }

    /// Largest `|û_k|` over both components.
    pub fn max_coefficient(&self) -> f64 {
        self.u1
            .spectral()
            .iter()
            .chain(self.u2.spectral())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Pointwise maximum of `|u|` on the grid.
    pub fn max_speed(&self) -> f64 {
        let a = self.u1.values();
        let b = self.u2.values();
        a.iter()
            .zip(&b)
            .map(|(x, y)| x.hypot(*y))
            .fold(0.0, f64::max)
    }

    /// `|u|₂`, the L² norm of the vector field.
    pub fn l2_norm(&self) -> f64 {
        (2.0 * PI) * (self.u1.spectral_energy() + self.u2.spectral_energy()).sqrt()
    }
}

fn check_mean_zero(xi: &ScalarField) -> Result<()> {
    if !xi.is_mean_zero() {
        return Err(Error::Invariant(format!(
            "field must be mean-zero (mean = {:.3e})",
            xi.mean()
        )));
    }
    Ok(())
}

/// Spectral gradient `(∂₁f, ∂₂f)`.
pub fn gradient(f: &ScalarField) -> (ScalarField, ScalarField) {
    let g = f.grid();
    let mut d1 = ScalarField::zeros(g);
    let mut d2 = ScalarField::zeros(g);
    for (idx, v) in f.spectral().iter().enumerate() {
        d1.spec[idx] = I * g.k1()[idx] * v;
        d2.spec[idx] = I * g.k2()[idx] * v;
    }
    (d1, d2)
}

/// Scalar curl `∂₁u₂ − ∂₂u₁`.
pub fn curl(u: &VelocityField) -> ScalarField {
    let g = u.grid();
    let mut out = ScalarField::zeros(g);
    for idx in 0..g.spectral_len() {
        out.spec[idx] = I * (g.k1()[idx] * u.u2.spec[idx] - g.k2()[idx] * u.u1.spec[idx]);
    }
    out
}

/// Velocity from vorticity, `u = ∇⊥ψ` with `Δψ = ξ`, so `û_k = −i k⊥ ξ̂_k / |k|²`
/// with `k⊥ = (−k₂, k₁)`.
pub fn biot_savart(xi: &ScalarField) -> Result<VelocityField> {
    check_mean_zero(xi)?;
    let g = xi.grid();
    let mut u1 = ScalarField::zeros(g);
    let mut u2 = ScalarField::zeros(g);
    biot_savart_spectral(g, xi.spectral(), &mut u1.spec, &mut u2.spec);
    Ok(VelocityField { u1, u2 })
}

pub(crate) fn biot_savart_spectral(
    g: &FourierGrid,
    xi: &[Complex64],
    u1: &mut [Complex64],
    u2: &mut [Complex64],
) {
    let (k1, k2, ksq) = (g.k1(), g.k2(), g.ksq());
    for idx in 0..xi.len() {
        if ksq[idx] == 0.0 {
            u1[idx] = ZERO;
            u2[idx] = ZERO;
            continue;
        }
        let psi = -xi[idx] / ksq[idx];
        u1[idx] = -I * k2[idx] * psi;
        u2[idx] = I * k1[idx] * psi;
    }
}

/// Dealiased pseudo-spectral `u·∇ξ`. Both inputs are first restricted to
/// `|k|_∞ ≤ kmax_dealias`; the product is formed on the grid and truncated.
pub fn advection(xi: &ScalarField, u: &VelocityField) -> Result<ScalarField> {
    let g = xi.grid();
    g.check_same(u.grid())?;
    let mut xi_t = xi.clone();
    xi_t.dealias();
    let mut u1 = u.u1.clone();
    let mut u2 = u.u2.clone();
    u1.dealias();
    u2.dealias();
    let (d1, d2) = gradient(&xi_t);
    let mut ws = g.workspace();
    let len = g.grid_len();
    let mut a = vec![0.0; len];
    let mut b = vec![0.0; len];
    let mut prod = vec![0.0; len];
    g.inverse(&u1.spec, &mut a, &mut ws);
    g.inverse(&d1.spec, &mut b, &mut ws);
    for (p, (x, y)) in prod.iter_mut().zip(a.iter().zip(&b)) {
        *p = x * y;
    }
    g.inverse(&u2.spec, &mut a, &mut ws);
    g.inverse(&d2.spec, &mut b, &mut ws);
    for (p, (x, y)) in prod.iter_mut().zip(a.iter().zip(&b)) {
        *p += x * y;
    }
    let mut out = ScalarField::zeros(g);
    g.forward(&prod, &mut out.spec, &mut ws);
    out.dealias();
    out.remove_mean();
    Ok(out)
}

/// Reusable kernel for the transport tendency `−P[(K★ω)·∇ω]` of a dealiased
/// vorticity `ω`. Holds its own scratch so repeated calls do not allocate.
pub struct TransportKernel {
    grid: FourierGrid,
    ws: Workspace,
    spec_a: Vec<Complex64>,
    spec_b: Vec<Complex64>,
    grid_a: Vec<f64>,
    grid_b: Vec<f64>,
    grid_c: Vec<f64>,
    prod: Vec<f64>,
}

impl TransportKernel {
    pub fn new(grid: &FourierGrid) -> Self {
        let sl = grid.spectral_len();
        let gl = grid.grid_len();
        Self {
            grid: grid.clone(),
            ws: grid.workspace(),
            spec_a: vec![ZERO; sl],
            spec_b: vec![ZERO; sl],
            grid_a: vec![0.0; gl],
            grid_b: vec![0.0; gl],
            grid_c: vec![0.0; gl],
            prod: vec![0.0; gl],
        }
    }

    /// Writes `−P[(K★ω)·∇ω]` into `out` and returns `max|K★ω|` on the grid.
    /// `omega` must already be dealiased.
    pub fn tendency(&mut self, omega: &[Complex64], out: &mut [Complex64]) -> f64 {
        let g = &self.grid;
        let cols = g.kmax_dealias() + 1;
        let (k1, k2) = (g.k1(), g.k2());
        biot_savart_spectral(g, omega, &mut self.spec_a, &mut self.spec_b);
        g.inverse_cols(&self.spec_a, &mut self.grid_a, &mut self.ws, cols);
        g.inverse_cols(&self.spec_b, &mut self.grid_b, &mut self.ws, cols);
        let mut max_sq: f64 = 0.0;
        for (x, y) in self.grid_a.iter().zip(&self.grid_b) {
            max_sq = max_sq.max(x * x + y * y);
        }
        for idx in 0..omega.len() {
            self.spec_a[idx] = I * k1[idx] * omega[idx];
        }
        g.inverse_cols(&self.spec_a, &mut self.grid_c, &mut self.ws, cols);
        for ((p, u), d) in self.prod.iter_mut().zip(&self.grid_a).zip(&self.grid_c) {
            *p = u * d;
        }
        for idx in 0..omega.len() {
            self.spec_a[idx] = I * k2[idx] * omega[idx];
        }
        g.inverse_cols(&self.spec_a, &mut self.grid_c, &mut self.ws, cols);
        for ((p, u), d) in self.prod.iter_mut().zip(&self.grid_b).zip(&self.grid_c) {
            *p += u * d;
        }
        g.forward(&self.prod, out, &mut self.ws);
        for (v, keep) in out.iter_mut().zip(g.retained()) {
            *v = if *keep { -*v } else { ZERO };
        }
        out[0] = ZERO;
        max_sq.sqrt()
    }
}

/// Norms available through [`norm`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    /// `(∫|f|^p)^{1/p}` by rectangle-rule quadrature.
    Lp(f64),
    /// Grid maximum of `|f|`.
    Linf,
    /// `(Σ_k |k|^{2a} |f̂_k|²)^{1/2}` in the orthonormal basis, so that
    /// `Sobolev(0)` coincides with `Lp(2)`.
    Sobolev(f64),
    /// `Lp` norm of `|∇f|`.
    GradLp(f64),
}

pub fn norm(f: &ScalarField, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::Lp(p) => {
            check_p(p)?;
            Ok(lp_of_values(&f.values(), p, f.grid()))
        }
        NormKind::Linf => Ok(f.max_abs()),
        NormKind::Sobolev(a) => {
            if !(a >= 0.0) {
                return Err(Error::Domain(format!("Sobolev index must be >= 0 (got {a})")));
            }
            Ok(sobolev_norm(f, a))
        }
        NormKind::GradLp(p) => {
            check_p(p)?;
            let (d1, d2) = gradient(f);
            let a = d1.values();
            let b = d2.values();
            let mag: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.hypot(*y)).collect();
            Ok(lp_of_values(&mag, p, f.grid()))
        }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Domain(format!("p must lie in [1, ∞) (got {p})")));
    }
    Ok(())
}

pub(crate) fn lp_of_values(values: &[f64], p: f64, grid: &FourierGrid) -> f64 {
    let h2 = grid.spacing() * grid.spacing();
    let sum: f64 = if p == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else if p == 4.0 {
        values.iter().map(|v| (v * v) * (v * v)).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum()
    };
    (h2 * sum).powf(1.0 / p)
}

/// `‖f‖_{H^a}` computed directly from the coefficients.
pub fn sobolev_norm(f: &ScalarField, a: f64) -> f64 {
    let g = f.grid();
    let s: f64 = f
        .spectral()
        .iter()
        .zip(g.ksq())
        .zip(g.weight())
        .filter(|((_, k), _)| **k > 0.0)
        .map(|((v, k), w)| w * k.powf(a) * v.norm_sqr())
        .sum();
    let mean = if a == 0.0 { f.spectral()[0].norm_sqr() } else { 0.0 };
    2.0 * PI * (s + mean).sqrt()
}

/// `∫ ξ g dx` by rectangle-rule quadrature, evaluated through the discrete
/// Parseval identity.
pub fn pairing(xi: &ScalarField, g: &ScalarField) -> Result<f64> {
    xi.grid().check_same(g.grid())?;
    let w = xi.grid().weight();
    let s: f64 = xi
        .spectral()
        .iter()
        .zip(g.spectral())
        .zip(w)
        .map(|((a, b), w)| w * (a * b.conj()).re)
        .sum();
    Ok(4.0 * PI * PI * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sin1(g: &FourierGrid) -> ScalarField {
        ScalarField::from_fn(g, |x, _| x.sin())
    }

    #[test]
    fn grid_cutoffs() {
        assert_eq!(FourierGrid::new(128).unwrap().kmax_dealias(), 42);
        assert_eq!(FourierGrid::new(16).unwrap().kmax_dealias(), 5);
        let err = FourierGrid::new(15).unwrap_err();
        assert!(err.to_string().contains("N must be even"));
        assert!(matches!(FourierGrid::new(8), Err(Error::Config(_))));
        assert!(matches!(FourierGrid::new(4098), Err(Error::Config(_))));
    }

    #[test]
    fn node_coordinates() {
        let g = FourierGrid::new(16).unwrap();
        assert_relative_eq!(g.node(4), PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn single_mode_coefficients() {
        let g = FourierGrid::new(16).unwrap();
        let f = sin1(&g);
        let c = f.coefficient(1, 0);
        assert!((c - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        assert!((f.coefficient(-1, 0) - Complex64::new(0.0, 0.5)).norm() < 1e-15);
        assert!(f.is_conjugate_symmetric());
    }

    #[test]
    fn real_mode_roundtrip() {
        let g = FourierGrid::new(32).unwrap();
        let mut f = ScalarField::zeros(&g);
        f.set_real_mode(2, -3, 0.7, -1.1).unwrap();
        let (a, b) = f.real_mode(2, -3);
        assert_relative_eq!(a, 0.7, epsilon = 1e-14);
        assert_relative_eq!(b, -1.1, epsilon = 1e-14);
        // orthonormal basis: ‖f‖₂² = a² + b²
        let l2 = norm(&f, NormKind::Lp(2.0)).unwrap();
        assert_relative_eq!(l2 * l2, 0.49 + 1.21, max_relative = 1e-12);
        // column k₂ = 0 keeps the mirror coefficient
        f.set_real_mode(3, 0, 1.0, 0.5).unwrap();
        assert!(f.is_conjugate_symmetric());
        let expect = |x: f64, y: f64| {
            let s = std::f64::consts::SQRT_2 / (2.0 * PI);
            s * (0.7 * (2.0 * x - 3.0 * y).cos() - 1.1 * (2.0 * x - 3.0 * y).sin())
                + s * ((3.0 * x).cos() + 0.5 * (3.0 * x).sin())
        };
        let vals = f.values();
        let n = g.n();
        for i in (0..n).step_by(5) {
            for j in (0..n).step_by(3) {
                assert_relative_eq!(
                    vals[i * n + j],
                    expect(g.node(i), g.node(j)),
                    epsilon = 1e-13
                );
            }
        }
    }

    #[test]
    fn biot_savart_single_mode() {
        let g = FourierGrid::new(32).unwrap();
        let u = biot_savart(&sin1(&g)).unwrap();
        let expect = ScalarField::from_fn(&g, |x, _| -x.cos());
        let u1 = u.u1.values();
        let u2 = u.u2.values();
        let e2 = expect.values();
        assert!(u1.iter().all(|v| v.abs() < 1e-14));
        for (a, b) in u2.iter().zip(&e2) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn biot_savart_zero_and_mean_rejection() {
        let g = FourierGrid::new(16).unwrap();
        let u = biot_savart(&ScalarField::zeros(&g)).unwrap();
        assert_eq!(u.max_coefficient(), 0.0);
        let shifted = ScalarField::from_fn(&g, |x, _| 1.0 + x.sin());
        assert!(matches!(biot_savart(&shifted), Err(Error::Invariant(_))));
    }

    #[test]
    fn advection_single_mode_vanishes() {
        let g = FourierGrid::new(32).unwrap();
        let xi = sin1(&g);
        let u = biot_savart(&xi).unwrap();
        let adv = advection(&xi, &u).unwrap();
        assert!(adv.max_abs() < 1e-12);
        let zero = ScalarField::zeros(&g);
        let adv0 = advection(&zero, &biot_savart(&zero).unwrap()).unwrap();
        assert_eq!(adv0.max_abs(), 0.0);
    }

    #[test]
    fn advection_grid_mismatch() {
        let a = FourierGrid::new(16).unwrap();
        let b = FourierGrid::new(32).unwrap();
        let u = biot_savart(&sin1(&b)).unwrap();
        assert!(matches!(advection(&sin1(&a), &u), Err(Error::Config(_))));
        assert!(matches!(pairing(&sin1(&a), &sin1(&b)), Err(Error::Config(_))));
    }

    #[test]
    fn sine_norms() {
        let g = FourierGrid::new(64).unwrap();
        let f = sin1(&g);
        assert_relative_eq!(
            norm(&f, NormKind::Lp(2.0)).unwrap(),
            PI * 2f64.sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(norm(&f, NormKind::Linf).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(
            norm(&f, NormKind::GradLp(4.0)).unwrap(),
            (1.5 * PI * PI).powf(0.25),
            max_relative = 1e-12
        );
        // |k| = 1, so every Sobolev norm equals the L² norm
        assert_relative_eq!(
            norm(&f, NormKind::Sobolev(3.0)).unwrap(),
            PI * 2f64.sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn norm_domain_errors() {
        let g = FourierGrid::new(16).unwrap();
        let f = sin1(&g);
        assert!(matches!(norm(&f, NormKind::Lp(0.5)), Err(Error::Domain(_))));
        assert!(matches!(norm(&f, NormKind::GradLp(0.0)), Err(Error::Domain(_))));
        assert!(matches!(norm(&f, NormKind::Sobolev(-1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn pairing_examples() {
        let g = FourierGrid::new(32).unwrap();
        let s1 = sin1(&g);
        let s2 = ScalarField::from_fn(&g, |_, y| y.sin());
        assert_relative_eq!(pairing(&s1, &s1).unwrap(), 2.0 * PI * PI, max_relative = 1e-12);
        assert_eq!(pairing(&s1, &ScalarField::zeros(&g)).unwrap(), 0.0);
        assert!(pairing(&s1, &s2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pairing_matches_grid_quadrature() {
        let g = FourierGrid::new(16).unwrap();
        let a = ScalarField::from_fn(&g, |x, y| (x + 2.0 * y).cos() + 0.3 * (3.0 * x).sin());
        let b = ScalarField::from_fn(&g, |x, y| (x + 2.0 * y).cos() - (y - x).sin() + 0.25);
        let (va, vb) = (a.values(), b.values());
        let h2 = g.spacing() * g.spacing();
        let quad: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum::<f64>() * h2;
        assert_relative_eq!(pairing(&a, &b).unwrap(), quad, max_relative = 1e-12);
    }

    #[test]
    fn truncate_and_mean() {
        let g = FourierGrid::new(16).unwrap();
        let mut f = ScalarField::from_fn(&g, |x, y| 2.0 + x.cos() + (7.0 * y).sin());
        assert_relative_eq!(f.mean(), 2.0, epsilon = 1e-14);
        assert!(!f.is_mean_zero());
        f.remove_mean();
        assert!(f.is_mean_zero());
        assert!(!f.is_dealiased());
        f.dealias();
        assert!(f.is_dealiased());
        assert!(f.coefficient(0, 7).norm() == 0.0);
        assert!(f.coefficient(1, 0).norm() > 0.4);
    }
}
