//! Trajectory diagnostics: norms, the Kato log-ratio, continuous dependence
//! on initial data, zero-noise conservation and `|∇ξ|₄` tracking.

use crate::dynamics::{integrate_observed, steps_for, SimConfig};
use crate::error::{Error, Result};
use crate::spectral::{biot_savart, gradient, lp_of_values, norm, pairing, sobolev_norm, NormKind, ScalarField, VelocityField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticRecord {
    pub time: f64,
    /// `|u|₂`
    pub energy: f64,
    /// `|ξ|₂`
    pub enstrophy: f64,
    pub lp4: f64,
    pub linf: f64,
    /// `|∇ξ|₄`
    pub grad4: f64,
    /// `max_x |∇u(x)|` with the Frobenius norm pointwise.
    pub gradu_inf: f64,
    /// Zero for the zero field.
    pub kato_ratio: f64,
    pub sobolev_a: f64,
}

impl DiagnosticRecord {
    pub const FIELDS: [&'static str; 9] = [
        "time",
        "energy",
        "enstrophy",
        "lp4",
        "linf",
        "grad4",
        "gradu_inf",
        "kato_ratio",
        "sobolev_a",
    ];

    pub fn as_row(&self) -> [f64; 9] {
        [
            self.time,
            self.energy,
            self.enstrophy,
            self.lp4,
            self.linf,
            self.grad4,
            self.gradu_inf,
            self.kato_ratio,
            self.sobolev_a,
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.as_row()[1..].iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Pointwise maximum of the Frobenius norm of `∇u`.
pub fn grad_u_inf(u: &VelocityField) -> f64 {
    let (a11, a12) = gradient(&u.u1);
    let (a21, a22) = gradient(&u.u2);
    let v = [a11.values(), a12.values(), a21.values(), a22.values()];
    (0..v[0].len())
        .map(|i| (v[0][i] * v[0][i] + v[1][i] * v[1][i] + v[2][i] * v[2][i] + v[3][i] * v[3][i]).sqrt())
        .fold(0.0, f64::max)
}

fn kato_parts(u: &VelocityField, linf: f64, grad4: f64) -> f64 {
    grad_u_inf(u) / (linf * (1.0 + (1.0 + grad4 / linf).ln()))
}

/// `|∇u|_∞ / (|ξ|_∞ (1 + log(1 + |∇ξ|₄ / |ξ|_∞)))` with `u = K★ξ`.
pub fn kato_ratio(xi: &ScalarField) -> Result<f64> {
    let linf = norm(xi, NormKind::Linf)?;
    if linf == 0.0 {
        return Err(Error::Undefined("Kato ratio of the zero field".into()));
    }
    let u = biot_savart(xi)?;
    let grad4 = norm(xi, NormKind::GradLp(4.0))?;
    Ok(kato_parts(&u, linf, grad4))
}

/// All diagnostic norms of `ξ` at time `time`; `a` is the Sobolev index.
pub fn diagnose(xi: &ScalarField, time: f64, a: f64) -> Result<DiagnosticRecord> {
    let u = biot_savart(xi)?;
    let values = xi.values();
    let g = xi.grid();
    let linf = xi.max_abs();
    let grad4 = norm(xi, NormKind::GradLp(4.0))?;
    Ok(DiagnosticRecord {
        time,
        energy: u.l2_norm(),
        enstrophy: lp_of_values(&values, 2.0, g),
        lp4: lp_of_values(&values, 4.0, g),
        linf,
        grad4,
        gradu_inf: grad_u_inf(&u),
        kato_ratio: if linf > 0.0 { kato_parts(&u, linf, grad4) } else { 0.0 },
        sobolev_a: sobolev_norm(xi, a),
    })
}

/// Diagnostic records every `every` steps (and at the final step) of a run.
pub fn track(chi: &ScalarField, cfg: &SimConfig, every: u64, a: f64) -> Result<Vec<DiagnosticRecord>> {
    if every == 0 {
        return Err(Error::Config("record cadence must be >= 1".into()));
    }
    let total = cfg.steps()?;
    let mut out = Vec::new();
    integrate_observed(chi, cfg, |s| {
        if s.step_count % every == 0 || s.step_count == total {
            out.push(diagnose(&s.xi, s.time, a)?);
        }
        Ok(())
    })?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContdepRow {
    pub n: usize,
    /// `|⟨ξ(T; χ_n) − ξ(T; χ), g⟩|`
    pub gap: f64,
}

/// Pathwise continuous dependence: runs `χ_n = χ + amplitude·sin(n x₁)` and
/// `χ` under the same noise path and pairs the final difference with `g`.
pub fn contdep_test(
    chi: &ScalarField,
    cfg: &SimConfig,
    g: &ScalarField,
    n_list: &[usize],
    amplitude: f64,
) -> Result<Vec<ContdepRow>> {
    let kmax = cfg.grid.kmax_dealias();
    if let Some(n) = n_list.iter().find(|&&n| n == 0 || n > kmax) {
        return Err(Error::Config(format!(
            "perturbation frequency {n} outside retained range [1, {kmax}]"
        )));
    }
    cfg.grid.check_same(g.grid())?;
    let base = integrate_observed(chi, cfg, |_| Ok(()))?;
    let g_base = pairing(&base.xi, g)?;
    n_list
        .iter()
        .map(|&n| {
            let k = n as f64;
            let pert = ScalarField::from_fn(&cfg.grid, |x, _| amplitude * (k * x).sin());
            let chi_n = chi + &pert;
            let end = integrate_observed(&chi_n, cfg, |_| Ok(()))?;
            Ok(ContdepRow {
                n,
                gap: (pairing(&end.xi, g)? - g_base).abs(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantityCheck {
    pub name: String,
    /// Largest relative deviation from the predicted value, per unit time.
    pub drift: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConservationReport {
    pub gamma: f64,
    pub span: f64,
    pub checks: Vec<QuantityCheck>,
}

impl ConservationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn drift(&self, name: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.drift)
    }
}

pub const CONSERVATION_TOL: f64 = 1e-6;

/// Zero-noise invariants: with `γ = 0`, `|u|₂`, `|ξ|₂` and `|ξ|₄` are
/// conserved; with `γ > 0`, each of them times `e^{γ(t−t₀)}` is constant.
pub fn conservation_suite(chi: &ScalarField, cfg: &SimConfig) -> Result<ConservationReport> {
    if !cfg.spectrum.is_zero() {
        return Err(Error::Config(format!(
            "conservation suite requires sigma = 0 (got {})",
            cfg.spectrum.amplitude
        )));
    }
    let names = ["energy", "enstrophy", "lp4"];
    let mut initial = [0.0; 3];
    let mut worst = [0.0f64; 3];
    let gamma = cfg.gamma;
    let t0 = cfg.t0;
    integrate_observed(chi, cfg, |s| {
        let u = biot_savart(&s.xi)?;
        let v = s.xi.values();
        let q = [u.l2_norm(), lp_of_values(&v, 2.0, s.xi.grid()), lp_of_values(&v, 4.0, s.xi.grid())];
        let growth = (gamma * (s.time - t0)).exp();
        for i in 0..3 {
            if s.step_count == 0 {
                initial[i] = q[i];
            } else if initial[i] > 0.0 {
                worst[i] = worst[i].max((q[i] * growth / initial[i] - 1.0).abs());
            } else if q[i] != 0.0 {
                worst[i] = f64::INFINITY;
            }
        }
        Ok(())
    })?;
    let span = cfg.t1 - cfg.t0;
    let per_time = if gamma == 0.0 && span > 0.0 { span } else { 1.0 };
    let checks = names
        .iter()
        .zip(worst)
        .map(|(name, w)| {
            let drift = w / per_time;
            QuantityCheck {
                name: name.to_string(),
                drift,
                tolerance: CONSERVATION_TOL,
                pass: drift <= CONSERVATION_TOL,
            }
        })
        .collect();
    Ok(ConservationReport { gamma, span, checks })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grad4Verdict {
    pub sup: f64,
    pub median: f64,
    pub bounded: bool,
}

/// `bounded` iff `sup ≤ 10 × median` of `|∇ξ|₄` over records with `time ≥ burn_in`.
pub fn grad4_verdict(records: &[DiagnosticRecord], burn_in: f64) -> Result<Grad4Verdict> {
    let mut v: Vec<f64> = records.iter().filter(|r| r.time >= burn_in).map(|r| r.grad4).collect();
    if v.is_empty() {
        return Err(Error::Undefined(format!("no records after burn-in {burn_in}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Ok(Grad4Verdict {
            sup: f64::INFINITY,
            median: f64::NAN,
            bounded: false,
        });
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    let median = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
    let sup = v[m - 1];
    Ok(Grad4Verdict {
        sup,
        median,
        bounded: sup <= 10.0 * median,
    })
}

/// Records `|∇ξ(t)|₄` every `every` steps and applies [`grad4_verdict`].
pub fn grad4_track(
    chi: &ScalarField,
    cfg: &SimConfig,
    every: u64,
    burn_in: f64,
) -> Result<(Vec<(f64, f64)>, Grad4Verdict)> {
    let recs = track(chi, cfg, every, 0.0)?;
    let verdict = grad4_verdict(&recs, burn_in)?;
    Ok((recs.iter().map(|r| (r.time, r.grad4)).collect(), verdict))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KatoStability {
    /// Max of the ratio over the first half of the run.
    pub half_max: f64,
    /// Max over the last quarter.
    pub final_quarter_max: f64,
    pub stable: bool,
}

/// Running-supremum stabilization: `final_quarter_max ≤ 1.1 × half_max`.
pub fn kato_stability(records: &[DiagnosticRecord]) -> Result<KatoStability> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Err(Error::Undefined("no records".into()));
    };
    let span = last.time - first.time;
    let mid = first.time + 0.5 * span;
    let q3 = first.time + 0.75 * span;
    let max_over = |lo: f64, hi: f64| {
        records
            .iter()
            .filter(|r| r.time >= lo && r.time <= hi)
            .map(|r| r.kato_ratio)
            .fold(0.0, f64::max)
    };
    let half_max = max_over(first.time, mid);
    let final_quarter_max = max_over(q3, last.time);
    Ok(KatoStability {
        half_max,
        final_quarter_max,
        stable: half_max > 0.0 && final_quarter_max <= 1.1 * half_max,
    })
}

/// Grid quadrature of `Σ_{i,j} u_j ∂_j∂_iη ∂_iη |∇η|²` and of its absolute
/// integrand. The exact integral vanishes for divergence-free `u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct W14Residual {
    pub residual: f64,
    pub magnitude: f64,
}

pub fn w14_cancellation_residual(u: &VelocityField, eta: &ScalarField) -> Result<W14Residual> {
    let g = eta.grid();
    g.check_same(u.grid())?;
    let (e1, e2) = gradient(eta);
    let (e11, e12) = gradient(&e1);
    let (e21, e22) = gradient(&e2);
    let u1 = u.u1.values();
    let u2 = u.u2.values();
    let d = [e1.values(), e2.values()];
    let dd = [[e11.values(), e12.values()], [e21.values(), e22.values()]];
    let h2 = g.spacing() * g.spacing();
    let mut residual = 0.0;
    let mut magnitude = 0.0;
    for x in 0..g.grid_len() {
        let grad_sq = d[0][x] * d[0][x] + d[1][x] * d[1][x];
        let uj = [u1[x], u2[x]];
        let mut local = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let term = uj[j] * dd[i][j][x] * d[i][x] * grad_sq;
                local += term;
                magnitude += term.abs();
            }
        }
        residual += local;
    }
    Ok(W14Residual {
        residual: residual * h2,
        magnitude: magnitude * h2,
    })
}

/// Steps needed between records for a cadence `interval` in time units.
pub fn record_every(interval: f64, dt: f64) -> Result<u64> {
    Ok(steps_for(interval, dt)?.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSpectrum;
    use crate::spectral::FourierGrid;
    use approx::assert_relative_eq;

    fn sin1(g: &FourierGrid) -> ScalarField {
        ScalarField::from_fn(g, |x, _| x.sin())
    }

    #[test]
    fn kato_single_mode() {
        let g = FourierGrid::new(64).unwrap();
        let r = kato_ratio(&sin1(&g)).unwrap();
        let g4 = (1.5 * std::f64::consts::PI.powi(2)).powf(0.25);
        assert_relative_eq!(r, 1.0 / (1.0 + (1.0 + g4).ln()), max_relative = 1e-12);
        assert!((r - 0.4793).abs() < 1e-3);
        assert!(matches!(kato_ratio(&ScalarField::zeros(&g)), Err(Error::Undefined(_))));
    }

    #[test]
    fn record_of_single_mode() {
        let g = FourierGrid::new(32).unwrap();
        let r = diagnose(&sin1(&g), 0.5, 3.0).unwrap();
        let pi = std::f64::consts::PI;
        assert_relative_eq!(r.enstrophy, pi * 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(r.energy, pi * 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(r.gradu_inf, 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.grad4, (1.5 * pi * pi).powf(0.25), max_relative = 1e-12);
        assert!(r.is_valid());
        let z = diagnose(&ScalarField::zeros(&g), 0.0, 3.0).unwrap();
        assert!(z.is_valid());
        assert_eq!(z.kato_ratio, 0.0);
    }

    #[test]
    fn conservation_rejects_noise_and_handles_zero() {
        let g = FourierGrid::new(32).unwrap();
        let mut cfg = SimConfig::new(g.clone());
        cfg.dt = 0.01;
        cfg.t1 = 0.1;
        assert!(matches!(conservation_suite(&ScalarField::zeros(&g), &cfg), Err(Error::Config(_))));
        cfg.spectrum = NoiseSpectrum::new(6.0, 4.5, 8.0, 0.0).unwrap();
        let r = conservation_suite(&ScalarField::zeros(&g), &cfg).unwrap();
        assert!(r.passed());
        assert!(r.checks.iter().all(|c| c.drift == 0.0));
    }

    #[test]
    fn damped_single_mode_decays_exactly() {
        let g = FourierGrid::new(32).unwrap();
        let mut cfg = SimConfig::new(g.clone());
        cfg.spectrum.amplitude = 0.0;
        cfg.gamma = 1.0;
        cfg.dt = 0.01;
        let r = conservation_suite(&sin1(&g), &cfg).unwrap();
        for c in &r.checks {
            assert!(c.drift <= 1e-12, "{c:?}");
        }
    }

    #[test]
    fn contdep_zero_amplitude_and_range() {
        let g = FourierGrid::new(32).unwrap();
        let mut cfg = SimConfig::new(g.clone());
        cfg.dt = 0.01;
        cfg.t1 = 0.1;
        let chi = ScalarField::from_fn(&g, |x, y| (x + y).sin());
        let test = ScalarField::from_fn(&g, |x, y| (x.cos() + y.sin()).exp());
        let rows = contdep_test(&chi, &cfg, &test, &[2, 4], 0.0).unwrap();
        assert!(rows.iter().all(|r| r.gap == 0.0));
        assert!(matches!(contdep_test(&chi, &cfg, &test, &[11], 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn grad4_verdict_rules() {
        let mk = |t: f64, v: f64| DiagnosticRecord {
            time: t,
            energy: 0.0,
            enstrophy: 0.0,
            lp4: 0.0,
            linf: 0.0,
            grad4: v,
            gradu_inf: 0.0,
            kato_ratio: 0.0,
            sobolev_a: 0.0,
        };
        let flat: Vec<_> = (0..10).map(|i| mk(i as f64, 1.0 + 0.1 * i as f64)).collect();
        assert!(grad4_verdict(&flat, 0.0).unwrap().bounded);
        let mut spike = flat.clone();
        spike.push(mk(10.0, 100.0));
        assert!(!grad4_verdict(&spike, 0.0).unwrap().bounded);
        // the early transient is excluded by the burn-in
        let mut early = flat.clone();
        early[0].grad4 = 1e3;
        assert!(grad4_verdict(&early, 0.5).unwrap().bounded);
        assert!(grad4_verdict(&flat, 100.0).is_err());
    }

    #[test]
    fn w14_residual_single_mode() {
        let g = FourierGrid::new(32).unwrap();
        let eta = ScalarField::from_fn(&g, |x, y| (x + 2.0 * y).cos());
        let u = biot_savart(&ScalarField::from_fn(&g, |x, y| x.sin() * y.cos())).unwrap();
        let r = w14_cancellation_residual(&u, &eta).unwrap();
        assert!(r.residual.abs() <= 1e-12 * r.magnitude.max(1.0));
    }
}
