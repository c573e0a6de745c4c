//! Experiment commands. Each one writes its artifacts and a manifest into the
//! output directory and returns the manifest.

use std::path::PathBuf;

use anyhow::{Context, Result};
use vortlab_core::diagnostics::{
    conservation_suite, contdep_test, diagnose, grad4_verdict, kato_ratio, kato_stability, track,
    w14_cancellation_residual, DiagnosticRecord,
};
use vortlab_core::dynamics::{random_band_limited, Trajectory};
use vortlab_core::ergodics::{
    agreement_of_runs, cesaro_convergence, cesaro_run, markov_semigroup_test, par_map, tail_bound_report, TAIL_EPS,
};
use vortlab_core::noise::{curl_growth_rate, derive_stream};
use vortlab_core::ou::{calibrate_lambda, calibration_margin, OuStepper};
use vortlab_core::spectral::{advection, biot_savart, norm, pairing, sobolev_norm, NormKind};
use vortlab_core::{integrate, RngStream, ScalarField, SimConfig};

use crate::config::{serialize_config, Command, Format, RunConfig};
use crate::output::{csv, Artifacts, Manifest, Verdict};
use crate::snapshot::{write_snapshot, SnapshotFile};

#[derive(Clone, Debug)]
pub struct Options {
    pub out: PathBuf,
    pub workers: usize,
    pub quiet: bool,
}

const OU_TAG: u64 = 0x6f75;
const CHECKS_TAG: u64 = 0x636b;

pub fn command_name(c: Command) -> &'static str {
    match c {
        Command::Simulate => "simulate",
        Command::Ensemble => "ensemble",
        Command::OuCalibrate => "ou-calibrate",
        Command::Invariant => "invariant",
        Command::MarkovTest => "markov-test",
        Command::TailReport => "tail-report",
        Command::ContdepTest => "contdep-test",
        Command::Checks => "checks",
    }
}

pub fn run(command: Command, cfg: &RunConfig, opts: &Options) -> Result<Manifest> {
    cfg.validate_for(command)?;
    let mut art = Artifacts::new(&opts.out, command_name(command))
        .with_context(|| format!("cannot create output directory {}", opts.out.display()))?;
    art.write("config.toml", serialize_config(cfg))?;
    for w in cfg.warnings(command) {
        if !opts.quiet {
            eprintln!("warning: {w}");
        }
        art.manifest.warnings.push(w);
    }
    match command {
        Command::Simulate => simulate(cfg, &mut art)?,
        Command::Ensemble => ensemble(cfg, opts, &mut art)?,
        Command::OuCalibrate => ou_calibrate(cfg, opts, &mut art)?,
        Command::Invariant => invariant(cfg, opts, &mut art)?,
        Command::MarkovTest => markov(cfg, opts, &mut art)?,
        Command::TailReport => tail(cfg, opts, &mut art)?,
        Command::ContdepTest => contdep(cfg, &mut art)?,
        Command::Checks => checks(cfg, &mut art)?,
    }
    let manifest = art.finish()?;
    if !opts.quiet {
        for v in &manifest.verdicts {
            println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
        }
    }
    Ok(manifest)
}

fn series_csv(tr: &Trajectory) -> String {
    let mut header = vec!["time"];
    header.extend(tr.observable_names.iter().map(String::as_str));
    csv(
        &header,
        tr.times.iter().zip(&tr.observable_series).map(|(t, row)| {
            let mut r = vec![*t];
            r.extend(row);
            r
        }),
    )
}

fn write_trajectory(cfg: &RunConfig, art: &mut Artifacts, tr: &Trajectory, prefix: &str) -> Result<()> {
    if cfg.formats.contains(&Format::Csv) {
        art.write(&format!("{prefix}series.csv"), series_csv(tr))?;
    }
    if cfg.formats.contains(&Format::Snapshot) {
        for s in &tr.snapshots {
            let name = format!("{prefix}snap_{:08}.vort", s.step);
            write_snapshot(
                &art.path(&name),
                &SnapshotFile {
                    n: cfg.n,
                    time: s.time,
                    values: s.field.values(),
                },
            )?;
            art.manifest.files.push(name);
        }
    }
    Ok(())
}

fn simulate(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let sim = cfg.sim_config()?;
    let tr = integrate(&cfg.initial_field()?, &sim)?;
    write_trajectory(cfg, art, &tr, "")?;
    let last = &tr.final_state;
    art.note("steps", last.step_count);
    art.note("final_time", last.time);
    art.note("final_linf", last.xi.max_abs());
    art.verdict(Verdict::new("run", true, format!("{} steps completed", last.step_count)));
    Ok(())
}

fn ensemble(cfg: &RunConfig, opts: &Options, art: &mut Artifacts) -> Result<()> {
    let sim = cfg.sim_config()?;
    let chi = cfg.initial_field()?;
    let k = cfg.ensemble.trajectories;
    let runs = par_map(opts.workers, k, |i| integrate(&chi, &sim.with_stream(sim.stream_id + i as u64)))?;
    for (i, tr) in runs.iter().enumerate() {
        write_trajectory(cfg, art, tr, &format!("traj_{i:03}_"))?;
    }
    art.note("trajectories", k);
    art.verdict(Verdict::new("run", true, format!("{k} trajectories completed")));
    Ok(())
}

fn ou_calibrate(cfg: &RunConfig, opts: &Options, art: &mut Artifacts) -> Result<()> {
    let grid = cfg.grid()?;
    let spec = cfg.spectrum();
    let (gamma, a, ct) = (cfg.gamma, cfg.ou.a, cfg.ou.c_tilde);
    let lambda = calibrate_lambda(gamma, &spec, a, ct)?;
    let s_a = curl_growth_rate(&spec, a);
    let margin = calibration_margin(gamma, &spec, a, ct, lambda);
    let bound = ct * (s_a / (2.0 * lambda)).sqrt();

    let mut stepper = OuStepper::new(&spec, &grid)?;
    let mut rng = RngStream::new(cfg.seed, derive_stream(cfg.stream_id, OU_TAG, 0));
    let m = cfg.ou.samples;
    let (mut first, mut second) = (0.0, 0.0);
    for _ in 0..m {
        let z = sobolev_norm(&stepper.stationary(&grid, lambda, &mut rng)?.zeta, a);
        first += z;
        second += z * z;
    }
    let mean_norm = first / m as f64;
    let second_moment = second / m as f64;
    let mc_margin = gamma / 2.0 - ct * mean_norm;

    art.write(
        "ou.csv",
        csv(
            &["gamma", "a", "c_tilde", "lambda", "s_a", "margin", "mc_mean_norm", "mc_second_moment", "mc_margin"],
            [vec![gamma, a, ct, lambda, s_a, margin, mean_norm, second_moment, mc_margin]],
        ),
    )?;
    art.note("lambda", lambda);
    art.note("s_a", s_a);
    art.note("margin", margin);
    if !opts.quiet {
        println!("lambda = {lambda}\nS_a = {s_a}\nmargin = {margin}");
    }
    art.verdict(Verdict::new(
        "strict_inequality",
        bound < gamma / 2.0,
        format!("c_tilde*sqrt(S_a/(2 lambda)) = {bound:.6e} < gamma/2 = {:.6e}", gamma / 2.0),
    ));
    let exact_second = s_a / (2.0 * lambda);
    let rel = if exact_second > 0.0 { (second_moment / exact_second - 1.0).abs() } else { second_moment };
    art.verdict(Verdict::new(
        "mc_second_moment",
        rel <= 0.1,
        format!("E||zeta||^2 = {second_moment:.6e} vs S_a/(2 lambda) = {exact_second:.6e} (rel {rel:.3e})"),
    ));
    art.verdict(Verdict::new(
        "mc_margin",
        ct * mean_norm <= 1.1 * bound && mc_margin >= 0.9 * margin,
        format!("c_tilde*E||zeta|| = {:.6e}, bound {bound:.6e}, MC margin {mc_margin:.6e} vs {margin:.6e}", ct * mean_norm),
    ));
    Ok(())
}

fn invariant(cfg: &RunConfig, opts: &Options, art: &mut Artifacts) -> Result<()> {
    let sim = cfg.sim_config()?;
    let chi = cfg.initial_field()?;
    let obs = cfg.observables()?;
    let inv = &cfg.invariant;
    let conv = cesaro_convergence(&chi, &sim, &obs, inv.burn_in, &inv.horizons, inv.replicates, opts.workers)?;
    let mut header = vec!["n"];
    header.extend(conv.names.iter().map(String::as_str));
    art.write(
        "cesaro.csv",
        csv(
            &header,
            conv.ns.iter().enumerate().map(|(i, n)| {
                let mut r = vec![*n];
                r.extend(conv.mean_abs_diff.iter().map(|d| d[i]));
                r
            }),
        ),
    )?;
    for (name, ok) in conv.names.iter().zip(&conv.decreasing) {
        art.verdict(Verdict::new(
            format!("cesaro_decreasing:{name}"),
            *ok,
            format!("mean |est(n)-est(2n)| over {} replicates", conv.replicates),
        ));
    }

    let horizon = inv.horizons.iter().cloned().fold(0.0, f64::max);
    let other = SimConfig {
        seed: inv.second_seed,
        ..sim.clone()
    };
    let pair = par_map(opts.workers, 2, |i| {
        cesaro_run(&chi, if i == 0 { &sim } else { &other }, &obs, inv.burn_in, &[horizon])
    })?;
    let agree = agreement_of_runs(&pair[0], &pair[1], inv.batches)?;
    let mut table = String::from("observable,mean_a,se_a,mean_b,se_b,z\n");
    for a in &agree {
        table.push_str(&format!("{},{},{},{},{},{}\n", a.name, a.a.mean, a.a.se, a.b.mean, a.b.se, a.z));
        art.verdict(Verdict::new(
            format!("seed_agreement:{}", a.name),
            a.z <= 3.0,
            format!("z = {:.3} (batch means, {} batches)", a.z, inv.batches),
        ));
    }
    art.write("estimates.csv", table)?;

    let mut hist = String::from("observable,lo,hi,count\n");
    for (name, h) in pair[0].names.iter().zip(&pair[0].histograms) {
        hist.push_str(&format!("{name},-inf,{},{}\n", h.lo, h.below));
        for (i, c) in h.counts.iter().enumerate() {
            let (lo, hi) = h.bin_edges(i);
            hist.push_str(&format!("{name},{lo},{hi},{c}\n"));
        }
        hist.push_str(&format!("{name},{},inf,{}\n", h.hi, h.above));
    }
    art.write("histograms.csv", hist)?;
    Ok(())
}

fn markov(cfg: &RunConfig, opts: &Options, art: &mut Artifacts) -> Result<()> {
    let sim = cfg.sim_config()?;
    let m = &cfg.markov;
    let phi = cfg.observable(&m.observable)?;
    let r = markov_semigroup_test(&cfg.initial_field()?, &sim, m.t, m.s, &phi, m.m_outer, m.m_inner, opts.workers)?;
    art.write(
        "markov.csv",
        csv(&["t", "s", "lhs", "rhs", "se", "z"], [vec![m.t, m.s, r.lhs, r.rhs, r.se, r.z_score]]),
    )?;
    art.note("z_score", r.z_score);
    art.verdict(Verdict::new(
        "markov_identity",
        r.z_score <= 3.0,
        format!("lhs {:.6} rhs {:.6} se {:.3e} z {:.3}", r.lhs, r.rhs, r.se, r.z_score),
    ));
    Ok(())
}

fn tail(cfg: &RunConfig, opts: &Options, art: &mut Artifacts) -> Result<()> {
    let sim = cfg.sim_config()?;
    let t = &cfg.tail;
    let r = tail_bound_report(&sim, &t.times, t.m, opts.workers)?;
    art.write(
        "tail.csv",
        csv(
            &["time", "q90", "q95", "q99"],
            r.rows.iter().map(|row| {
                let mut v = vec![row.time];
                v.extend(row.quantiles);
                v
            }),
        ),
    )?;
    for (e, r_eps) in TAIL_EPS.iter().zip(r.r_eps) {
        art.note(&format!("R_{e}"), r_eps);
    }
    let reference = r
        .rows
        .iter()
        .find(|row| (row.time - t.reference_time).abs() < 1e-9)
        .with_context(|| format!("tail.reference_time {} is not among tail.times", t.reference_time))?;
    let last = r.rows.iter().max_by(|a, b| a.time.total_cmp(&b.time)).expect("non-empty");
    let ratio = last.quantiles[0] / reference.quantiles[0];
    art.note("stabilization_ratio", ratio);
    art.verdict(Verdict::new(
        "tail_stabilization",
        (0.5..=2.0).contains(&ratio),
        format!("R_0.1({}) / R_0.1({}) = {ratio:.4}", last.time, reference.time),
    ));
    Ok(())
}

fn contdep(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let sim = cfg.sim_config()?;
    let c = &cfg.contdep;
    let rows = contdep_test(&cfg.initial_field()?, &sim, &cfg.test_function()?, &c.n_list, c.amplitude)?;
    art.write("contdep.csv", csv(&["n", "gap"], rows.iter().map(|r| vec![r.n as f64, r.gap])))?;
    let first = rows[0].gap;
    let last = rows[rows.len() - 1].gap;
    let monotone = rows.windows(2).all(|w| w[1].gap <= w[0].gap);
    art.verdict(Verdict::new(
        "gap_decay",
        last <= 0.2 * first,
        format!("gap({}) = {last:.3e}, gap({}) = {first:.3e}", rows[rows.len() - 1].n, rows[0].n),
    ));
    art.verdict(Verdict::new("gap_monotone", monotone, "non-increasing across n_list"));
    Ok(())
}

fn checks(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let grid = cfg.grid()?;
    let mut rng = RngStream::new(cfg.seed, derive_stream(cfg.stream_id, CHECKS_TAG, 0));
    let mut table = String::from("suite,quantity,value,tolerance,pass\n");
    let mut record = |art: &mut Artifacts, suite: &str, q: &str, value: f64, tol: f64, pass: bool| {
        table.push_str(&format!("{suite},{q},{value},{tol},{pass}\n"));
        art.verdict(Verdict::new(format!("{suite}:{q}"), pass, format!("{value:.4e} (tolerance {tol:.1e})")));
    };

    // spectral identities on a random field
    let xi = random_band_limited(&grid, grid.kmax_dealias().min(8), 1.0, &mut rng)?;
    let u = biot_savart(&xi)?;
    let div = u.divergence_residual() / u.max_coefficient();
    record(art, "spectral", "divergence", div, 1e-14, div <= 1e-14);
    let orth = pairing(&advection(&xi, &u)?, &xi)?.abs()
        / (norm(&xi, NormKind::Lp(2.0))? * norm(&xi, NormKind::GradLp(2.0))?);
    record(art, "spectral", "advection_orthogonality", orth, 1e-10, orth <= 1e-10);
    let eta = random_band_limited(&grid, (grid.n() / 8).max(1), 1.0, &mut rng)?;
    let w = w14_cancellation_residual(&u, &eta)?;
    let wr = w.residual.abs() / w.magnitude;
    record(art, "spectral", "w14_cancellation", wr, 1e-8, wr <= 1e-8);

    // zero-noise conservation and decay
    let chi = random_band_limited(&grid, grid.kmax_dealias().min(8), 1.0, &mut rng)?;
    let mut quiet = cfg.sim_config()?.with_interval(0.0, 1.0);
    quiet.spectrum.amplitude = 0.0;
    quiet.observables.clear();
    quiet.snapshot_every = 0;
    quiet.advection = true;
    for gamma in [0.0, if cfg.gamma > 0.0 { cfg.gamma } else { 1.0 }] {
        let rep = conservation_suite(&chi, &SimConfig { gamma, ..quiet.clone() })?;
        let suite = if gamma == 0.0 { "conservation".to_string() } else { format!("gronwall_gamma_{gamma}") };
        for c in &rep.checks {
            record(art, &suite, &c.name, c.drift, c.tolerance, c.pass);
        }
    }

    // Kato ratio on the single mode
    let k1 = kato_ratio(&ScalarField::from_fn(&grid, |x, _| x.sin()))?;
    record(art, "kato", "single_mode_deviation", (k1 - 0.4793).abs(), 1e-3, (k1 - 0.4793).abs() <= 1e-3);

    // stochastic run from the configured initial data
    let mut sim = cfg.sim_config()?;
    sim.observables.clear();
    sim.snapshot_every = 0;
    let recs = track(&cfg.initial_field()?, &sim, cfg.checks.record_every, cfg.ou.a)?;
    write_records(art, "diagnostics.csv", &recs)?;
    let valid = recs.iter().all(DiagnosticRecord::is_valid);
    record(art, "trajectory", "records_finite", recs.len() as f64, 0.0, valid);
    let burn = cfg.checks.burn_in.min(0.5 * (cfg.t1 - cfg.t0)) + cfg.t0;
    let g4 = grad4_verdict(&recs, burn)?;
    record(art, "trajectory", "grad4_sup_over_median", g4.sup / g4.median, 10.0, g4.bounded);
    let ks = kato_stability(&recs)?;
    let kr = if ks.half_max > 0.0 { ks.final_quarter_max / ks.half_max } else { f64::INFINITY };
    record(art, "trajectory", "kato_final_quarter_over_half", kr, 1.1, ks.stable);
    art.note("kato_sup", recs.iter().map(|r| r.kato_ratio).fold(0.0, f64::max));
    art.note("initial_record", diagnose(&cfg.initial_field()?, cfg.t0, cfg.ou.a)?.as_row().to_vec());
    art.write("checks.csv", table)?;
    Ok(())
}

pub fn write_records(art: &mut Artifacts, name: &str, recs: &[DiagnosticRecord]) -> Result<()> {
    art.write(name, csv(&DiagnosticRecord::FIELDS, recs.iter().map(|r| r.as_row().to_vec())))?;
    Ok(())
}
