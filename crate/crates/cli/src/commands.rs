use std::f64::consts::PI;
use std::fs;
use std::time::Instant;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use conformal_warp::bounds::{
    concentration_diagnostic, convergence_order, existence_checker_nonpositive,
    existence_checker_positive, identity_residual, identity_terms, jensen_check, membership,
    negative_curvature_bound, BoundReport, ConcentrationVerdict, RunningMinimum,
};
use conformal_warp::families::{
    bubble_family, bubble_volume_spread, gamma_family, gaussian_source, random_phi_with_volume,
};
use conformal_warp::fields::{FieldStrength, FieldStrengthSet, SourceBundle, StringSource};
use conformal_warp::geometry::{
    build_grid, normalize_volume, total_scalar_curvature_direct, GridSpec, ManifoldGrid,
    ScalarField,
};
use conformal_warp::nonlinear::{
    build_problem, effective_potential_d, k_sign_identity, monotone_solve, NonlinearProblem,
};
use conformal_warp::solver::{
    expansion_from_spectrum, family_scan, solve_critical_point, spectrum, CriticalPoint,
    OperatorAssembly, SOLVE_TOL,
};
use conformal_warp::Error;

use crate::config::{
    emit_config, CurvatureMode, ExampleKind, ManifoldKind, PhiSource, ScenarioConfig, StringKind,
};
use crate::record::{ResultRecord, Status, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Solve,
    Spectrum,
    Sweep,
    Scan,
    Verify,
    Example,
    Nonlinear,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Spectrum => "spectrum",
            Command::Sweep => "sweep",
            Command::Scan => "scan",
            Command::Verify => "verify",
            Command::Example => "example",
            Command::Nonlinear => "nonlinear",
        }
    }
}

/// Records of one run plus optional long-format trace rows.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    pub trace: Vec<TraceRow>,
}

/// First 16 hex digits of the SHA-256 of the normalized scenario.
pub fn scenario_hash(cfg: &ScenarioConfig) -> String {
    let digest = Sha256::digest(emit_config(cfg).as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Geometry, conformal factor and sources of a scenario.
pub struct Setup {
    pub grid: ManifoldGrid,
    pub phi: ScalarField,
    pub sources: SourceBundle,
    pub volume: f64,
}

pub fn build_grid_for(cfg: &ScenarioConfig) -> anyhow::Result<ManifoldGrid> {
    let m = &cfg.manifold;
    let mut spec = match m.kind {
        ManifoldKind::Torus => {
            let lengths = m.lengths_len.clone().unwrap_or_else(|| vec![2.0 * PI; m.n]);
            GridSpec::torus(&lengths, m.resolution)
        }
        ManifoldKind::Sphere2 => {
            GridSpec::sphere(m.radius_len.unwrap_or(1.0), m.resolution, 2 * m.resolution)
        }
    };
    if m.mode == CurvatureMode::Synthetic {
        spec = spec.synthetic(m.r_g0_per_len2.unwrap_or(0.0));
    }
    Ok(build_grid(&spec)?)
}

fn default_center(grid: &ManifoldGrid) -> Vec<f64> {
    match grid.lengths() {
        Some(l) => l.iter().map(|x| x / 2.0).collect(),
        None => vec![PI / 2.0, 0.0],
    }
}

pub fn build_sources(
    cfg: &ScenarioConfig,
    grid: &ManifoldGrid,
    beta: Option<f64>,
) -> anyhow::Result<SourceBundle> {
    let flux = if cfg.sources.flux.is_empty() {
        FieldStrengthSet::empty()
    } else {
        let entries = cfg
            .sources
            .flux
            .iter()
            .map(|f| FieldStrength {
                degree: f.degree,
                norm_sq: ScalarField::constant(grid, f.norm_sq_per_len2),
            })
            .collect();
        FieldStrengthSet::new(grid, entries)?
    };
    let s = &cfg.sources.string;
    let beta = beta.unwrap_or(s.beta);
    let center = s.center.clone().unwrap_or_else(|| default_center(grid));
    let string = match s.kind {
        StringKind::None => {
            let mut none = StringSource::none(grid);
            none.beta = beta;
            none
        }
        StringKind::Smooth => {
            StringSource::smooth(grid, ScalarField::constant(grid, s.strength_per_len2), beta)?
        }
        StringKind::Gaussian => StringSource::gaussian(
            grid,
            &center,
            s.sigma_len.unwrap_or(0.5),
            s.strength_per_len2,
            beta,
        )?,
        StringKind::Indicator => StringSource::indicator(
            grid,
            &center,
            s.radius_len.unwrap_or(0.5),
            s.width_len.unwrap_or(0.1),
            s.strength_per_len2,
            beta,
        )?,
    };
    Ok(SourceBundle::new(flux, string))
}

fn read_phi_file(cfg: &ScenarioConfig, grid: &ManifoldGrid) -> anyhow::Result<ScalarField> {
    let path = cfg
        .conformal
        .path
        .as_ref()
        .context("conformal.path is required")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .with_context(|| format!("bad number `{s}` in {}", path.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(ScalarField::new(grid, values)?)
}

/// Conformal factor normalized to the target volume (background volume by
/// default).
pub fn build_phi(
    cfg: &ScenarioConfig,
    grid: &ManifoldGrid,
    seed_override: Option<u64>,
) -> anyhow::Result<ScalarField> {
    let c = &cfg.conformal;
    let volume = c.volume_len_n.unwrap_or_else(|| grid.volume());
    let phi = match c.source {
        PhiSource::Zero => ScalarField::zeros(grid),
        PhiSource::Constant => ScalarField::constant(grid, c.value.unwrap_or(0.0)),
        PhiSource::Random => {
            let seed = seed_override.or(c.seed).unwrap_or(0);
            return Ok(random_phi_with_volume(
                grid,
                c.amplitude.unwrap_or(0.5),
                c.smoothness.unwrap_or(3),
                seed,
                volume,
            )?);
        }
        PhiSource::File => read_phi_file(cfg, grid)?,
    };
    Ok(normalize_volume(grid, &phi, volume)?.phi)
}

pub fn setup(cfg: &ScenarioConfig) -> anyhow::Result<Setup> {
    let grid = build_grid_for(cfg)?;
    let phi = build_phi(cfg, &grid, None)?;
    let sources = build_sources(cfg, &grid, None)?;
    let volume = cfg.conformal.volume_len_n.unwrap_or_else(|| grid.volume());
    Ok(Setup {
        grid,
        phi,
        sources,
        volume,
    })
}

/// Runs one command on a validated scenario.
pub fn run(cfg: &ScenarioConfig, command: Command, workers: usize) -> anyhow::Result<RunOutput> {
    let hash = scenario_hash(cfg);
    let t0 = Instant::now();
    let mut out = match command {
        Command::Solve => RunOutput {
            records: vec![solve(cfg, &hash)?],
            trace: Vec::new(),
        },
        Command::Spectrum => RunOutput {
            records: vec![spectrum_cmd(cfg, &hash)?],
            trace: Vec::new(),
        },
        Command::Sweep => sweep(cfg, &hash, workers)?,
        Command::Scan => scan(cfg, &hash)?,
        Command::Verify => RunOutput {
            records: vec![verify(cfg, &hash)?],
            trace: Vec::new(),
        },
        Command::Example => example(cfg, &hash)?,
        Command::Nonlinear => nonlinear(cfg, &hash)?,
    };
    if command != Command::Sweep {
        let secs = t0.elapsed().as_secs_f64();
        for r in &mut out.records {
            r.wall_time_s = secs;
        }
    }
    for r in &mut out.records {
        r.finish();
    }
    out.records
        .sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
    Ok(out)
}

fn push_report(rec: &mut ResultRecord, rep: &BoundReport) {
    for e in &rep.entries {
        rec.check(e.name.clone(), e.lhs, e.margin, e.pass);
    }
    rec.notes.extend(rep.notes.iter().cloned());
}

fn push_solution(rec: &mut ResultRecord, cp: &CriticalPoint) {
    rec.info("potential", cp.potential);
    rec.info("alpha", cp.alpha);
    rec.info("lambda0", cp.lambda0);
    rec.info("min_u", cp.min_u);
    rec.info("u_positive", if cp.is_positive() { 1.0 } else { 0.0 });
    if let Some(x) = cp.potential_crosscheck {
        rec.info("potential_crosscheck", x);
    }
    rec.check(
        "residual",
        cp.residual,
        SOLVE_TOL - cp.residual,
        cp.residual <= SOLVE_TOL,
    );
}

/// Records a module error; a resonance refusal counts as a failed check,
/// anything else as an operational error.
fn push_error(rec: &mut ResultRecord, e: &Error) {
    match e {
        Error::Resonance {
            lambda0,
            obstruction,
        } => {
            rec.check("lambda0", *lambda0, 0.0, false);
            rec.info("kernel_obstruction", *obstruction);
            rec.notes.push(e.to_string());
        }
        other => rec.error("error", other.to_string()),
    }
}

fn solve(cfg: &ScenarioConfig, hash: &str) -> anyhow::Result<ResultRecord> {
    let s = setup(cfg)?;
    let mut rec = ResultRecord::new(&cfg.id, hash, "solve");
    let asm = OperatorAssembly::assemble(&s.grid, &s.phi, &s.sources)?;
    match solve_critical_point(&asm, cfg.physics.g_newton) {
        Ok(cp) => push_solution(&mut rec, &cp),
        Err(e) => push_error(&mut rec, &e),
    }
    Ok(rec)
}

fn spectrum_cmd(cfg: &ScenarioConfig, hash: &str) -> anyhow::Result<ResultRecord> {
    let s = setup(cfg)?;
    let sc = cfg.spectrum.clone().unwrap_or_default();
    let mut rec = ResultRecord::new(&cfg.id, hash, "spectrum");
    let asm = OperatorAssembly::assemble(&s.grid, &s.phi, &s.sources)?;
    let modes = sc.modes.min(s.grid.len());
    let rep = spectrum(&asm, modes)?;
    for (i, l) in rep.eigenvalues.iter().enumerate() {
        rec.info(format!("lambda{i}"), *l);
    }
    rec.check(
        "psi0_positive",
        if rep.psi0_positive { 1.0 } else { 0.0 },
        0.0,
        rep.psi0_positive,
    );
    let defect = rep.orthonormality_defect(&asm);
    rec.check(
        "orthonormality_defect",
        defect,
        1e-8 - defect,
        defect <= 1e-8,
    );
    rec.info("max_residual", rep.max_residual);
    rec.info("resonant", if rep.resonant { 1.0 } else { 0.0 });
    if rep.resonant {
        rec.notes
            .push("principal eigenvalue within resonance tolerance of zero".into());
    }
    if sc.expansion {
        match expansion_from_spectrum(&asm, cfg.physics.g_newton, &rep) {
            Ok(ex) => {
                rec.info("potential_expansion", ex.potential);
                rec.info("potential_direct", ex.direct_potential);
                rec.info("expansion_relative_error", ex.relative_error());
            }
            Err(e) => push_error(&mut rec, &e),
        }
    }
    Ok(rec)
}

fn sweep(cfg: &ScenarioConfig, hash: &str, workers: usize) -> anyhow::Result<RunOutput> {
    let sw = cfg.sweep.clone().unwrap_or_default();
    let grid = build_grid_for(cfg)?;
    let volume = cfg.conformal.volume_len_n.unwrap_or_else(|| grid.volume());
    let width = sw.samples.to_string().len().max(4);
    let one = |i: usize| -> ResultRecord {
        let t0 = Instant::now();
        let seed = sw.seed.wrapping_add(i as u64);
        let id = format!("{}/{:0width$}", cfg.id, i);
        let mut rec = ResultRecord::new(id, hash, "sweep");
        let beta = (!sw.betas.is_empty()).then(|| sw.betas[i % sw.betas.len()]);
        let mut body = || -> anyhow::Result<()> {
            rec.info("seed", seed as f64);
            let phi = random_phi_with_volume(&grid, sw.amplitude, sw.smoothness, seed, volume)?;
            let sources = build_sources(cfg, &grid, beta)?;
            rec.info("beta", sources.string.beta);
            if let Some(eta) = sw.eta {
                let m = membership(&grid, &phi, &sources, eta)?;
                let admitted = m.in_s_eta.unwrap_or(true);
                rec.info("admitted", if admitted { 1.0 } else { 0.0 });
                if !admitted {
                    return Ok(());
                }
            }
            let asm = OperatorAssembly::assemble(&grid, &phi, &sources)?;
            match solve_critical_point(&asm, cfg.physics.g_newton) {
                Ok(cp) => {
                    push_solution(&mut rec, &cp);
                    if cp.is_positive() {
                        push_report(&mut rec, &jensen_check(&cp, &asm)?);
                    }
                }
                Err(e) => push_error(&mut rec, &e),
            }
            Ok(())
        };
        if let Err(e) = body() {
            rec.error("error", format!("{e:#}"));
        }
        rec.wall_time_s = t0.elapsed().as_secs_f64();
        rec
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    let mut records: Vec<ResultRecord> =
        pool.install(|| (0..sw.samples).into_par_iter().map(one).collect());

    // Summary over positive solves, in sample order.
    let mut running = RunningMinimum::default();
    let mut trace = Vec::new();
    let mut positive = 0;
    for (i, r) in records.iter().enumerate() {
        let pos = r
            .entries
            .iter()
            .any(|e| e.key == "u_positive" && e.value == 1.0);
        if let (true, Some(p)) = (pos, r.entries.iter().find(|e| e.key == "potential")) {
            positive += 1;
            running.push(p.value);
            trace.push(TraceRow {
                t: i as f64,
                quantity: "potential".into(),
                value: p.value,
            });
            trace.push(TraceRow {
                t: i as f64,
                quantity: "running_min".into(),
                value: running.current().unwrap_or(f64::NAN),
            });
        }
    }
    let mut sum = ResultRecord::new(format!("{}/summary", cfg.id), hash, "sweep");
    sum.info("samples", sw.samples as f64);
    sum.info("positive_solves", positive as f64);
    if let Some(m) = running.current() {
        sum.info("running_min", m);
    }
    match running.relative_change(sw.window) {
        Some(c) => sum.check(
            "running_min_change",
            c,
            sw.stability_tol - c,
            c < sw.stability_tol,
        ),
        None => sum.notes.push(format!(
            "fewer than {} positive solves; stability not assessed",
            sw.window + 1
        )),
    }
    records.push(sum);
    Ok(RunOutput { records, trace })
}

fn scan(cfg: &ScenarioConfig, hash: &str) -> anyhow::Result<RunOutput> {
    let s = setup(cfg)?;
    let fc = cfg.family.clone().unwrap_or_default();
    let mut rec = ResultRecord::new(&cfg.id, hash, "scan");
    let asm = OperatorAssembly::assemble(&s.grid, &s.phi, &s.sources)?;
    let m = fc.t_points - 1;
    let schedule: Vec<f64> = (0..=m)
        .map(|i| fc.t_start + (fc.t_end - fc.t_start) * i as f64 / m as f64)
        .collect();
    let tr = family_scan(&asm, &schedule, fc.flux_rate_per_len2, cfg.physics.g_newton)?;
    let mut trace = Vec::new();
    for p in &tr.points {
        trace.push(TraceRow {
            t: p.t,
            quantity: "lambda0".into(),
            value: p.lambda0,
        });
        trace.push(TraceRow {
            t: p.t,
            quantity: "alpha".into(),
            value: p.alpha.unwrap_or(f64::NAN),
        });
        trace.push(TraceRow {
            t: p.t,
            quantity: "potential".into(),
            value: p.potential.unwrap_or(f64::NAN),
        });
    }
    for (i, c) in tr.lambda_crossings.iter().enumerate() {
        rec.info(format!("lambda0_crossing_{i}"), c.mid());
        rec.info(format!("lambda0_crossing_{i}_width"), c.hi - c.lo);
        trace.push(TraceRow {
            t: c.mid(),
            quantity: "lambda0_crossing".into(),
            value: c.mid(),
        });
    }
    for (i, c) in tr.alpha_crossings.iter().enumerate() {
        rec.info(format!("alpha_crossing_{i}"), c.mid());
        rec.info(format!("alpha_crossing_{i}_width"), c.hi - c.lo);
        trace.push(TraceRow {
            t: c.mid(),
            quantity: "alpha_crossing".into(),
            value: c.mid(),
        });
    }
    rec.info("points", tr.points.len() as f64);
    rec.check(
        "shift_defect",
        tr.shift_defect,
        1e-10 - tr.shift_defect,
        tr.shift_defect <= 1e-10,
    );
    Ok(RunOutput {
        records: vec![rec],
        trace,
    })
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn verify(cfg: &ScenarioConfig, hash: &str) -> anyhow::Result<ResultRecord> {
    let s = setup(cfg)?;
    let vc = cfg.verify.clone().unwrap_or_default();
    let g_n = cfg.physics.g_newton;
    let mut rec = ResultRecord::new(&cfg.id, hash, "verify");
    let asm = OperatorAssembly::assemble(&s.grid, &s.phi, &s.sources)?;

    let defect = asm.symmetry_defect(&random_vec(asm.len(), 1), &random_vec(asm.len(), 2));
    rec.check("symmetry_defect", defect, 1e-12 - defect, defect <= 1e-12);

    if !s.grid.is_synthetic() && s.grid.dim() == 2 {
        let total = total_scalar_curvature_direct(&s.grid, &s.phi)?;
        match s.grid.kind() {
            conformal_warp::geometry::ManifoldKind::Sphere2 => {
                let err = (total - 8.0 * PI).abs() / (8.0 * PI);
                rec.check("gauss_bonnet", total, 5e-3 - err, err <= 5e-3);
            }
            conformal_warp::geometry::ManifoldKind::Torus => {
                let tol = 1e-3 * s.grid.volume();
                rec.check("gauss_bonnet", total, tol - total.abs(), total.abs() <= tol);
            }
        }
    }
    if let Some(eta) = vc.eta {
        let m = membership(&s.grid, &s.phi, &s.sources, eta)?;
        if let Some(t) = m.total_curvature {
            rec.info("total_curvature", t);
            rec.info("in_s_eta", if m.in_s_eta == Some(true) { 1.0 } else { 0.0 });
        } else {
            rec.notes
                .push("synthetic grid: membership in S_eta not assessed".into());
        }
        if let Some(b) = m.in_s_tilde_eta {
            rec.info("in_s_tilde_eta", if b { 1.0 } else { 0.0 });
        }
        rec.info("flux_minus_string", m.flux_minus_string);
        rec.info("phi_l1", m.l1_norm);
        rec.info("in_l1_ball", if m.in_ball { 1.0 } else { 0.0 });
    }
    if !vc.s_list.is_empty() {
        let c = concentration_diagnostic(&s.grid, &s.phi, &vc.s_list)?;
        for (sv, v) in &c.integrals {
            rec.info(format!("exp_integral_s{sv}"), *v);
        }
        rec.info(
            "delta_like",
            if c.verdict == ConcentrationVerdict::DeltaLike {
                1.0
            } else {
                0.0
            },
        );
    }

    let cp = match solve_critical_point(&asm, g_n) {
        Ok(cp) => {
            if vc.expect_resonance {
                rec.check("resonance", cp.lambda0, 0.0, false);
                rec.notes
                    .push("a resonance was expected but the solve went through".into());
            }
            cp
        }
        Err(Error::Resonance {
            lambda0,
            obstruction,
        }) if vc.expect_resonance => {
            rec.check("resonance", lambda0, 0.0, true);
            rec.info("kernel_obstruction", obstruction);
            return Ok(rec);
        }
        Err(e) => {
            push_error(&mut rec, &e);
            return Ok(rec);
        }
    };
    push_solution(&mut rec, &cp);

    if cp.is_positive() {
        let t = identity_terms(&cp, &asm)?;
        let scale = [
            t.grad_log_u,
            t.grad_phi,
            t.cross,
            t.inverse_u,
            t.flux,
            t.string,
            t.rhs,
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = vc.identity_rel_tol * scale;
        let rep = identity_residual(&cp, &asm, tol)?;
        push_report(&mut rec, &rep);
        push_report(&mut rec, &jensen_check(&cp, &asm)?);
    } else {
        rec.notes.push(
            "u is not positive; identity and Jensen checks need u > 0 and were skipped".into(),
        );
    }
    push_report(&mut rec, &negative_curvature_bound(&cp, &asm)?);

    if let Some(eps) = vc.epsilon {
        let r = s.grid.r_g0();
        let ledger = if r > 0.0 {
            existence_checker_positive(&s.grid, &s.phi, &s.sources, eps)?
        } else {
            let gamma = vc
                .gamma_cap
                .context("verify.gamma_cap is required for the non-positive ledger")?;
            existence_checker_nonpositive(&s.grid, &s.phi, &s.sources, eps, gamma)?
        };
        for e in &ledger.conditions.entries {
            rec.check(format!("hypothesis_{}", e.name), e.lhs, e.margin, e.pass);
        }
        rec.info("ledger_k", ledger.k);
        if ledger.hypotheses_hold() {
            push_report(&mut rec, &ledger.check_solution(&cp));
        } else {
            // The estimates are not implied; report them without a verdict.
            for e in &ledger.check_solution(&cp).entries {
                rec.push(e.name.clone(), e.lhs, Some(e.margin), Status::Info);
            }
            rec.notes
                .push("existence hypotheses not met; a-priori estimates reported only".into());
        }
    }
    Ok(rec)
}

fn nonlinear(cfg: &ScenarioConfig, hash: &str) -> anyhow::Result<RunOutput> {
    let s = setup(cfg)?;
    let nc = cfg.nonlinear.clone().unwrap_or_default();
    let mut rec = ResultRecord::new(&cfg.id, hash, "nonlinear");
    let prob = match nc.f_const {
        Some(f) => NonlinearProblem::from_f(
            &s.grid,
            &s.phi,
            ScalarField::constant(&s.grid, f),
            nc.d,
            nc.k,
        )?,
        None => build_problem(&s.grid, &s.phi, &s.sources, nc.d, nc.k)?,
    };
    let mut trace = Vec::new();
    let (v, tr) = match monotone_solve(&prob) {
        Ok(x) => x,
        Err(e) => {
            push_error(&mut rec, &e);
            return Ok(RunOutput {
                records: vec![rec],
                trace,
            });
        }
    };
    for (i, sn) in tr.sup_norms.iter().enumerate() {
        trace.push(TraceRow {
            t: i as f64,
            quantity: "sup_norm".into(),
            value: *sn,
        });
    }
    rec.info("v_max", v.max());
    rec.info("v_min", v.min());
    rec.info("iterations", tr.iterations as f64);
    rec.info("trivial", if tr.trivial { 1.0 } else { 0.0 });
    rec.check(
        "monotone",
        tr.max_increase,
        0.0 - tr.max_increase,
        tr.monotone,
    );
    let bound = tr.super_solution;
    rec.check(
        "a_priori_bound",
        v.max(),
        bound - v.max(),
        v.max() <= bound * (1.0 + 1e-12),
    );
    rec.check(
        "residual",
        tr.residual,
        1e-8 - tr.residual,
        tr.residual <= 1e-8,
    );
    if tr.trivial {
        rec.notes
            .push("iteration collapsed to the trivial solution v = 0".into());
        return Ok(RunOutput {
            records: vec![rec],
            trace,
        });
    }
    match k_sign_identity(&prob, &v) {
        Ok(k) => {
            rec.info("lambda1", k.lambda1);
            rec.check(
                "k_sign",
                k.relative_gap,
                1e-6 - k.relative_gap,
                k.consistent && k.relative_gap <= 1e-6,
            );
        }
        Err(e) => push_error(&mut rec, &e),
    }
    if v.min() > 0.0 {
        let r = prob.rescale(&v, cfg.physics.g_newton)?;
        rec.info("rescale_a", r.a);
        rec.info("rescaled_k", r.k);
        if nc.k < 0.0 {
            let p = effective_potential_d(&prob, &r.v, cfg.physics.g_newton)?;
            rec.info("potential_d", p.potential);
            rec.info("potential_d_displayed", p.displayed);
            rec.check(
                "potential_chain",
                p.potential - p.mean_bound,
                p.potential - p.mean_bound,
                p.chain_holds(),
            );
        }
    }
    Ok(RunOutput {
        records: vec![rec],
        trace,
    })
}

fn example(cfg: &ScenarioConfig, hash: &str) -> anyhow::Result<RunOutput> {
    let ex = cfg.example.clone().unwrap_or_default();
    let mut rec = ResultRecord::new(&cfg.id, hash, "example");
    let mut trace = Vec::new();
    match ex.kind {
        ExampleKind::Gamma => {
            let f = gamma_family(ex.n, ex.gamma, ex.volume_len_n)?;
            rec.info("a", f.a);
            rec.info("radial_integral", f.radial_integral);
            rec.info("curvature_origin", f.curvature_origin());
            rec.info("sup_curvature", f.sup_curvature(ex.rho_len));
            let vol = f.volume_check();
            let err = (vol - ex.volume_len_n).abs() / ex.volume_len_n;
            rec.check("volume_check", vol, 1e-8 - err, err <= 1e-8);
            let order = convergence_order(
                f.finite_difference_error(ex.rho_len, 200),
                f.finite_difference_error(ex.rho_len, 400),
            );
            rec.check(
                "fd_order",
                order,
                0.25 - (order - 2.0).abs(),
                (order - 2.0).abs() <= 0.25,
            );
            rec.info(
                "cutoff_contribution",
                f.cutoff_split(10.0 * ex.rho_len).cutoff_contribution,
            );
            let prof = f.curvature_profile(ex.rho_len, ex.samples);
            for (r, v) in prof.r.iter().zip(&prof.values) {
                trace.push(TraceRow {
                    t: *r,
                    quantity: "curvature".into(),
                    value: *v,
                });
            }
        }
        ExampleKind::Bubble => {
            for &eps in &ex.epsilons {
                let b = bubble_family(ex.n, eps)?;
                rec.check(
                    format!("curvature_error_eps{eps}"),
                    b.curvature_error,
                    1e-6 - b.curvature_error,
                    b.curvature_error <= 1e-6,
                );
                rec.info(format!("volume_eps{eps}"), b.volume);
                rec.info(format!("u0_eps{eps}"), b.profile.values[0]);
                let step = (b.profile.r.len() / ex.samples.max(1)).max(1);
                for (r, v) in b.profile.r.iter().zip(&b.profile.values).step_by(step) {
                    trace.push(TraceRow {
                        t: *r,
                        quantity: format!("u_eps{eps}"),
                        value: *v,
                    });
                }
            }
            let spread = bubble_volume_spread(ex.n, &ex.epsilons)?;
            rec.check("volume_spread", spread, 1e-6 - spread, spread <= 1e-6);
        }
        ExampleKind::Gaussian => {
            let grid = build_grid_for(cfg)?;
            if grid.dim() != ex.n {
                bail!(
                    "example.n = {} does not match the manifold dimension {}",
                    ex.n,
                    grid.dim()
                );
            }
            let g = gaussian_source(ex.n, &default_center(&grid), ex.sigma_len)?;
            let r = g.rescale_check(ex.lambda)?;
            rec.info("integral_g0", r.integral_g0);
            rec.info("integral_g", r.integral_g);
            rec.check(
                "rescale_difference",
                r.difference,
                1e-8 - r.difference,
                r.difference <= 1e-8,
            );
            let sigmas = [2.0 * ex.sigma_len, ex.sigma_len, 0.5 * ex.sigma_len];
            for e in g.resolution_probe(&grid, &sigmas, 0.01) {
                rec.info(
                    format!("grid_relative_error_sigma{}", e.sigma),
                    e.relative_error,
                );
                if e.under_resolved {
                    rec.notes.push(format!(
                        "sigma = {} is under-resolved on this grid",
                        e.sigma
                    ));
                }
            }
            let prof = g.profile(ex.samples);
            for (r, v) in prof.r.iter().zip(&prof.values) {
                trace.push(TraceRow {
                    t: *r,
                    quantity: "density".into(),
                    value: *v,
                });
            }
        }
    }
    Ok(RunOutput {
        records: vec![rec],
        trace,
    })
}
