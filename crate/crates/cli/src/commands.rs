use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use psmgc::dynamics::{inverse_dynamics, DynamicsError, ParamVector};
use psmgc::excitation::{feasibility, optimize_trajectory, ExcitationError, ExcitationOptions, JointLimits};
use psmgc::gravsim::{drift_test, gc_torque, random_targets, DriftConfig, GravsimError};
use psmgc::identification::{
    assemble, check_constraints, model_hulls, preprocess_with, solve_constrained, DataSource, DatasetMeta,
    IdentDataset, IdentError, PreprocessOptions, QpSettings, Sample, SolveOptions,
};
use psmgc::io::{self, IoError, ModelConfig};
use psmgc::model::{ChainModel, ParamLayout};
use psmgc::{JointVector, N_JOINTS};

use crate::manifest::RunManifest;
use crate::{Cli, Command, DriftArgs, Failure, GenTrajArgs, GravityArgs, IdentifyArgs, SimulateArgs};

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<DynamicsError> for Failure {
    fn from(e: DynamicsError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<ExcitationError> for Failure {
    fn from(e: ExcitationError) -> Self {
        match e {
            ExcitationError::Infeasible { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<IdentError> for Failure {
    fn from(e: IdentError) -> Self {
        match e {
            IdentError::NotConverged { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<GravsimError> for Failure {
    fn from(e: GravsimError) -> Self {
        match e {
            GravsimError::Config(_) | GravsimError::Dynamics(_) | GravsimError::Model(_) => Failure::Input(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let model = match &cli.config {
        Some(p) => io::load_model(p)?,
        None => ModelConfig::default().build().map_err(|e| Failure::Input(e.to_string()))?,
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::GenTraj(a) => gen_traj(cli, &model, &out, a),
        Command::Simulate(a) => simulate(cli, &model, &out, a),
        Command::Identify(a) => identify(cli, &model, &out, a),
        Command::Gravity(a) => gravity(cli, &model, a),
        Command::DriftTest(a) => drift(cli, &model, &out, a),
    }
}

fn load_limits(path: Option<&PathBuf>) -> Result<JointLimits, Failure> {
    match path {
        Some(p) => Ok(io::load_limits(p)?),
        None => Ok(JointLimits::default()),
    }
}

fn write(manifest: &mut RunManifest, path: &Path, text: &str) -> Result<(), Failure> {
    io::write_text(path, text)?;
    manifest.output(path)
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value"));
}

fn gen_traj(cli: &Cli, model: &ChainModel, out: &Path, a: &GenTrajArgs) -> Result<(), Failure> {
    let mut manifest = RunManifest::new(
        "gen-traj",
        cli.seed,
        cli.config.as_ref(),
        json!({
            "limits": a.limits.as_ref().map(|p| p.display().to_string()),
            "mode": format!("{:?}", a.mode).to_lowercase(),
            "harmonics": a.harmonics,
            "period": a.period,
            "samples": a.samples,
            "budget": a.budget,
            "starts": a.starts,
            "rate": a.rate,
        }),
    )?;
    if let Some(p) = &a.limits {
        manifest.input(p)?;
    }
    let limits = load_limits(a.limits.as_ref())?;
    if !(a.period > 0.0 && a.period.is_finite()) {
        return Err(Failure::Input(format!("period {} must be positive", a.period)));
    }
    if !(a.rate > 0.0 && a.rate.is_finite()) {
        return Err(Failure::Input(format!("rate {} must be positive", a.rate)));
    }
    let layout = ParamLayout::for_model(model, a.mode.into());
    let opts = ExcitationOptions {
        base_freq: 2.0 * PI / a.period,
        harmonics: a.harmonics,
        n_samples: a.samples,
        budget: a.budget,
        starts: a.starts,
        seed: cli.seed,
        rest_ends: true,
    };
    let best = optimize_trajectory(model, &layout, &limits, &opts)?;
    let traj = &best.trajectory;
    let n = ((a.rate * traj.duration).round() as usize).max(2);
    let times = traj.sample_times(n);
    let states = times.iter().map(|t| traj.evaluate(*t)).collect::<Result<Vec<_>, _>>()?;
    let check = feasibility(traj, &limits, 10 * a.samples);

    let csv_path = out.join("trajectory.csv");
    let side_path = out.join("trajectory.json");
    write(&mut manifest, &csv_path, &io::trajectory_csv(&times, &states))?;
    let sidecar = json!({
        "trajectory": traj,
        "cond": best.cond,
        "initial_cond": best.initial_cond,
        "evaluations": best.evaluations,
        "mode": layout.mode,
        "feasible": check.passed(),
    });
    write(&mut manifest, &side_path, &io::to_json(&sidecar))?;
    let mpath = manifest.write(out)?;
    if cli.json {
        print_json(&json!({
            "cond": best.cond,
            "initial_cond": best.initial_cond,
            "rows": n,
            "trajectory": csv_path.display().to_string(),
            "sidecar": side_path.display().to_string(),
            "manifest": mpath.display().to_string(),
        }));
    } else {
        println!("cond(W·B) = {:.4} (initial {:.4}), {} rows -> {}", best.cond, best.initial_cond, n, csv_path.display());
    }
    Ok(())
}

fn simulate(cli: &Cli, model: &ChainModel, out: &Path, a: &SimulateArgs) -> Result<(), Failure> {
    let noise_desc = format!("relative gaussian sigma={} seed={}", a.noise, cli.seed);
    let mut manifest = RunManifest::new(
        "simulate",
        cli.seed,
        cli.config.as_ref(),
        json!({
            "params": a.params.display().to_string(),
            "trajectory": a.trajectory.display().to_string(),
            "noise": { "kind": "relative_gaussian", "sigma": a.noise },
            "derivatives": !a.no_derivatives,
        }),
    )?;
    if !(a.noise >= 0.0 && a.noise.is_finite()) {
        return Err(Failure::Input(format!("noise {} must be non-negative", a.noise)));
    }
    manifest.input(&a.params)?;
    manifest.input(&a.trajectory)?;
    let truth = io::load_params(&a.params, model)?;
    let (times, states) = io::read_trajectory(&a.trajectory)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mut samples = Vec::with_capacity(states.len());
    for (t, s) in times.iter().zip(&states) {
        let mut tau = inverse_dynamics(model, s, &truth)?;
        if a.noise > 0.0 {
            for v in tau.iter_mut() {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v *= 1.0 + a.noise * n;
            }
        }
        samples.push(Sample {
            t: *t,
            q: s.q,
            tau,
            qd: (!a.no_derivatives).then_some(s.qd),
            qdd: (!a.no_derivatives).then_some(s.qdd),
        });
    }
    let rate = if times.len() > 1 {
        (times.len() - 1) as f64 / (times[times.len() - 1] - times[0])
    } else {
        0.0
    };
    let data = IdentDataset {
        samples,
        meta: DatasetMeta {
            sample_rate: rate,
            source: DataSource::Simulated,
            noise: noise_desc,
        },
    };
    let path = out.join("data.csv");
    write(&mut manifest, &path, &io::dataset_csv(&data))?;
    let mpath = manifest.write(out)?;
    if cli.json {
        print_json(&json!({
            "samples": data.samples.len(),
            "data": path.display().to_string(),
            "manifest": mpath.display().to_string(),
        }));
    } else {
        println!("{} samples -> {}", data.samples.len(), path.display());
    }
    Ok(())
}

fn identify(cli: &Cli, model: &ChainModel, out: &Path, a: &IdentifyArgs) -> Result<(), Failure> {
    let mut manifest = RunManifest::new(
        "identify",
        cli.seed,
        cli.config.as_ref(),
        json!({
            "data": a.data.display().to_string(),
            "mode": format!("{:?}", a.mode).to_lowercase(),
            "cutoff": a.cutoff,
            "estimate_derivatives": a.estimate_derivatives,
            "m_min": a.m_min,
            "regularization": a.regularization,
            "max_iter": a.max_iter,
        }),
    )?;
    manifest.input(&a.data)?;
    let data = io::read_dataset(&a.data)?;
    let provided = data.has_derivatives() && !a.estimate_derivatives;
    let pre = preprocess_with(
        &data,
        &PreprocessOptions {
            cutoff_hz: a.cutoff.or(if provided { None } else { Some(10.0) }),
            use_provided_derivatives: provided,
        },
    )?;
    let layout = ParamLayout::for_model(model, a.mode.into());
    let (w, t) = assemble(model, &layout, &pre)?;
    let hulls = model_hulls(model);
    let opts = SolveOptions {
        m_min: a.m_min,
        regularization: a.regularization,
        qp: QpSettings {
            max_iter: a.max_iter,
            ..QpSettings::default()
        },
    };
    let res = match solve_constrained(&w, &t, &layout, &hulls, &opts) {
        Ok(r) => r,
        Err(IdentError::NotConverged { iterations, best }) => {
            let path = out.join("params.best.json");
            write(&mut manifest, &path, &io::params_json(model, &best))?;
            manifest.write(out)?;
            return Err(Failure::Numerical(format!(
                "solver did not converge within {iterations} iterations; best iterate in {}",
                path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let violations = check_constraints(&res.params, &hulls, a.m_min);
    let params_path = out.join("params.json");
    let report_path = out.join("report.json");
    write(&mut manifest, &params_path, &io::params_json(model, &res.params))?;
    let report = json!({
        "layout_mode": layout.mode,
        "dimension": layout.dim(),
        "samples": pre.samples.len(),
        "rank": res.rank,
        "cond": res.cond,
        "residual_rms": res.residual_rms,
        "kkt_residual": res.kkt_residual,
        "status": res.status,
        "iterations": res.iterations,
        "lambda": res.lambda,
        "m_min": res.m_min,
        "active_constraints": res.active_constraints,
        "constraint_violations": violations,
        "layout": (0..layout.dim()).map(|i| layout.name(i)).collect::<Vec<_>>(),
    });
    write(&mut manifest, &report_path, &io::to_json(&report))?;
    let mpath = manifest.write(out)?;
    let worst = res.residual_rms.iter().copied().fold(0.0, f64::max);
    if cli.json {
        print_json(&json!({
            "rank": res.rank,
            "cond": res.cond,
            "residual_rms_max": worst,
            "kkt_residual": res.kkt_residual,
            "status": res.status,
            "params": params_path.display().to_string(),
            "report": report_path.display().to_string(),
            "manifest": mpath.display().to_string(),
        }));
    } else {
        println!(
            "rank {} of {}, cond {:.4e}, max residual RMS {:.3e}, KKT {:.3e}, {:?} -> {}",
            res.rank,
            layout.dim(),
            res.cond,
            worst,
            res.kkt_residual,
            res.status,
            params_path.display()
        );
    }
    if !violations.is_empty() {
        return Err(Failure::Numerical(format!("{} constraint violations after the solve", violations.len())));
    }
    Ok(())
}

fn gravity(cli: &Cli, model: &ChainModel, a: &GravityArgs) -> Result<(), Failure> {
    if a.q.len() != N_JOINTS {
        return Err(Failure::Input(format!("expected {N_JOINTS} joint values, got {}", a.q.len())));
    }
    if a.q.iter().any(|v| !v.is_finite()) {
        return Err(Failure::Input("joint values must be finite".into()));
    }
    let params = io::load_params(&a.params, model)?;
    let q = JointVector::from_column_slice(&a.q);
    let tau = gc_torque(model, &params, &q)?;
    if let Some(out) = &cli.out {
        let mut manifest = RunManifest::new(
            "gravity",
            cli.seed,
            cli.config.as_ref(),
            json!({ "params": a.params.display().to_string(), "q": a.q }),
        )?;
        manifest.input(&a.params)?;
        manifest.write(out)?;
    }
    if cli.json {
        let units: Vec<&str> = (0..N_JOINTS).map(|j| if j == psmgc::INSERTION_JOINT { "N" } else { "N*m" }).collect();
        print_json(&json!({ "q": a.q, "tau": tau.as_slice(), "units": units }));
    } else {
        let cells: Vec<String> = tau.iter().map(|v| v.to_string()).collect();
        println!("{}", cells.join(" "));
    }
    Ok(())
}

fn drift(cli: &Cli, model: &ChainModel, out: &Path, a: &DriftArgs) -> Result<(), Failure> {
    let mut manifest = RunManifest::new(
        "drift-test",
        cli.seed,
        cli.config.as_ref(),
        json!({
            "plant": a.plant.display().to_string(),
            "ident": a.ident.display().to_string(),
            "poses": a.poses.as_ref().map(|p| p.display().to_string()),
            "n_poses": a.n_poses,
            "limits": a.limits.as_ref().map(|p| p.display().to_string()),
            "sim": a.sim.as_ref().map(|p| p.display().to_string()),
        }),
    )?;
    for p in [Some(&a.plant), Some(&a.ident), a.poses.as_ref(), a.limits.as_ref(), a.sim.as_ref()]
        .into_iter()
        .flatten()
    {
        manifest.input(p)?;
    }
    let plant = io::load_params(&a.plant, model)?;
    let ident: ParamVector = io::load_params(&a.ident, model)?;
    let cfg: DriftConfig = match &a.sim {
        Some(p) => io::read_json(p)?,
        None => DriftConfig::default(),
    };
    cfg.sim.validate()?;
    cfg.sim.breakaway_for(model, &plant)?;
    let targets = match &a.poses {
        Some(p) => io::read_targets(p)?,
        None => {
            let limits = load_limits(a.limits.as_ref())?;
            random_targets(&limits, a.n_poses, &mut ChaCha8Rng::seed_from_u64(cli.seed))
        }
    };
    if targets.is_empty() {
        return Err(Failure::Input("no drift-test targets".into()));
    }
    let results = drift_test(model, &plant, &ident, &targets, &cfg);
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => {
                let f = Failure::from(e.clone());
                if let Failure::Input(m) = f {
                    return Err(Failure::Input(m));
                }
                eprintln!("psmgc: warning: pose {}: {e}", i + 1);
                failures.push((i + 1, e.to_string()));
            }
        }
    }
    let csv_path = out.join("drift.csv");
    write(&mut manifest, &csv_path, &io::drift_csv(&reports, &failures))?;
    for r in &reports {
        let p = out.join("drift_logs").join(format!("pose_{}.csv", r.pose_id));
        write(&mut manifest, &p, &io::log_csv(&[("pd", &r.pd_log), ("gc", &r.gc_log)]))?;
    }
    let failures: Vec<_> = failures.iter().map(|(id, e)| json!({ "pose_id": id, "error": e })).collect();
    manifest.options["failed_poses"] = json!(failures);
    let mpath = manifest.write(out)?;
    let drifted = reports.iter().filter(|r| r.drifted).count();
    if cli.json {
        print_json(&json!({
            "reports": reports,
            "failed_poses": failures,
            "drift": csv_path.display().to_string(),
            "manifest": mpath.display().to_string(),
        }));
    } else {
        println!(
            "{} poses, {} drifted, {} failed -> {}",
            reports.len(),
            drifted,
            failures.len(),
            csv_path.display()
        );
    }
    Ok(())
}
