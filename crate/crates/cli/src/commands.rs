use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sis_core::config::RunConfig;
use sis_core::falsifier::falsify;
use sis_core::feasibility::{check_certificate, solve, Certificate};
use sis_core::safety_index::IndexParams;
use sis_core::sim::{run_batch, trajectory_csv, BatchReport};
use sis_core::{SafetyIndex, Setup, SynthesisProblem};

use crate::{exit, Common, IndexSource};

enum Failure {
    Config(String),
    Internal(String),
}

impl Failure {
    fn report(self) -> u8 {
        match self {
            Failure::Config(m) => {
                eprintln!("error: {m}");
                exit::CONFIG
            }
            Failure::Internal(m) => {
                eprintln!("error: {m}");
                exit::INTERNAL
            }
        }
    }
}

type Res<T> = Result<T, Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

struct Run {
    cfg: RunConfig,
    dir: PathBuf,
    hash: String,
}

impl Run {
    fn write(&self, name: &str, contents: &str) -> Res<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Failure::Internal(format!("{}: {e}", parent.display())))?;
        }
        fs::write(&path, contents).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn read<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Option<Res<T>> {
        let path = self.dir.join(name);
        let text = fs::read_to_string(&path).ok()?;
        Some(serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display()))))
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

/// Loads the config, applies flag overrides and prepares `<out>/<hash>-<seed>`.
///
/// The hash covers the config as loaded, so overrides other than the seed
/// keep artifacts of one setup together.
fn load(common: &Common) -> Res<Run> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let digest = Sha256::digest(cfg.to_json().as_bytes());
    let hash = hex::encode(&digest[..6]);
    if let Some(seed) = common.seed {
        cfg.solver.seed = seed;
        cfg.falsifier.seed = seed;
        cfg.sim.seed = seed;
    }
    if let Some(tol) = common.tolerance {
        cfg.solver.tolerance = tol;
    }
    let dir = common.out.join(format!("{hash}-{}", cfg.solver.seed));
    fs::create_dir_all(&dir).map_err(|e| Failure::Internal(format!("{}: {e}", dir.display())))?;
    Ok(Run { cfg, dir, hash })
}

fn problem(run: &Run) -> Res<(Setup, SynthesisProblem)> {
    run.cfg.problem::<f64>().map_err(config_err)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Serialize, Deserialize)]
struct Timing {
    solve_seconds: f64,
}

pub fn synth(common: &Common) -> u8 {
    synth_inner(common).unwrap_or_else(Failure::report)
}

fn synth_inner(common: &Common) -> Res<u8> {
    let run = load(common)?;
    run.write("config.json", &run.cfg.to_json())?;
    let (_, problem) = problem(&run)?;
    let solver = run.cfg.solver_config();
    println!(
        "{} refute cases, {} decision variables, {} restarts × {} iterations",
        problem.cases().len(),
        problem.dim(),
        solver.restarts,
        solver.iterations
    );
    let t0 = Instant::now();
    let outcome = solve(&problem, &solver);
    let seconds = t0.elapsed().as_secs_f64();
    let (mut cert, code) = match outcome {
        Ok(c) => (c, exit::OK),
        Err(f) => (f.best, exit::SOLVER),
    };
    cert.config_hash = Some(run.hash.clone());
    for j in 0..problem.order() {
        let ks: Vec<f64> = cert.restarts.iter().map(|r| r.k[j]).collect();
        let (m, s) = mean_std(&ks);
        println!("k{}: {m:.6e} ± {s:.3e} over {} restarts", j + 1, ks.len());
    }
    let valid = cert.restarts.iter().filter(|r| r.valid).count();
    println!("valid restarts: {valid}/{}", cert.restarts.len());
    println!("best restart: k = {:?}, residual {:.3e}", cert.k, cert.residual);
    for (label, lam) in cert.case_labels.iter().zip(&cert.min_eigenvalues) {
        println!("  λ_min {lam:+.6e}  [{label}]");
    }
    println!("solve time {seconds:.2} s");
    run.write("timing.json", &json(&Timing { solve_seconds: seconds }))?;
    if code == exit::OK {
        let _ = fs::remove_file(run.dir.join("best_attempt.json"));
        let path = run.write("certificate.json", &json(&cert))?;
        println!("certificate written to {}", path.display());
    } else {
        let _ = fs::remove_file(run.dir.join("certificate.json"));
        let path = run.write("best_attempt.json", &json(&cert))?;
        eprintln!(
            "no valid certificate: residual {:.3e}, worst λ_min {:.3e} (tolerance {:e}); best attempt in {}",
            cert.residual,
            cert.min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min),
            cert.tolerance,
            path.display()
        );
    }
    Ok(code)
}

struct Resolved {
    roots: Vec<f64>,
    certificate: Option<Certificate>,
}

fn resolve(run: &Run, source: &IndexSource, order: usize) -> Res<Resolved> {
    if let Some(k) = &source.k {
        if order != 1 || k.len() != 1 {
            return Err(Failure::Config(format!(
                "--k takes a single gain for a first-order index (order {order}, got {} values); use a certificate",
                k.len()
            )));
        }
        return Ok(Resolved {
            roots: k.clone(),
            certificate: None,
        });
    }
    let path = source.certificate.clone().unwrap_or_else(|| run.dir.join("certificate.json"));
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::Config(format!("{}: {e} (pass --certificate or --k)", path.display())))?;
    let cert: Certificate =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(Resolved {
        roots: cert.decision.theta.clone(),
        certificate: Some(cert),
    })
}

fn instantiate(run: &Run, setup: &Setup, roots: &[f64]) -> Res<SafetyIndex> {
    setup
        .family
        .instantiate(&IndexParams::unchecked(roots.to_vec(), run.cfg.index.eta), &setup.system)
        .map_err(config_err)
}

/// Prints the check and returns whether the certificate holds.
fn recheck(problem: &SynthesisProblem, setup: &Setup, cert: &Certificate) -> (bool, Vec<String>) {
    let check = check_certificate(problem, cert, &setup.vars);
    println!("certificate: {}", if check.valid { "valid" } else { "INVALID" });
    for (label, lam) in cert.case_labels.iter().zip(&check.min_eigenvalues) {
        println!("  λ_min {lam:+.6e}  [{label}]");
    }
    for d in &check.diagnostics {
        println!("  {d}");
    }
    (check.valid, check.diagnostics)
}

#[derive(Serialize, Deserialize)]
struct VerifySummary {
    k: Vec<f64>,
    certificate_valid: Option<bool>,
    diagnostics: Vec<String>,
    evaluated: usize,
    on_manifold: usize,
    skipped: usize,
    counterexamples: usize,
}

pub fn verify(common: &Common, source: &IndexSource) -> u8 {
    verify_inner(common, source).unwrap_or_else(Failure::report)
}

fn verify_inner(common: &Common, source: &IndexSource) -> Res<u8> {
    let run = load(common)?;
    let (setup, problem) = problem(&run)?;
    let resolved = resolve(&run, source, setup.family.order())?;
    let (certificate_valid, diagnostics) = match &resolved.certificate {
        Some(cert) => {
            let (ok, diags) = recheck(&problem, &setup, cert);
            (Some(ok), diags)
        }
        None => (None, Vec::new()),
    };
    let idx = instantiate(&run, &setup, &resolved.roots)?;
    let report = falsify(&idx, &setup.system, &setup.vars, &run.cfg.falsifier).map_err(config_err)?;
    let k = idx.params().k();
    println!(
        "falsifier: {} points, {} on the manifold, {} skipped, {} counterexamples (k = {k:?})",
        report.evaluated, report.on_manifold, report.skipped, report.total_counterexamples
    );
    for c in report.counterexamples.iter().take(5) {
        println!("  worst φ̇ {:+.6} at {:?} (φ = {:.4})", c.worst_phidot, c.coords, c.phi);
    }
    if !report.is_clean() {
        let path = run.write("counterexamples.csv", &report.to_csv())?;
        println!("counterexamples written to {}", path.display());
    }
    let summary = VerifySummary {
        k,
        certificate_valid,
        diagnostics,
        evaluated: report.evaluated,
        on_manifold: report.on_manifold,
        skipped: report.skipped,
        counterexamples: report.total_counterexamples,
    };
    run.write("verify.json", &json(&summary))?;
    let ok = certificate_valid.unwrap_or(true) && report.is_clean();
    Ok(if ok { exit::OK } else { exit::SAFETY })
}

pub fn simulate(common: &Common, source: &IndexSource, trials: Option<usize>, trajectories: bool) -> u8 {
    simulate_inner(common, source, trials, trajectories).unwrap_or_else(Failure::report)
}

fn simulate_inner(common: &Common, source: &IndexSource, trials: Option<usize>, trajectories: bool) -> Res<u8> {
    let mut run = load(common)?;
    if let Some(t) = trials {
        run.cfg.sim.trials = t;
    }
    run.cfg.sim.record_trajectories |= trajectories;
    let params = run.cfg.unicycle_params().map_err(config_err)?;
    let (setup, problem) = problem(&run)?;
    let resolved = resolve(&run, source, setup.family.order())?;
    if let Some(cert) = &resolved.certificate {
        let (ok, _) = recheck(&problem, &setup, cert);
        if !ok {
            eprintln!("refusing to simulate with an invalid certificate; pass --k to bypass");
            return Ok(exit::SAFETY);
        }
    }
    let idx = instantiate(&run, &setup, &resolved.roots)?;
    if run.cfg.sim.trials == 0 {
        eprintln!("warning: zero trials requested; the report is empty");
    }
    let batch = run_batch(&idx, &params, &run.cfg.sim);
    let md = batch.to_markdown(None);
    print!("{md}");
    run.write("sim_report.md", &md)?;
    run.write("sim_report.json", &json(&batch))?;
    if run.cfg.sim.record_trajectories {
        for t in &batch.trials {
            if let Some(rows) = &t.trajectory {
                run.write(&format!("trajectories/trial_{:04}.csv", t.index), &trajectory_csv(rows))?;
            }
        }
    }
    if batch.all_safe() {
        Ok(exit::OK)
    } else {
        eprintln!(
            "safety failures in trials {:?}; replay with --seed {} and the same config",
            batch.failing(),
            batch.seed
        );
        Ok(exit::SAFETY)
    }
}

pub fn report(common: &Common) -> u8 {
    report_inner(common).unwrap_or_else(Failure::report)
}

fn certificate_section(out: &mut String, cert: &Certificate, valid: bool) {
    let _ = writeln!(out, "## Synthesis\n");
    let _ = writeln!(
        out,
        "- status: {}",
        if valid { "valid certificate" } else { "no valid certificate (best attempt)" }
    );
    let _ = writeln!(out, "- k = {:?}, residual {:.3e}, tolerance {:e}", cert.k, cert.residual, cert.tolerance);
    let _ = writeln!(out, "\n| case | λ_min |\n|---|---|");
    for (label, lam) in cert.case_labels.iter().zip(&cert.min_eigenvalues) {
        let _ = writeln!(out, "| `{label}` | {lam:+.6e} |");
    }
    if !cert.restarts.is_empty() {
        let _ = writeln!(out, "\n| restart | k | worst λ_min | valid |\n|---|---|---|---|");
        for r in &cert.restarts {
            let _ = writeln!(out, "| {} | {:?} | {:+.4e} | {} |", r.index, r.k, r.worst_eigenvalue, r.valid);
        }
    }
    let _ = writeln!(out);
}

fn report_inner(common: &Common) -> Res<u8> {
    let run = load(common)?;
    let mut out = format!("# Run {}\n\n", dir_name(&run.dir));
    let mut found = false;
    let timing: Option<Timing> = run.read("timing.json").transpose()?;
    if let Some(cert) = run.read::<Certificate>("certificate.json").transpose()? {
        certificate_section(&mut out, &cert, true);
        found = true;
    } else if let Some(cert) = run.read::<Certificate>("best_attempt.json").transpose()? {
        certificate_section(&mut out, &cert, false);
        found = true;
    }
    if let Some(t) = &timing {
        let _ = writeln!(out, "Solve time: {:.2} s\n", t.solve_seconds);
    }
    if let Some(v) = run.read::<VerifySummary>("verify.json").transpose()? {
        found = true;
        let _ = writeln!(out, "## Verification\n");
        if let Some(ok) = v.certificate_valid {
            let _ = writeln!(out, "- certificate re-check: {}", if ok { "valid" } else { "invalid" });
        }
        let _ = writeln!(
            out,
            "- k = {:?}: {} counterexamples over {} points ({} on the manifold, {} skipped)\n",
            v.k, v.counterexamples, v.evaluated, v.on_manifold, v.skipped
        );
    }
    if let Some(b) = run.read::<BatchReport>("sim_report.json").transpose()? {
        found = true;
        let _ = writeln!(out, "## Simulation\n");
        out.push_str(&b.to_markdown(timing.as_ref().map(|t| t.solve_seconds)));
    }
    if !found {
        return Err(Failure::Config(format!("no artifacts in {}", run.dir.display())));
    }
    let path = run.write("report.md", &out)?;
    print!("{out}");
    println!("\nreport written to {}", path.display());
    Ok(exit::OK)
}

fn dir_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
