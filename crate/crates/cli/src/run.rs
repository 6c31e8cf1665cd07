//! Executes a validated [`RunConfig`] and writes its artifacts.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use multihost::analytics::{
    gaussian_constant, in_lambda_infinity_ball, in_small_delta_region, interaction_matrix, lambda_bounds,
    lambda_infinity, lambda_prime_at_zero, small_delta_k,
};
use multihost::domain::{build_domain, write_field_csv};
use multihost::dynamics::{classify_fate, initial_condition, simulate, InitialCondition};
use multihost::eigen::{lambda_h_with, solve_on, LadderSettings, SolverSettings};
use multihost::sweep::{
    best_third_optimum, delta_sweep_with, far_field_check, middle_vs_copy, region_map, Discretization, SweepSpec,
};
use multihost::{Coupling, DiscreteDomain, FitnessLandscape, ModelParams};

use crate::config::{Command, CouplingName, InitialKind, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{command} failed: {source}")]
    Solver {
        command: Command,
        #[source]
        source: multihost::Error,
    },
    #[error("assertion failed: {0}")]
    Assertion(String),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    /// One-line result summary.
    pub summary: String,
    /// Named checks evaluated for `--assert`.
    pub checks: Vec<(String, bool)>,
}

impl RunOutcome {
    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect()
    }
}

/// Creates `<output_dir>/<command>-<timestamp>` and points `latest` at it.
pub fn create_run_dir(config: &RunConfig) -> io::Result<PathBuf> {
    let root = PathBuf::from(&config.output_dir);
    fs::create_dir_all(&root)?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = format!("{}-{stamp}", config.command);
    let mut name = base.clone();
    let mut k = 1;
    while root.join(&name).exists() {
        name = format!("{base}-{k}");
        k += 1;
    }
    let dir = root.join(&name);
    fs::create_dir(&dir)?;
    let latest = root.join("latest");
    if latest.symlink_metadata().is_ok() {
        fs::remove_file(&latest)?;
    }
    #[cfg(unix)]
    std::os::unix::fs::symlink(&name, &latest)?;
    #[cfg(not(unix))]
    fs::write(&latest, &name)?;
    Ok(dir)
}

/// Runs in a fresh timestamped directory. `input` is the raw configuration
/// text, copied next to the normalised echo when given.
pub fn run(config: &RunConfig, input: Option<&str>, assert: bool) -> Result<RunOutcome, RunError> {
    let dir = create_run_dir(config)?;
    run_in(config, &dir, input, assert)
}

/// Runs with every artifact written into `dir`. Identical configs give
/// byte-identical files.
pub fn run_in(config: &RunConfig, dir: &Path, input: Option<&str>, assert: bool) -> Result<RunOutcome, RunError> {
    fs::write(dir.join("config.toml"), config.to_toml())?;
    if let Some(text) = input {
        fs::write(dir.join("input.toml"), text)?;
    }
    let solver_err = |source| RunError::Solver {
        command: config.command,
        source,
    };
    let (summary, checks) = match config.command {
        Command::Eigen => eigen(config, dir),
        Command::Dynamics => dynamics(config, dir),
        Command::RegionMap => map(config, dir),
        Command::DeltaSweep => delta(config, dir),
        Command::FarField => far(config, dir),
        Command::MiddleVsCopy => middle(config, dir),
        Command::BestO3 => best(config, dir),
        Command::Analytics => analytics(config, dir),
    }
    .map_err(|e| match e {
        StepError::Io(e) => RunError::Io(e),
        StepError::Model(e) => solver_err(e),
    })?;
    let outcome = RunOutcome {
        dir: dir.to_path_buf(),
        summary,
        checks,
    };
    let mut log = String::new();
    for (name, ok) in &outcome.checks {
        log.push_str(&format!("{} {name}\n", if *ok { "PASS" } else { "FAIL" }));
    }
    fs::write(dir.join("checks.txt"), log)?;
    if assert {
        let failed = outcome.failed_checks();
        if !failed.is_empty() {
            return Err(RunError::Assertion(failed.join("; ")));
        }
    }
    Ok(outcome)
}

enum StepError {
    Io(io::Error),
    Model(multihost::Error),
}

impl From<io::Error> for StepError {
    fn from(e: io::Error) -> Self {
        StepError::Io(e)
    }
}

impl From<multihost::Error> for StepError {
    fn from(e: multihost::Error) -> Self {
        StepError::Model(e)
    }
}

type Step = Result<(String, Vec<(String, bool)>), StepError>;

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn landscape(c: &RunConfig) -> multihost::Result<FitnessLandscape> {
    FitnessLandscape::new(c.model.optima.clone(), c.model.alpha, c.model.r_max)
}

fn model(c: &RunConfig) -> multihost::Result<ModelParams> {
    ModelParams::new(landscape(c)?, c.model.mu, c.model.delta)
}

fn solver(c: &RunConfig) -> SolverSettings {
    SolverSettings {
        tol: c.solver.tol,
        max_iter: c.solver.max_iter,
    }
}

fn ladder(c: &RunConfig) -> LadderSettings {
    LadderSettings {
        solver: solver(c),
        ..LadderSettings::default()
    }
}

fn discretization(c: &RunConfig) -> Discretization {
    Discretization {
        spacing: c.solver.spacing,
        margin_widths: c.solver.margin_widths,
    }
}

/// The fixed cube when configured, otherwise a lattice box around the optima.
fn fixed_domain(c: &RunConfig, p: &ModelParams) -> multihost::Result<Arc<DiscreteDomain>> {
    match (c.solver.radius, c.solver.points) {
        (Some(r), Some(m)) => Ok(Arc::new(build_domain(c.dim(), r, m)?)),
        _ => discretization(c).domain_for(p.landscape.optima(), p),
    }
}

fn coupling(c: &RunConfig) -> Coupling {
    match c.model.coupling {
        CouplingName::Standard => Coupling::Standard,
        CouplingName::Loss => Coupling::Loss,
    }
}

fn eigen(c: &RunConfig, dir: &Path) -> Step {
    let p = model(c)?;
    let res = match (c.solver.radius, c.solver.points) {
        (Some(_), Some(_)) => solve_on(&p, coupling(c), fixed_domain(c, &p)?, solver(c))?,
        _ => lambda_h_with(&p, coupling(c), c.solver.accuracy, &ladder(c))?,
    };
    res.write_metadata(create(dir, "eigen_metadata.txt")?)?;
    for (i, f) in res.eigenvector.iter().enumerate() {
        write_field_csv(f, create(dir, &format!("eigenvector_{}.csv", i + 1))?)?;
    }
    let l1 = p.lambda1();
    let slack = 10.0 * c.solver.accuracy;
    let mut checks = Vec::new();
    let bounds_text = match coupling(c) {
        Coupling::Standard => {
            let b = lambda_bounds(&p.landscape, p.mu, p.delta)?;
            checks.push((
                "lambda within bounds".to_string(),
                res.lambda >= b.lower - slack && res.lambda <= b.upper + slack,
            ));
            format!("bounds [{}, {}]", b.lower, b.upper)
        }
        Coupling::Loss => {
            checks.push((
                "lambda within [lambda1, lambda1 + delta]".to_string(),
                res.lambda >= l1 - slack && res.lambda <= l1 + p.delta + slack,
            ));
            format!("bounds [{}, {}]", l1, l1 + p.delta)
        }
    };
    let summary = format!(
        "lambda = {:.10}; lambda1 closed form = {:.10}; |lambda - lambda1| = {:.3e}; {bounds_text}",
        res.lambda,
        l1,
        (res.lambda - l1).abs()
    );
    Ok((summary, checks))
}

fn dynamics(c: &RunConfig, dir: &Path) -> Step {
    let p = model(c)?;
    let domain = fixed_domain(c, &p)?;
    let d = &c.dynamics;
    let kind = match d.initial {
        InitialKind::GaussianAtOptima => InitialCondition::GaussianAtOptima {
            width: d.width,
            mass: d.mass,
        },
        InitialKind::GaussianAt => InitialCondition::GaussianAt {
            center: d.center.clone().unwrap_or_else(|| p.landscape.centroid()),
            width: d.width,
            mass: d.mass,
        },
    };
    let eig = solve_on(&p, Coupling::Standard, Arc::clone(&domain), solver(c))?;
    let init = initial_condition(&kind, &p, domain)?;
    let rec = simulate(&init, d.t_end, d.dt, d.sample_every)?;
    rec.write_csv(create(dir, "trajectory.csv")?)?;
    for (i, f) in rec.terminal.fields.iter().enumerate() {
        write_field_csv(f, create(dir, &format!("terminal_{}.csv", i + 1))?)?;
    }
    let report = classify_fate(&rec, eig.lambda);
    let agreement = match report.agrees {
        Some(true) => "yes",
        Some(false) => "no",
        None => "n/a",
    };
    let mut meta = create(dir, "dynamics_metadata.txt")?;
    writeln!(meta, "lambda = {}", eig.lambda)?;
    writeln!(meta, "fate = {}", report.fate.name())?;
    writeln!(meta, "sign_agreement = {agreement}")?;
    writeln!(meta, "steps = {}", rec.steps)?;
    writeln!(meta, "dt = {}", rec.dt)?;
    writeln!(meta, "clip_events = {}", rec.clip_events())?;
    meta.flush()?;
    let summary = format!(
        "fate = {}; lambda = {:.8}; sign agreement = {agreement}; final N = {:.6e}",
        report.fate.name(),
        eig.lambda,
        rec.totals.last().copied().unwrap_or(0.0)
    );
    let checks = vec![
        ("fate agrees with sign of lambda".to_string(), report.agrees == Some(true)),
        ("no clipping".to_string(), rec.clip_events() == 0),
    ];
    Ok((summary, checks))
}

fn map(c: &RunConfig, dir: &Path) -> Step {
    let spec = SweepSpec {
        alpha: c.model.alpha,
        mu: c.model.mu,
        delta: c.model.delta,
        r_max: c.model.r_max,
        beta: c.sweep.beta,
        a1_range: c.sweep.a1_range,
        a2_range: c.sweep.a2_range,
        resolution: c.sweep.resolution,
        solver: solver(c),
        discretization: discretization(c),
        workers: c.workers,
    };
    let m = region_map(&spec)?;
    m.write_csv(create(dir, "region_map.csv")?)?;
    m.write_metadata(create(dir, "region_map_metadata.txt")?)?;
    let expected = spec.resolution[0] * spec.resolution[1];
    let distinct: HashSet<(u64, u64)> = m.rows.iter().map(|r| (r.a1.to_bits(), r.a2.to_bits())).collect();
    let positive = m.rows.iter().filter(|r| r.in_region_delta).count();
    let components = m.positive_components();
    let tol = 2.0 * spec.solver.tol;
    let (d2, d1) = m.symmetry_defects();
    let mut checks = vec![(
        format!("rows = {expected} without duplicates"),
        m.rows.len() == expected && distinct.len() == expected,
    )];
    if let Some(d) = d2 {
        checks.push((format!("a2 reflection defect {d:.1e}"), d <= tol));
    }
    if let Some(d) = d1 {
        checks.push((format!("a1 reflection defect {d:.1e}"), d <= tol));
    }
    let summary = format!(
        "rows = {}; lambda2 = {:.10}; positive-gain points = {positive}; components = {components}",
        m.rows.len(),
        m.lambda2
    );
    Ok((summary, checks))
}

fn delta(c: &RunConfig, dir: &Path) -> Step {
    let land = landscape(c)?;
    let t = delta_sweep_with(&land, c.model.mu, &c.sweep.deltas, c.solver.accuracy, &ladder(c))?;
    t.write_csv(create(dir, "delta_sweep.csv")?)?;
    let worst = t.worst_decrease();
    let values: Vec<String> = t.rows.iter().map(|r| format!("{}:{:.8}", r.delta, r.lambda)).collect();
    let summary = format!("lambda by delta {}; lambda_inf = {:.8}", values.join(" "), t.lambda_infinity);
    let checks = vec![(
        format!("nondecreasing in delta (worst drop {worst:.1e})"),
        worst <= 2.0 * c.solver.tol,
    )];
    Ok((summary, checks))
}

fn far(c: &RunConfig, dir: &Path) -> Step {
    let m = &c.model;
    let t = far_field_check(
        c.sweep.beta,
        m.alpha,
        m.mu,
        m.delta,
        m.r_max,
        &c.sweep.distances,
        &discretization(c),
        solver(c),
    )?;
    t.write_csv(create(dir, "far_field.csv")?)?;
    let gaps: Vec<String> = t.rows.iter().map(|r| format!("{}:{:.3e}", r.distance, r.gap)).collect();
    let summary = format!(
        "lambda2 = {:.8}; lambda_tilde2 = {:.8}; gaps {}",
        t.lambda2,
        t.lambda_tilde2,
        gaps.join(" ")
    );
    let checks = vec![
        ("far-field bounds hold".to_string(), t.bounds_hold()),
        ("gap decreasing".to_string(), t.gap_decreasing()),
    ];
    Ok((summary, checks))
}

fn middle(c: &RunConfig, dir: &Path) -> Step {
    let m = &c.model;
    let t = middle_vs_copy(&c.sweep.betas, m.alpha, m.mu, m.delta, m.r_max, &discretization(c), solver(c))?;
    t.write_csv(create(dir, "middle_vs_copy.csv")?)?;
    let last = t.rows.last().expect("validated nonempty");
    let summary = format!(
        "beta = {}: middle = {:.8}, copy = {:.8}; lambda1 = {:.8}",
        last.beta, last.lambda_middle, last.lambda_copy, t.lambda1
    );
    let checks = vec![("middle above copy at largest beta".to_string(), t.middle_worse_at_largest())];
    Ok((summary, checks))
}

fn best(c: &RunConfig, dir: &Path) -> Step {
    let m = &c.model;
    let b = best_third_optimum(
        c.sweep.beta,
        m.alpha,
        m.mu,
        m.delta,
        m.r_max,
        c.sweep.search_accuracy,
        &discretization(c),
        solver(c),
    )?;
    b.write_csv(create(dir, "best_o3.csv")?)?;
    let summary = format!(
        "a* = {:.6}; lambda3 min = {:.8}; lambda2 = {:.8}; grid fallback = {}",
        b.a_star, b.lambda3_min, b.lambda2, b.grid_fallback
    );
    let checks = vec![("best third optimum beats two hosts".to_string(), b.springboard_exists())];
    Ok((summary, checks))
}

fn analytics(c: &RunConfig, dir: &Path) -> Step {
    let p = model(c)?;
    let land = &p.landscape;
    let mut lines: Vec<(String, String)> = vec![
        ("hosts".into(), land.host_count().to_string()),
        ("dim".into(), land.dim().to_string()),
        ("lambda1".into(), p.lambda1().to_string()),
        ("gaussian_constant".into(), gaussian_constant(land.alpha(), p.mu, land.dim()).to_string()),
        ("lambda_infinity".into(), lambda_infinity(land, p.mu)?.to_string()),
    ];
    let b = lambda_bounds(land, p.mu, p.delta)?;
    lines.push(("bounds.lower".into(), b.lower.to_string()));
    lines.push(("bounds.upper".into(), b.upper.to_string()));
    lines.push(("bounds.crude_cap".into(), b.crude_cap.to_string()));
    if let Some(r) = b.two_host_refinement {
        lines.push(("bounds.two_host_refinement".into(), r.to_string()));
    }
    if land.host_count() > 1 {
        let im = interaction_matrix(land, p.mu)?;
        lines.push(("interaction.top_eigenvalue".into(), im.top_eigenvalue.to_string()));
        lines.push(("slope_at_zero".into(), lambda_prime_at_zero(land, p.mu)?.to_string()));
    }
    let o = land.optima();
    let paired = o.len() == 3
        && land.dim() == 2
        && o[0][0] == -o[1][0]
        && o[0][0] < 0.0
        && o[0][1] == 0.0
        && o[1][1] == 0.0;
    if paired {
        let beta = o[1][0];
        let k = small_delta_k(&o[2], beta, land.alpha(), p.mu)?;
        let member = in_small_delta_region(&o[2], beta, land.alpha(), p.mu)?;
        lines.push(("third.k".into(), k.to_string()));
        lines.push(("third.small_delta_region".into(), format!("{member:?}").to_lowercase()));
        lines.push(("third.large_delta_ball".into(), in_lambda_infinity_ball(&o[2], beta).to_string()));
    }
    let mut out = create(dir, "analytics.txt")?;
    for (k, v) in &lines {
        writeln!(out, "{k} = {v}")?;
    }
    out.flush()?;
    let summary = format!(
        "lambda1 = {:.10}; bounds [{:.10}, {:.10}]; lambda_inf = {}",
        p.lambda1(),
        b.lower,
        b.upper,
        lines[4].1
    );
    let checks = vec![("bounds ordered".to_string(), b.lower <= b.upper + 1e-12)];
    Ok((summary, checks))
}
