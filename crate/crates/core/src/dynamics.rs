//! Time integration of the nonlinear system with within-host logistic
//! competition.
//!
//! Each step is backward Euler for `-(mu^2/2) Lap + alpha |x - O_i|^2 / 2`
//! and forward Euler for `u_i (r_max - N_i)` plus migration, with the
//! masses `N_i` frozen at the start of the step.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::analytics::{dist_sq, ModelParams};
use crate::domain::{integrate, DiscreteDomain, Field};
use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::linalg::conjugate_gradient;

/// Largest allowed `dt * (|r_max| + delta + max_i N_i)`.
pub const STABILITY_CAP: f64 = 0.5;
/// Masses below this have no meaningful mean fitness.
pub const MASS_FLOOR: f64 = 1e-14;

const CG_TOL: f64 = 1e-12;
const CG_MAX_ITER: usize = 10_000;
/// Negative entries no larger than this multiple of the field maximum come
/// from the linear solve and are zeroed without being counted as clips.
const ROUNDOFF_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// The same Gaussian bump of the given mass in every host.
    GaussianAt { center: Vec<f64>, width: f64, mass: f64 },
    /// A Gaussian bump of the given mass centred on each host's optimum.
    GaussianAtOptima { width: f64, mass: f64 },
    /// Constant `height` on nodes inside `[lower, upper]`, in every host.
    IndicatorBox { lower: Vec<f64>, upper: Vec<f64>, height: f64 },
    FromFields(Vec<Field>),
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub fields: Vec<Field>,
    pub params: ModelParams,
    /// Nodes set to zero after a genuine undershoot, summed over steps.
    pub clip_events: usize,
    pub clipped_mass: f64,
}

impl SimState {
    pub fn host_count(&self) -> usize {
        self.fields.len()
    }

    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        self.fields[0].domain()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.fields.iter().map(integrate).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses().iter().sum()
    }
}

fn gaussian_bump(domain: &Arc<DiscreteDomain>, center: &[f64], width: f64, mass: f64) -> Result<Field> {
    if center.len() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            got: center.len(),
        });
    }
    if mass == 0.0 {
        return Ok(Field::zeros(Arc::clone(domain)));
    }
    let shape = Field::from_fn(Arc::clone(domain), |x| (-dist_sq(x, center) / (2.0 * width * width)).exp())?;
    let total = integrate(&shape);
    if total <= 0.0 {
        return Err(invalid("center", "bump does not reach any grid node"));
    }
    let values = shape.into_values().into_iter().map(|v| v * mass / total).collect();
    Field::new(Arc::clone(domain), values)
}

pub fn initial_condition(
    kind: &InitialCondition,
    params: &ModelParams,
    domain: Arc<DiscreteDomain>,
) -> Result<SimState> {
    let hosts = params.landscape.host_count();
    if domain.dim() != params.landscape.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.landscape.dim(),
            got: domain.dim(),
        });
    }
    let fields = match kind {
        InitialCondition::GaussianAt { center, width, mass } => {
            require_positive("width", *width)?;
            require_nonnegative("mass", *mass)?;
            let bump = gaussian_bump(&domain, center, *width, *mass)?;
            vec![bump; hosts]
        }
        InitialCondition::GaussianAtOptima { width, mass } => {
            require_positive("width", *width)?;
            require_nonnegative("mass", *mass)?;
            params
                .landscape
                .optima()
                .iter()
                .map(|o| gaussian_bump(&domain, o, *width, *mass))
                .collect::<Result<_>>()?
        }
        InitialCondition::IndicatorBox { lower, upper, height } => {
            require_nonnegative("height", *height)?;
            if lower.len() != domain.dim() || upper.len() != domain.dim() {
                return Err(Error::DimensionMismatch {
                    expected: domain.dim(),
                    got: lower.len().min(upper.len()),
                });
            }
            let f = Field::from_fn(Arc::clone(&domain), |x| {
                let inside = x.iter().zip(lower).zip(upper).all(|((v, lo), hi)| v >= lo && v <= hi);
                if inside {
                    *height
                } else {
                    0.0
                }
            })?;
            vec![f; hosts]
        }
        InitialCondition::FromFields(fields) => {
            if fields.len() != hosts {
                return Err(Error::DimensionMismatch {
                    expected: hosts,
                    got: fields.len(),
                });
            }
            for f in fields {
                if !Arc::ptr_eq(f.domain(), &domain) && **f.domain() != *domain {
                    return Err(Error::DomainMismatch);
                }
                if f.values().iter().any(|&v| v < 0.0) {
                    return Err(invalid("fields", "initial data must be nonnegative"));
                }
            }
            fields
                .iter()
                .map(|f| Field::new(Arc::clone(&domain), f.values().to_vec()))
                .collect::<Result<_>>()?
        }
    };
    Ok(SimState {
        t: 0.0,
        fields,
        params: params.clone(),
        clip_events: 0,
        clipped_mass: 0.0,
    })
}

/// Precomputed per-host quantities for repeated steps on one domain.
struct Stepper {
    domain: Arc<DiscreteDomain>,
    diffusion: f64,
    /// `alpha |x - O_i|^2 / 2`
    confinement: Vec<Vec<f64>>,
    r_max: f64,
    self_rate: f64,
    transfer: f64,
    delta: f64,
}

impl Stepper {
    fn new(params: &ModelParams, domain: Arc<DiscreteDomain>) -> Self {
        let land = &params.landscape;
        let h = land.host_count();
        let alpha = land.alpha();
        let confinement = land
            .optima()
            .iter()
            .map(|o| domain.sample(|x| alpha * dist_sq(x, o) / 2.0))
            .collect();
        let (self_rate, transfer) = if h > 1 {
            (params.delta, params.delta / (h as f64 - 1.0))
        } else {
            (0.0, 0.0)
        };
        Self {
            domain,
            diffusion: params.mu * params.mu / 2.0,
            confinement,
            r_max: land.r_max(),
            self_rate,
            transfer,
            delta: params.delta,
        }
    }

    fn step(&self, state: &SimState, dt: f64) -> Result<SimState> {
        require_positive("dt", dt)?;
        let masses = state.masses();
        let max_mass = masses.iter().copied().fold(0.0, f64::max);
        let product = dt * (self.r_max.abs() + self.delta + max_mass);
        if product > STABILITY_CAP {
            return Err(Error::StabilityCap { dt, product });
        }
        let n = self.domain.len();
        let mut total = vec![0.0; n];
        for f in &state.fields {
            total.iter_mut().zip(f.values()).for_each(|(s, v)| *s += v);
        }
        let h = self.domain.spacing();
        let stencil = 2.0 * self.domain.dim() as f64 * self.diffusion / (h * h);
        let cell = self.domain.cell_volume();

        let solved: Vec<Result<(Vec<f64>, usize, f64)>> = state
            .fields
            .par_iter()
            .zip(&masses)
            .zip(&self.confinement)
            .map(|((field, &mass), conf)| {
                let u = field.values();
                let growth = 1.0 + dt * (self.r_max - mass - self.self_rate);
                let rhs: Vec<f64> = u
                    .iter()
                    .zip(&total)
                    .map(|(&ui, &s)| ui * growth + dt * self.transfer * (s - ui))
                    .collect();
                let inv_diag: Vec<f64> = conf.iter().map(|c| 1.0 / (1.0 + dt * (stencil + c))).collect();
                let mut x = u.to_vec();
                let out = conjugate_gradient(
                    |p, q| {
                        self.domain.laplacian_into(p, q);
                        for k in 0..p.len() {
                            q[k] = p[k] + dt * (conf[k] * p[k] - self.diffusion * q[k]);
                        }
                    },
                    Some(&inv_diag),
                    &rhs,
                    &mut x,
                    CG_TOL,
                    CG_MAX_ITER,
                );
                if !out.converged {
                    return Err(Error::NonConvergence {
                        what: "implicit diffusion solve",
                        iterations: out.iterations,
                        residual: out.relative_residual,
                    });
                }
                let peak = x.iter().copied().fold(0.0, f64::max);
                let mut clips = 0;
                let mut clipped = 0.0;
                for v in x.iter_mut().filter(|v| **v < 0.0) {
                    if -*v > ROUNDOFF_FLOOR * peak {
                        clips += 1;
                        clipped -= *v * cell;
                    }
                    *v = 0.0;
                }
                Ok((x, clips, clipped))
            })
            .collect();

        let mut fields = Vec::with_capacity(solved.len());
        let mut clip_events = state.clip_events;
        let mut clipped_mass = state.clipped_mass;
        for r in solved {
            let (x, clips, clipped) = r?;
            clip_events += clips;
            clipped_mass += clipped;
            fields.push(Field::new(Arc::clone(&self.domain), x)?);
        }
        Ok(SimState {
            t: state.t + dt,
            fields,
            params: state.params.clone(),
            clip_events,
            clipped_mass,
        })
    }

    /// `(N_i, rbar_i)` per host; `rbar_i` is `None` below [`MASS_FLOOR`].
    fn observe(&self, state: &SimState) -> (Vec<f64>, Vec<Option<f64>>) {
        let cell = self.domain.cell_volume();
        state
            .fields
            .iter()
            .zip(&self.confinement)
            .map(|(f, conf)| {
                let mass = integrate(f);
                let weighted: f64 = f.values().iter().zip(conf).map(|(u, c)| u * (self.r_max - c)).sum::<f64>() * cell;
                (mass, (mass >= MASS_FLOOR).then(|| weighted / mass))
            })
            .unzip()
    }

    /// `max_k |u_2[k] - u_1[iota k]|` for two hosts mirrored through
    /// `x_1 -> -x_1`; `None` when the setting is not mirror symmetric.
    fn mirror_defect(&self, state: &SimState) -> Option<f64> {
        let optima = state.params.landscape.optima();
        if optima.len() != 2 {
            return None;
        }
        let (o1, o2) = (&optima[0], &optima[1]);
        if o1[0] != -o2[0] || o1[1..] != o2[1..] {
            return None;
        }
        let d = &self.domain;
        d.mirror_index(0, 0)?;
        let (u1, u2) = (state.fields[0].values(), state.fields[1].values());
        let mut worst: f64 = 0.0;
        for k in 0..d.len() {
            let m = d.mirror_index(k, 0)?;
            worst = worst.max((u2[k] - u1[m]).abs());
        }
        Some(worst)
    }
}

/// One IMEX step of length `dt`.
pub fn step(state: &SimState, dt: f64) -> Result<SimState> {
    Stepper::new(&state.params, Arc::clone(state.domain())).step(state, dt)
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `masses[s][i]` is `N_i` at sample `s`.
    pub masses: Vec<Vec<f64>>,
    /// Sum of the per-host masses at each sample.
    pub totals: Vec<f64>,
    /// Mean fitness per host, `None` where the host is empty.
    pub mean_fitness: Vec<Vec<Option<f64>>>,
    /// Mirror defect per sample for symmetric two-host runs.
    pub mirror_defects: Option<Vec<f64>>,
    pub terminal: SimState,
    pub dt: f64,
    pub steps: usize,
    delta: f64,
}

impl TrajectoryRecord {
    pub fn host_count(&self) -> usize {
        self.terminal.host_count()
    }

    pub fn clip_events(&self) -> usize {
        self.terminal.clip_events
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let h = self.host_count();
        let mut header = vec!["t".to_string()];
        header.extend((1..=h).map(|i| format!("N_{i}")));
        header.push("N".into());
        header.extend((1..=h).map(|i| format!("rbar_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for s in 0..self.times.len() {
            let mut row = vec![self.times[s].to_string()];
            row.extend(self.masses[s].iter().map(|v| v.to_string()));
            row.push(self.totals[s].to_string());
            row.extend(
                self.mean_fitness[s]
                    .iter()
                    .map(|v| v.map(|r| r.to_string()).unwrap_or_else(|| "undefined".into())),
            );
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Integrates from `initial` to time `t_end`, recording every
/// `sample_every` steps and at the end. The step is shortened so that a
/// whole number of steps reaches `t_end`.
pub fn simulate(initial: &SimState, t_end: f64, dt: f64, sample_every: usize) -> Result<TrajectoryRecord> {
    require_positive("t_end", t_end)?;
    require_positive("dt", dt)?;
    if sample_every == 0 {
        return Err(invalid("sample_every", "must be at least 1"));
    }
    let steps = (t_end / dt).ceil() as usize;
    let dt = t_end / steps as f64;
    let stepper = Stepper::new(&initial.params, Arc::clone(initial.domain()));
    let mut rec = TrajectoryRecord {
        times: Vec::new(),
        masses: Vec::new(),
        totals: Vec::new(),
        mean_fitness: Vec::new(),
        mirror_defects: stepper.mirror_defect(initial).map(|_| Vec::new()),
        terminal: initial.clone(),
        dt,
        steps,
        delta: initial.params.delta,
    };
    let record = |rec: &mut TrajectoryRecord, state: &SimState| {
        let (masses, rbar) = stepper.observe(state);
        rec.times.push(state.t);
        rec.totals.push(masses.iter().sum());
        rec.masses.push(masses);
        rec.mean_fitness.push(rbar);
        if let Some(d) = rec.mirror_defects.as_mut() {
            d.push(stepper.mirror_defect(state).unwrap_or(f64::NAN));
        }
    };
    let mut state = initial.clone();
    record(&mut rec, &state);
    for k in 1..=steps {
        state = stepper.step(&state, dt)?;
        if k == steps {
            state.t = t_end;
        }
        if k % sample_every == 0 || k == steps {
            record(&mut rec, &state);
        }
    }
    rec.terminal = state;
    Ok(rec)
}

/// Largest mismatch between centred differences of `N_i` and the right-hand
/// side of the mass equation, each term scaled by `max(1, N_i)`.
pub fn mass_balance_residual(rec: &TrajectoryRecord) -> Result<f64> {
    let samples = rec.times.len();
    if samples < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: samples });
    }
    let h = rec.host_count();
    let transfer = if h > 1 { rec.delta / (h as f64 - 1.0) } else { 0.0 };
    let mut worst: f64 = 0.0;
    for s in 1..samples - 1 {
        let span = rec.times[s + 1] - rec.times[s - 1];
        let m = &rec.masses[s];
        for i in 0..h {
            let rate = (rec.masses[s + 1][i] - rec.masses[s - 1][i]) / span;
            let growth = rec.mean_fitness[s][i].map(|r| r * m[i]).unwrap_or(0.0);
            let migration: f64 = (0..h).filter(|&k| k != i).map(|k| m[k] - m[i]).sum::<f64>() * transfer;
            let rhs = growth - m[i] * m[i] + migration;
            worst = worst.max((rate - rhs).abs() / m[i].max(1.0));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Extinction,
    Persistence,
    Undecided,
}

impl Fate {
    pub fn name(self) -> &'static str {
        match self {
            Fate::Extinction => "extinction",
            Fate::Persistence => "persistence",
            Fate::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FateSettings {
    /// Extinction threshold relative to `N(0)`.
    pub extinction_factor: f64,
    /// Share of the samples forming the tail window.
    pub tail_fraction: f64,
    /// Persistence needs `max_i N_i > persistence_factor * (-lambda)` in
    /// the tail.
    pub persistence_factor: f64,
    /// Shorter trajectories are always undecided.
    pub min_horizon: f64,
}

impl Default for FateSettings {
    fn default() -> Self {
        Self {
            extinction_factor: 1e-6,
            tail_fraction: 0.2,
            persistence_factor: 0.5,
            min_horizon: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FateReport {
    pub fate: Fate,
    pub lambda: f64,
    /// Whether the verdict matches the sign of `lambda`; `None` when
    /// undecided.
    pub agrees: Option<bool>,
}

pub fn classify_fate(rec: &TrajectoryRecord, lambda: f64) -> FateReport {
    classify_fate_with(rec, lambda, &FateSettings::default())
}

pub fn classify_fate_with(rec: &TrajectoryRecord, lambda: f64, settings: &FateSettings) -> FateReport {
    let report = |fate: Fate| FateReport {
        fate,
        lambda,
        agrees: match fate {
            Fate::Extinction => Some(lambda > 0.0),
            Fate::Persistence => Some(lambda < 0.0),
            Fate::Undecided => None,
        },
    };
    let samples = rec.totals.len();
    if samples == 0 || rec.horizon() < settings.min_horizon {
        return report(Fate::Undecided);
    }
    let tail_len = ((samples as f64 * settings.tail_fraction).ceil() as usize).clamp(1, samples);
    let tail = samples - tail_len;
    let threshold = settings.extinction_factor * rec.totals[0];
    let last = rec.totals[samples - 1];
    let decreasing = rec.totals[tail..].windows(2).all(|w| w[1] <= w[0]);
    if last <= threshold && decreasing {
        return report(Fate::Extinction);
    }
    if lambda < 0.0 {
        let peak = rec.masses[tail..]
            .iter()
            .flat_map(|m| m.iter().copied())
            .fold(0.0, f64::max);
        if peak > settings.persistence_factor * (-lambda) {
            return report(Fate::Persistence);
        }
    }
    report(Fate::Undecided)
}

/// Discrete stationary residual of `state`, relative to its discrete L2
/// norm.
pub fn stationary_residual(state: &SimState) -> f64 {
    let stepper = Stepper::new(&state.params, Arc::clone(state.domain()));
    let masses = state.masses();
    let n = stepper.domain.len();
    let mut total = vec![0.0; n];
    for f in &state.fields {
        total.iter_mut().zip(f.values()).for_each(|(s, v)| *s += v);
    }
    let mut lap = vec![0.0; n];
    let mut res_sq = 0.0;
    let mut norm_sq = 0.0;
    for ((f, conf), &mass) in state.fields.iter().zip(&stepper.confinement).zip(&masses) {
        let u = f.values();
        stepper.domain.laplacian_into(u, &mut lap);
        for k in 0..n {
            let growth = u[k] * (stepper.r_max - conf[k] - mass - stepper.self_rate);
            let r = stepper.diffusion * lap[k] + growth + stepper.transfer * (total[k] - u[k]);
            res_sq += r * r;
            norm_sq += u[k] * u[k];
        }
    }
    if norm_sq == 0.0 {
        0.0
    } else {
        (res_sq / norm_sq).sqrt()
    }
}

/// `min_c |u - c phi| / |u|` over stacked fields, in discrete L2.
pub fn proportionality_defect(fields: &[Field], profile: &[Field]) -> Result<f64> {
    if fields.len() != profile.len() {
        return Err(Error::DimensionMismatch {
            expected: fields.len(),
            got: profile.len(),
        });
    }
    let (mut up, mut pp, mut uu) = (0.0, 0.0, 0.0);
    for (u, p) in fields.iter().zip(profile) {
        if !u.same_domain(p) {
            return Err(Error::DomainMismatch);
        }
        for (a, b) in u.values().iter().zip(p.values()) {
            up += a * b;
            pp += b * b;
            uu += a * a;
        }
    }
    if uu == 0.0 || pp == 0.0 {
        return Err(invalid("fields", "zero field has no proportionality defect"));
    }
    let c = up / pp;
    Ok(((uu - 2.0 * c * up + c * c * pp).max(0.0) / uu).sqrt())
}
