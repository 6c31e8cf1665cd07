//! Scans over the third optimum, the migration rate and the host spacing.
//!
//! The first two optima sit at `(-beta, 0)` and `(beta, 0)`. Every scan
//! solves all of its eigenproblems on boxes drawn from one lattice
//! `h Z^n`, so discretisation error is shared between the quantities it
//! compares.

use std::collections::VecDeque;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::analytics::{
    in_lambda_infinity_ball, in_small_delta_region, lambda_bounds, lambda_infinity, FitnessLandscape,
    ModelParams, RegionMembership,
};
use crate::domain::DiscreteDomain;
use crate::eigen::{
    assemble_operator, lambda_h_with, principal_eigenpair_from, solve_on, Coupling, LadderSettings, SolverSettings,
};
use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};

/// Grid spacing and box margin shared by every solve of one scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub spacing: f64,
    /// Margin around the optima in units of the single-host mode width.
    pub margin_widths: f64,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            spacing: 0.25,
            margin_widths: 6.0,
        }
    }
}

impl Discretization {
    pub fn validate(&self) -> Result<()> {
        require_positive("spacing", self.spacing)?;
        require_positive("margin_widths", self.margin_widths)
    }

    /// Lattice box covering `points` with the configured margin.
    pub fn domain_for(&self, points: &[Vec<f64>], params: &ModelParams) -> Result<Arc<DiscreteDomain>> {
        let margin = self.margin_widths * params.mode_width();
        Ok(Arc::new(DiscreteDomain::covering(points, margin, self.spacing)?))
    }
}

fn pair(beta: f64, alpha: f64, r_max: f64) -> Result<FitnessLandscape> {
    FitnessLandscape::two_hosts(beta, 2, alpha, r_max)
}

/// Symmetric sampling of `[lo, hi]`; mirrored samples are exact negatives
/// when `lo = -hi`.
pub fn grid_axis(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let last = (count - 1) as f64;
    (0..count)
        .map(|k| centre + half * ((2 * k) as f64 - last) / last)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub alpha: f64,
    pub mu: f64,
    pub delta: f64,
    pub r_max: f64,
    pub beta: f64,
    pub a1_range: [f64; 2],
    pub a2_range: [f64; 2],
    /// Points along `a1` and `a2`.
    pub resolution: [usize; 2],
    /// Settings for each three-host solve; the shared two-host solve uses a
    /// ten times tighter tolerance.
    pub solver: SolverSettings,
    pub discretization: Discretization,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl SweepSpec {
    /// Panel of the standard map: `mu^2/2 = alpha = 1`, `r_max = 1`, third
    /// optimum over `[-3.5, 3.5]^2`.
    pub fn standard_panel(delta: f64, beta: f64, resolution: usize) -> Self {
        Self {
            alpha: 1.0,
            mu: 2f64.sqrt(),
            delta,
            r_max: 1.0,
            beta,
            a1_range: [-3.5, 3.5],
            a2_range: [-3.5, 3.5],
            resolution: [resolution, resolution],
            solver: SolverSettings::default(),
            discretization: Discretization::default(),
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("alpha", self.alpha)?;
        require_positive("mu", self.mu)?;
        require_positive("delta", self.delta)?;
        require_positive("beta", self.beta)?;
        if !self.r_max.is_finite() {
            return Err(invalid("r_max", "must be finite"));
        }
        for (name, r) in [("a1_range", self.a1_range), ("a2_range", self.a2_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(invalid(name, format!("need lo < hi, got {r:?}")));
            }
        }
        if self.resolution.iter().any(|&r| r < 2) {
            return Err(invalid("resolution", "need at least 2 points per axis"));
        }
        require_positive("tol", self.solver.tol)?;
        self.discretization.validate()
    }

    pub fn a1_values(&self) -> Vec<f64> {
        grid_axis(self.a1_range[0], self.a1_range[1], self.resolution[0])
    }

    pub fn a2_values(&self) -> Vec<f64> {
        grid_axis(self.a2_range[0], self.a2_range[1], self.resolution[1])
    }

    fn params_for(&self, landscape: FitnessLandscape) -> Result<ModelParams> {
        ModelParams::new(landscape, self.mu, self.delta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionRow {
    pub a1: f64,
    pub a2: f64,
    pub lambda3: f64,
    /// `lambda2 - lambda3`
    pub gain: f64,
    pub in_region_delta: bool,
    pub in_region_p: RegionMembership,
    pub in_region_inf: bool,
}

/// Gain map over a rectangle of third optima. Rows are stored with `a1`
/// varying slowest.
#[derive(Debug, Clone)]
pub struct RegionMap {
    pub spec: SweepSpec,
    pub lambda2: f64,
    /// Threshold above which a gain counts as positive.
    pub gain_tol: f64,
    pub rows: Vec<RegionRow>,
}

/// Share of scored points whose gain sign matches a predicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub scored: usize,
    pub agreeing: usize,
}

impl Agreement {
    pub fn fraction(&self) -> f64 {
        if self.scored == 0 {
            f64::NAN
        } else {
            self.agreeing as f64 / self.scored as f64
        }
    }
}

pub fn region_map(spec: &SweepSpec) -> Result<RegionMap> {
    spec.validate()?;
    let two = pair(spec.beta, spec.alpha, spec.r_max)?;
    let p2 = spec.params_for(two.clone())?;
    let tight = SolverSettings {
        tol: spec.solver.tol / 10.0,
        max_iter: spec.solver.max_iter,
    };
    let d2 = spec.discretization.domain_for(two.optima(), &p2)?;
    let lambda2 = solve_on(&p2, Coupling::Standard, d2, tight)?.lambda;

    let a1s = spec.a1_values();
    let a2s = spec.a2_values();
    let points: Vec<(f64, f64)> = a1s
        .iter()
        .flat_map(|&a1| a2s.iter().map(move |&a2| (a1, a2)))
        .collect();
    let solve_point = |&(a1, a2): &(f64, f64)| -> Result<f64> {
        let land = two.with_host(vec![a1, a2])?;
        let p = spec.params_for(land)?;
        let d = spec.discretization.domain_for(p.landscape.optima(), &p)?;
        solve_on(&p, Coupling::Standard, d, spec.solver)
            .map(|r| r.lambda)
            .map_err(|e| Error::GridPoint {
                a1,
                a2,
                source: Box::new(e),
            })
    };
    let lambdas: Vec<Result<f64>> = if spec.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?;
        pool.install(|| points.par_iter().map(solve_point).collect())
    } else {
        points.par_iter().map(solve_point).collect()
    };

    let gain_tol = spec.solver.tol;
    let mut rows = Vec::with_capacity(points.len());
    for (&(a1, a2), l3) in points.iter().zip(lambdas) {
        let lambda3 = l3?;
        let gain = lambda2 - lambda3;
        rows.push(RegionRow {
            a1,
            a2,
            lambda3,
            gain,
            in_region_delta: gain > gain_tol,
            in_region_p: in_small_delta_region(&[a1, a2], spec.beta, spec.alpha, spec.mu)?,
            in_region_inf: in_lambda_infinity_ball(&[a1, a2], spec.beta),
        });
    }
    Ok(RegionMap {
        spec: spec.clone(),
        lambda2,
        gain_tol,
        rows,
    })
}

impl RegionMap {
    pub fn shape(&self) -> [usize; 2] {
        self.spec.resolution
    }

    pub fn at(&self, i: usize, j: usize) -> &RegionRow {
        &self.rows[i * self.spec.resolution[1] + j]
    }

    /// Largest gain differences under `a2 -> -a2` and `a1 -> -a1`; `None`
    /// when the grid is not symmetric along that axis.
    pub fn symmetry_defects(&self) -> (Option<f64>, Option<f64>) {
        let [n1, n2] = self.shape();
        let mirrored = |vals: &[f64]| (0..vals.len()).all(|k| vals[k] == -vals[vals.len() - 1 - k]);
        let d2 = mirrored(&self.spec.a2_values()).then(|| {
            let mut worst: f64 = 0.0;
            for i in 0..n1 {
                for j in 0..n2 {
                    worst = worst.max((self.at(i, j).gain - self.at(i, n2 - 1 - j).gain).abs());
                }
            }
            worst
        });
        let d1 = mirrored(&self.spec.a1_values()).then(|| {
            let mut worst: f64 = 0.0;
            for i in 0..n1 {
                for j in 0..n2 {
                    worst = worst.max((self.at(i, j).gain - self.at(n1 - 1 - i, j).gain).abs());
                }
            }
            worst
        });
        (d2, d1)
    }

    /// Scores `in_region_delta` against a predicate with labels, skipping
    /// points that have a differently labelled point within `band` cells
    /// (Chebyshev distance on the grid). `label` returns `Some(inside)` or
    /// `None` for points on the predicate's boundary.
    pub fn agreement_with(&self, band: usize, label: impl Fn(&RegionRow) -> Option<bool>) -> Agreement {
        let [n1, n2] = self.shape();
        let labels: Vec<Option<bool>> = self.rows.iter().map(&label).collect();
        let mut scored = 0;
        let mut agreeing = 0;
        for i in 0..n1 {
            for j in 0..n2 {
                let own = labels[i * n2 + j];
                let Some(inside) = own else { continue };
                let near_boundary = (i.saturating_sub(band)..=(i + band).min(n1 - 1)).any(|p| {
                    (j.saturating_sub(band)..=(j + band).min(n2 - 1)).any(|q| labels[p * n2 + q] != own)
                });
                if near_boundary {
                    continue;
                }
                scored += 1;
                if self.at(i, j).in_region_delta == inside {
                    agreeing += 1;
                }
            }
        }
        Agreement { scored, agreeing }
    }

    pub fn small_delta_agreement(&self, band: usize) -> Agreement {
        self.agreement_with(band, |r| match r.in_region_p {
            RegionMembership::Inside => Some(true),
            RegionMembership::Outside => Some(false),
            RegionMembership::Boundary => None,
        })
    }

    pub fn large_delta_agreement(&self, band: usize) -> Agreement {
        self.agreement_with(band, |r| Some(r.in_region_inf))
    }

    /// Connected components of the positive-gain set, 4-neighbour adjacency.
    pub fn positive_components(&self) -> usize {
        let [n1, n2] = self.shape();
        let mut seen = vec![false; n1 * n2];
        let mut components = 0;
        for start in 0..n1 * n2 {
            if seen[start] || !self.rows[start].in_region_delta {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(k) = queue.pop_front() {
                let (i, j) = (k / n2, k % n2);
                let mut visit = |p: usize, q: usize| {
                    let idx = p * n2 + q;
                    if !seen[idx] && self.rows[idx].in_region_delta {
                        seen[idx] = true;
                        queue.push_back(idx);
                    }
                };
                if i > 0 {
                    visit(i - 1, j);
                }
                if i + 1 < n1 {
                    visit(i + 1, j);
                }
                if j > 0 {
                    visit(i, j - 1);
                }
                if j + 1 < n2 {
                    visit(i, j + 1);
                }
            }
        }
        components
    }

    /// Largest `gain(a1, a2) - gain(a1, 0)` over off-axis points; `None`
    /// when the grid has no `a2 = 0` line.
    pub fn projection_excess(&self) -> Option<f64> {
        let [n1, n2] = self.shape();
        let j0 = self.spec.a2_values().iter().position(|&a| a == 0.0)?;
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n1 {
            let on_axis = self.at(i, j0).gain;
            for j in (0..n2).filter(|&j| j != j0) {
                worst = worst.max(self.at(i, j).gain - on_axis);
            }
        }
        Some(worst)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let s = &self.spec;
        writeln!(
            out,
            "# alpha={} mu={} delta={} r_max={} beta={} a1_range={}:{} a2_range={}:{} resolution={}x{} spacing={} margin_widths={} tol={} max_iter={} lambda2={}",
            s.alpha,
            s.mu,
            s.delta,
            s.r_max,
            s.beta,
            s.a1_range[0],
            s.a1_range[1],
            s.a2_range[0],
            s.a2_range[1],
            s.resolution[0],
            s.resolution[1],
            s.discretization.spacing,
            s.discretization.margin_widths,
            s.solver.tol,
            s.solver.max_iter,
            self.lambda2
        )?;
        writeln!(out, "a1,a2,lambda2,lambda3,gain,in_region_delta,in_region_P,in_region_inf")?;
        for r in &self.rows {
            let p = match r.in_region_p {
                RegionMembership::Inside => "inside",
                RegionMembership::Boundary => "boundary",
                RegionMembership::Outside => "outside",
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.a1, r.a2, self.lambda2, r.lambda3, r.gain, r.in_region_delta, p, r.in_region_inf
            )?;
        }
        Ok(())
    }

    /// Solver settings and versions as `key = value` lines.
    pub fn write_metadata<W: Write>(&self, mut out: W) -> io::Result<()> {
        let s = &self.spec;
        writeln!(out, "crate_version = {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(out, "rows = {}", self.rows.len())?;
        writeln!(out, "lambda2 = {}", self.lambda2)?;
        writeln!(out, "gain_tol = {}", self.gain_tol)?;
        writeln!(out, "solver.tol = {}", s.solver.tol)?;
        writeln!(out, "solver.lambda2_tol = {}", s.solver.tol / 10.0)?;
        writeln!(out, "solver.max_iter = {}", s.solver.max_iter)?;
        writeln!(out, "discretization.spacing = {}", s.discretization.spacing)?;
        writeln!(out, "discretization.margin_widths = {}", s.discretization.margin_widths)?;
        writeln!(out, "workers = {}", s.workers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaRow {
    pub delta: f64,
    pub lambda: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct DeltaSweep {
    pub lambda1: f64,
    pub lambda_infinity: f64,
    pub domain_r: f64,
    pub spacing_h: f64,
    pub rows: Vec<DeltaRow>,
}

impl DeltaSweep {
    /// Largest decrease between consecutive rows (0 when nondecreasing).
    pub fn worst_decrease(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| (w[0].lambda - w[1].lambda).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "delta,lambda,lambda1,lambda_inf,lower,upper")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.delta, r.lambda, self.lambda1, self.lambda_infinity, r.lower, r.upper
            )?;
        }
        Ok(())
    }
}

/// `lambda_H` along ascending migration rates. The grid is the one the
/// refinement ladder settles on at the largest rate and is reused for every
/// entry.
pub fn delta_sweep(
    landscape: &FitnessLandscape,
    mu: f64,
    deltas: &[f64],
    accuracy: f64,
) -> Result<DeltaSweep> {
    delta_sweep_with(landscape, mu, deltas, accuracy, &LadderSettings::default())
}

pub fn delta_sweep_with(
    landscape: &FitnessLandscape,
    mu: f64,
    deltas: &[f64],
    accuracy: f64,
    ladder: &LadderSettings,
) -> Result<DeltaSweep> {
    if deltas.is_empty() {
        return Err(invalid("deltas", "need at least one value"));
    }
    for d in deltas {
        require_nonnegative("delta", *d)?;
    }
    if deltas.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("deltas", "must be sorted ascending"));
    }
    let top = *deltas.last().expect("nonempty");
    let top_params = ModelParams::new(landscape.clone(), mu, top)?;
    let reference = lambda_h_with(&top_params, Coupling::Standard, accuracy, ladder)?;
    let domain = Arc::clone(reference.domain());
    let mut rows = Vec::with_capacity(deltas.len());
    // from the top down, each solve seeded with its neighbour's eigenvector
    let mut prev = reference;
    for &delta in deltas.iter().rev() {
        if delta != top {
            let params = top_params.with_delta(delta)?;
            let op = assemble_operator(&params, Arc::clone(&domain), Coupling::Standard)?;
            prev = principal_eigenpair_from(&op, ladder.solver.tol, ladder.solver.max_iter, Some(&prev.eigenvector))?;
        }
        let b = lambda_bounds(landscape, mu, delta)?;
        rows.push(DeltaRow {
            delta,
            lambda: prev.lambda,
            lower: b.lower,
            upper: b.upper,
        });
    }
    rows.reverse();
    Ok(DeltaSweep {
        lambda1: top_params.lambda1(),
        lambda_infinity: lambda_infinity(landscape, mu)?,
        domain_r: domain.radius(),
        spacing_h: domain.spacing(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarFieldRow {
    pub distance: f64,
    pub lambda3: f64,
    /// `lambda_tilde2 - lambda3`
    pub gap: f64,
    /// `None` when `lambda_tilde2 + r_max < 0`.
    pub lower_bound: Option<f64>,
    pub upper_holds: bool,
    pub lower_holds: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct FarField {
    pub lambda2: f64,
    pub lambda_tilde2: f64,
    pub rows: Vec<FarFieldRow>,
}

impl FarField {
    pub fn bounds_hold(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.upper_holds && r.lower_holds.unwrap_or(true))
    }

    pub fn gap_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].gap < w[0].gap)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "distance,lambda3,lambda_tilde2,lambda2,gap,lower_bound,upper_holds,lower_holds")?;
        for r in &self.rows {
            let lb = r.lower_bound.map(|v| v.to_string()).unwrap_or_default();
            let lh = r.lower_holds.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.distance, r.lambda3, self.lambda_tilde2, self.lambda2, r.gap, lb, r.upper_holds, lh
            )?;
        }
        Ok(())
    }
}

/// Third optimum at `(0, d)` for each distance, compared with the two-host
/// loss eigenvalue and its far-field lower bound.
#[allow(clippy::too_many_arguments)]
pub fn far_field_check(
    beta: f64,
    alpha: f64,
    mu: f64,
    delta: f64,
    r_max: f64,
    distances: &[f64],
    discretization: &Discretization,
    solver: SolverSettings,
) -> Result<FarField> {
    require_positive("delta", delta)?;
    require_nonnegative("beta", beta)?;
    if distances.is_empty() {
        return Err(invalid("distances", "need at least one distance"));
    }
    if distances.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("distances", "must be strictly increasing"));
    }
    if distances[0] <= 2.0 * beta {
        return Err(invalid("distances", "all distances must exceed 2 beta"));
    }
    let two = pair(beta, alpha, r_max)?;
    let p2 = ModelParams::new(two.clone(), mu, delta)?;
    let far = distances.last().copied().expect("nonempty");
    let mut cover = two.optima().to_vec();
    cover.push(vec![0.0, far]);
    let domain = discretization.domain_for(&cover, &p2)?;
    let lambda2 = solve_on(&p2, Coupling::Standard, Arc::clone(&domain), solver)?.lambda;
    let lambda_tilde2 = solve_on(&p2, Coupling::Loss, Arc::clone(&domain), solver)?.lambda;
    let mut rows = Vec::with_capacity(distances.len());
    for &d in distances {
        let o3 = vec![0.0, d];
        let land = two.with_host(o3.clone())?;
        let p = ModelParams::new(land, mu, delta)?;
        let lambda3 = solve_on(&p, Coupling::Standard, Arc::clone(&domain), solver)?.lambda;
        let min_dist = two
            .optima()
            .iter()
            .map(|o| crate::analytics::dist_sq(o, &o3).sqrt())
            .fold(f64::INFINITY, f64::min);
        let lower_bound = (lambda_tilde2 + r_max >= 0.0).then(|| {
            lambda_tilde2 - delta * (48.0 * (lambda_tilde2 + r_max)).sqrt() / (alpha.sqrt() * min_dist)
        });
        rows.push(FarFieldRow {
            distance: d,
            lambda3,
            gap: lambda_tilde2 - lambda3,
            lower_bound,
            upper_holds: lambda3 <= lambda_tilde2 + solver.tol,
            lower_holds: lower_bound.map(|lb| lambda3 >= lb - solver.tol),
        });
    }
    Ok(FarField {
        lambda2,
        lambda_tilde2,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiddleCopyRow {
    pub beta: f64,
    pub lambda_middle: f64,
    pub lambda_copy: f64,
    /// `|lambda_middle - (lambda1 + delta)|`
    pub middle_to_limit: f64,
    /// `|lambda_copy - (lambda1 + delta/2)|`
    pub copy_to_limit: f64,
}

#[derive(Debug, Clone)]
pub struct MiddleVsCopy {
    pub lambda1: f64,
    pub delta: f64,
    pub rows: Vec<MiddleCopyRow>,
}

impl MiddleVsCopy {
    /// Whether the third host in the middle does worse than a copy of the
    /// first host at the largest spacing.
    pub fn middle_worse_at_largest(&self) -> bool {
        self.rows
            .last()
            .map(|r| r.lambda_middle > r.lambda_copy)
            .unwrap_or(false)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "beta,lambda_middle,lambda_copy,lambda1,middle_limit,copy_limit,middle_to_limit,copy_to_limit")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.beta,
                r.lambda_middle,
                r.lambda_copy,
                self.lambda1,
                self.lambda1 + self.delta,
                self.lambda1 + self.delta / 2.0,
                r.middle_to_limit,
                r.copy_to_limit
            )?;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
pub fn middle_vs_copy(
    betas: &[f64],
    alpha: f64,
    mu: f64,
    delta: f64,
    r_max: f64,
    discretization: &Discretization,
    solver: SolverSettings,
) -> Result<MiddleVsCopy> {
    require_positive("delta", delta)?;
    if betas.is_empty() {
        return Err(invalid("betas", "need at least one value"));
    }
    if betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("betas", "must be strictly increasing"));
    }
    let lambda1 = crate::analytics::lambda1(alpha, mu, 2, r_max)?;
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        require_nonnegative("beta", beta)?;
        let two = pair(beta, alpha, r_max)?;
        let middle = ModelParams::new(two.with_host(vec![0.0, 0.0])?, mu, delta)?;
        let copy = ModelParams::new(two.with_host(two.optima()[0].clone())?, mu, delta)?;
        let domain = discretization.domain_for(two.optima(), &middle)?;
        let lambda_middle = solve_on(&middle, Coupling::Standard, Arc::clone(&domain), solver)?.lambda;
        let lambda_copy = solve_on(&copy, Coupling::Standard, domain, solver)?.lambda;
        rows.push(MiddleCopyRow {
            beta,
            lambda_middle,
            lambda_copy,
            middle_to_limit: (lambda_middle - (lambda1 + delta)).abs(),
            copy_to_limit: (lambda_copy - (lambda1 + delta / 2.0)).abs(),
        });
    }
    Ok(MiddleVsCopy {
        lambda1,
        delta,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct BestThird {
    pub a_star: f64,
    pub lambda3_min: f64,
    pub lambda2: f64,
    /// `lambda3` with the third optimum on top of the second.
    pub lambda3_at_copy: f64,
    /// The coarse scan was not unimodal and a finer grid scan was used
    /// instead of golden-section search.
    pub grid_fallback: bool,
    /// Every `(a, lambda3)` evaluated, in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
}

impl BestThird {
    pub fn springboard_exists(&self) -> bool {
        self.lambda3_min < self.lambda2
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "# a_star={} lambda3_min={} lambda2={} lambda3_at_copy={} grid_fallback={}",
            self.a_star, self.lambda3_min, self.lambda2, self.lambda3_at_copy, self.grid_fallback
        )?;
        writeln!(out, "a,lambda3")?;
        for (a, l) in &self.evaluations {
            writeln!(out, "{a},{l}")?;
        }
        Ok(())
    }
}

const COARSE_POINTS: usize = 13;
const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Minimises `lambda3` over third optima `(a, 0)`, `a` in `[0, 3 beta]`, to
/// within `accuracy` in `a`.
#[allow(clippy::too_many_arguments)]
pub fn best_third_optimum(
    beta: f64,
    alpha: f64,
    mu: f64,
    delta: f64,
    r_max: f64,
    accuracy: f64,
    discretization: &Discretization,
    solver: SolverSettings,
) -> Result<BestThird> {
    require_positive("beta", beta)?;
    require_positive("delta", delta)?;
    require_positive("accuracy", accuracy)?;
    let two = pair(beta, alpha, r_max)?;
    let p2 = ModelParams::new(two.clone(), mu, delta)?;
    let span = 3.0 * beta;
    let domain = discretization.domain_for(&[vec![-span, 0.0], vec![span, 0.0]], &p2)?;
    let lambda2 = solve_on(&p2, Coupling::Standard, Arc::clone(&domain), solver)?.lambda;

    let mut evaluations: Vec<(f64, f64)> = Vec::new();
    let mut eval = |a: f64| -> Result<f64> {
        let p = ModelParams::new(two.with_host(vec![a, 0.0])?, mu, delta)?;
        let l = solve_on(&p, Coupling::Standard, Arc::clone(&domain), solver)?.lambda;
        evaluations.push((a, l));
        Ok(l)
    };

    let coarse: Vec<f64> = (0..COARSE_POINTS)
        .map(|k| span * k as f64 / (COARSE_POINTS - 1) as f64)
        .collect();
    let values: Vec<f64> = coarse.iter().map(|&a| eval(a)).collect::<Result<_>>()?;
    let lambda3_at_copy = values[(COARSE_POINTS - 1) / 3];
    let k_best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .expect("nonempty scan");
    let slack = solver.tol;
    let unimodal = (0..k_best).all(|k| values[k + 1] <= values[k] + slack)
        && (k_best..COARSE_POINTS - 1).all(|k| values[k + 1] >= values[k] - slack);
    let lo = coarse[k_best.saturating_sub(1)];
    let hi = coarse[(k_best + 1).min(COARSE_POINTS - 1)];

    let (a_star, lambda3_min, grid_fallback) = if unimodal {
        let (mut a, mut b) = (lo, hi);
        let mut c = b - GOLDEN * (b - a);
        let mut d = a + GOLDEN * (b - a);
        let mut fc = eval(c)?;
        let mut fd = eval(d)?;
        while b - a > accuracy {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - GOLDEN * (b - a);
                fc = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + GOLDEN * (b - a);
                fd = eval(d)?;
            }
        }
        let (a_min, f_min) = if fc <= fd { (c, fc) } else { (d, fd) };
        if f_min <= values[k_best] {
            (a_min, f_min, false)
        } else {
            (coarse[k_best], values[k_best], false)
        }
    } else {
        let steps = ((hi - lo) / accuracy).ceil().clamp(2.0, 200.0) as usize;
        let mut best = (coarse[k_best], values[k_best]);
        for s in 0..=steps {
            let a = lo + (hi - lo) * s as f64 / steps as f64;
            let l = eval(a)?;
            if l < best.1 {
                best = (a, l);
            }
        }
        (best.0, best.1, true)
    };
    Ok(BestThird {
        a_star,
        lambda3_min,
        lambda2,
        lambda3_at_copy,
        grid_fallback,
        evaluations,
    })
}
