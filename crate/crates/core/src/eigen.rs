//! Principal eigenpair of the migration-coupled Schrödinger-type operator
//!
//! ```text
//! (A phi)_i = -(mu^2/2) Lap phi_i - r_i phi_i + d phi_i - t sum_{k != i} phi_k
//! ```
//!
//! with `d = delta`, `t = delta/(H-1)` for ordinary migration and
//! `t = delta/2` (two hosts) when half of the migrants are lost.
//!
//! The discrete operator is a symmetric irreducible Z-matrix, so its
//! smallest eigenvalue is simple and the only one with a positive
//! eigenvector. A positive converged eigenvector therefore certifies that
//! the principal pair was found.

use std::io::{self, Write};
use std::sync::Arc;

use crate::analytics::{dist_sq, FitnessLandscape, ModelParams};
use crate::domain::{interpolate, DiscreteDomain, Field};
use crate::error::{invalid, require_positive, Error, Result};
use crate::linalg::{conjugate_gradient, dot, norm, symmetric_eigen, tridiagonal_min_eigenvalue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coupling {
    Standard,
    /// Two hosts; half of each migrant flux is lost in transit.
    Loss,
}

impl Coupling {
    pub fn name(self) -> &'static str {
        match self {
            Coupling::Standard => "standard",
            Coupling::Loss => "loss",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledOperator {
    params: ModelParams,
    domain: Arc<DiscreteDomain>,
    coupling: Coupling,
    diffusion: f64,
    self_rate: f64,
    transfer: f64,
    /// `-r_i(x) + self_rate` per host.
    potential: Vec<Vec<f64>>,
}

pub fn assemble_operator(
    params: &ModelParams,
    domain: Arc<DiscreteDomain>,
    coupling: Coupling,
) -> Result<CoupledOperator> {
    let land = &params.landscape;
    if domain.dim() != land.dim() {
        return Err(Error::DimensionMismatch {
            expected: land.dim(),
            got: domain.dim(),
        });
    }
    let h = land.host_count();
    let delta = params.delta;
    let (self_rate, transfer) = match coupling {
        Coupling::Standard if h == 1 => (0.0, 0.0),
        Coupling::Standard => (delta, delta / (h as f64 - 1.0)),
        Coupling::Loss => {
            if h != 2 {
                return Err(invalid("coupling", format!("loss coupling needs 2 hosts, got {h}")));
            }
            if delta <= 0.0 {
                return Err(invalid("delta", "loss coupling needs delta > 0"));
            }
            (delta, delta / 2.0)
        }
    };
    let alpha = land.alpha();
    let r_max = land.r_max();
    let potential = land
        .optima()
        .iter()
        .map(|o| domain.sample(|x| alpha * dist_sq(x, o) / 2.0 - r_max + self_rate))
        .collect();
    Ok(CoupledOperator {
        params: params.clone(),
        domain,
        coupling,
        diffusion: params.mu * params.mu / 2.0,
        self_rate,
        transfer,
        potential,
    })
}

impl CoupledOperator {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        &self.domain
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn host_count(&self) -> usize {
        self.potential.len()
    }

    /// Length of a stacked vector `(phi_1, .., phi_H)`.
    pub fn len(&self) -> usize {
        self.host_count() * self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Off-diagonal host-to-host rate.
    pub fn transfer_rate(&self) -> f64 {
        self.transfer
    }

    /// `y = A x` on stacked vectors.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.domain.len();
        assert_eq!(x.len(), self.len());
        assert_eq!(y.len(), self.len());
        let total: Option<Vec<f64>> = (self.host_count() > 1 && self.transfer != 0.0).then(|| {
            let mut s = x[..n].to_vec();
            for xi in x.chunks_exact(n).skip(1) {
                s.iter_mut().zip(xi).for_each(|(a, b)| *a += b);
            }
            s
        });
        let c = self.diffusion;
        let t = self.transfer;
        for ((xi, yi), pot) in x
            .chunks_exact(n)
            .zip(y.chunks_exact_mut(n))
            .zip(&self.potential)
        {
            self.domain.laplacian_into(xi, yi);
            match &total {
                Some(s) => {
                    for k in 0..n {
                        yi[k] = -c * yi[k] + (pot[k] + t) * xi[k] - t * s[k];
                    }
                }
                None => {
                    for k in 0..n {
                        yi[k] = -c * yi[k] + pot[k] * xi[k];
                    }
                }
            }
        }
    }

    pub fn apply_fields(&self, fields: &[Field]) -> Result<Vec<Field>> {
        let x = self.stack(fields)?;
        let mut y = vec![0.0; x.len()];
        self.apply(&x, &mut y);
        self.unstack(y)
    }

    fn stack(&self, fields: &[Field]) -> Result<Vec<f64>> {
        if fields.len() != self.host_count() {
            return Err(Error::DimensionMismatch {
                expected: self.host_count(),
                got: fields.len(),
            });
        }
        let mut x = Vec::with_capacity(self.len());
        for f in fields {
            if **f.domain() != *self.domain {
                return Err(Error::DomainMismatch);
            }
            x.extend_from_slice(f.values());
        }
        Ok(x)
    }

    fn unstack(&self, x: Vec<f64>) -> Result<Vec<Field>> {
        x.chunks_exact(self.domain.len())
            .map(|c| Field::new(Arc::clone(&self.domain), c.to_vec()))
            .collect()
    }

    /// Diagonal of the matrix.
    fn diagonal(&self) -> Vec<f64> {
        let centre = self.diffusion * 2.0 * self.domain.dim() as f64
            / (self.domain.spacing() * self.domain.spacing());
        self.potential
            .iter()
            .flat_map(|p| p.iter().map(move |v| v + centre))
            .collect()
    }

    /// `y = (D - A) x` where `D` is the diagonal; every term is nonnegative
    /// for nonnegative `x`.
    fn apply_offdiagonal(&self, x: &[f64], y: &mut [f64]) {
        let n = self.domain.len();
        let dom = &*self.domain;
        let centre = -2.0 * dom.dim() as f64 / (dom.spacing() * dom.spacing());
        for (xi, yi) in x.chunks_exact(n).zip(y.chunks_exact_mut(n)) {
            dom.laplacian_into(xi, yi);
            for k in 0..n {
                yi[k] = self.diffusion * (yi[k] - centre * xi[k]);
            }
        }
        if self.host_count() > 1 && self.transfer != 0.0 {
            let h = self.host_count();
            for i in 0..h {
                for j in 0..h {
                    if i != j {
                        for k in 0..n {
                            y[i * n + k] += self.transfer * x[j * n + k];
                        }
                    }
                }
            }
        }
    }

    /// Rigorous lower bound on the spectrum. Each uncoupled block separates
    /// into one-dimensional tridiagonal problems; the host coupling matrix
    /// adds at least its smallest eigenvalue.
    pub fn spectrum_lower_bound(&self) -> f64 {
        let land = &self.params.landscape;
        let dom = &*self.domain;
        let h = dom.spacing();
        let off = -self.diffusion / (h * h);
        let alpha = land.alpha();
        let block_min = land
            .optima()
            .iter()
            .map(|o| {
                (0..dom.dim())
                    .map(|a| {
                        let axis = dom.axis(a);
                        let diag: Vec<f64> = axis
                            .iter()
                            .map(|x| 2.0 * self.diffusion / (h * h) + alpha * (x - o[a]).powi(2) / 2.0)
                            .collect();
                        tridiagonal_min_eigenvalue(&diag, &vec![off; axis.len() - 1])
                    })
                    .sum::<f64>()
                    - land.r_max()
            })
            .fold(f64::INFINITY, f64::min);
        let hosts = self.host_count() as f64;
        let coupling_min = if self.host_count() > 1 {
            self.self_rate + self.transfer - self.transfer * hosts
        } else {
            0.0
        };
        // relative slack against rounding in the bisection
        let bound = block_min + coupling_min;
        bound - 1e-12 * (1.0 + bound.abs())
    }

    fn gaussian_start(&self, host: usize) -> Vec<f64> {
        let n = self.domain.len();
        let width2 = self.params.mode_width().powi(2);
        let o = &self.params.landscape.optima()[host];
        let g = self.domain.sample(|x| (-dist_sq(x, o) / (2.0 * width2)).exp());
        let mut v = vec![0.0; self.len()];
        v[host * n..(host + 1) * n].copy_from_slice(&g);
        v
    }
}

/// Eigenvalue together with the normalised positive eigenvector.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda: f64,
    /// One field per host; `sum_i <phi_i, phi_i> = 1`.
    pub eigenvector: Vec<Field>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub domain_r: f64,
    pub spacing_h: f64,
    pub shift: f64,
    pub coupling: Coupling,
    pub levels: Vec<LadderLevel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderLevel {
    pub radius: f64,
    pub spacing: f64,
    pub nodes: usize,
    pub lambda: f64,
}

impl EigenResult {
    pub fn host_count(&self) -> usize {
        self.eigenvector.len()
    }

    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        self.eigenvector[0].domain()
    }

    pub fn min_value(&self) -> f64 {
        self.eigenvector
            .iter()
            .flat_map(|f| f.values().iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Scalar metadata as `key = value` pairs.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("lambda".to_string(), format!("{}", self.lambda)),
            ("residual_norm".to_string(), format!("{}", self.residual_norm)),
            ("iterations".to_string(), self.iterations.to_string()),
            ("inner_iterations".to_string(), self.inner_iterations.to_string()),
            ("domain_r".to_string(), format!("{}", self.domain_r)),
            ("spacing_h".to_string(), format!("{}", self.spacing_h)),
            ("nodes".to_string(), self.domain().len().to_string()),
            ("hosts".to_string(), self.host_count().to_string()),
            ("shift".to_string(), format!("{}", self.shift)),
            ("coupling".to_string(), self.coupling.name().to_string()),
            ("levels".to_string(), self.levels.len().to_string()),
        ];
        for (k, l) in self.levels.iter().enumerate() {
            out.push((
                format!("level.{k}"),
                format!("R={} h={} nodes={} lambda={}", l.radius, l.spacing, l.nodes, l.lambda),
            ));
        }
        out
    }

    pub fn write_metadata<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, v) in self.metadata() {
            writeln!(out, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Residual tolerance and outer-iteration cap for one eigensolve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 300,
        }
    }
}

/// Gap between the shift and the spectrum, relative to `mu sqrt(alpha)`.
const SHIFT_GAP: f64 = 1e-3;
const NOISE_LEVEL: f64 = 1e-9;
const CG_MAX_ITER: usize = 20_000;

pub fn principal_eigenpair(op: &CoupledOperator, tol: f64, max_iter: usize) -> Result<EigenResult> {
    principal_eigenpair_from(op, tol, max_iter, None)
}

/// As [`principal_eigenpair`], seeding the iteration with `guess` (for
/// instance an interpolated solution from a coarser grid).
pub fn principal_eigenpair_from(
    op: &CoupledOperator,
    tol: f64,
    max_iter: usize,
    guess: Option<&[Field]>,
) -> Result<EigenResult> {
    require_positive("tol", tol)?;
    if max_iter == 0 {
        return Err(invalid("max_iter", "must be >= 1"));
    }
    if op.host_count() > 1 && op.transfer == 0.0 {
        return decoupled_eigenpair(op, tol, max_iter, guess);
    }
    let start = start_block(op, guess)?;
    match iterate(op, tol, max_iter, start.clone(), true, 1.0) {
        Err(Error::PositivityLost { .. }) => {
            // fall back to the rigorous shift, further from the spectrum
            iterate(op, tol, max_iter, start, false, 10.0)
        }
        other => other,
    }
}

/// Without migration the hosts decouple and the principal eigenvalue may be
/// repeated, so the positive eigenvector is not unique. Each host is solved on
/// its own; hosts attaining the minimum (within `tol`) share equal weight and
/// the others are zero.
fn decoupled_eigenpair(
    op: &CoupledOperator,
    tol: f64,
    max_iter: usize,
    guess: Option<&[Field]>,
) -> Result<EigenResult> {
    if let Some(g) = guess {
        if g.len() != op.host_count() {
            return Err(Error::DimensionMismatch {
                expected: op.host_count(),
                got: g.len(),
            });
        }
    }
    let land = &op.params.landscape;
    let mut parts = Vec::with_capacity(op.host_count());
    for (i, o) in land.optima().iter().enumerate() {
        let single = FitnessLandscape::new(vec![o.clone()], land.alpha(), land.r_max())?;
        let p = ModelParams::new(single, op.params.mu, 0.0)?;
        let sub = assemble_operator(&p, Arc::clone(&op.domain), Coupling::Standard)?;
        let g = guess.map(|g| &g[i..i + 1]);
        parts.push(principal_eigenpair_from(&sub, tol, max_iter, g)?);
    }
    let lowest = parts.iter().map(|r| r.lambda).fold(f64::INFINITY, f64::min);
    let mut v = Vec::with_capacity(op.len());
    for r in &parts {
        let on = r.lambda - lowest <= tol;
        v.extend(r.eigenvector[0].values().iter().map(|a| if on { *a } else { 0.0 }));
    }
    let mut y = vec![0.0; v.len()];
    op.apply(&v, &mut y);
    let lambda = dot(&v, &y) / dot(&v, &v);
    let (res, _) = residuals(op, &v, &y, lambda);
    let iterations = parts.iter().map(|r| r.iterations).sum();
    let inner = parts.iter().map(|r| r.inner_iterations).sum();
    let shift = parts.iter().map(|r| r.shift).fold(f64::INFINITY, f64::min);
    Ok(finish(op, v, lambda, res, iterations, inner, shift))
}

fn start_block(op: &CoupledOperator, guess: Option<&[Field]>) -> Result<Vec<Vec<f64>>> {
    let mut block = Vec::with_capacity(op.host_count() + 2);
    if let Some(g) = guess {
        let mut x = Vec::with_capacity(op.len());
        if g.len() != op.host_count() {
            return Err(Error::DimensionMismatch {
                expected: op.host_count(),
                got: g.len(),
            });
        }
        for f in g {
            let f = if **f.domain() == **op.domain() {
                f.clone()
            } else {
                interpolate(f, Arc::clone(op.domain()))?
            };
            x.extend(f.values().iter().map(|v| v.abs()));
        }
        block.push(x);
    }
    block.push(vec![1.0; op.len()]);
    for i in 0..op.host_count() {
        block.push(op.gaussian_start(i));
    }
    Ok(block)
}

/// Modified Gram-Schmidt, applied twice; drops vectors that become
/// numerically dependent.
fn orthonormalize(block: &mut Vec<Vec<f64>>) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(block.len());
    for mut v in block.drain(..) {
        let n0 = norm(&v);
        if n0 == 0.0 || !n0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            for q in &out {
                let c = dot(q, &v);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n1 = norm(&v);
        if n1 > 1e-10 * n0 {
            v.iter_mut().for_each(|a| *a /= n1);
            out.push(v);
        }
    }
    *block = out;
}

/// Replaces `block` by its Ritz vectors and returns Ritz values and `A v`.
fn rayleigh_ritz(op: &CoupledOperator, block: &mut Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = block.len();
    let av: Vec<Vec<f64>> = block
        .iter()
        .map(|v| {
            let mut y = vec![0.0; v.len()];
            op.apply(v, &mut y);
            y
        })
        .collect();
    let mut g = vec![vec![0.0; p]; p];
    for j in 0..p {
        for k in j..p {
            let s = 0.5 * (dot(&block[j], &av[k]) + dot(&block[k], &av[j]));
            g[j][k] = s;
            g[k][j] = s;
        }
    }
    let (theta, y) = symmetric_eigen(&g);
    let combine = |src: &[Vec<f64>]| -> Vec<Vec<f64>> {
        y.iter()
            .map(|coef| {
                let mut out = vec![0.0; src[0].len()];
                for (c, s) in coef.iter().zip(src) {
                    out.iter_mut().zip(s).for_each(|(o, v)| *o += c * v);
                }
                out
            })
            .collect()
    };
    let new_v = combine(block);
    let new_av = combine(&av);
    *block = new_v;
    (theta, new_av)
}

/// `max_i |(A v)_i - theta v_i| / |v_i|` and the global residual `|A v - theta v| / |v|`.
fn residuals(op: &CoupledOperator, v: &[f64], av: &[f64], theta: f64) -> (f64, f64) {
    let n = op.domain.len();
    let mut worst: f64 = 0.0;
    let mut total_r = 0.0;
    let mut total_v = 0.0;
    for (vi, avi) in v.chunks_exact(n).zip(av.chunks_exact(n)) {
        let r2: f64 = vi.iter().zip(avi).map(|(a, b)| (b - theta * a).powi(2)).sum();
        let v2: f64 = dot(vi, vi);
        total_r += r2;
        total_v += v2;
        let ratio = if v2 > 0.0 { (r2 / v2).sqrt() } else { f64::INFINITY };
        worst = worst.max(ratio);
    }
    (worst, (total_r / total_v).sqrt())
}

fn iterate(
    op: &CoupledOperator,
    tol: f64,
    max_iter: usize,
    mut block: Vec<Vec<f64>>,
    adaptive: bool,
    gap_factor: f64,
) -> Result<EigenResult> {
    let lb = op.spectrum_lower_bound();
    let land: &FitnessLandscape = &op.params.landscape;
    let eta = gap_factor * SHIFT_GAP * op.params.mu * land.alpha().sqrt();
    let floor = lb - eta;
    let diag = op.diagonal();
    let mut sigma = floor;
    let mut inner = 0usize;
    let mut polish_attempts = 0;

    orthonormalize(&mut block);
    let (mut theta, mut av) = rayleigh_ritz(op, &mut block);
    let (mut res, mut res_global) = residuals(op, &block[0], &av[0], theta[0]);
    let mut it = 0usize;
    loop {
        if res <= tol {
            let mut v = block[0].clone();
            match polish(op, &diag, sigma, theta[0], &mut v) {
                Ok(()) => {
                    let mut y = vec![0.0; v.len()];
                    op.apply(&v, &mut y);
                    let lambda = dot(&v, &y) / dot(&v, &v);
                    let (r, _) = residuals(op, &v, &y, lambda);
                    if r <= tol {
                        return Ok(finish(op, v, lambda, r, it, inner, sigma));
                    }
                    polish_attempts += 1;
                    if polish_attempts > 3 {
                        return Err(Error::NonConvergence {
                            what: "eigenvector polish",
                            iterations: it,
                            residual: r,
                        });
                    }
                    block[0] = v;
                }
                Err(negative) => return Err(Error::PositivityLost { negative }),
            }
        }
        if it >= max_iter {
            return Err(Error::NonConvergence {
                what: "shift-and-invert iteration",
                iterations: it,
                residual: res,
            });
        }
        it += 1;
        if adaptive {
            sigma = floor.max(theta[0] - 2.0 * res_global - eta);
        }
        // once the shift isolates the lowest Ritz value the other block
        // vectors no longer speed anything up
        if block.len() > 1 && (theta[0] - sigma) < 0.02 * (theta[1] - sigma) {
            block.truncate(1);
            theta.truncate(1);
        }
        let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / (d - sigma)).collect();
        let cg_tol = (1e-2 * res_global / (theta[0] - sigma)).clamp(1e-13, 1e-2);
        let mut next = Vec::with_capacity(block.len());
        for (j, v) in block.iter().enumerate() {
            let th = theta.get(j).copied().unwrap_or(theta[0]);
            let mut x: Vec<f64> = v.iter().map(|a| a / (th - sigma).max(eta)).collect();
            let out = conjugate_gradient(
                |p, q| {
                    op.apply(p, q);
                    q.iter_mut().zip(p).for_each(|(qi, pi)| *qi -= sigma * pi);
                },
                Some(&inv_diag),
                v,
                &mut x,
                cg_tol,
                CG_MAX_ITER,
            );
            inner += out.iterations;
            next.push(x);
        }
        block = next;
        orthonormalize(&mut block);
        let rr = rayleigh_ritz(op, &mut block);
        theta = rr.0;
        av = rr.1;
        let r = residuals(op, &block[0], &av[0], theta[0]);
        res = r.0;
        res_global = r.1;
    }
}

/// Clips rounding-level negatives and restores strict positivity with
/// Jacobi sweeps of the eigen-equation. Returns the number of entries that
/// were negative beyond rounding level, if any.
fn polish(
    op: &CoupledOperator,
    diag: &[f64],
    sigma: f64,
    theta: f64,
    v: &mut [f64],
) -> std::result::Result<(), usize> {
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|a| *a = -*a);
    }
    let max = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let threshold = NOISE_LEVEL * max;
    let bad = v.iter().filter(|&&a| a < -threshold).count();
    if bad > 0 {
        return Err(bad);
    }
    if v.iter().all(|&a| a > 0.0) {
        return Ok(());
    }
    v.iter_mut().for_each(|a| *a = a.max(0.0));
    let lift = (theta - sigma).max(0.0);
    let mut off = vec![0.0; v.len()];
    let sweeps = op.domain.shape().iter().sum::<usize>() + op.host_count() + 2;
    for _ in 0..sweeps {
        op.apply_offdiagonal(v, &mut off);
        let mut m = 0.0f64;
        for k in 0..v.len() {
            v[k] = (off[k] + lift * v[k]) / (diag[k] - sigma);
            m = m.max(v[k]);
        }
        v.iter_mut().for_each(|a| *a /= m);
        if v.iter().all(|&a| a > 0.0) {
            return Ok(());
        }
    }
    Err(v.iter().filter(|&&a| a <= 0.0).count())
}

fn finish(
    op: &CoupledOperator,
    mut v: Vec<f64>,
    lambda: f64,
    residual: f64,
    iterations: usize,
    inner: usize,
    shift: f64,
) -> EigenResult {
    let scale = 1.0 / (op.domain.cell_volume() * dot(&v, &v)).sqrt();
    v.iter_mut().for_each(|a| *a *= scale);
    let eigenvector = op.unstack(v).expect("finite eigenvector");
    EigenResult {
        lambda,
        eigenvector,
        residual_norm: residual,
        iterations,
        inner_iterations: inner,
        domain_r: op.domain.radius(),
        spacing_h: op.domain.spacing(),
        shift,
        coupling: op.coupling,
        levels: Vec::new(),
    }
}

/// Assembles and solves on a given domain.
pub fn solve_on(
    params: &ModelParams,
    coupling: Coupling,
    domain: Arc<DiscreteDomain>,
    settings: SolverSettings,
) -> Result<EigenResult> {
    let op = assemble_operator(params, domain, coupling)?;
    principal_eigenpair(&op, settings.tol, settings.max_iter)
}

/// Refinement ladder controls.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderSettings {
    /// The first box reaches far enough that every `r_i` on its boundary is at
    /// most `-(|r_max| + delta + confinement)`, but no further than
    /// `margin_widths` mode widths past the optima.
    pub confinement: f64,
    pub margin_widths: f64,
    /// `R_0 / h_0` on the first level.
    pub cells_per_radius: f64,
    pub radius_growth: f64,
    pub spacing_factor: f64,
    pub min_levels: usize,
    pub max_levels: usize,
    pub solver: SolverSettings,
}

impl Default for LadderSettings {
    fn default() -> Self {
        Self {
            confinement: 10.0,
            margin_widths: 6.0,
            cells_per_radius: 64.0,
            radius_growth: std::f64::consts::SQRT_2,
            spacing_factor: 0.5,
            min_levels: 2,
            max_levels: 5,
            solver: SolverSettings::default(),
        }
    }
}

impl LadderSettings {
    /// Box of ladder level `level` for the given landscape.
    pub fn level_domain(&self, params: &ModelParams, level: usize) -> Result<DiscreteDomain> {
        let land = &params.landscape;
        let n = land.dim();
        let land_r = land.r_max();
        let margin = (2.0 * (land_r + land_r.abs() + params.delta + self.confinement) / land.alpha())
            .sqrt()
            .min(self.margin_widths * params.mode_width());
        let mut centre = vec![0.0; n];
        let mut half = vec![0.0; n];
        for a in 0..n {
            let lo = land.optima().iter().map(|o| o[a]).fold(f64::INFINITY, f64::min);
            let hi = land.optima().iter().map(|o| o[a]).fold(f64::NEG_INFINITY, f64::max);
            centre[a] = 0.5 * (lo + hi);
            half[a] = 0.5 * (hi - lo) + margin;
        }
        let r0 = half.iter().fold(0.0f64, |m, v| m.max(*v));
        let grow = self.radius_growth.powi(level as i32);
        let h = r0 / self.cells_per_radius * self.spacing_factor.powi(level as i32);
        let lower: Vec<f64> = (0..n).map(|a| centre[a] - half[a] * grow).collect();
        let upper: Vec<f64> = (0..n).map(|a| centre[a] + half[a] * grow).collect();
        DiscreteDomain::lattice_box(&lower, &upper, h)
    }
}

/// `lambda_H` by the default refinement ladder, stopping once successive
/// levels agree to `accuracy`.
pub fn lambda_h(params: &ModelParams, accuracy: f64) -> Result<EigenResult> {
    lambda_h_with(params, Coupling::Standard, accuracy, &LadderSettings::default())
}

pub fn lambda_h_with(
    params: &ModelParams,
    coupling: Coupling,
    accuracy: f64,
    ladder: &LadderSettings,
) -> Result<EigenResult> {
    require_positive("accuracy", accuracy)?;
    if ladder.max_levels < ladder.min_levels.max(1) {
        return Err(invalid("max_levels", "must be >= min_levels"));
    }
    let mut levels: Vec<LadderLevel> = Vec::new();
    let mut prev: Option<EigenResult> = None;
    let mut last_change = f64::INFINITY;
    for level in 0..ladder.max_levels {
        let domain = Arc::new(ladder.level_domain(params, level)?);
        let op = assemble_operator(params, Arc::clone(&domain), coupling)?;
        let guess = prev.as_ref().map(|r| r.eigenvector.as_slice());
        let res = principal_eigenpair_from(&op, ladder.solver.tol, ladder.solver.max_iter, guess)?;
        levels.push(LadderLevel {
            radius: domain.radius(),
            spacing: domain.spacing(),
            nodes: domain.len(),
            lambda: res.lambda,
        });
        if let Some(p) = &prev {
            last_change = (res.lambda - p.lambda).abs();
        }
        let done = levels.len() >= ladder.min_levels.max(2) && last_change < accuracy;
        prev = Some(res);
        if done {
            break;
        }
    }
    let mut out = prev.expect("at least one level");
    if last_change >= accuracy {
        return Err(Error::LadderExhausted {
            levels: levels.len(),
            last_change,
        });
    }
    out.levels = levels;
    Ok(out)
}

/// Two-host eigenvalue with half of the migrants lost in transit.
pub fn lambda_tilde2(
    o1: &[f64],
    o2: &[f64],
    alpha: f64,
    mu: f64,
    delta: f64,
    r_max: f64,
    accuracy: f64,
) -> Result<EigenResult> {
    if !(delta > 0.0) {
        return Err(invalid("delta", "must be > 0"));
    }
    let land = FitnessLandscape::new(vec![o1.to_vec(), o2.to_vec()], alpha, r_max)?;
    let params = ModelParams::new(land, mu, delta)?;
    lambda_h_with(&params, Coupling::Loss, accuracy, &LadderSettings::default())
}

/// Tolerance on `sum_i <psi_i, psi_i> = 1` accepted by [`rayleigh_quotient`].
pub const NORMALISATION_TOL: f64 = 1e-8;

/// Discrete Rayleigh quotient of a normalised candidate, with the gradient
/// term taken as `-<Lap psi, psi>`.
pub fn rayleigh_quotient(params: &ModelParams, candidate: &[Field]) -> Result<f64> {
    let land = &params.landscape;
    let h = land.host_count();
    if candidate.len() != h {
        return Err(Error::DimensionMismatch {
            expected: h,
            got: candidate.len(),
        });
    }
    for f in &candidate[1..] {
        if !f.same_domain(&candidate[0]) {
            return Err(Error::DomainMismatch);
        }
    }
    let domain = candidate[0].domain();
    if domain.dim() != land.dim() {
        return Err(Error::DimensionMismatch {
            expected: land.dim(),
            got: domain.dim(),
        });
    }
    let ip = |a: &Field, b: &Field| crate::domain::inner_product(a, b);
    let norm_sq: f64 = candidate.iter().map(|f| ip(f, f)).sum::<Result<f64>>()?;
    if (norm_sq - 1.0).abs() > NORMALISATION_TOL {
        return Err(Error::NotNormalised { norm_sq });
    }
    let vol = domain.cell_volume();
    let mut q = 0.0;
    for (i, psi) in candidate.iter().enumerate() {
        let lap = crate::domain::apply_laplacian(psi);
        let kinetic = -params.mu * params.mu / 2.0 * ip(&lap, psi)?;
        let o = &land.optima()[i];
        let mut weighted = 0.0;
        domain.for_each_node(|k, x| {
            let r = land.r_max() - land.alpha() * dist_sq(x, o) / 2.0;
            weighted += r * psi.values()[k] * psi.values()[k];
        });
        q += kinetic - vol * weighted;
    }
    if h > 1 {
        let mut cross = 0.0;
        for i in 0..h {
            for j in (i + 1)..h {
                cross += ip(&candidate[i], &candidate[j])?;
            }
        }
        q += params.delta * (1.0 - 2.0 / (h as f64 - 1.0) * cross);
    }
    Ok(q)
}
