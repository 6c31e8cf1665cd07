//! Closed-form quantities of the quadratic-fitness multi-host model.
//!
//! Fitness in host `i` is `r_i(x) = r_max - alpha * |x - O_i|^2 / 2`. Every
//! function here is a pure function of its arguments.

use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::linalg::symmetric_eigen;

/// Host optima together with the selection parameters shared by all hosts.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessLandscape {
    optima: Vec<Vec<f64>>,
    alpha: f64,
    r_max: f64,
}

impl FitnessLandscape {
    pub fn new(optima: Vec<Vec<f64>>, alpha: f64, r_max: f64) -> Result<Self> {
        if optima.is_empty() {
            return Err(invalid("optima", "at least one host is required"));
        }
        let dim = optima[0].len();
        if dim == 0 {
            return Err(invalid("optima", "phenotype dimension must be >= 1"));
        }
        for o in &optima {
            if o.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: o.len(),
                });
            }
            if o.iter().any(|v| !v.is_finite()) {
                return Err(invalid("optima", "coordinates must be finite"));
            }
        }
        require_positive("alpha", alpha)?;
        if !r_max.is_finite() {
            return Err(invalid("r_max", "must be finite"));
        }
        Ok(Self {
            optima,
            alpha,
            r_max,
        })
    }

    /// Two hosts at `(-beta, 0, ..)` and `(beta, 0, ..)` in dimension `dim`.
    pub fn two_hosts(beta: f64, dim: usize, alpha: f64, r_max: f64) -> Result<Self> {
        require_nonnegative("beta", beta)?;
        if dim == 0 {
            return Err(invalid("dim", "must be >= 1"));
        }
        let mut o1 = vec![0.0; dim];
        let mut o2 = vec![0.0; dim];
        o1[0] = -beta;
        o2[0] = beta;
        Self::new(vec![o1, o2], alpha, r_max)
    }

    /// The same landscape with one more host appended.
    pub fn with_host(&self, optimum: Vec<f64>) -> Result<Self> {
        let mut optima = self.optima.clone();
        optima.push(optimum);
        Self::new(optima, self.alpha, self.r_max)
    }

    pub fn host_count(&self) -> usize {
        self.optima.len()
    }

    pub fn dim(&self) -> usize {
        self.optima[0].len()
    }

    pub fn optima(&self) -> &[Vec<f64>] {
        &self.optima
    }

    pub fn optimum(&self, i: usize) -> Result<&[f64]> {
        self.optima
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                index: i,
                host_count: self.optima.len(),
            })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Centroid of the optima.
    pub fn centroid(&self) -> Vec<f64> {
        let h = self.host_count() as f64;
        (0..self.dim())
            .map(|d| self.optima.iter().map(|o| o[d]).sum::<f64>() / h)
            .collect()
    }

    /// `|O_1 - O_2|^2 / 2`; only meaningful with at least two hosts.
    pub fn habitat_difference(&self) -> Option<f64> {
        (self.host_count() >= 2).then(|| 0.5 * dist_sq(&self.optima[0], &self.optima[1]))
    }

    pub fn all_optima_identical(&self) -> bool {
        self.optima.iter().all(|o| o == &self.optima[0])
    }
}

/// A landscape together with the mutation and migration parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub landscape: FitnessLandscape,
    pub mu: f64,
    pub delta: f64,
}

impl ModelParams {
    pub fn new(landscape: FitnessLandscape, mu: f64, delta: f64) -> Result<Self> {
        require_positive("mu", mu)?;
        require_nonnegative("delta", delta)?;
        Ok(Self {
            landscape,
            mu,
            delta,
        })
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.landscape.clone(), self.mu, delta)
    }

    pub fn lambda1(&self) -> f64 {
        self.mu * self.landscape.dim() as f64 * self.landscape.alpha.sqrt() / 2.0 - self.landscape.r_max
    }

    /// Width `sqrt(mu / sqrt(alpha))` of the single-host ground state.
    pub fn mode_width(&self) -> f64 {
        (self.mu / self.landscape.alpha.sqrt()).sqrt()
    }
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Growth rate of phenotype `x` in host `i` (zero-based).
pub fn fitness(landscape: &FitnessLandscape, i: usize, x: &[f64]) -> Result<f64> {
    let o = landscape.optimum(i)?;
    if x.len() != o.len() {
        return Err(Error::DimensionMismatch {
            expected: o.len(),
            got: x.len(),
        });
    }
    Ok(landscape.r_max - landscape.alpha * dist_sq(x, o) / 2.0)
}

/// Single-host principal eigenvalue `mu n sqrt(alpha) / 2 - r_max`.
pub fn lambda1(alpha: f64, mu: f64, n: usize, r_max: f64) -> Result<f64> {
    require_positive("alpha", alpha)?;
    require_positive("mu", mu)?;
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    Ok(mu * n as f64 * alpha.sqrt() / 2.0 - r_max)
}

/// Normalising constant of the single-host ground state, `(sqrt(alpha)/(pi mu))^(n/4)`.
pub fn gaussian_constant(alpha: f64, mu: f64, n: usize) -> f64 {
    (alpha.sqrt() / (std::f64::consts::PI * mu)).powf(n as f64 / 4.0)
}

/// L²-normalised single-host ground state centred at the origin.
pub fn gaussian_mode(alpha: f64, mu: f64, n: usize, y: &[f64]) -> Result<f64> {
    require_positive("alpha", alpha)?;
    require_positive("mu", mu)?;
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    Ok(gaussian_constant(alpha, mu, n) * (-alpha.sqrt() * norm_sq(y) / (2.0 * mu)).exp())
}

/// `<G_i, G_j> = exp(-sqrt(alpha) |O_i - O_j|^2 / (4 mu))`.
pub fn gaussian_overlap(landscape: &FitnessLandscape, mu: f64, i: usize, j: usize) -> Result<f64> {
    require_positive("mu", mu)?;
    let oi = landscape.optimum(i)?;
    let oj = landscape.optimum(j)?;
    Ok(overlap_from_dist_sq(landscape.alpha, mu, dist_sq(oi, oj)))
}

fn overlap_from_dist_sq(alpha: f64, mu: f64, d2: f64) -> f64 {
    (-alpha.sqrt() * d2 / (4.0 * mu)).exp()
}

/// Gram matrix of the host ground states and its Perron pair.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    pub entries: Vec<Vec<f64>>,
    pub top_eigenvalue: f64,
    /// Unit-norm, strictly positive.
    pub top_eigenvector: Vec<f64>,
}

pub fn interaction_matrix(landscape: &FitnessLandscape, mu: f64) -> Result<InteractionMatrix> {
    require_positive("mu", mu)?;
    let h = landscape.host_count();
    if h < 2 {
        return Err(invalid("host_count", "interaction matrix needs at least two hosts"));
    }
    let entries: Vec<Vec<f64>> = (0..h)
        .map(|i| {
            (0..h)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        overlap_from_dist_sq(
                            landscape.alpha,
                            mu,
                            dist_sq(&landscape.optima[i], &landscape.optima[j]),
                        )
                    }
                })
                .collect()
        })
        .collect();
    let (values, vectors) = symmetric_eigen(&entries);
    let top_eigenvalue = values[h - 1];
    let mut p = vectors[h - 1].clone();
    if p.iter().sum::<f64>() < 0.0 {
        p.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(InteractionMatrix {
        entries,
        top_eigenvalue,
        top_eigenvector: p,
    })
}

/// Derivative of `lambda_H` with respect to the migration rate at zero,
/// `(H - mu_A) / (H - 1)`.
pub fn lambda_prime_at_zero(landscape: &FitnessLandscape, mu: f64) -> Result<f64> {
    let a = interaction_matrix(landscape, mu)?;
    let h = landscape.host_count() as f64;
    Ok(((h - a.top_eigenvalue) / (h - 1.0)).max(0.0))
}

/// Three-host slope from the trigonometric root of the characteristic
/// cubic of the Gram matrix, given its off-diagonal entries.
pub fn lambda3_prime_at_zero_cardano(a12: f64, a13: f64, a23: f64) -> f64 {
    let s = a12 * a12 + a13 * a13 + a23 * a23;
    let arg = (a12 * a13 * a23 * (27.0 / (s * s * s)).sqrt()).clamp(-1.0, 1.0);
    1.0 - (s / 3.0).sqrt() * (arg.acos() / 3.0).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionMembership {
    Inside,
    Boundary,
    Outside,
}

/// Relative tolerance on `k` for the boundary verdict.
pub const REGION_BOUNDARY_TOL: f64 = 1e-9;

/// The function `k(O_3)` whose super-level set `{k > 1}` is the small-migration
/// springboard region, with `O_1, O_2 = (-+beta, 0, ..)`.
///
/// Evaluated in log space so large `beta` or `|O_3|` do not overflow.
pub fn small_delta_k(o3: &[f64], beta: f64, alpha: f64, mu: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta", format!("must be > 0, got {beta}")));
    }
    require_positive("alpha", alpha)?;
    require_positive("mu", mu)?;
    if o3.is_empty() {
        return Err(invalid("o3", "needs at least one coordinate"));
    }
    let sa = alpha.sqrt();
    let a1 = o3[0];
    let ln_h = sa * (3.0 * beta * beta - norm_sq(o3)) / (2.0 * mu);
    let c = (sa * a1 * beta / mu).abs();
    // ln(2 h cosh c)
    let big = ln_h + c + (-2.0 * c).exp().ln_1p();
    // ln g^2 = ln((1 + e^big)/3)
    let ln_g2 = softplus(big) - 3f64.ln();
    let ln_ratio = ln_h - 1.5 * ln_g2;
    let ratio = ln_ratio.exp().clamp(-1.0, 1.0);
    Ok((0.5 * ln_g2).exp() * (ratio.acos() / 3.0).cos())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn in_small_delta_region(o3: &[f64], beta: f64, alpha: f64, mu: f64) -> Result<RegionMembership> {
    let k = small_delta_k(o3, beta, alpha, mu)?;
    Ok(if (k - 1.0).abs() <= REGION_BOUNDARY_TOL {
        RegionMembership::Boundary
    } else if k > 1.0 {
        RegionMembership::Inside
    } else {
        RegionMembership::Outside
    })
}

/// Large-migration limit `lambda_1 - R_H(M) + r_max`, with `R_H` the mean
/// fitness and `M` the centroid of the optima.
pub fn lambda_infinity(landscape: &FitnessLandscape, mu: f64) -> Result<f64> {
    let l1 = lambda1(landscape.alpha, mu, landscape.dim(), landscape.r_max)?;
    let m = landscape.centroid();
    let h = landscape.host_count() as f64;
    let mean_fitness = landscape
        .optima
        .iter()
        .map(|o| landscape.r_max - landscape.alpha * dist_sq(&m, o) / 2.0)
        .sum::<f64>()
        / h;
    Ok(l1 - mean_fitness + landscape.r_max)
}

/// Open ball of radius `sqrt(3/2) beta` about the midpoint of `O_1, O_2`.
pub fn in_lambda_infinity_ball(o3: &[f64], beta: f64) -> bool {
    norm_sq(o3) < 1.5 * beta * beta
}

/// Fourth-host analogue with the third optimum at the midpoint: open ball of
/// radius `sqrt(8/9) beta`.
pub fn in_fourhost_infinity_ball(o4: &[f64], beta: f64) -> bool {
    norm_sq(o4) < 8.0 / 9.0 * beta * beta
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaBounds {
    /// `lambda_1`
    pub lower: f64,
    /// Rayleigh bound at the equally weighted host ground states.
    pub upper: f64,
    /// `lambda_1 + delta`
    pub crude_cap: f64,
    /// Bound using only the overlap of the first two hosts; `None` for one host.
    pub two_host_refinement: Option<f64>,
}

pub fn lambda_bounds(landscape: &FitnessLandscape, mu: f64, delta: f64) -> Result<LambdaBounds> {
    require_nonnegative("delta", delta)?;
    let l1 = lambda1(landscape.alpha, mu, landscape.dim(), landscape.r_max)?;
    let h = landscape.host_count();
    if h < 2 {
        return Ok(LambdaBounds {
            lower: l1,
            upper: l1,
            crude_cap: l1 + delta,
            two_host_refinement: None,
        });
    }
    let hf = h as f64;
    let weight = 2.0 / (hf * (hf - 1.0));
    let mut sum = 0.0;
    for i in 0..h {
        for j in (i + 1)..h {
            sum += gaussian_overlap(landscape, mu, i, j)?;
        }
    }
    let upper = l1 + delta * (1.0 - weight * sum);
    let a12 = gaussian_overlap(landscape, mu, 0, 1)?;
    Ok(LambdaBounds {
        lower: l1,
        upper,
        crude_cap: l1 + delta,
        two_host_refinement: Some(l1 + delta * (1.0 - weight * a12)),
    })
}
