//! Tensor-product grids on truncated boxes with homogeneous Dirichlet data.
//!
//! Nodes are stored in lexicographic order with axis 0 varying slowest.
//! Fields vanish implicitly on the boundary of the box.

use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{invalid, require_positive, Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDomain {
    axes: Vec<Vec<f64>>,
    spacing: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    shape: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

/// Cube `[-R, R]^n` with `m` interior nodes per axis and spacing `2R/(m+1)`.
pub fn build_domain(n: usize, radius: f64, m: usize) -> Result<DiscreteDomain> {
    check_dim(n)?;
    require_positive("radius", radius)?;
    if m < 3 {
        return Err(invalid("points_per_dim", format!("need at least 3 interior points, got {m}")));
    }
    let h = 2.0 * radius / (m as f64 + 1.0);
    let axis: Vec<f64> = (0..m).map(|k| -radius + (k as f64 + 1.0) * h).collect();
    Ok(DiscreteDomain::from_axes(
        vec![axis; n],
        h,
        vec![-radius; n],
        vec![radius; n],
    ))
}

fn check_dim(n: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(invalid("dim", format!("supported dimensions are 1..={MAX_DIM}, got {n}")))
    }
}

impl DiscreteDomain {
    fn from_axes(axes: Vec<Vec<f64>>, spacing: f64, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
        let mut strides = vec![1; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let len = shape.iter().product();
        Self {
            axes,
            spacing,
            lower,
            upper,
            shape,
            strides,
            len,
        }
    }

    /// Smallest box whose boundary lies on the lattice `h Z^n` and which
    /// contains `[lower, upper]`. Node coordinates are exact multiples of `h`,
    /// so boxes symmetric about the origin yield mirror-symmetric grids.
    pub fn lattice_box(lower: &[f64], upper: &[f64], h: f64) -> Result<Self> {
        check_dim(lower.len())?;
        if upper.len() != lower.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        require_positive("spacing", h)?;
        let mut axes = Vec::with_capacity(lower.len());
        let mut lo_b = Vec::with_capacity(lower.len());
        let mut hi_b = Vec::with_capacity(lower.len());
        for (&lo, &hi) in lower.iter().zip(upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid("bounds", format!("need lower < upper, got [{lo}, {hi}]")));
            }
            let k_lo = (lo / h).floor() as i64;
            let k_hi = (hi / h).ceil() as i64;
            if k_hi - k_lo < 4 {
                return Err(invalid("spacing", "box holds fewer than 3 interior nodes"));
            }
            axes.push(((k_lo + 1)..k_hi).map(|k| k as f64 * h).collect());
            lo_b.push(k_lo as f64 * h);
            hi_b.push(k_hi as f64 * h);
        }
        Ok(Self::from_axes(axes, h, lo_b, hi_b))
    }

    /// Lattice box covering every point of `points` with `margin` to spare
    /// on each side.
    pub fn covering(points: &[Vec<f64>], margin: f64, h: f64) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| invalid("points", "need at least one point"))?;
        let n = first.len();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for p in points {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.len(),
                });
            }
            for d in 0..n {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        require_positive("margin", margin)?;
        lo.iter_mut().for_each(|v| *v -= margin);
        hi.iter_mut().for_each(|v| *v += margin);
        Self::lattice_box(&lo, &hi, h)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Largest half-width of the box over all axes.
    pub fn radius(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (u - l))
            .fold(0.0, f64::max)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    /// `h^n`
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for a in 0..self.dim() {
            out[a] = idx / self.strides[a];
            idx %= self.strides[a];
        }
        out
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mi = self.multi_index(idx);
        (0..self.dim()).map(|a| self.axes[a][mi[a]]).collect()
    }

    /// Calls `f(index, coordinates)` for every node in storage order.
    pub fn for_each_node(&self, mut f: impl FnMut(usize, &[f64])) {
        let n = self.dim();
        let mut x = [0.0; MAX_DIM];
        let mut mi = [0usize; MAX_DIM];
        for a in 0..n {
            x[a] = self.axes[a][0];
        }
        for idx in 0..self.len {
            f(idx, &x[..n]);
            for a in (0..n).rev() {
                mi[a] += 1;
                if mi[a] < self.shape[a] {
                    x[a] = self.axes[a][mi[a]];
                    break;
                }
                mi[a] = 0;
                x[a] = self.axes[a][0];
            }
        }
    }

    /// Samples `f` at every node.
    pub fn sample(&self, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        self.for_each_node(|i, x| out[i] = f(x));
        out
    }

    /// Index of the node mirrored through `x_axis -> -x_axis`, if the grid
    /// is symmetric along that axis.
    pub fn mirror_index(&self, idx: usize, axis: usize) -> Option<usize> {
        let ax = &self.axes[axis];
        let m = ax.len();
        let symmetric = (0..m).all(|k| ax[k] == -ax[m - 1 - k]);
        if !symmetric {
            return None;
        }
        let mut mi = self.multi_index(idx);
        mi[axis] = m - 1 - mi[axis];
        Some(self.linear_index(&mi[..self.dim()]))
    }

    /// Writes the five-point (seven-point in 3D) Dirichlet Laplacian of `x`
    /// into `y`.
    pub fn laplacian_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.len);
        assert_eq!(y.len(), self.len);
        let inv_h2 = 1.0 / (self.spacing * self.spacing);
        let centre = -2.0 * self.dim() as f64 * inv_h2;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = centre * xi;
        }
        for a in 0..self.dim() {
            let m = self.shape[a];
            let inner = self.strides[a];
            let block = m * inner;
            for (xb, yb) in x.chunks_exact(block).zip(y.chunks_exact_mut(block)) {
                if inner == 1 {
                    for k in 0..m {
                        let mut s = 0.0;
                        if k > 0 {
                            s += xb[k - 1];
                        }
                        if k + 1 < m {
                            s += xb[k + 1];
                        }
                        yb[k] += inv_h2 * s;
                    }
                } else {
                    for k in 0..m {
                        let row = k * inner;
                        if k > 0 {
                            let (src, dst) = (&xb[row - inner..row], &mut yb[row..row + inner]);
                            dst.iter_mut().zip(src).for_each(|(d, s)| *d += inv_h2 * s);
                        }
                        if k + 1 < m {
                            let (src, dst) =
                                (&xb[row + inner..row + 2 * inner], &mut yb[row..row + inner]);
                            dst.iter_mut().zip(src).for_each(|(d, s)| *d += inv_h2 * s);
                        }
                    }
                }
            }
        }
    }
}

/// Grid function on a shared domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    domain: Arc<DiscreteDomain>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(domain: Arc<DiscreteDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::DimensionMismatch {
                expected: domain.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "field values must be finite"));
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: Arc<DiscreteDomain>) -> Self {
        let values = vec![0.0; domain.len()];
        Self { domain, values }
    }

    pub fn from_fn(domain: Arc<DiscreteDomain>, f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = domain.sample(f);
        Self::new(domain, values)
    }

    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_domain(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) || *self.domain == *other.domain
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn apply_laplacian(field: &Field) -> Field {
    let mut out = vec![0.0; field.values.len()];
    field.domain.laplacian_into(&field.values, &mut out);
    Field {
        domain: Arc::clone(&field.domain),
        values: out,
    }
}

/// Midpoint rule `h^n * sum(values)`, summed in storage order.
pub fn integrate(field: &Field) -> f64 {
    field.domain.cell_volume() * field.values.iter().sum::<f64>()
}

pub fn inner_product(a: &Field, b: &Field) -> Result<f64> {
    if !a.same_domain(b) {
        return Err(Error::DomainMismatch);
    }
    Ok(a.domain.cell_volume() * crate::linalg::dot(&a.values, &b.values))
}

/// Multilinear interpolation of `field` onto `target`; zero outside the
/// source box.
pub fn interpolate(field: &Field, target: Arc<DiscreteDomain>) -> Result<Field> {
    let src = &*field.domain;
    if src.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            got: target.dim(),
        });
    }
    let n = src.dim();
    let h = src.spacing;
    let mut values = vec![0.0; target.len()];
    target.for_each_node(|idx, x| {
        // position relative to the lower boundary, in cells; boundary nodes are index -1 and m
        let mut base = [0i64; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for a in 0..n {
            let s = (x[a] - src.lower[a]) / h - 1.0;
            let f = s.floor();
            base[a] = f as i64;
            frac[a] = s - f;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut lin = 0usize;
            let mut inside = true;
            for a in 0..n {
                let bit = (corner >> a) & 1;
                let k = base[a] + bit as i64;
                if k < 0 || k >= src.shape[a] as i64 {
                    inside = false;
                    break;
                }
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                lin += k as usize * src.strides[a];
            }
            if inside && w != 0.0 {
                acc += w * field.values[lin];
            }
        }
        values[idx] = acc;
    });
    Field::new(target, values)
}

/// CSV with columns `x1..xn,value`, one row per node in storage order.
pub fn write_field_csv<W: Write>(field: &Field, mut out: W) -> io::Result<()> {
    let n = field.domain.dim();
    let header: Vec<String> = (1..=n).map(|a| format!("x{a}")).collect();
    writeln!(out, "{},value", header.join(","))?;
    let mut result = Ok(());
    let mut line = String::new();
    field.domain.for_each_node(|idx, x| {
        if result.is_err() {
            return;
        }
        line.clear();
        for c in x {
            line.push_str(&format!("{c},"));
        }
        line.push_str(&format!("{}", field.values[idx]));
        result = writeln!(out, "{line}");
    });
    result
}
