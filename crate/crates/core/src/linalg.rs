//! Small dense and matrix-free linear algebra kernels.
//!
//! Everything here works on plain slices so the stencil code in `domain`
//! and the coupled operator in `eigen` can share it without wrappers.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += s * x`
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn scale(s: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= s);
}

/// Eigen-decomposition of a small dense symmetric matrix by cyclic Jacobi
/// rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors, `vectors[k]` being the k-th eigenvector.
pub fn symmetric_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let scale_ref: f64 = a
        .iter()
        .flat_map(|row| row.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale_ref {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let values = order.iter().map(|&k| a[k][k]).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i][k]).collect())
        .collect();
    (values, vectors)
}

/// Number of eigenvalues of the symmetric tridiagonal matrix strictly
/// below `x` (Sturm sequence count).
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0f64;
    for (k, &d) in diag.iter().enumerate() {
        let e2 = if k == 0 { 0.0 } else { off[k - 1] * off[k - 1] };
        q = d - x - if k == 0 { 0.0 } else { e2 / q };
        if q == 0.0 {
            q = -f64::EPSILON * (d.abs() + x.abs()).max(1.0);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix, by bisection on
/// the Sturm count. Accurate to a few ulps of the Gershgorin interval.
pub fn tridiagonal_min_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    assert!(!diag.is_empty());
    assert_eq!(off.len() + 1, diag.len());
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..n {
        let r = if k > 0 { off[k - 1].abs() } else { 0.0 }
            + if k + 1 < n { off[k].abs() } else { 0.0 };
        lo = lo.min(diag[k] - r);
        hi = hi.max(diag[k] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradient for a symmetric positive definite operator given as a
/// closure `apply(x, y)` writing `y = A x`. `x` holds the initial guess on
/// entry and the solution on exit. `inv_diag`, when given, is used as a
/// Jacobi preconditioner. The stopping test is on the unpreconditioned
/// residual.
pub fn conjugate_gradient<F>(
    mut apply: F,
    inv_diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> CgOutcome
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let precondition = |r: &[f64], z: &mut [f64]| match inv_diag {
        Some(d) => z.iter_mut().zip(r).zip(d).for_each(|((zi, ri), di)| *zi = ri * di),
        None => z.copy_from_slice(r),
    };
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = ax;
    let mut rz = dot(&r, &z);
    let mut rr = dot(&r, &r);
    let target = rel_tol * b_norm;

    let mut it = 0;
    while it < max_iter {
        if rr.sqrt() <= target {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // not positive definite along p
            break;
        }
        let step = rz / pap;
        axpy(step, &p, x);
        axpy(-step, &ap, &mut r);
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        rr = dot(&r, &r);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        it += 1;
    }
    let rel = rr.sqrt() / b_norm;
    CgOutcome {
        iterations: it,
        relative_residual: rel,
        converged: rel <= rel_tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_two_by_two() {
        let c = 0.3;
        let (vals, vecs) = symmetric_eigen(&[vec![1.0, c], vec![c, 1.0]]);
        assert!((vals[0] - (1.0 - c)).abs() < 1e-14);
        assert!((vals[1] - (1.0 + c)).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((vecs[1][0].abs() - s).abs() < 1e-14);
        assert!((vecs[1][1].abs() - s).abs() < 1e-14);
    }

    #[test]
    fn jacobi_reconstructs_matrix() {
        let a = vec![
            vec![4.0, 1.0, -2.0, 0.5],
            vec![1.0, 3.0, 0.0, 1.5],
            vec![-2.0, 0.0, 1.0, 0.25],
            vec![0.5, 1.5, 0.25, -1.0],
        ];
        let (vals, vecs) = symmetric_eigen(&a);
        for i in 0..4 {
            for j in 0..4 {
                let rec: f64 = (0..4).map(|k| vals[k] * vecs[k][i] * vecs[k][j]).sum();
                assert!((rec - a[i][j]).abs() < 1e-12, "({i},{j})");
            }
        }
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sturm_bisection_matches_discrete_sine() {
        // tridiag(-1, 2, -1) of size m has smallest eigenvalue 2 - 2 cos(pi/(m+1))
        let m = 50;
        let diag = vec![2.0; m];
        let off = vec![-1.0; m - 1];
        let expected = 2.0 - 2.0 * (std::f64::consts::PI / (m as f64 + 1.0)).cos();
        let got = tridiagonal_min_eigenvalue(&diag, &off);
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn cg_solves_spd_system() {
        let m = 40;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..m {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < m { x[i + 1] } else { 0.0 };
                y[i] = 2.5 * x[i] - l - r;
            }
        };
        let b: Vec<f64> = (0..m).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; m];
        let out = conjugate_gradient(apply, None, &b, &mut x, 1e-13, 500);
        assert!(out.converged);
        let mut y = vec![0.0; m];
        apply(&x, &mut y);
        for i in 0..m {
            assert!((y[i] - b[i]).abs() < 1e-11);
        }
        let inv: Vec<f64> = vec![1.0 / 2.5; m];
        let mut x2 = vec![0.0; m];
        let out = conjugate_gradient(apply, Some(&inv), &b, &mut x2, 1e-13, 500);
        assert!(out.converged);
        for i in 0..m {
            assert!((x2[i] - x[i]).abs() < 1e-10);
        }
    }
}
