//! One test per acceptance criterion. Each prints a single
//! `criterion <id> ...: PASS|FAIL` line; run with `--nocapture` to see them.

use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use multihost::analytics::{
    interaction_matrix, lambda1, lambda_bounds, lambda_infinity, lambda_prime_at_zero, FitnessLandscape,
    ModelParams,
};
use multihost::domain::{build_domain, integrate, DiscreteDomain, Field};
use multihost::dynamics::{
    classify_fate, initial_condition, mass_balance_residual, proportionality_defect, simulate, Fate,
    InitialCondition,
};
use multihost::eigen::{
    assemble_operator, lambda_h, principal_eigenpair, solve_on, Coupling, SolverSettings,
};
use multihost::sweep::{
    delta_sweep_with, far_field_check, middle_vs_copy, region_map, Discretization, RegionMap, SweepSpec,
};

const SQRT2: f64 = std::f64::consts::SQRT_2;

struct Checks {
    id: &'static str,
    items: Vec<(String, bool)>,
}

impl Checks {
    fn new(id: &'static str) -> Self {
        Self { id, items: Vec::new() }
    }

    fn check(&mut self, label: impl Into<String>, pass: bool) {
        self.items.push((label.into(), pass));
    }

    fn finish(self) {
        let ok = self.items.iter().all(|(_, p)| *p);
        let detail: Vec<String> = self
            .items
            .iter()
            .map(|(l, p)| format!("{}{l}", if *p { "" } else { "FAILED " }))
            .collect();
        println!(
            "criterion {}: {} [{}]",
            self.id,
            if ok { "PASS" } else { "FAIL" },
            detail.join("; ")
        );
        assert!(ok, "criterion {} failed", self.id);
    }
}

fn params(optima: Vec<Vec<f64>>, alpha: f64, mu: f64, delta: f64, r_max: f64) -> ModelParams {
    let land = FitnessLandscape::new(optima, alpha, r_max).unwrap();
    ModelParams::new(land, mu, delta).unwrap()
}

fn pair(beta: f64, dim: usize, alpha: f64, mu: f64, delta: f64, r_max: f64) -> ModelParams {
    let land = FitnessLandscape::two_hosts(beta, dim, alpha, r_max).unwrap();
    ModelParams::new(land, mu, delta).unwrap()
}

#[test]
fn criterion_01_closed_form_single_host() {
    let mut c = Checks::new("1 (single-host closed form)");
    for (n, alpha, mu, r_max) in [(1, 1.0, 1.0, 0.0), (2, 1.0, SQRT2, 1.0), (2, 4.0, 1.0, 0.0)] {
        let p = params(vec![vec![0.0; n]], alpha, mu, 0.0, r_max);
        let start = Instant::now();
        let res = lambda_h(&p, 1e-3).unwrap();
        let elapsed = start.elapsed();
        let exact = mu * n as f64 * alpha.sqrt() / 2.0 - r_max;
        let err = (res.lambda - exact).abs();
        c.check(
            format!("n={n} alpha={alpha} mu={mu:.4} err={err:.2e} in {:.2}s", elapsed.as_secs_f64()),
            err < 1e-3 && elapsed < Duration::from_secs(10),
        );
    }
    c.finish();
}

/// Dense matrix of the coupled operator assembled directly from the node
/// coordinates.
fn dense_operator(p: &ModelParams, axis: &[f64], h: f64) -> DMatrix<f64> {
    let land = &p.landscape;
    let hosts = land.host_count();
    let m = axis.len();
    let (d, t) = if hosts > 1 {
        (p.delta, p.delta / (hosts as f64 - 1.0))
    } else {
        (0.0, 0.0)
    };
    let c = p.mu * p.mu / 2.0;
    let mut a = DMatrix::zeros(hosts * m, hosts * m);
    for i in 0..hosts {
        let o = land.optima()[i][0];
        for k in 0..m {
            let row = i * m + k;
            let r = land.r_max() - land.alpha() * (axis[k] - o).powi(2) / 2.0;
            a[(row, row)] = 2.0 * c / (h * h) - r + d;
            if k > 0 {
                a[(row, row - 1)] = -c / (h * h);
            }
            if k + 1 < m {
                a[(row, row + 1)] = -c / (h * h);
            }
            for j in (0..hosts).filter(|&j| j != i) {
                a[(row, j * m + k)] = -t;
            }
        }
    }
    a
}

#[test]
fn criterion_02_dense_oracle() {
    let mut c = Checks::new("2 (dense oracle)");
    let domain = Arc::new(build_domain(1, 5.0, 24).unwrap());
    let configs = [vec![vec![0.0]], vec![vec![-1.0], vec![1.0]], vec![vec![-1.0], vec![1.0], vec![0.3]]];
    for optima in configs {
        let hosts = optima.len();
        let p = params(optima, 1.0, 1.0, 0.7, 0.5);
        let op = assemble_operator(&p, domain.clone(), Coupling::Standard).unwrap();
        let res = principal_eigenpair(&op, 1e-11, 500).unwrap();
        let dense = dense_operator(&p, domain.axis(0), domain.spacing());
        let eig = SymmetricEigen::new(dense);
        let (k_min, l_min) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, v)| (k, *v))
            .unwrap();
        let oracle = eig.eigenvectors.column(k_min);
        let ours: Vec<f64> = res.eigenvector.iter().flat_map(|f| f.values().iter().copied()).collect();
        let dot: f64 = ours.iter().zip(oracle.iter()).map(|(a, b)| a * b).sum();
        let norm_a = ours.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cosine = dot.abs() / (norm_a * oracle.norm());
        let err = (res.lambda - l_min).abs();
        c.check(
            format!("H={hosts} |dlambda|={err:.1e} 1-cos={:.1e}", 1.0 - cosine),
            err < 1e-10 && cosine > 1.0 - 1e-10,
        );
    }
    c.finish();
}

#[test]
fn criterion_03_bounds_and_monotonicity() {
    let mut c = Checks::new("3 (bounds and monotonicity)");
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let solver = SolverSettings::default();
    let allowed = 2.0 * solver.tol;
    let ladder = multihost::eigen::LadderSettings::default();
    let mut worst_sandwich = f64::NEG_INFINITY;
    let mut worst_delta: f64 = 0.0;
    let mut worst_alpha: f64 = 0.0;
    let mut worst_mu: f64 = 0.0;
    for k in 0..20 {
        let hosts = 2 + k % 2;
        let beta = rng.gen_range(0.2..2.0);
        let delta = rng.gen_range(0.1..3.0);
        let alpha = rng.gen_range(0.5..2.0);
        let mu = rng.gen_range(0.5..2.0);
        let mut land = FitnessLandscape::two_hosts(beta, 2, alpha, 1.0).unwrap();
        if hosts == 3 {
            land = land
                .with_host(vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
                .unwrap();
        }
        let p = ModelParams::new(land.clone(), mu, delta).unwrap();
        let lam = lambda_h(&p, 1e-3).unwrap().lambda;
        let b = lambda_bounds(&land, mu, delta).unwrap();
        worst_sandwich = worst_sandwich.max(b.lower - lam).max(lam - b.upper);

        let sweep = delta_sweep_with(&land, mu, &[0.0, 0.5, 1.0, 2.0, 5.0], 1e-3, &ladder)
            .unwrap_or_else(|e| panic!("instance {k}: {e}"));
        worst_delta = worst_delta.max(sweep.worst_decrease());

        let disc = Discretization { spacing: 0.2, margin_widths: 6.0 };
        let widest = ModelParams::new(land.clone(), 2.0, delta).unwrap();
        let mut widest_alpha = widest.clone();
        widest_alpha.landscape = FitnessLandscape::new(land.optima().to_vec(), 0.5, 1.0).unwrap();
        let box_alpha = disc.domain_for(land.optima(), &widest_alpha).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for a in [0.5, 1.0, 2.0, 4.0] {
            let l = FitnessLandscape::new(land.optima().to_vec(), a, 1.0).unwrap();
            let q = ModelParams::new(l, mu, delta).unwrap();
            let v = solve_on(&q, Coupling::Standard, box_alpha.clone(), solver).unwrap().lambda;
            worst_alpha = worst_alpha.max(prev - v);
            prev = v;
        }
        let box_mu = disc.domain_for(land.optima(), &widest).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for m in [0.5, 1.0, 1.5, 2.0] {
            let q = ModelParams::new(land.clone(), m, delta).unwrap();
            let v = solve_on(&q, Coupling::Standard, box_mu.clone(), solver).unwrap().lambda;
            worst_mu = worst_mu.max(prev - v);
            prev = v;
        }
    }
    let elapsed = start.elapsed();
    c.check(format!("sandwich worst excess {worst_sandwich:.2e}"), worst_sandwich <= 1e-3);
    c.check(format!("delta worst decrease {worst_delta:.1e}"), worst_delta <= allowed);
    c.check(format!("alpha worst decrease {worst_alpha:.1e}"), worst_alpha <= allowed);
    c.check(format!("mu worst decrease {worst_mu:.1e}"), worst_mu <= allowed);
    c.check(format!("{:.0}s", elapsed.as_secs_f64()), elapsed < Duration::from_secs(600));
    c.finish();
}

#[test]
fn criterion_04_small_delta_slope() {
    let mut c = Checks::new("4 (small-delta slope)");
    let disc = Discretization { spacing: 0.125, margin_widths: 6.0 };
    let solver = SolverSettings { tol: 1e-10, max_iter: 500 };
    let slope = |p: &ModelParams| {
        let d = disc.domain_for(p.landscape.optima(), p).unwrap();
        let at = |delta: f64| {
            solve_on(&p.with_delta(delta).unwrap(), Coupling::Standard, d.clone(), solver)
                .unwrap()
                .lambda
        };
        (at(2e-3) - at(1e-3)) / 1e-3
    };
    let three = params(vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.5, 1.0]], 1.0, SQRT2, 1e-3, 1.0);
    let predicted = lambda_prime_at_zero(&three.landscape, SQRT2).unwrap();
    let mu_a = interaction_matrix(&three.landscape, SQRT2).unwrap().top_eigenvalue;
    assert!((predicted - (3.0 - mu_a) / 2.0).abs() < 1e-12);
    let s3 = slope(&three);
    let rel3 = (s3 - predicted).abs() / predicted;
    c.check(format!("H=3 slope {s3:.5} vs {predicted:.5} rel {rel3:.1e}"), rel3 < 0.02);

    let two = pair(1.0, 2, 1.0, SQRT2, 1e-3, 1.0);
    let predicted2 = 1.0 - (-1.0 / SQRT2).exp();
    let s2 = slope(&two);
    let rel2 = (s2 - predicted2).abs() / predicted2;
    c.check(format!("H=2 slope {s2:.5} vs {predicted2:.5} rel {rel2:.1e}"), rel2 < 0.02);
    c.finish();
}

#[test]
fn criterion_05_large_delta_limit() {
    let mut c = Checks::new("5 (large-delta limit)");
    for optima in [
        vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
        vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
    ] {
        let hosts = optima.len();
        let p = params(optima, 1.0, SQRT2, 1e3, 1.0);
        let lam = lambda_h(&p, 1e-3).unwrap().lambda;
        let limit = lambda_infinity(&p.landscape, SQRT2).unwrap();
        let rel = (lam - limit).abs() / limit.abs();
        c.check(format!("H={hosts} lambda {lam:.5} vs {limit:.5} rel {rel:.1e}"), rel < 0.02);
    }
    c.finish();
}

#[test]
fn criterion_06_signs_and_far_field() {
    let mut c = Checks::new("6 (equilateral, copy, far field)");
    let (beta, alpha, mu, delta, r_max) = (1.0, 1.0, SQRT2, 1.0, 1.0);
    let disc = Discretization::default();
    let solver = SolverSettings::default();
    let two = pair(beta, 2, alpha, mu, delta, r_max);
    let cover = vec![vec![-beta, 0.0], vec![beta, 0.0], vec![0.0, 3f64.sqrt() * beta]];
    let d = disc.domain_for(&cover, &two).unwrap();
    let lambda2 = solve_on(&two, Coupling::Standard, d.clone(), solver).unwrap().lambda;
    let third = |o3: Vec<f64>| {
        let p = ModelParams::new(two.landscape.with_host(o3).unwrap(), mu, delta).unwrap();
        solve_on(&p, Coupling::Standard, d.clone(), solver).unwrap().lambda
    };
    let equilateral = third(vec![0.0, 3f64.sqrt() * beta]);
    c.check(format!("equilateral {equilateral:.5} > {lambda2:.5}"), equilateral > lambda2);
    let copy = third(vec![beta, 0.0]);
    c.check(format!("copy {copy:.5} < {lambda2:.5}"), copy < lambda2);

    let far = far_field_check(beta, alpha, mu, delta, r_max, &[5.0, 10.0, 20.0], &disc, solver).unwrap();
    let gaps: Vec<String> = far.rows.iter().map(|r| format!("{:.1e}", r.gap)).collect();
    c.check(format!("far-field bounds hold, gaps {}", gaps.join(" ")), far.bounds_hold());
    c.check("gap decreasing", far.gap_decreasing());
    let l1 = lambda1(alpha, mu, 2, r_max).unwrap();
    c.check(
        format!("{:.5} < tilde {:.5} < {:.5}", far.lambda2, far.lambda_tilde2, l1 + delta),
        far.lambda2 < far.lambda_tilde2 && far.lambda_tilde2 < l1 + delta,
    );
    c.finish();
}

#[test]
fn criterion_07_host_in_the_middle() {
    let mut c = Checks::new("7 (host in the middle)");
    let delta = 1.0;
    let t = middle_vs_copy(&[6.0], 1.0, SQRT2, delta, 1.0, &Discretization::default(), SolverSettings::default())
        .unwrap();
    let r = t.rows[0];
    c.check(format!("|middle - (l1+d)| = {:.1e}", r.middle_to_limit), r.middle_to_limit < 0.05 * delta);
    c.check(format!("|copy - (l1+d/2)| = {:.1e}", r.copy_to_limit), r.copy_to_limit < 0.05 * delta);
    c.check(
        format!("middle {:.5} > copy {:.5}", r.lambda_middle, r.lambda_copy),
        t.middle_worse_at_largest(),
    );
    c.finish();
}

#[test]
fn criterion_08_projection() {
    let mut c = Checks::new("8 (projection onto the host axis)");
    let solver = SolverSettings::default();
    let two = pair(1.0, 2, 1.0, SQRT2, 1.0, 1.0);
    let d = Discretization::default()
        .domain_for(&[vec![-3.0, -3.0], vec![3.0, 3.0]], &two)
        .unwrap();
    let lambda3 = |o3: Vec<f64>| {
        let p = ModelParams::new(two.landscape.with_host(o3).unwrap(), SQRT2, 1.0).unwrap();
        solve_on(&p, Coupling::Standard, d.clone(), solver).unwrap().lambda
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..25 {
        let a1 = rng.gen_range(-3.0..3.0);
        let a2 = rng.gen_range(0.25..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        worst = worst.max(lambda3(vec![a1, 0.0]) - lambda3(vec![a1, a2]));
    }
    c.check(format!("worst excess of projection {worst:.2e}"), worst <= 2.0 * solver.tol);
    c.finish();
}

struct DynamicsCase {
    label: &'static str,
    params: ModelParams,
    spacing: f64,
    symmetric: bool,
}

#[test]
fn criterion_09_dynamics_against_eigenvalue() {
    let mut c = Checks::new("9 (dynamics against eigenvalue)");
    let start = Instant::now();
    let o3_1d = vec![vec![-1.0], vec![1.0], vec![0.5]];
    let o3_2d = vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.5, 1.0]];
    let cases = [
        DynamicsCase { label: "n=1 H=2 persist", params: pair(1.0, 1, 1.0, SQRT2, 1.0, 1.5), spacing: 0.1, symmetric: false },
        DynamicsCase { label: "n=1 H=2 extinct", params: pair(1.0, 1, 1.0, SQRT2, 1.0, 0.2), spacing: 0.1, symmetric: false },
        DynamicsCase { label: "n=1 H=3 persist", params: params(o3_1d.clone(), 1.0, SQRT2, 1.0, 1.5), spacing: 0.1, symmetric: false },
        DynamicsCase { label: "n=1 H=3 extinct", params: params(o3_1d, 1.0, SQRT2, 1.0, 0.2), spacing: 0.1, symmetric: false },
        DynamicsCase { label: "n=2 H=2 persist", params: pair(1.0, 2, 1.0, SQRT2, 1.0, 2.5), spacing: 0.25, symmetric: true },
        DynamicsCase { label: "n=2 H=3 extinct", params: params(o3_2d, 1.0, SQRT2, 1.0, 0.8), spacing: 0.25, symmetric: false },
    ];
    let mut signs = (0, 0);
    for case in &cases {
        let p = &case.params;
        let disc = Discretization { spacing: case.spacing, margin_widths: 6.0 };
        let d = disc.domain_for(p.landscape.optima(), p).unwrap();
        let eig = solve_on(p, Coupling::Standard, d.clone(), SolverSettings::default()).unwrap();
        let lam = eig.lambda;
        if lam < 0.0 {
            signs.0 += 1;
        } else {
            signs.1 += 1;
        }
        let init = initial_condition(&InitialCondition::GaussianAtOptima { width: 0.7, mass: 0.3 }, p, d).unwrap();
        let rec = simulate(&init, 60.0, 0.05, 10).unwrap();
        let report = classify_fate(&rec, lam);
        c.check(
            format!("{} lambda {lam:.4} fate {}", case.label, report.fate.name()),
            report.agrees == Some(true) && rec.clip_events() == 0,
        );
        if report.fate == Fate::Persistence {
            let tail = rec.masses.len() * 4 / 5;
            let peak = rec.masses[tail..].iter().flatten().copied().fold(0.0, f64::max);
            c.check(format!("{} tail max {peak:.4} vs {:.4}", case.label, -lam), peak >= 0.95 * (-lam));
        }
        if case.symmetric {
            let last = rec.masses.last().unwrap();
            let mass_err = last.iter().map(|m| (m + lam).abs() / lam.abs()).fold(0.0, f64::max);
            let prop = proportionality_defect(&rec.terminal.fields, &eig.eigenvector).unwrap();
            c.check(format!("{} mass error {mass_err:.1e}", case.label), mass_err < 0.05);
            c.check(format!("{} proportionality {prop:.1e}", case.label), prop < 0.02);
        }
    }
    c.check(format!("{} persistent, {} extinct", signs.0, signs.1), signs.0 > 0 && signs.1 > 0);
    let elapsed = start.elapsed();
    c.check(format!("{:.0}s", elapsed.as_secs_f64()), elapsed < Duration::from_secs(900));
    c.finish();
}

struct Panel {
    delta: f64,
    beta: f64,
    map: RegionMap,
}

fn panels() -> &'static (Vec<Panel>, Duration) {
    static PANELS: OnceLock<(Vec<Panel>, Duration)> = OnceLock::new();
    PANELS.get_or_init(|| {
        let start = Instant::now();
        let panels = [(0.01, 0.5), (0.01, 2.0), (1.0, 1.0), (10.0, 0.5)]
            .into_iter()
            .map(|(delta, beta)| Panel {
                delta,
                beta,
                map: region_map(&SweepSpec::standard_panel(delta, beta, 41)).unwrap(),
            })
            .collect();
        (panels, start.elapsed())
    })
}

fn panel(delta: f64, beta: f64) -> &'static RegionMap {
    &panels().0.iter().find(|p| p.delta == delta && p.beta == beta).unwrap().map
}

#[test]
fn criterion_10a_map_symmetries() {
    let mut c = Checks::new("10a (map reflection symmetries)");
    let (all, elapsed) = panels();
    for p in all {
        let tol = 2.0 * p.map.spec.solver.tol;
        let (d2, d1) = p.map.symmetry_defects();
        let (d2, d1) = (d2.unwrap(), d1.unwrap());
        c.check(
            format!("delta={} beta={} defects {d2:.1e} {d1:.1e}", p.delta, p.beta),
            d2 <= tol && d1 <= tol,
        );
    }
    c.check(format!("four maps in {:.0}s", elapsed.as_secs_f64()), *elapsed < Duration::from_secs(7200));
    c.finish();
}

#[test]
fn criterion_10b_large_delta_ball() {
    let mut c = Checks::new("10b (large-delta map against ball)");
    let a = panel(10.0, 0.5).large_delta_agreement(3);
    c.check(format!("agreement {:.3} on {} points", a.fraction(), a.scored), a.fraction() >= 0.95);
    c.finish();
}

#[test]
fn criterion_10c_small_delta_region() {
    let mut c = Checks::new("10c (small-delta maps against predicate)");
    for beta in [0.5, 2.0] {
        let a = panel(0.01, beta).small_delta_agreement(3);
        c.check(
            format!("beta={beta} agreement {:.3} on {} points", a.fraction(), a.scored),
            a.fraction() >= 0.95,
        );
    }
    c.finish();
}

#[test]
fn criterion_10d_disconnected_positive_set() {
    let mut c = Checks::new("10d (positive-gain set disconnected)");
    let map = panel(0.01, 2.0);
    let n = map.positive_components();
    let centre = map.at(20, 20);
    c.check(
        format!("{n} component(s), gain at centre {:.3e}", centre.gain),
        n >= 2,
    );
    c.finish();
}

#[test]
fn criterion_11_numerical_hygiene() {
    let mut c = Checks::new("11 (numerical hygiene)");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = Arc::new(DiscreteDomain::lattice_box(&[-2.0, -1.5], &[2.5, 1.0], 0.125).unwrap());
    let random = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let mut worst_sym: f64 = 0.0;
    let mut negative = true;
    let mut worst_lin: f64 = 0.0;
    for _ in 0..20 {
        let (x, y) = (random(&mut rng), random(&mut rng));
        let (mut lx, mut ly) = (vec![0.0; d.len()], vec![0.0; d.len()]);
        d.laplacian_into(&x, &mut lx);
        d.laplacian_into(&y, &mut ly);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let scale = dot(&lx, &lx).sqrt() * dot(&y, &y).sqrt();
        worst_sym = worst_sym.max((dot(&lx, &y) - dot(&x, &ly)).abs() / scale);
        negative &= dot(&lx, &x) < 0.0;

        let (s, t) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let fx = Field::new(d.clone(), x.clone()).unwrap();
        let fy = Field::new(d.clone(), y.clone()).unwrap();
        let comb = Field::new(d.clone(), x.iter().zip(&y).map(|(a, b)| s * a + t * b).collect()).unwrap();
        let lhs = integrate(&comb);
        let rhs = s * integrate(&fx) + t * integrate(&fy);
        let size = d.cell_volume() * x.iter().zip(&y).map(|(a, b)| (s * a).abs() + (t * b).abs()).sum::<f64>();
        worst_lin = worst_lin.max((lhs - rhs).abs() / size);
    }
    c.check(format!("laplacian symmetry {worst_sym:.1e}"), worst_sym < 1e-13);
    c.check("laplacian negative", negative);
    c.check(format!("quadrature linearity {worst_lin:.1e}"), worst_lin < 1e-13);

    let p = pair(0.8, 1, 1.0, 1.0, 1.0, 1.0);
    let init = InitialCondition::GaussianAt { center: vec![0.2], width: 0.6, mass: 0.3 };
    let margin = 6.0 * p.mode_width();
    let run = |h: f64, dt: f64, every: usize| {
        let dom = Arc::new(DiscreteDomain::lattice_box(&[-0.8 - margin], &[0.8 + margin], h).unwrap());
        simulate(&initial_condition(&init, &p, dom).unwrap(), 2.0, dt, every).unwrap()
    };
    let total = |h: f64, dt: f64| *run(h, dt, 1000).totals.last().unwrap();
    let (a, b, cc) = (total(0.1, 0.02), total(0.1, 0.01), total(0.1, 0.005));
    let dt_ratio = (a - b) / (b - cc);
    c.check(format!("dt order ratio {dt_ratio:.2}"), (dt_ratio - 2.0).abs() < 0.2);
    let (a, b, cc) = (total(0.2, 0.005), total(0.1, 0.005), total(0.05, 0.005));
    let h_ratio = (a - b) / (b - cc);
    c.check(format!("h order ratio {h_ratio:.2}"), (h_ratio - 4.0).abs() < 0.6);
    let coarse = mass_balance_residual(&run(0.1, 0.01, 5)).unwrap();
    let fine = mass_balance_residual(&run(0.1, 0.005, 10)).unwrap();
    c.check(format!("mass balance {coarse:.1e} -> {fine:.1e}"), fine < coarse);
    c.finish();
}
