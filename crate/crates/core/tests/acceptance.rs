//! Acceptance criteria. Each test prints one `criterion N [PASS|FAIL]` line
//! and then asserts the outcome.

use std::time::{Duration, Instant};

use msboost::cw_boost::{boost_componentwise, build_selection_path, cw_closed_form};
use msboost::linear_boost::{boost_linear, compute_r, LinearLearner};
use msboost::selective::{
    fourier_motzkin_eliminate, truncation_limits, GaussianModel, Polyhedron, TruncatedNormalParams,
};
use msboost::sim::{
    export_results, run_conditional_mse_curve, run_transition_sweep, CmseConfig, GeneratorSpec, SweepConfig,
};
use msboost::transition::{equal_variance_g, scaled_g, TransitionInputs, TransitionTerms};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn verdict(n: u32, pass: bool, detail: &str) {
    println!("criterion {n} [{}]: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn standardized(mut x: DMatrix<f64>) -> DMatrix<f64> {
    for mut c in x.column_iter_mut() {
        let mean = c.mean();
        c.add_scalar_mut(-mean);
        let norm = c.norm();
        c /= norm;
    }
    x
}

/// Σ_{i<m} η B (I − ηH)^i with B = (XᵀX + λI)⁻¹Xᵀ by direct inversion.
fn ridge_r_oracle(x: &DMatrix<f64>, lambda: f64, eta: f64, m: usize) -> DMatrix<f64> {
    let p = x.ncols();
    let n = x.nrows();
    let b = (x.transpose() * x + DMatrix::identity(p, p) * lambda)
        .try_inverse()
        .unwrap()
        * x.transpose();
    let h = x * &b;
    let step = DMatrix::identity(n, n) - h * eta;
    let mut power = DMatrix::identity(n, n);
    let mut r = DMatrix::zeros(p, n);
    for _ in 0..m {
        r += &b * &power * eta;
        power = &step * power;
    }
    r
}

/// Component-wise coefficients from the product form over a given selection.
fn cw_product_oracle(x: &DMatrix<f64>, y: &DVector<f64>, selected: &[usize], eta: f64) -> DVector<f64> {
    let n = x.nrows();
    let mut beta = DVector::zeros(x.ncols());
    let mut ups = DMatrix::<f64>::identity(n, n);
    for &j in selected {
        let xj = x.column(j).into_owned();
        let n2 = xj.norm_squared();
        beta[j] += eta * xj.dot(&(&ups * y)) / n2;
        let h = &xj * xj.transpose() / n2;
        ups = (DMatrix::identity(n, n) - h * eta) * ups;
    }
    beta
}

#[test]
fn criterion_01_closed_form_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for inst in 0..100 {
        let n = rng.random_range(12..=50);
        let p = rng.random_range(2..=10);
        let eta = [0.1, 0.5, 1.0][inst % 3];
        let m = rng.random_range(1..=25);
        let lambda = rng.random_range(0.05..5.0);
        let x = standardized(uniform(&mut rng, n, p));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));

        let learner = LinearLearner::new(&x, lambda).unwrap();
        let iterative = boost_linear(&y, &learner, eta, m).unwrap().coefficients;
        let closed = ridge_r_oracle(&x, lambda, eta, m) * &y;
        let spectral = compute_r(&learner, eta, m).unwrap() * &y;
        worst = worst
            .max((&iterative - &closed).amax())
            .max((&spectral - &closed).amax());

        let fit = boost_componentwise(&y, &x, eta, m).unwrap();
        let product = cw_product_oracle(&x, &y, &fit.selected, eta);
        let library_product = cw_closed_form(&y, &x, &fit.selected, eta).unwrap();
        worst = worst
            .max((&fit.coefficients - &product).amax())
            .max((&library_product - &product).amax());
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        worst < 1e-10 && elapsed < Duration::from_secs(60),
        &format!("max |iterative - closed form| = {worst:.2e} over 100 instances in {elapsed:.2?}"),
    );
}

/// Transition τ for OLS fits, written directly from the least-squares
/// formula with an explicit block-diagonal Z.
fn ols_tau_oracle(xs: &[DMatrix<f64>], zs: &[DMatrix<f64>], x0: &DMatrix<f64>, w: &[f64], s2: f64) -> f64 {
    let p = x0.ncols();
    let q = zs[0].ncols();
    let n: usize = xs.iter().map(|x| x.nrows()).sum();
    let k = xs.len();
    let mut x = DMatrix::zeros(n, p);
    let mut zbd = DMatrix::zeros(n, k * q);
    let mut off = 0;
    for (i, (xk, zk)) in xs.iter().zip(zs).enumerate() {
        x.rows_mut(off, xk.nrows()).copy_from(xk);
        zbd.view_mut((off, i * q), (zk.nrows(), q)).copy_from(zk);
        off += xk.nrows();
    }
    let inv = (x.transpose() * &x).try_inverse().unwrap();
    let within_m = (x0 * &inv * x0.transpose()).trace();
    let a = x0 * &inv * x.transpose() * &zbd;
    let between_m = (a.transpose() * &a).trace();
    let mut within_e = 0.0;
    let mut between_e = 0.0;
    for ((xk, zk), wk) in xs.iter().zip(zs).zip(w) {
        let ik = (xk.transpose() * xk).try_inverse().unwrap();
        within_e += wk * wk * (x0 * &ik * x0.transpose()).trace();
        let ak = x0 * &ik * xk.transpose() * zk;
        between_e += wk * wk * (ak.transpose() * &ak).trace();
    }
    q as f64 / p as f64 * s2 * (within_e - within_m) / (between_m - between_e)
}

#[test]
fn criterion_02_ols_degeneracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut coef_err: f64 = 0.0;
    let mut tau_err: f64 = 0.0;
    for _ in 0..20 {
        let (k, p, q) = (3, 4, 2);
        let xs: Vec<_> = (0..k)
            .map(|_| {
                let n = rng.random_range(10..20);
                uniform(&mut rng, n, p)
            })
            .collect();
        let zs: Vec<_> = xs.iter().map(|x| x.columns(0, q).into_owned()).collect();
        let x0 = uniform(&mut rng, 12, p);
        let beta = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));

        let y = &xs[0] * &beta + DVector::from_fn(xs[0].nrows(), |_, _| rng.random_range(-0.5..0.5));
        let learner = LinearLearner::new(&xs[0], 0.0).unwrap();
        let boosted = boost_linear(&y, &learner, 1.0, 1).unwrap().coefficients;
        let ols = (xs[0].transpose() * &xs[0]).try_inverse().unwrap() * xs[0].transpose() * &y;
        coef_err = coef_err.max((boosted - ols).amax());

        let n: usize = xs.iter().map(|x| x.nrows()).sum();
        let mut stacked = DMatrix::zeros(n, p);
        let mut off = 0;
        for x in &xs {
            stacked.rows_mut(off, x.nrows()).copy_from(x);
            off += x.nrows();
        }
        let r_merge = compute_r(&LinearLearner::new(&stacked, 0.0).unwrap(), 1.0, 1).unwrap();
        let r_study: Vec<_> = xs
            .iter()
            .map(|x| compute_r(&LinearLearner::new(x, 0.0).unwrap(), 1.0, 1).unwrap())
            .collect();
        let w = vec![1.0 / k as f64; k];
        let inputs = TransitionInputs::from_operators(
            &r_merge,
            &r_study,
            &x0,
            zs.clone(),
            Vec::new(),
            xs.iter().map(|x| x * &beta).collect(),
            &x0 * &beta,
            w.clone(),
            1.3,
            DVector::zeros(q),
        )
        .unwrap();
        let tau = TransitionTerms::new(&inputs).unwrap().transition_point().unwrap();
        let oracle = ols_tau_oracle(&xs, &zs, &x0, &w, 1.3);
        tau_err = tau_err.max((tau - oracle).abs() / oracle.abs().max(1.0));
    }
    verdict(
        2,
        coef_err < 1e-10 && tau_err < 1e-10,
        &format!("OLS coefficient error {coef_err:.2e}, tau error vs least-squares formula {tau_err:.2e}"),
    );
}

/// Random ridge-boosting instance with a nonlinear mean.
fn random_instance(rng: &mut ChaCha8Rng) -> TransitionInputs {
    let k = rng.random_range(2..=4);
    let p = rng.random_range(3..=6);
    let q = rng.random_range(1..=3);
    let eta = [0.1, 0.5, 1.0][rng.random_range(0..3)];
    let xs: Vec<_> = (0..k)
        .map(|_| {
            let n = rng.random_range(15..=30);
            standardized(uniform(rng, n, p))
        })
        .collect();
    let n: usize = xs.iter().map(|x| x.nrows()).sum();
    let mut stacked = DMatrix::zeros(n, p);
    let mut off = 0;
    for x in &xs {
        stacked.rows_mut(off, x.nrows()).copy_from(x);
        off += x.nrows();
    }
    let lambda = rng.random_range(0.1..5.0);
    let r_merge = compute_r(
        &LinearLearner::new(&stacked, lambda).unwrap(),
        eta,
        rng.random_range(1..=20),
    )
    .unwrap();
    let r_study: Vec<_> = xs
        .iter()
        .map(|x| compute_r(&LinearLearner::new(x, lambda).unwrap(), eta, rng.random_range(1..=20)).unwrap())
        .collect();
    let n_test = rng.random_range(10..=20);
    let x0 = uniform(rng, n_test, p);
    let beta = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let f = |x: &DMatrix<f64>| x * &beta + x.column(0).map(|v| 0.5 * v * v);
    let zs: Vec<_> = xs.iter().map(|x| uniform(rng, x.nrows(), q)).collect();
    TransitionInputs::from_operators(
        &r_merge,
        &r_study,
        &x0,
        zs,
        vec![uniform(rng, x0.nrows(), q)],
        xs.iter().map(f).collect(),
        f(&x0),
        vec![1.0 / k as f64; k],
        rng.random_range(0.5..2.0),
        DVector::zeros(q),
    )
    .unwrap()
}

#[test]
fn criterion_03_threshold_equality() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    let mut sign_ok = true;
    let mut found = 0;
    while found < 50 {
        let inputs = random_instance(&mut rng);
        let terms = TransitionTerms::new(&inputs).unwrap();
        let Some(tau) = terms.transition_point() else { continue };
        if tau <= 0.0 {
            continue;
        }
        found += 1;
        let diff = |s: f64| {
            let g = equal_variance_g(s, terms.q(), inputs.p);
            terms.mspe_merged(&g).total() - terms.mspe_ensemble(&g).total()
        };
        worst = worst.max(diff(tau).abs());
        // merged − ensemble has the sign of σ̄² − τ
        sign_ok &= diff(0.5 * tau) < 0.0 && diff(2.0 * tau) > 0.0;
    }
    let elapsed = start.elapsed();
    verdict(
        3,
        worst < 1e-8 && sign_ok && elapsed < Duration::from_secs(60),
        &format!("max |MSPE_merge - MSPE_ens| at tau = {worst:.2e}, signs at tau/2 and 2tau correct: {sign_ok}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_04_interval_ordering_and_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut found = 0;
    let mut ok = true;
    let mut tries = 0;
    while found < 50 && tries < 10_000 {
        tries += 1;
        let inputs = random_instance(&mut rng);
        let q = inputs.q();
        if q < 2 {
            continue;
        }
        let terms = TransitionTerms::new(&inputs).unwrap();
        let split = rng.random_range(1..q);
        let ratio = rng.random_range(1.5..6.0);
        let shape = DVector::from_fn(q, |i, _| if i < split { 1.0 } else { ratio });
        let (Some(t1), Some(t2)) = terms.transition_interval(&shape) else {
            continue;
        };
        if t1 <= 0.0 {
            continue;
        }
        found += 1;
        let diff = |s: f64| {
            let g = scaled_g(&shape, s, inputs.p);
            let m = terms.mspe_merged(&g).total();
            (m - terms.mspe_ensemble(&g).total(), 1e-12 * m)
        };
        ok &= t1 <= t2;
        for s in [0.25 * t1, t1] {
            let (d, tol) = diff(s);
            ok &= d <= tol;
        }
        for s in [t2, 4.0 * t2] {
            let (d, tol) = diff(s);
            ok &= d >= -tol;
        }
    }
    verdict(
        4,
        ok && found == 50,
        &format!("{found} two-group instances: tau1 <= tau2, merge wins below tau1, ensemble wins above tau2: {ok}"),
    );
}

#[test]
fn criterion_05_asymptote() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    let mut found = 0;
    while found < 20 {
        let inputs = random_instance(&mut rng);
        let terms = TransitionTerms::new(&inputs).unwrap();
        let Ok(asym) = terms.asymptote() else { continue };
        found += 1;
        let g = equal_variance_g(1e6, terms.q(), inputs.p);
        // ratio of the estimator-dependent parts; the shared test-study
        // error E‖Y₀ − f₀‖² grows with σ̄² as well and is left out
        let ratio = terms.mspe_ensemble(&g).reducible() / terms.mspe_merged(&g).reducible();
        worst = worst.max((ratio - asym).abs() / asym);
    }
    verdict(
        5,
        worst < 1e-3,
        &format!("max relative gap between MSPE ratio at sigma_bar2 = 1e6 and asymptote: {worst:.2e} (20 instances)"),
    );
}

#[test]
fn criterion_06_theory_vs_simulation_transition() {
    let start = Instant::now();
    let grid = vec![0.0, 0.01, 0.02, 0.03, 0.05, 0.1, 0.2, 0.4];
    let cfg = SweepConfig::new(GeneratorSpec::default_design(2024), grid, 200);
    let r = run_transition_sweep(&cfg).unwrap();
    let tau = r.summary[0].tau;
    let elapsed = start.elapsed();
    let pass = match (tau, r.crossing) {
        (Some(t), Some((lo, hi))) => lo <= t && t <= hi,
        _ => false,
    };
    let means: Vec<String> = r
        .summary
        .iter()
        .map(|s| format!("{}:{:+.4}", s.grid_sigma_bar2, s.mean_log_ratio.unwrap()))
        .collect();
    verdict(
        6,
        pass && elapsed < Duration::from_secs(600),
        &format!(
            "tau = {tau:?}, empirical bracket = {:?}, mean log ratios [{}], {elapsed:.2?}",
            r.crossing,
            means.join(" ")
        ),
    );
}

/// Kolmogorov–Smirnov statistic of `sample` against `cdf`.
fn ks_statistic(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Lemma check: draws t ~ N(μ̄, θ²), forms y* = z + c t and keeps t when
/// boosting on y* repeats the observed selections and signs. Accepted draws
/// are compared with the truncated normal by a KS test at level 0.01.
fn lemma_ks_instance(seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(15..=30);
    let p = rng.random_range(2..=4);
    let m = rng.random_range(1..=3);
    let eta = 0.5;
    let x = standardized(gaussian(&mut rng, n, p));
    let beta = DVector::from_fn(p, |_, _| rng.random_range(-3.0..3.0));
    let y = &x * &beta + DVector::from_fn(n, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
    let fit = boost_componentwise(&y, &x, eta, m).unwrap();
    let path = build_selection_path(&fit, &x).unwrap();
    let j = fit.selected[0];
    let model = GaussianModel::isotropic(y.clone(), 0.09);
    let lim = truncation_limits(&path, &model, j, &y).unwrap();
    let params = lim.params;
    let theta = params.theta2.sqrt();
    let mut accepted = Vec::new();
    let mut draws = 0;
    while accepted.len() < 1500 && draws < 400_000 {
        draws += 1;
        let t = params.mu_bar + theta * rng.sample::<f64, _>(StandardNormal);
        let ys = &lim.z + &lim.c * t;
        let refit = boost_componentwise(&ys, &x, eta, m).unwrap();
        if refit.selected == fit.selected && refit.signs == fit.signs {
            accepted.push(t);
        }
    }
    if accepted.len() < 200 {
        return false;
    }
    let crit = 1.628 / (accepted.len() as f64).sqrt();
    ks_statistic(&mut accepted, |v| params.cdf(v)) < crit
}

#[test]
fn criterion_07_truncated_normal_machinery() {
    let passes = (0..10).filter(|&s| lemma_ks_instance(7000 + s)).count();

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut mc_ok = true;
    let mut gaps = Vec::new();
    for (mu, t2, a, b) in [
        (0.3, 2.0, -0.5, 2.5),
        (-1.0, 0.5, -1.2, 0.0),
        (2.0, 1.0, 0.5, f64::INFINITY),
    ] {
        let params = TruncatedNormalParams::new(mu, t2, a, b).unwrap();
        let (mean, var) = params.moments().unwrap();
        let sd = t2.sqrt();
        let target = 10_000_000usize;
        let (mut s1, mut s2, mut s4, mut count) = (0.0, 0.0, 0.0, 0usize);
        while count < target {
            let v = mu + sd * rng.sample::<f64, _>(StandardNormal);
            if v > a && v < b {
                let d = v - mean;
                s1 += d;
                s2 += d * d;
                s4 += d * d * d * d;
                count += 1;
            }
        }
        let nf = count as f64;
        let mc_mean = mean + s1 / nf;
        let m2 = s2 / nf - (s1 / nf).powi(2);
        let mc_var = m2 * nf / (nf - 1.0);
        let se_mean = (m2 / nf).sqrt();
        let se_var = ((s4 / nf - m2 * m2) / nf).sqrt();
        let z_mean = (mc_mean - mean).abs() / se_mean;
        let z_var = (mc_var - var).abs() / se_var;
        mc_ok &= z_mean < 3.0 && z_var < 3.0;
        gaps.push(format!("{z_mean:.2}/{z_var:.2}"));
    }

    let half = TruncatedNormalParams::new(0.0, 1.0, 0.0, f64::INFINITY)
        .unwrap()
        .moments()
        .unwrap();
    let half_ok = (half.0 - 0.7978846).abs() < 1e-6 && (half.1 - 0.3633802).abs() < 1e-6;
    verdict(
        7,
        passes >= 9 && mc_ok && half_ok,
        &format!(
            "KS passes {passes}/10; Monte Carlo z-scores mean/var [{}]; half-normal ({:.7}, {:.7})",
            gaps.join(", "),
            half.0,
            half.1
        ),
    );
}

#[test]
fn criterion_08_conditional_mse_pattern() {
    let start = Instant::now();
    let seeds = 20;
    let mut agree = 0;
    for s in 0..seeds {
        let mut cfg = CmseConfig::new(GeneratorSpec::default_design(800 + s), vec![0.01, 0.05], 8);
        cfg.m_max = 30;
        let r = run_conditional_mse_curve(&cfg).unwrap();
        let at = |level: f64, m: usize| {
            let row = r
                .summary
                .iter()
                .find(|row| row.grid_sigma_bar2 == level && row.m == Some(m))
                .unwrap();
            (row.cmse_merge.unwrap(), row.cmse_ens.unwrap())
        };
        let early: (f64, f64) = (2..=5)
            .map(|m| at(0.01, m))
            .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
        let late = at(0.05, 30);
        if early.0 <= early.1 && late.1 < late.0 {
            agree += 1;
        }
    }
    verdict(
        8,
        2 * agree > seeds as usize,
        &format!(
            "{agree}/{seeds} seeds: merged <= ensemble for m in 2..=5 at 0.01 and ensemble < merged at m = 30 at 0.05, {:.2?}",
            start.elapsed()
        ),
    );
}

#[test]
fn criterion_09_fourier_motzkin() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..50 {
        let rows = rng.random_range(4..=10);
        let vars = 3;
        let a = uniform(&mut rng, rows, vars);
        let b = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..0.2));
        let poly = Polyhedron::new(a, b).unwrap();
        let elim = rng.random_range(0..vars);
        let proj = fourier_motzkin_eliminate(&poly, elim).unwrap();
        let keep: Vec<usize> = (0..vars).filter(|&v| v != elim).collect();
        for i in 0..40 {
            for k in 0..25 {
                let u = -2.0 + 4.0 * i as f64 / 39.0;
                let v = -2.0 + 4.0 * k as f64 / 24.0;
                let mut full = DVector::zeros(vars);
                full[keep[0]] = u;
                full[keep[1]] = v;
                let reduced = DVector::from_vec(vec![u, v]);
                let slack = &proj.a_mat * &reduced - &proj.b_vec;
                if slack.iter().any(|s| s.abs() < 1e-9) {
                    continue;
                }
                // brute force: the fiber over (u, v) is an interval in the
                // eliminated coordinate
                let feasible = poly.interval(elim, &full, 0.0).is_some_and(|(lo, hi)| lo <= hi);
                checked += 1;
                if feasible != proj.contains(&reduced, 0.0) {
                    mismatches += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        9,
        mismatches == 0 && checked > 45_000 && elapsed < Duration::from_secs(60),
        &format!("{mismatches} mismatches over {checked} grid points on 50 polyhedra, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_10_determinism_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = GeneratorSpec::default_design(1010);
    spec.n_per_study = 50;
    let sweep = SweepConfig::new(spec.clone(), vec![0.0, 0.05, 0.2], 8);
    let mut curve = CmseConfig::new(spec, vec![0.01, 0.05], 3);
    curve.m_max = 6;
    let mut bytes = Vec::new();
    for threads in [1, 3, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let (a, b) = pool.install(|| {
            (
                run_transition_sweep(&sweep).unwrap(),
                run_conditional_mse_curve(&curve).unwrap(),
            )
        });
        let pa = export_results(&a, &dir.path().join(format!("sweep_{threads}.csv")), "h").unwrap();
        let pb = export_results(&b, &dir.path().join(format!("curve_{threads}.csv")), "h").unwrap();
        let read = |p: &std::path::Path| std::fs::read(p).unwrap();
        bytes.push([
            read(&pa.results),
            read(&pa.summary),
            read(&pb.results),
            read(&pb.summary),
        ]);
    }
    let identical = bytes.windows(2).all(|w| w[0] == w[1]);
    verdict(
        10,
        identical,
        &format!("results and summary CSVs byte-identical across 1, 3 and 8 threads: {identical}"),
    );
}
