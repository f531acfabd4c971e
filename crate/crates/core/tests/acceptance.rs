//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{eigenvalues, gaussian, l1, random_laplacian, rng, slope};
use nalgebra::DMatrix;
use rand::Rng;
use ssc_core::amanpl::{amanpl_run, objective_mkssc, update_w, AmanplConfig};
use ssc_core::baselines::nadmm_run;
use ssc_core::baselines::AdmmOptions;
use ssc_core::evalsynth::synth1;
use ssc_core::experiment::{run_experiment, single_laplacian, DataSource, ExperimentConfig, KernelGrid, Method};
use ssc_core::graph::{kernel_family, DEFAULT_DELTAS, DEFAULT_NEIGHBORS};
use ssc_core::manpl::{grad_f, manpl_run, objective_ssc, Init, ManplConfig};
use ssc_core::prox::{entropy_simplex_argmin, g_sigma, SimplexWeights};
use ssc_core::stiefel::{project_tangent, random_point, retract, Retraction, StiefelPoint, TangentDirection};
use ssc_core::subsolver::{b_prime, gamma1_closed_form, psi_grad, psi_value, solve_subproblem, ssn_solve, theta, SubproblemData, SubproblemState, SubsolverOptions};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Instance `i` of the small subproblem set: `n ∈ {3, 4}`, `C = 1`,
/// `λ ∈ {0, 0.1, 1}`.
fn small_instance(i: u64) -> SubproblemData {
    let n = 3 + (i % 2) as usize;
    let lambda = [0.0, 0.1, 1.0][(i % 3) as usize];
    let u = random_point(n, 1, 1000 + i).unwrap();
    let l = random_laplacian(n, 2000 + i);
    let g = grad_f(&u, &l).unwrap();
    let t = rng(3000 + i).random_range(0.2..1.0);
    SubproblemData::new(u, g, lambda, t).unwrap()
}

/// Orthonormal basis of `{v : uᵀv = 0}` for a unit vector `u`.
fn complement_basis(u: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = u.nrows();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut vecs = vec![u.column(0).iter().copied().collect::<Vec<f64>>()];
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        for b in &vecs {
            let d: f64 = e.iter().zip(b).map(|(x, y)| x * y).sum();
            e.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 && basis.len() < n - 1 {
            e.iter_mut().for_each(|x| *x /= norm);
            vecs.push(e.clone());
            basis.push(e);
        }
    }
    basis
}

/// `⟨z₁, v⟩ + ‖v‖²/(2t) + λ Σ |uᵢuⱼ + uᵢvⱼ + vᵢuⱼ|` for `C = 1`.
fn sub_objective(u: &[f64], z1: &[f64], v: &[f64], lambda: f64, t: f64) -> f64 {
    let n = u.len();
    let mut lin = 0.0;
    let mut sq = 0.0;
    for i in 0..n {
        lin += z1[i] * v[i];
        sq += v[i] * v[i];
    }
    let mut h = 0.0;
    if lambda > 0.0 {
        for i in 0..n {
            for j in 0..n {
                h += (u[i] * u[j] + u[i] * v[j] + v[i] * u[j]).abs();
            }
        }
    }
    lin + sq / (2.0 * t) + lambda * h
}

/// Grid minimum over the tangent space within radius `r`: a coarse grid of
/// 201 points per axis, then windows of ±3 coarse steps refined tenfold.
/// Returns the minimum at step 1e-3 and at step 1e-5.
fn grid_minimum(data: &SubproblemData, r: f64) -> (f64, f64) {
    let u: Vec<f64> = data.u().matrix().iter().copied().collect();
    let z1: Vec<f64> = data.z1().iter().copied().collect();
    let basis = complement_basis(data.u().matrix());
    let d = basis.len();
    let n = u.len();
    let eval = |alpha: &[f64]| {
        let mut v = vec![0.0; n];
        for (a, b) in alpha.iter().zip(&basis) {
            v.iter_mut().zip(b).for_each(|(x, y)| *x += a * y);
        }
        sub_objective(&u, &z1, &v, data.lambda(), data.t())
    };
    let mut center = vec![0.0; d];
    let mut half = r;
    let mut step = r / 100.0;
    let mut best = f64::INFINITY;
    let mut at_milli = f64::INFINITY;
    loop {
        let k = (half / step).round() as i64;
        let mut idx = vec![-k; d];
        let mut best_alpha = center.clone();
        loop {
            let alpha: Vec<f64> = idx.iter().zip(&center).map(|(&i, c)| c + i as f64 * step).collect();
            if alpha.iter().map(|a| a * a).sum::<f64>() <= r * r {
                let f = eval(&alpha);
                if f < best {
                    best = f;
                    best_alpha = alpha;
                }
            }
            let mut p = 0;
            while p < d {
                idx[p] += 1;
                if idx[p] <= k {
                    break;
                }
                idx[p] = -k;
                p += 1;
            }
            if p == d {
                break;
            }
        }
        center = best_alpha;
        if step <= 1e-3 && at_milli.is_infinite() {
            at_milli = best;
        }
        if step <= 1e-5 {
            return (at_milli, best);
        }
        half = 3.0 * step;
        step = if step > 1e-3 { (step / 10.0).max(1e-3) } else { step / 10.0 };
    }
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_coarse: f64 = 0.0;
    let mut above = f64::NEG_INFINITY;
    for i in 0..50 {
        let data = small_instance(i);
        let sol = solve_subproblem(&data, None, 1e-8, &SubsolverOptions::default()).unwrap();
        let u: Vec<f64> = data.u().matrix().iter().copied().collect();
        let z1: Vec<f64> = data.z1().iter().copied().collect();
        let v: Vec<f64> = sol.v.matrix().iter().copied().collect();
        let solver = sub_objective(&u, &z1, &v, data.lambda(), data.t());
        let radius = 5.0 * data.t() * data.z1().norm();
        let (coarse, grid) = grid_minimum(&data, radius);
        worst = worst.max((solver - grid).abs());
        worst_coarse = worst_coarse.max((solver - coarse).abs());
        above = above.max(solver - coarse);
        if std::env::var("ACCEPTANCE_VERBOSE").is_ok() {
            println!("  instance {i}: n={} lambda={} t={:.3} solver {solver:.8} grid(1e-3) {coarse:.8} grid(1e-5) {grid:.8}", data.u().n(), data.lambda(), data.t());
        }
    }
    outcome(
        worst <= 1e-3 && above <= 0.0,
        format!("max |solver - grid| = {worst:.2e} at step 1e-5, {worst_coarse:.2e} at step 1e-3 (tol 1e-3); solver - grid(1e-3) <= {above:.1e}"),
    )
}

/// `(1/2t)‖V + tZ₁‖² + λ‖Z₂ + JV‖₁ + (‖V − V̂‖² + ‖JV − Ŷ‖²)/(2β)`.
fn ppa_primal(data: &SubproblemData, center: &SubproblemState, v: &DMatrix<f64>) -> f64 {
    let u = data.u().matrix();
    let jv = u * v.transpose() + v * u.transpose();
    let t = data.t();
    (v + data.z1() * t).norm_squared() / (2.0 * t)
        + data.lambda() * l1(&(data.z2() + &jv))
        + ((v - &center.v).norm_squared() + (&jv - &center.y).norm_squared()) / (2.0 * center.beta)
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut lowest: f64 = f64::INFINITY;
    for i in 0..50 {
        let data = small_instance(i);
        for beta in [1.0, SubsolverOptions::default().beta] {
            let opts = SubsolverOptions { beta, ..SubsolverOptions::default() };
            let center = SubproblemState::initial(&data, beta);
            let out = match ssn_solve(&data, &center, 1e-9, &opts) {
                Ok(o) => o,
                Err(e) => return outcome(false, format!("instance {i}, beta {beta}: {e}")),
            };
            let g1 = gamma1_closed_form(&data, &b_prime(&data, &center, &out.gamma2)).unwrap();
            let dual = theta(&data, &center, &g1, &out.gamma2).unwrap();
            let gap = ppa_primal(&data, &center, &out.v) - dual;
            worst = worst.max(gap);
            lowest = lowest.min(gap);
        }
    }
    outcome(worst < 1e-6 && lowest > -1e-6, format!("primal - dual in [{lowest:.2e}, {worst:.2e}] (tol 1e-6)"))
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(1e-12)
}

fn fd_matrix(x: &DMatrix<f64>, h: f64, f: impl Fn(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        let mut p = x.clone();
        let mut m = x.clone();
        p[(i, j)] += h;
        m[(i, j)] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    })
}

fn criterion_3() -> Outcome {
    let mut psi_worst: f64 = 0.0;
    for i in 0..20u64 {
        let u = random_point(4, 2, 4000 + i).unwrap();
        let l = random_laplacian(4, 4100 + i);
        let lambda = [0.05, 0.2, 1.0][(i % 3) as usize];
        let data = SubproblemData::new(u.clone(), grad_f(&u, &l).unwrap(), lambda, 0.5).unwrap();
        let mut center = SubproblemState::initial(&data, 1.0);
        let mut r = rng(4200 + i);
        center.v = project_tangent(&u, &gaussian(&mut r, 4, 2)).unwrap().into_matrix() * 0.1;
        center.y = gaussian(&mut r, 4, 4) * 0.1;
        let g = gaussian(&mut r, 4, 4);
        let gamma2 = (&g + g.transpose()) * 0.5;
        let analytic = psi_grad(&data, &center, &gamma2).unwrap();
        let numeric = fd_matrix(&gamma2, 1e-6, |x| psi_value(&data, &center, x).unwrap());
        psi_worst = psi_worst.max(rel_err(&analytic, &numeric));
    }
    let mut f_worst: f64 = 0.0;
    let mut g_worst: f64 = 0.0;
    for i in 0..20u64 {
        let l = random_laplacian(6, 4300 + i);
        let mut r = rng(4400 + i);
        let u = random_point(6, 2, 4500 + i).unwrap();
        let analytic = grad_f(&u, &l).unwrap();
        // Euclidean gradient of Tr(UᵀLU), differenced off the manifold.
        let numeric = fd_matrix(u.matrix(), 1e-6, |x| (x.transpose() * &l * x).trace());
        f_worst = f_worst.max(rel_err(&analytic, &numeric));
        let p = gaussian(&mut r, 5, 5) * 0.05;
        let (lambda, sigma) = (0.3, 0.1);
        let (_, grad) = g_sigma(&p, lambda, sigma).unwrap();
        let numeric = fd_matrix(&p, 1e-7, |x| g_sigma(x, lambda, sigma).unwrap().0);
        g_worst = g_worst.max(rel_err(&grad, &numeric));
    }
    let pass = psi_worst < 1e-5 && f_worst < 1e-6 && g_worst < 1e-6;
    outcome(pass, format!("grad Psi {psi_worst:.1e} (tol 1e-5), grad f {f_worst:.1e}, g_sigma {g_worst:.1e} (tol 1e-6)"))
}

/// Rounding slack for re-evaluating objectives outside the optimizer.
fn slack(f: f64) -> f64 {
    1e-12 * (1.0 + f.abs())
}

fn criterion_4() -> Outcome {
    let x = synth1(60, 250, 3, 0.3, 7).unwrap();
    let l = single_laplacian(&x, &KernelGrid::default()).unwrap();
    let cfg = ManplConfig {
        init: Init::Random,
        seed: 4,
        record_iterates: true,
        record_timing: false,
        ..ManplConfig::default()
    };
    let (_, trace) = manpl_run(&l, 3, &cfg).unwrap();
    let t = trace.t;
    let mut manpl_bad = 0;
    let mut retr_err: f64 = 0.0;
    for (k, rec) in trace.records.iter().enumerate() {
        let u0 = StiefelPoint::new(trace.iterates[k].clone()).unwrap();
        let u1 = StiefelPoint::new(trace.iterates[k + 1].clone()).unwrap();
        let v = &trace.directions[k];
        let alpha = rec.step;
        let moved = retract(&u0, &TangentDirection::new(&u0, v * alpha).unwrap(), cfg.retraction).unwrap();
        retr_err = retr_err.max((moved.matrix() - u1.matrix()).norm());
        let f0 = objective_ssc(&u0, &l, cfg.lambda).unwrap();
        let f1 = objective_ssc(&u1, &l, cfg.lambda).unwrap();
        if f1 - f0 > -alpha / (2.0 * t) * v.norm_squared() + slack(f0) {
            manpl_bad += 1;
        }
    }

    let fam = kernel_family(&x, &DEFAULT_DELTAS, &DEFAULT_NEIGHBORS).unwrap();
    let acfg = AmanplConfig {
        init: Init::Random,
        seed: 4,
        record_iterates: true,
        record_timing: false,
        ..AmanplConfig::default()
    };
    let (_, _, atrace) = amanpl_run(&fam, 3, &acfg).unwrap();
    let mut amanpl_bad = 0;
    let mut w_err: f64 = 0.0;
    let mut w = SimplexWeights::new(atrace.initial_weights.clone().unwrap()).unwrap();
    for (k, rec) in atrace.records.iter().enumerate() {
        let u0 = StiefelPoint::new(atrace.iterates[k].clone()).unwrap();
        let u1 = StiefelPoint::new(atrace.iterates[k + 1].clone()).unwrap();
        let w1 = SimplexWeights::new(rec.weights.clone().unwrap()).unwrap();
        let oracle_w = update_w(&u1, &fam, acfg.rho).unwrap();
        w_err = w_err.max(oracle_w.l1_distance(&w1));
        let v = &atrace.directions[k];
        let f0 = objective_mkssc(&u0, &w, &fam, acfg.lambda, acfg.rho).unwrap();
        let f1 = objective_mkssc(&u1, &w1, &fam, acfg.lambda, acfg.rho).unwrap();
        let dw = w1.l1_distance(&w);
        let bound = -(rec.step / (2.0 * atrace.t) * v.norm_squared() + acfg.rho / 2.0 * dw * dw);
        if f1 - f0 > bound + slack(f0) {
            amanpl_bad += 1;
        }
        w = w1;
    }
    let pass = manpl_bad == 0 && amanpl_bad == 0 && retr_err < 1e-10 && w_err < 1e-12;
    outcome(
        pass,
        format!(
            "ManPL {}/{} iterations violate, AManPL {}/{} violate; iterate replay error {retr_err:.1e}, weight replay error {w_err:.1e}",
            manpl_bad,
            trace.iterations(),
            amanpl_bad,
            atrace.iterations()
        ),
    )
}

fn criterion_5() -> Outcome {
    let clock = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..10u64 {
        let n = 12 + 2 * i as usize;
        let c = 2 + (i % 3) as usize;
        let l = random_laplacian(n, 5000 + i);
        let cfg = ManplConfig {
            lambda: 0.0,
            init: Init::Random,
            seed: i,
            stop_tol: 0.0,
            stationarity_tol: 1e-9,
            max_iters: 20_000,
            record_timing: false,
            ..ManplConfig::default()
        };
        let (u, _) = manpl_run(&l, c, &cfg).unwrap();
        let got = (u.matrix().transpose() * &l * u.matrix()).trace();
        let want: f64 = eigenvalues(&l)[..c].iter().sum();
        worst = worst.max((got - want).abs());
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(worst <= 1e-6 && secs < 30.0, format!("max |<UU^T, L> - eigen sum| = {worst:.1e} (tol 1e-6) in {secs:.1}s (limit 30s)"))
}

fn simplex_value(c: &[f64], w: &[f64], rho: f64) -> f64 {
    c.iter().zip(w).map(|(c, w)| c * w + if *w > 0.0 { rho * w * w.ln() } else { 0.0 }).sum()
}

/// Minimum over the simplex grid with step 1e-4.
fn simplex_grid_min(c: &[f64], rho: f64) -> f64 {
    const M: usize = 10_000;
    let xlogx: Vec<f64> = (0..=M)
        .map(|k| {
            let w = k as f64 / M as f64;
            if k == 0 {
                0.0
            } else {
                rho * w * w.ln()
            }
        })
        .collect();
    let step = 1.0 / M as f64;
    let mut best = f64::INFINITY;
    match c.len() {
        2 => {
            for i in 0..=M {
                let f = c[0] * i as f64 * step + c[1] * (M - i) as f64 * step + xlogx[i] + xlogx[M - i];
                best = best.min(f);
            }
        }
        3 => {
            for i in 0..=M {
                let fi = c[0] * i as f64 * step + xlogx[i];
                for j in 0..=(M - i) {
                    let k = M - i - j;
                    let f = fi + c[1] * j as f64 * step + c[2] * k as f64 * step + xlogx[j] + xlogx[k];
                    best = best.min(f);
                }
            }
        }
        _ => unreachable!(),
    }
    best
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut below: f64 = 0.0;
    let mut r = rng(6000);
    for t in [2usize, 3] {
        for rho in [0.2, 1.0] {
            for _ in 0..100 {
                let c: Vec<f64> = (0..t).map(|_| r.random::<f64>()).collect();
                let w = entropy_simplex_argmin(&c, rho).unwrap();
                let exact = simplex_value(&c, w.as_slice(), rho);
                let grid = simplex_grid_min(&c, rho);
                worst = worst.max(exact - grid);
                below = below.max(grid - exact);
            }
        }
    }
    // update_w is the same closed form fed with kernel costs.
    let fam = kernel_family(&synth1(30, 20, 2, 0.3, 1).unwrap(), &[1.0, 2.0], &[5, 10]).unwrap();
    let u = random_point(30, 2, 6).unwrap();
    let costs: Vec<f64> = fam.laplacians().iter().map(|l| (u.matrix().transpose() * l.matrix() * u.matrix()).trace()).collect();
    let via_update = update_w(&u, &fam, 0.2).unwrap();
    let wiring = via_update.l1_distance(&entropy_simplex_argmin(&costs, 0.2).unwrap());
    let pass = worst <= 1e-6 && below <= 1e-6 && wiring < 1e-12;
    outcome(pass, format!("update_w - grid min in [-{below:.1e}, {worst:.1e}] (tol 1e-6), cost wiring {wiring:.1e}"))
}

fn mean_nmi(data: DataSource, method: Method, seeds: u64) -> (f64, usize) {
    let mut cfg = ExperimentConfig::new(data, method, 5);
    cfg.seeds = (0..seeds).collect();
    let r = run_experiment(&cfg).unwrap();
    (r.nmi_mean.unwrap_or(0.0), r.failures)
}

fn criterion_7() -> Outcome {
    let clock = Instant::now();
    let s1 = DataSource::Synth1 { n: 100, p: 250, c: 5, noise: 0.3 };
    let s2 = DataSource::Synth2 { n: 200, p: 250, c: 5, d: 20, noise: 0.2 };
    let (am, f1) = mean_nmi(s1.clone(), Method::Amanpl, 10);
    let (ac, f2) = mean_nmi(s1.clone(), Method::AmaCadmm, 10);
    let (an, f3) = mean_nmi(s1, Method::AmaNadmm, 10);
    let (am2, f4) = mean_nmi(s2, Method::Amanpl, 10);
    let secs = clock.elapsed().as_secs_f64();
    let pass = am >= 0.97 && ac >= 0.95 && an >= 0.95 && am >= ac && am >= an && am2 >= 0.80 && f1 + f2 + f3 + f4 == 0 && secs < 1200.0;
    outcome(
        pass,
        format!(
            "synth1: AManPL {am:.4}, AMA+CADMM {ac:.4}, AMA+NADMM {an:.4}; synth2: AManPL {am2:.4}; failed seeds {}; {secs:.0}s",
            f1 + f2 + f3 + f4
        ),
    )
}

fn criterion_8() -> Outcome {
    let x = synth1(60, 250, 3, 0.3, 8).unwrap();
    let l = single_laplacian(&x, &KernelGrid::default()).unwrap();
    let r = nadmm_run(&l, 3, 1e-4, 1e-2, &AdmmOptions::default()).unwrap();
    let gap = (&r.state.p - r.state.u.matrix() * r.state.u.matrix().transpose()).norm();
    outcome(gap < 1e-4, format!("exit gap {gap:.2e} after {} iterations (tol 1e-4)", r.trace.iterations()))
}

fn criterion_9() -> Outcome {
    let u = random_point(10, 3, 9000).unwrap();
    let mut r = rng(9001);
    let xi = project_tangent(&u, &gaussian(&mut r, 10, 3)).unwrap();
    let xi = xi.scaled(1.0 / xi.norm());
    let ts: Vec<f64> = (4..=16).map(|k| 10f64.powf(-k as f64 / 4.0)).collect();
    let mut parts = Vec::new();
    let mut pass = true;
    for method in Retraction::ALL {
        let (lx, ly): (Vec<f64>, Vec<f64>) = ts
            .iter()
            .map(|&t| {
                let step = xi.scaled(t);
                let err = (retract(&u, &step, method).unwrap().matrix() - (u.matrix() + step.matrix())).norm();
                (t.ln(), err.ln())
            })
            .unzip();
        let s = slope(&lx, &ly);
        pass &= (s - 2.0).abs() <= 0.1;
        parts.push(format!("{} {s:.3}", method.name()));
    }
    outcome(pass, format!("slopes {} (want 2.0 +- 0.1)", parts.join(", ")))
}

fn criterion_10() -> Outcome {
    let x = synth1(60, 250, 3, 0.3, 10).unwrap();
    let l = single_laplacian(&x, &KernelGrid::default()).unwrap();
    let cfg = ManplConfig {
        init: Init::Random,
        seed: 10,
        max_iters: 500,
        stop_tol: 0.0,
        stationarity_tol: 0.0,
        record_timing: false,
        ..ManplConfig::default()
    };
    let (_, trace) = match manpl_run(&l, 3, &cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let s: Vec<f64> = trace.records.iter().map(|r| r.stationarity * r.stationarity).collect();
    let mut running = f64::INFINITY;
    let best: Vec<f64> = s
        .iter()
        .map(|&v| {
            running = running.min(v);
            running
        })
        .collect();
    let last = best.len().min(500);
    if last < 10 {
        return outcome(false, format!("only {last} iterations"));
    }
    // The run stops once the subproblem returns V = 0; past that point the
    // running minimum stays at zero up to N = 500.
    let c = 10.0 * best[9];
    let bound_ok = best.iter().enumerate().skip(9).all(|(k, &b)| b <= c / (k + 1) as f64);
    if let Some(zero) = best.iter().position(|&b| b == 0.0) {
        let lx: Vec<f64> = (1..=zero).map(|n| (n as f64).ln()).collect();
        let ly: Vec<f64> = best[..zero].iter().map(|b| b.ln()).collect();
        return outcome(
            bound_ok,
            format!(
                "exact stationary point at iteration {zero}; min ||V/t||^2 <= {c:.1e}/N holds for N in [10, 500]; exponent before it {:.2}",
                slope(&lx, &ly)
            ),
        );
    }
    let ns: Vec<usize> = (0..=20).map(|k| (10.0 * (last as f64 / 10.0).powf(k as f64 / 20.0)).round() as usize).collect();
    let lx: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = ns.iter().map(|&n| best[n - 1].ln()).collect();
    let e = slope(&lx, &ly);
    outcome(
        e <= -0.9 && bound_ok,
        format!("fitted exponent {e:.2} over N in [10, {last}] (want <= -0.9); min ||V/t||^2 {:.1e} -> {:.1e}", best[9], best[last - 1]),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("subproblem matches grid search", criterion_1),
        ("duality gap at the dual solution", criterion_2),
        ("gradient checks", criterion_3),
        ("descent audits", criterion_4),
        ("lambda = 0 reduction", criterion_5),
        ("weight update oracle", criterion_6),
        ("synthetic NMI table", criterion_7),
        ("nonconvex ADMM feasibility", criterion_8),
        ("retraction order", criterion_9),
        ("stationarity decay rate", criterion_10),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let clock = Instant::now();
        let out = run();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} {:>2} {name}: {} [{:.1}s]", i + 1, out.detail, clock.elapsed().as_secs_f64());
        failed += usize::from(!out.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
