//! ManPL for sparse spectral clustering:
//! `min_U ⟨UUᵀ, L⟩ + λ‖UUᵀ‖₁` over the Stiefel manifold.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::linalg::{asymmetry, check_same_shape, l1_norm, smallest_eigenvectors, sym_spectral_norm};
use crate::stiefel::{project_tangent_raw, random_point, retract, Retraction, StiefelPoint, TangentDirection};
use crate::subsolver::{jacobian_raw, solve_subproblem, SubproblemData, SubproblemState, SubsolverOptions};

/// Starting point `U⁰`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Eigenvectors of the `C` smallest eigenvalues.
    #[default]
    Spectral,
    /// Seeded random Stiefel point.
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ManplConfig {
    pub lambda: f64,
    /// Step parameter; `None` means `1/(2‖L‖₂ + 2λn)`.
    pub t: Option<f64>,
    pub gamma: f64,
    pub max_iters: usize,
    /// Stop when `|F(Uᵏ⁺¹) − F(Uᵏ)|` drops below this.
    pub stop_tol: f64,
    /// Stop when `‖Vᵏ/t‖_F` drops below this.
    pub stationarity_tol: f64,
    pub max_backtracks: usize,
    pub retraction: Retraction,
    pub init: Init,
    pub seed: u64,
    /// PPA tolerance of each subproblem.
    pub sub_tol: f64,
    pub subsolver: SubsolverOptions,
    /// Keep every iterate and direction in the trace.
    pub record_iterates: bool,
    pub record_timing: bool,
}

impl Default for ManplConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            t: None,
            gamma: 0.5,
            max_iters: 1000,
            stop_tol: 1e-5,
            stationarity_tol: 1e-9,
            max_backtracks: 50,
            retraction: Retraction::Polar,
            init: Init::Spectral,
            seed: 0,
            sub_tol: 1e-6,
            subsolver: SubsolverOptions::loose(1e-6),
            record_iterates: false,
            record_timing: true,
        }
    }
}

impl ManplConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SscError::InvalidParameter(m));
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if let Some(t) = self.t {
            if !(t > 0.0) {
                return bad(format!("t must be > 0, got {t}"));
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.stop_tol >= 0.0) || !(self.sub_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        self.subsolver.validate()
    }
}

/// Default step `1/(2‖L‖₂ + 2λn)`.
pub fn default_step(l: &DMatrix<f64>, lambda: f64) -> f64 {
    1.0 / (2.0 * sym_spectral_norm(l) + 2.0 * lambda * l.nrows() as f64)
}

/// One outer iteration as recorded in a [`RunTrace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective at the start of the iteration.
    pub objective: f64,
    /// `‖Vᵏ/t‖_F`.
    pub stationarity: f64,
    pub v_norm_sq: f64,
    /// Accepted step `α_k = γ^{j_k}`.
    pub step: f64,
    pub backtracks: usize,
    /// Objective after the U update with the weights still at `wᵏ`.
    pub objective_after_u: f64,
    /// `‖wᵏ⁺¹ − wᵏ‖₁` (multiple-kernel runs only).
    pub weight_change: Option<f64>,
    pub weights: Option<Vec<f64>>,
    /// Objective at the end of the iteration.
    pub objective_next: f64,
    pub ppa_iters: usize,
    pub newton_iters: usize,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ObjectiveChange,
    Stationary,
    MaxIterations,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTrace {
    pub t: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub stop_reason: StopReason,
    pub records: Vec<IterationRecord>,
    pub initial_weights: Option<Vec<f64>>,
    /// `U⁰, U¹, …` when recording was requested.
    #[serde(skip)]
    pub iterates: Vec<DMatrix<f64>>,
    /// `V⁰, V¹, …` when recording was requested.
    #[serde(skip)]
    pub directions: Vec<DMatrix<f64>>,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        self.stop_reason != StopReason::MaxIterations
    }

    /// `‖Vᵏ/t‖_F` of the last iteration.
    pub fn final_stationarity(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.stationarity)
    }

    pub fn objectives(&self) -> Vec<f64> {
        let mut out = vec![self.initial_objective];
        out.extend(self.records.iter().map(|r| r.objective_next));
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let has_w = self.records.iter().any(|r| r.weights.is_some());
        let mut header = String::from(
            "iteration,objective,stationarity,step,backtracks,objective_after_u,objective_next,ppa_iters,newton_iters,wall_ms",
        );
        if has_w {
            header.push_str(",weight_change,weights");
        }
        writeln!(w, "{header}")?;
        for r in &self.records {
            let wall = r.wall_ms.map(|x| x.to_string()).unwrap_or_default();
            write!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.iteration,
                r.objective,
                r.stationarity,
                r.step,
                r.backtracks,
                r.objective_after_u,
                r.objective_next,
                r.ppa_iters,
                r.newton_iters,
                wall
            )?;
            if has_w {
                let ws: Vec<String> = r.weights.iter().flatten().map(|x| x.to_string()).collect();
                write!(w, ",{},{}", r.weight_change.unwrap_or(0.0), ws.join(";"))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn check_laplacian(l: &DMatrix<f64>) -> Result<()> {
    if l.nrows() != l.ncols() {
        return Err(SscError::dim("L", "square", format!("{:?}", l.shape())));
    }
    let asym = asymmetry(l);
    if asym > 1e-8 {
        return Err(SscError::InvalidParameter(format!(
            "L is not symmetric (‖L − Lᵀ‖_F = {asym:.3e})"
        )));
    }
    Ok(())
}

/// `F(U) = ⟨UUᵀ, L⟩ + λ‖UUᵀ‖₁`.
pub fn objective_ssc(u: &StiefelPoint, l: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    check_laplacian(l)?;
    if l.nrows() != u.n() {
        return Err(SscError::dim("objective_ssc", u.n(), l.nrows()));
    }
    Ok(objective_raw(u.matrix(), l, lambda))
}

pub(crate) fn objective_raw(u: &DMatrix<f64>, l: &DMatrix<f64>, lambda: f64) -> f64 {
    let uut = u * u.transpose();
    uut.dot(l) + lambda * l1_norm(&uut)
}

/// `∇f(U) = 2LU`.
pub fn grad_f(u: &StiefelPoint, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if l.shape() != (u.n(), u.n()) {
        return Err(SscError::dim("grad_f", format!("{0}x{0}", u.n()), format!("{:?}", l.shape())));
    }
    Ok(l * u.matrix() * 2.0)
}

/// `‖V/t‖_F`.
pub fn stationarity_measure(v: &DMatrix<f64>, t: f64) -> f64 {
    v.norm() / t
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub backtracks: usize,
    pub u_next: StiefelPoint,
    pub objective_next: f64,
}

/// Smallest `j ≥ 0` with `F(Retr_U(γʲV)) ≤ F(U) − γʲ‖V‖²/(2t)`, up to a
/// few ulps of `F(U)`.
#[allow(clippy::too_many_arguments)]
pub fn line_search(
    u: &StiefelPoint,
    v: &TangentDirection,
    l: &DMatrix<f64>,
    lambda: f64,
    t: f64,
    gamma: f64,
    max_backtracks: usize,
    retraction: Retraction,
) -> Result<LineSearchOutcome> {
    check_same_shape("line_search", u.matrix(), v.matrix())?;
    check_laplacian(l)?;
    let f0 = objective_raw(u.matrix(), l, lambda);
    line_search_from(u, f0, v, l, lambda, t, gamma, max_backtracks, retraction)
}

#[allow(clippy::too_many_arguments)]
fn line_search_from(
    u: &StiefelPoint,
    f0: f64,
    v: &TangentDirection,
    l: &DMatrix<f64>,
    lambda: f64,
    t: f64,
    gamma: f64,
    max_backtracks: usize,
    retraction: Retraction,
) -> Result<LineSearchOutcome> {
    let vv = v.matrix().norm_squared();
    // Near convergence the decrease is below what `F` can resolve.
    let rounding = 8.0 * f64::EPSILON * (1.0 + f0.abs());
    let mut alpha = 1.0;
    let mut shortfall = f64::INFINITY;
    for j in 0..=max_backtracks {
        let u_next = retract(u, &v.scaled(alpha), retraction)?;
        let f = objective_raw(u_next.matrix(), l, lambda);
        let bound = f0 - alpha / (2.0 * t) * vv;
        if f <= bound + rounding {
            return Ok(LineSearchOutcome {
                alpha,
                backtracks: j,
                u_next,
                objective_next: f,
            });
        }
        shortfall = f - bound;
        alpha *= gamma;
    }
    Err(SscError::LineSearch {
        backtracks: max_backtracks,
        shortfall,
    })
}

/// Initial point for a run on `l`.
pub(crate) fn initial_point(l: &DMatrix<f64>, c: usize, init: Init, seed: u64) -> Result<StiefelPoint> {
    match init {
        Init::Spectral => StiefelPoint::new(crate::linalg::orthonormalize(smallest_eigenvectors(l, c).1)),
        Init::Random => random_point(l.nrows(), c, seed),
    }
}

/// Result of one proximal linear step on a fixed Laplacian.
pub(crate) struct Step {
    pub v: TangentDirection,
    pub stationarity: f64,
    pub search: Option<LineSearchOutcome>,
    pub ppa_iters: usize,
    pub newton_iters: usize,
    pub warm: SubproblemState,
}

/// Shared U-step of ManPL and AManPL: solve the subproblem at `u` for the
/// Laplacian `l`, then line-search. `search` is `None` when the direction
/// is below the stationarity tolerance.
pub(crate) fn proximal_step(
    u: &StiefelPoint,
    f0: f64,
    l: &DMatrix<f64>,
    t: f64,
    cfg: &ManplConfig,
    warm: Option<&SubproblemState>,
) -> Result<Step> {
    let grad = l * u.matrix() * 2.0;
    let data = SubproblemData::new(u.clone(), grad, cfg.lambda, t)?;
    let sol = solve_subproblem(&data, warm, cfg.sub_tol, &cfg.subsolver)?;
    let stationarity = stationarity_measure(sol.v.matrix(), t);
    let search = if stationarity <= cfg.stationarity_tol {
        None
    } else {
        Some(line_search_from(
            u,
            f0,
            &sol.v,
            l,
            cfg.lambda,
            t,
            cfg.gamma,
            cfg.max_backtracks,
            cfg.retraction,
        )?)
    };
    Ok(Step {
        v: sol.v,
        stationarity,
        search,
        ppa_iters: sol.ppa_iters,
        newton_iters: sol.newton_iters,
        warm: sol.state,
    })
}

/// Carries the subproblem multipliers to the next base point.
pub(crate) fn transport_warm_start(mut state: SubproblemState, u_next: &StiefelPoint) -> SubproblemState {
    let u = u_next.matrix();
    state.v = project_tangent_raw(u, &state.v);
    state.y = jacobian_raw(u, &state.v);
    state.gamma1.fill(0.0);
    state
}

/// Algorithm 1. The returned point is the last iterate.
pub fn manpl_run(l: &DMatrix<f64>, c: usize, config: &ManplConfig) -> Result<(StiefelPoint, RunTrace)> {
    config.validate()?;
    check_laplacian(l)?;
    if c == 0 || c > l.nrows() {
        return Err(SscError::InvalidParameter(format!(
            "cluster count must satisfy 1 <= C <= n (C={c}, n={})",
            l.nrows()
        )));
    }
    let u0 = initial_point(l, c, config.init, config.seed)?;
    manpl_from(l, u0, config)
}

/// Algorithm 1 from a given starting point.
pub fn manpl_from(l: &DMatrix<f64>, u0: StiefelPoint, config: &ManplConfig) -> Result<(StiefelPoint, RunTrace)> {
    config.validate()?;
    check_laplacian(l)?;
    if l.nrows() != u0.n() {
        return Err(SscError::dim("manpl start", l.nrows(), u0.n()));
    }
    let t = config.t.unwrap_or_else(|| default_step(l, config.lambda));
    let mut u = u0;
    let mut f = objective_raw(u.matrix(), l, config.lambda);
    let mut trace = RunTrace {
        t,
        initial_objective: f,
        final_objective: f,
        stop_reason: StopReason::MaxIterations,
        records: Vec::new(),
        initial_weights: None,
        iterates: Vec::new(),
        directions: Vec::new(),
    };
    if config.record_iterates {
        trace.iterates.push(u.matrix().clone());
    }
    let mut warm: Option<SubproblemState> = None;

    for k in 0..config.max_iters {
        let clock = Instant::now();
        let step = proximal_step(&u, f, l, t, config, warm.as_ref()).map_err(|e| e.at("manpl", k))?;
        let (alpha, backtracks, f_next) = match &step.search {
            Some(s) => (s.alpha, s.backtracks, s.objective_next),
            None => (0.0, 0, f),
        };
        if config.record_iterates {
            trace.directions.push(step.v.matrix().clone());
        }
        trace.records.push(IterationRecord {
            iteration: k,
            objective: f,
            stationarity: step.stationarity,
            v_norm_sq: step.v.matrix().norm_squared(),
            step: alpha,
            backtracks,
            objective_after_u: f_next,
            weight_change: None,
            weights: None,
            objective_next: f_next,
            ppa_iters: step.ppa_iters,
            newton_iters: step.newton_iters,
            wall_ms: config.record_timing.then(|| clock.elapsed().as_secs_f64() * 1e3),
        });
        let Some(search) = step.search else {
            trace.stop_reason = StopReason::Stationary;
            if config.record_iterates {
                trace.iterates.push(u.matrix().clone());
            }
            break;
        };
        u = search.u_next;
        if config.record_iterates {
            trace.iterates.push(u.matrix().clone());
        }
        let change = (f - f_next).abs();
        f = f_next;
        warm = Some(transport_warm_start(step.warm, &u));
        if change < config.stop_tol {
            trace.stop_reason = StopReason::ObjectiveChange;
            break;
        }
    }
    trace.final_objective = f;
    Ok((u, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn path_laplacian(n: usize) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            s[(i, i + 1)] = 1.0;
            s[(i + 1, i)] = 1.0;
        }
        let sim = crate::graph::Similarity::from_matrix(s).unwrap();
        crate::graph::normalized_laplacian(&sim).unwrap().matrix().clone()
    }

    #[test]
    fn objective_examples() {
        let u = StiefelPoint::new(dmatrix![1.0; 0.0]).unwrap();
        let l = dmatrix![1.0, -1.0; -1.0, 1.0];
        assert_eq!(objective_ssc(&u, &l, 1.0).unwrap(), 2.0);
        let u = random_point(6, 2, 1).unwrap();
        let f = objective_ssc(&u, &DMatrix::identity(6, 6), 0.0).unwrap();
        assert!((f - 2.0).abs() < 1e-12);
        assert!(objective_ssc(&u, &dmatrix![0.0, 1.0; 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn gradient_examples() {
        let u = random_point(4, 2, 3).unwrap();
        assert_eq!(grad_f(&u, &DMatrix::zeros(4, 4)).unwrap(), DMatrix::zeros(4, 2));
        assert_eq!(grad_f(&u, &DMatrix::identity(4, 4)).unwrap(), u.matrix() * 2.0);
    }

    #[test]
    fn stationarity_scales() {
        let v = dmatrix![3.0; 4.0];
        assert_eq!(stationarity_measure(&v, 0.5), 10.0);
        assert_eq!(stationarity_measure(&(v * -2.0), 0.5), 20.0);
        assert_eq!(stationarity_measure(&DMatrix::zeros(2, 1), 1.0), 0.0);
    }

    #[test]
    fn spectral_start_without_penalty_is_stationary() {
        let l = path_laplacian(8);
        let cfg = ManplConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let (_, trace) = manpl_run(&l, 2, &cfg).unwrap();
        assert!(trace.iterations() <= 2);
    }

    #[test]
    fn random_start_reaches_eigen_sum() {
        let l = path_laplacian(10);
        let cfg = ManplConfig {
            lambda: 0.0,
            init: Init::Random,
            seed: 4,
            stop_tol: 1e-13,
            ..Default::default()
        };
        let (u, trace) = manpl_run(&l, 2, &cfg).unwrap();
        let (vals, _) = smallest_eigenvectors(&l, 2);
        let f = objective_ssc(&u, &l, 0.0).unwrap();
        assert!((f - vals.sum()).abs() < 1e-6, "{f} vs {}", vals.sum());
        for w in trace.objectives().windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn line_search_takes_full_step_when_possible() {
        let l = path_laplacian(6);
        let u = random_point(6, 2, 2).unwrap();
        let g = grad_f(&u, &l).unwrap();
        let t = default_step(&l, 0.0);
        let v = TangentDirection::new(&u, project_tangent_raw(u.matrix(), &g) * -t).unwrap();
        let out = line_search(&u, &v, &l, 0.0, t, 0.5, 50, Retraction::Polar).unwrap();
        assert_eq!(out.backtracks, 0);
        assert_eq!(out.alpha, 1.0);
    }

    #[test]
    fn line_search_is_minimal() {
        let l = path_laplacian(6);
        let u = random_point(6, 2, 2).unwrap();
        let g = grad_f(&u, &l).unwrap();
        let t = default_step(&l, 0.0);
        let v = TangentDirection::new(&u, project_tangent_raw(u.matrix(), &g) * (-1.9 * t)).unwrap();
        let out = line_search(&u, &v, &l, 0.0, t, 0.5, 50, Retraction::Polar).unwrap();
        assert!(out.backtracks > 0);
        let prev = out.alpha / 0.5;
        let u_prev = retract(&u, &v.scaled(prev), Retraction::Polar).unwrap();
        let f0 = objective_raw(u.matrix(), &l, 0.0);
        let f_prev = objective_raw(u_prev.matrix(), &l, 0.0);
        assert!(f_prev > f0 - prev / (2.0 * t) * v.matrix().norm_squared());
    }
}
