//! Alternating ManPL for multiple-kernel SSC:
//! `min_{U, w} ⟨UUᵀ, Σ w_ℓ L⁽ℓ⁾⟩ + λ‖UUᵀ‖₁ + ρ Σ w_ℓ log w_ℓ`.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::graph::KernelFamily;
use crate::linalg::l1_norm;
use crate::manpl::{
    default_step, initial_point, objective_raw, proximal_step, transport_warm_start, Init, IterationRecord,
    ManplConfig, RunTrace, StopReason,
};
use crate::prox::{entropy_simplex_argmin, SimplexWeights};
use crate::stiefel::{Retraction, StiefelPoint};
use crate::subsolver::{SubproblemState, SubsolverOptions};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AmanplConfig {
    pub lambda: f64,
    pub rho: f64,
    /// `None` means `1/(2‖L̄‖₂ + 2λn)` with `L̄` built from `w⁰`.
    pub t: Option<f64>,
    pub gamma: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub stationarity_tol: f64,
    pub max_backtracks: usize,
    pub retraction: Retraction,
    pub init: Init,
    pub seed: u64,
    pub sub_tol: f64,
    pub subsolver: SubsolverOptions,
    pub record_iterates: bool,
    pub record_timing: bool,
}

impl Default for AmanplConfig {
    fn default() -> Self {
        let m = ManplConfig::default();
        Self {
            lambda: 5e-3,
            rho: 1.0,
            t: None,
            gamma: m.gamma,
            max_iters: m.max_iters,
            stop_tol: m.stop_tol,
            stationarity_tol: m.stationarity_tol,
            max_backtracks: m.max_backtracks,
            retraction: m.retraction,
            init: m.init,
            seed: m.seed,
            sub_tol: m.sub_tol,
            subsolver: m.subsolver,
            record_iterates: false,
            record_timing: true,
        }
    }
}

impl AmanplConfig {
    /// The U-step settings as a single-kernel configuration.
    pub fn u_step(&self) -> ManplConfig {
        ManplConfig {
            lambda: self.lambda,
            t: self.t,
            gamma: self.gamma,
            max_iters: self.max_iters,
            stop_tol: self.stop_tol,
            stationarity_tol: self.stationarity_tol,
            max_backtracks: self.max_backtracks,
            retraction: self.retraction,
            init: self.init,
            seed: self.seed,
            sub_tol: self.sub_tol,
            subsolver: self.subsolver.clone(),
            record_iterates: self.record_iterates,
            record_timing: self.record_timing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(SscError::InvalidParameter(format!("rho must be > 0, got {}", self.rho)));
        }
        self.u_step().validate()
    }
}

fn check_weights(family: &KernelFamily, w: &SimplexWeights) -> Result<()> {
    if w.len() != family.len() {
        return Err(SscError::dim("kernel weights", family.len(), w.len()));
    }
    Ok(())
}

/// `L̄ = Σ w_ℓ L⁽ℓ⁾`.
pub fn weighted_laplacian(family: &KernelFamily, w: &SimplexWeights) -> Result<DMatrix<f64>> {
    check_weights(family, w)?;
    let n = family.n();
    let mut out = DMatrix::zeros(n, n);
    for (l, &wl) in family.laplacians().iter().zip(w.as_slice()) {
        out += l.matrix() * wl;
    }
    Ok(out)
}

/// `c_ℓ = ⟨UUᵀ, L⁽ℓ⁾⟩`.
pub fn kernel_costs(u: &StiefelPoint, family: &KernelFamily) -> Result<Vec<f64>> {
    if u.n() != family.n() {
        return Err(SscError::dim("kernel costs", family.n(), u.n()));
    }
    let uut = u.matrix() * u.matrix().transpose();
    Ok(costs_of(&uut, family))
}

pub(crate) fn costs_of(p: &DMatrix<f64>, family: &KernelFamily) -> Vec<f64> {
    family.laplacians().par_iter().map(|l| p.dot(l.matrix())).collect()
}

/// `F̄(U, w)`.
pub fn objective_mkssc(u: &StiefelPoint, w: &SimplexWeights, family: &KernelFamily, lambda: f64, rho: f64) -> Result<f64> {
    check_weights(family, w)?;
    let c = kernel_costs(u, family)?;
    let uut = u.matrix() * u.matrix().transpose();
    Ok(mk_objective(&c, w, lambda * l1_norm(&uut), rho))
}

fn mk_objective(costs: &[f64], w: &SimplexWeights, penalty: f64, rho: f64) -> f64 {
    costs.iter().zip(w.as_slice()).map(|(c, w)| c * w).sum::<f64>() + penalty + rho * w.neg_entropy()
}

/// Closed-form weight step: `w ∝ exp(−c/ρ)` with `c_ℓ = ⟨UUᵀ, L⁽ℓ⁾⟩`.
pub fn update_w(u: &StiefelPoint, family: &KernelFamily, rho: f64) -> Result<SimplexWeights> {
    entropy_simplex_argmin(&kernel_costs(u, family)?, rho)
}

/// Algorithm 2. With a single kernel it performs exactly the iterations of
/// [`crate::manpl::manpl_run`].
pub fn amanpl_run(family: &KernelFamily, c: usize, config: &AmanplConfig) -> Result<(StiefelPoint, SimplexWeights, RunTrace)> {
    config.validate()?;
    if family.is_empty() {
        return Err(SscError::EmptyInput("kernel family".into()));
    }
    let n = family.n();
    if c == 0 || c > n {
        return Err(SscError::InvalidParameter(format!(
            "cluster count must satisfy 1 <= C <= n (C={c}, n={n})"
        )));
    }
    let uniform = SimplexWeights::uniform(family.len());
    let u0 = initial_point(&weighted_laplacian(family, &uniform)?, c, config.init, config.seed)?;
    amanpl_from(family, u0, config)
}

/// Algorithm 2 from a given `U⁰`; `w⁰` is the weight step at `U⁰`.
pub fn amanpl_from(family: &KernelFamily, u0: StiefelPoint, config: &AmanplConfig) -> Result<(StiefelPoint, SimplexWeights, RunTrace)> {
    config.validate()?;
    if u0.n() != family.n() {
        return Err(SscError::dim("amanpl start", family.n(), u0.n()));
    }
    let step_cfg = config.u_step();
    let (lambda, rho) = (config.lambda, config.rho);

    let mut u = u0;
    let mut w = update_w(&u, family, rho).map_err(|e| e.at("w-step", 0))?;
    let mut lbar = weighted_laplacian(family, &w)?;
    let t = config.t.unwrap_or_else(|| default_step(&lbar, lambda));
    let entropy = |w: &SimplexWeights| rho * w.neg_entropy();
    let mut f_u = objective_raw(u.matrix(), &lbar, lambda);
    let mut fbar = f_u + entropy(&w);

    let mut trace = RunTrace {
        t,
        initial_objective: fbar,
        final_objective: fbar,
        stop_reason: StopReason::MaxIterations,
        records: Vec::new(),
        initial_weights: Some(w.as_slice().to_vec()),
        iterates: Vec::new(),
        directions: Vec::new(),
    };
    if config.record_iterates {
        trace.iterates.push(u.matrix().clone());
    }
    let mut warm: Option<SubproblemState> = None;

    for k in 0..config.max_iters {
        let clock = Instant::now();
        let step = proximal_step(&u, f_u, &lbar, t, &step_cfg, warm.as_ref()).map_err(|e| e.at("u-step", k))?;
        if config.record_iterates {
            trace.directions.push(step.v.matrix().clone());
        }
        let mut record = IterationRecord {
            iteration: k,
            objective: fbar,
            stationarity: step.stationarity,
            v_norm_sq: step.v.matrix().norm_squared(),
            step: 0.0,
            backtracks: 0,
            objective_after_u: fbar,
            weight_change: Some(0.0),
            weights: Some(w.as_slice().to_vec()),
            objective_next: fbar,
            ppa_iters: step.ppa_iters,
            newton_iters: step.newton_iters,
            wall_ms: None,
        };
        let Some(search) = step.search else {
            record.wall_ms = config.record_timing.then(|| clock.elapsed().as_secs_f64() * 1e3);
            trace.records.push(record);
            trace.stop_reason = StopReason::Stationary;
            if config.record_iterates {
                trace.iterates.push(u.matrix().clone());
            }
            break;
        };
        u = search.u_next;
        let after_u = search.objective_next + entropy(&w);

        let w_next = update_w(&u, family, rho).map_err(|e| e.at("w-step", k))?;
        let change = w_next.l1_distance(&w);
        w = w_next;
        lbar = weighted_laplacian(family, &w)?;
        f_u = objective_raw(u.matrix(), &lbar, lambda);
        let fbar_next = f_u + entropy(&w);

        record.step = search.alpha;
        record.backtracks = search.backtracks;
        record.objective_after_u = after_u;
        record.weight_change = Some(change);
        record.weights = Some(w.as_slice().to_vec());
        record.objective_next = fbar_next;
        record.wall_ms = config.record_timing.then(|| clock.elapsed().as_secs_f64() * 1e3);
        trace.records.push(record);
        if config.record_iterates {
            trace.iterates.push(u.matrix().clone());
        }

        let delta = (fbar - fbar_next).abs();
        fbar = fbar_next;
        warm = Some(transport_warm_start(step.warm, &u));
        if delta < config.stop_tol {
            trace.stop_reason = StopReason::ObjectiveChange;
            break;
        }
    }
    trace.final_objective = fbar;
    Ok((u, w, trace))
}
