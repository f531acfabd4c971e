//! Comparison methods: plain spectral clustering, convex ADMM on the Fantope
//! relaxation, nonconvex ADMM on the smoothed problem, and the alternating
//! schemes built on both for several kernels.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::amanpl::{costs_of, weighted_laplacian};
use crate::error::{Result, SscError};
use crate::graph::KernelFamily;
use crate::linalg::{asymmetry, check_square, l1_norm, largest_eigenvectors, orthonormalize, outer_gram, smallest_eigenvectors, sorted_eigh, sym};
use crate::prox::{entropy_simplex_argmin, g_sigma, soft_threshold, SimplexWeights};
use crate::stiefel::StiefelPoint;

fn check_laplacian(context: &'static str, l: &DMatrix<f64>, c: usize) -> Result<()> {
    check_square(context, l, l.nrows())?;
    let n = l.nrows();
    if c == 0 || c > n {
        return Err(SscError::InvalidParameter(format!("{context}: need 1 <= C <= n, got C={c}, n={n}")));
    }
    if asymmetry(l) > 1e-8 * (1.0 + l.norm()) {
        return Err(SscError::InvalidParameter(format!("{context}: matrix is not symmetric")));
    }
    Ok(())
}

/// Spectral clustering embedding: eigenvectors of the `C` smallest
/// eigenvalues of `L`.
pub fn sc_run(l: &DMatrix<f64>, c: usize) -> Result<StiefelPoint> {
    check_laplacian("sc_run", l, c)?;
    let (_, vectors) = smallest_eigenvectors(l, c);
    StiefelPoint::new(orthonormalize(vectors))
}

/// A point of `{P : 0 ⪯ P ⪯ I, Tr P = C}`.
#[derive(Debug, Clone)]
pub struct FantopePoint {
    p: DMatrix<f64>,
    c: usize,
}

impl FantopePoint {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.p
    }

    pub fn c(&self) -> usize {
        self.c
    }

    /// Rounding to an embedding: top `C` eigenvectors of `P`.
    pub fn top_eigenvectors(&self) -> Result<StiefelPoint> {
        StiefelPoint::new(orthonormalize(largest_eigenvectors(&self.p, self.c)))
    }
}

/// Euclidean projection onto the Fantope: eigenvalues `λᵢ` become
/// `clip(λᵢ − θ, 0, 1)` with `θ` fixed by the trace.
pub fn fantope_project(m: &DMatrix<f64>, c: usize) -> Result<FantopePoint> {
    check_square("fantope_project", m, m.nrows())?;
    let n = m.nrows();
    if c > n {
        return Err(SscError::InvalidParameter(format!("Fantope with trace {c} is empty for n={n}")));
    }
    let (values, vectors) = sorted_eigh(&sym(m));
    let target = c as f64;
    let clipped_sum = |theta: f64| values.iter().map(|&v| (v - theta).clamp(0.0, 1.0)).sum::<f64>();

    let mut lo = values[0] - 1.0;
    let mut hi = values[n - 1];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if clipped_sum(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut theta = 0.5 * (lo + hi);
    // The clipped sum is piecewise linear: solve exactly on the final piece.
    let free: Vec<f64> = values.iter().copied().filter(|&v| v - theta > 0.0 && v - theta < 1.0).collect();
    let ones = values.iter().filter(|&&v| v - theta >= 1.0).count();
    if !free.is_empty() {
        theta = (free.iter().sum::<f64>() + ones as f64 - target) / free.len() as f64;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| vectors[(i, j)] * (values[j] - theta).clamp(0.0, 1.0));
    let p = sym(&(scaled * vectors.transpose()));
    Ok(FantopePoint { p, c })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmOptions {
    /// Penalty `μ`, fixed.
    pub mu: f64,
    /// Bound on the primal and dual residuals at exit.
    pub tol: f64,
    /// Objective change required at exit (nonconvex ADMM only).
    pub stop_tol: f64,
    pub max_iters: usize,
    /// Nonconvex ADMM fails when the feasibility gap has not decreased for
    /// this many consecutive steps.
    pub divergence_window: usize,
    /// PSD repair of the nonconvex P-step kicks in below `−psd_tol`.
    pub psd_tol: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            mu: 1.0,
            tol: 1e-5,
            stop_tol: 1e-5,
            max_iters: 10_000,
            divergence_window: 50,
            psd_tol: 1e-8,
        }
    }
}

impl AdmmOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(SscError::InvalidParameter(format!("ADMM penalty mu must be > 0, got {}", self.mu)));
        }
        if !(self.tol > 0.0) || !(self.stop_tol >= 0.0) || !(self.psd_tol >= 0.0) {
            return Err(SscError::InvalidParameter("ADMM tolerances must be positive".into()));
        }
        if self.max_iters == 0 || self.divergence_window == 0 {
            return Err(SscError::InvalidParameter("ADMM iteration caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmRecord {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Convex ADMM: `μ‖ΔQ‖² + ‖ΔΛ‖²/μ`, nonincreasing in theory.
    /// Nonconvex ADMM: the augmented Lagrangian after the dual step.
    pub merit: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AdmmTrace {
    pub records: Vec<AdmmRecord>,
}

impl AdmmTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// Iterates of the convex ADMM, reusable as a warm start.
#[derive(Debug, Clone)]
pub struct CadmmState {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub dual: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct CadmmResult {
    pub fantope: FantopePoint,
    pub u: StiefelPoint,
    pub state: CadmmState,
    pub trace: AdmmTrace,
}

/// `⟨P, L⟩ + λ‖P‖₁`.
pub fn convex_objective(p: &DMatrix<f64>, l: &DMatrix<f64>, lambda: f64) -> f64 {
    p.dot(l) + lambda * l1_norm(p)
}

/// Convex ADMM from the spectral clustering solution.
pub fn cadmm_run(l: &DMatrix<f64>, c: usize, lambda: f64, opts: &AdmmOptions) -> Result<CadmmResult> {
    cadmm_from(l, c, lambda, opts, None)
}

/// Convex ADMM for `min ⟨P, L⟩ + λ‖Q‖₁` over Fantope `P` with `P = Q`:
///
/// ```text
/// P ← Π_F(Q − (L + Λ)/μ),   Q ← soft(P + Λ/μ, λ/μ),   Λ ← Λ + μ(P − Q).
/// ```
pub fn cadmm_from(l: &DMatrix<f64>, c: usize, lambda: f64, opts: &AdmmOptions, warm: Option<&CadmmState>) -> Result<CadmmResult> {
    check_laplacian("cadmm", l, c)?;
    opts.validate()?;
    if !(lambda >= 0.0) {
        return Err(SscError::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
    }
    let n = l.nrows();
    let mu = opts.mu;
    let (mut q, mut dual) = match warm {
        Some(s) => {
            check_square("cadmm warm start", &s.q, n)?;
            check_square("cadmm warm start", &s.dual, n)?;
            (s.q.clone(), s.dual.clone())
        }
        None => (sc_run(l, c)?.gram(), DMatrix::zeros(n, n)),
    };
    let mut trace = AdmmTrace::default();
    for iteration in 0..opts.max_iters {
        let fp = fantope_project(&(&q - (l + &dual) / mu), c)?;
        let p = fp.matrix();
        let q_next = (p + &dual / mu).map(|x| soft_threshold(x, lambda / mu));
        let dual_step = (p - &q_next) * mu;
        let primal_residual = (p - &q_next).norm();
        let dq = (&q_next - &q).norm();
        let dual_residual = mu * dq;
        let merit = mu * dq * dq + dual_step.norm_squared() / mu;
        dual += &dual_step;
        q = q_next;
        trace.records.push(AdmmRecord {
            iteration,
            objective: convex_objective(p, l, lambda),
            primal_residual,
            dual_residual,
            merit,
        });
        if primal_residual < opts.tol && dual_residual < opts.tol {
            let u = fp.top_eigenvectors()?;
            let state = CadmmState {
                p: fp.matrix().clone(),
                q,
                dual,
            };
            return Ok(CadmmResult {
                fantope: fp,
                u,
                state,
                trace,
            });
        }
    }
    let last = trace.records.last().map_or(f64::INFINITY, |r| r.primal_residual.max(r.dual_residual));
    Err(SscError::SolverFailure {
        solver: "convex ADMM",
        iterations: opts.max_iters,
        residual: last,
    })
}

/// Iterates of the nonconvex ADMM.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub u: StiefelPoint,
    pub p: DMatrix<f64>,
    pub dual: DMatrix<f64>,
    pub mu: f64,
}

impl AdmmState {
    /// `U⁰` from spectral clustering, `P⁰ = U⁰U⁰ᵀ`, `Λ⁰ = 0`.
    pub fn spectral(l: &DMatrix<f64>, c: usize, mu: f64) -> Result<Self> {
        let u = sc_run(l, c)?;
        let p = u.gram();
        let n = l.nrows();
        Ok(Self {
            u,
            p,
            dual: DMatrix::zeros(n, n),
            mu,
        })
    }

    /// `‖P − UUᵀ‖_F`.
    pub fn feasibility_gap(&self) -> f64 {
        (&self.p - self.u.gram()).norm()
    }
}

#[derive(Debug, Clone)]
pub struct NadmmResult {
    pub state: AdmmState,
    pub trace: AdmmTrace,
}

/// Entrywise P-step: the minimizer over `p` of
/// `g_σ(p) − Λp + (μ/2)(p − q)²`, written with `b = q + Λ/μ`.
pub fn nadmm_p_scalar(b: f64, lambda: f64, sigma: f64, mu: f64) -> f64 {
    let inner = mu * sigma * b / (1.0 + mu * sigma);
    if inner.abs() <= sigma * lambda {
        inner
    } else {
        b - b.signum() * lambda / mu
    }
}

/// Smoothed objective `⟨UUᵀ, L⟩ + g_σ(P)`.
pub fn smoothed_objective(uut: &DMatrix<f64>, p: &DMatrix<f64>, l: &DMatrix<f64>, lambda: f64, sigma: f64) -> Result<f64> {
    Ok(uut.dot(l) + g_sigma(p, lambda, sigma)?.0)
}

fn augmented_lagrangian(uut: &DMatrix<f64>, p: &DMatrix<f64>, dual: &DMatrix<f64>, l: &DMatrix<f64>, lambda: f64, sigma: f64, mu: f64) -> Result<f64> {
    let gap = p - uut;
    Ok(smoothed_objective(uut, p, l, lambda, sigma)? - dual.dot(&gap) + mu / 2.0 * gap.norm_squared())
}

/// Nonconvex ADMM from the spectral clustering solution.
pub fn nadmm_run(l: &DMatrix<f64>, c: usize, lambda: f64, sigma: f64, opts: &AdmmOptions) -> Result<NadmmResult> {
    check_laplacian("nadmm", l, c)?;
    opts.validate()?;
    nadmm_from(l, lambda, sigma, opts, AdmmState::spectral(l, c, opts.mu)?)
}

/// Nonconvex ADMM on `min ⟨UUᵀ, L⟩ + g_σ(P)` s.t. `P = UUᵀ`, Stiefel `U`,
/// PSD `P`. The U-step is exact because `‖UUᵀ‖²_F = C` makes the
/// augmented Lagrangian linear in `UUᵀ`.
pub fn nadmm_from(l: &DMatrix<f64>, lambda: f64, sigma: f64, opts: &AdmmOptions, start: AdmmState) -> Result<NadmmResult> {
    let c = start.u.c();
    check_laplacian("nadmm", l, c)?;
    opts.validate()?;
    if !(sigma > 0.0) || !(lambda >= 0.0) {
        return Err(SscError::InvalidParameter(format!("nadmm needs sigma > 0 and lambda >= 0, got {sigma}, {lambda}")));
    }
    if start.p.shape() != l.shape() || start.dual.shape() != l.shape() {
        return Err(SscError::dim("nadmm start", format!("{:?}", l.shape()), format!("{:?}", start.p.shape())));
    }
    let mu = opts.mu;
    let AdmmState { mut p, mut dual, .. } = start;
    let mut trace = AdmmTrace::default();
    let mut prev_objective = f64::INFINITY;
    let mut prev_gap = f64::INFINITY;
    let mut stalled = 0;

    for iteration in 0..opts.max_iters {
        let m = sym(&(l + &dual - &p * mu));
        let u = StiefelPoint::new(orthonormalize(smallest_eigenvectors(&m, c).1)).map_err(|e| e.at("nadmm U-step", iteration))?;
        let uut = u.gram();
        let b = &uut + &dual / mu;
        let mut p_next = b.map(|x| nadmm_p_scalar(x, lambda, sigma, mu));
        p_next = psd_repair(sym(&p_next), opts.psd_tol);
        let gap_mat = &p_next - &uut;
        dual -= &gap_mat * mu;
        let gap = gap_mat.norm();
        let dual_residual = mu * (&p_next - &p).norm();
        p = p_next;
        let objective = smoothed_objective(&uut, &p, l, lambda, sigma)?;
        let merit = augmented_lagrangian(&uut, &p, &dual, l, lambda, sigma, mu)?;
        trace.records.push(AdmmRecord {
            iteration,
            objective,
            primal_residual: gap,
            dual_residual,
            merit,
        });
        if gap < opts.tol && (objective - prev_objective).abs() < opts.stop_tol {
            return Ok(NadmmResult {
                state: AdmmState { u, p, dual, mu },
                trace,
            });
        }
        stalled = if gap >= prev_gap && gap >= opts.tol { stalled + 1 } else { 0 };
        if stalled >= opts.divergence_window {
            return Err(SscError::Numerical {
                method: "nonconvex ADMM",
                detail: format!("feasibility gap {gap:.3e} did not decrease for {stalled} steps (iteration {iteration})"),
            });
        }
        prev_gap = gap;
        prev_objective = objective;
    }
    Err(SscError::SolverFailure {
        solver: "nonconvex ADMM",
        iterations: opts.max_iters,
        residual: prev_gap,
    })
}

/// Projects onto the PSD cone only when `P` is not PSD up to `tol`.
fn psd_repair(p: DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = p.nrows();
    let shifted = &p + DMatrix::<f64>::identity(n, n) * tol;
    if Cholesky::new(shifted).is_some() {
        return p;
    }
    let (values, vectors) = sorted_eigh(&p);
    if values[0] >= -tol {
        return p;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| vectors[(i, j)] * values[j].max(0.0));
    sym(&(scaled * vectors.transpose()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AmaOptions {
    pub rho: f64,
    pub max_outer: usize,
    /// Exit when the outer objective changes by less than this.
    pub stop_tol: f64,
    pub admm: AdmmOptions,
}

impl Default for AmaOptions {
    fn default() -> Self {
        Self {
            rho: 0.2,
            max_outer: 100,
            stop_tol: 1e-5,
            admm: AdmmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmaRecord {
    pub iteration: usize,
    /// Outer objective after the weight step.
    pub objective: f64,
    pub admm_iters: usize,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AmaTrace {
    pub initial_weights: Vec<f64>,
    pub records: Vec<AmaRecord>,
    /// False when `max_outer` ran out before the objective settled.
    pub converged: bool,
}

impl AmaTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

fn check_family(family: &KernelFamily, c: usize, rho: f64) -> Result<()> {
    if family.is_empty() {
        return Err(SscError::EmptyInput("kernel family".into()));
    }
    if !(rho > 0.0) {
        return Err(SscError::InvalidParameter(format!("rho must be > 0, got {rho}")));
    }
    let n = family.n();
    if c == 0 || c > n {
        return Err(SscError::InvalidParameter(format!("need 1 <= C <= n, got C={c}, n={n}")));
    }
    Ok(())
}

fn weight_objective(costs: &[f64], w: &SimplexWeights, rho: f64) -> f64 {
    costs.iter().zip(w.as_slice()).map(|(c, w)| c * w).sum::<f64>() + rho * w.neg_entropy()
}

#[derive(Debug, Clone)]
pub struct AmaCadmmResult {
    pub fantope: FantopePoint,
    pub weights: SimplexWeights,
    pub u: StiefelPoint,
    pub trace: AmaTrace,
}

/// Alternating minimization over `(P, w)` with convex ADMM for `P` and the
/// closed-form weight step, starting from uniform weights.
pub fn ama_cadmm_run(family: &KernelFamily, c: usize, lambda: f64, opts: &AmaOptions) -> Result<AmaCadmmResult> {
    check_family(family, c, opts.rho)?;
    let mut w = SimplexWeights::uniform(family.len());
    let mut trace = AmaTrace {
        initial_weights: w.as_slice().to_vec(),
        ..Default::default()
    };
    let mut warm: Option<CadmmState> = None;
    let mut prev = f64::INFINITY;
    let mut last = None;
    for iteration in 0..opts.max_outer {
        let lbar = weighted_laplacian(family, &w)?;
        let res = cadmm_from(&lbar, c, lambda, &opts.admm, warm.as_ref()).map_err(|e| e.at("ama P-step", iteration))?;
        let costs = costs_of(res.fantope.matrix(), family);
        w = entropy_simplex_argmin(&costs, opts.rho).map_err(|e| e.at("ama w-step", iteration))?;
        let objective = weight_objective(&costs, &w, opts.rho) + lambda * l1_norm(res.fantope.matrix());
        trace.records.push(AmaRecord {
            iteration,
            objective,
            admm_iters: res.trace.iterations(),
            weights: w.as_slice().to_vec(),
        });
        warm = Some(res.state.clone());
        let done = (objective - prev).abs() < opts.stop_tol;
        prev = objective;
        last = Some(res);
        if done {
            trace.converged = true;
            break;
        }
    }
    let res = last.ok_or_else(|| SscError::InvalidParameter("max_outer must be positive".into()))?;
    Ok(AmaCadmmResult {
        fantope: res.fantope,
        weights: w,
        u: res.u,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct AmaNadmmResult {
    pub u: StiefelPoint,
    pub weights: SimplexWeights,
    pub state: AdmmState,
    pub trace: AmaTrace,
}

/// `⟨UUᵀ, L̄(w)⟩ + g_σ(UUᵀ) + ρ Σ w log w`.
pub fn smoothed_mk_objective(u: &StiefelPoint, w: &SimplexWeights, family: &KernelFamily, lambda: f64, sigma: f64, rho: f64) -> Result<f64> {
    let uut = u.gram();
    let costs = costs_of(&uut, family);
    Ok(weight_objective(&costs, w, rho) + g_sigma(&uut, lambda, sigma)?.0)
}

/// Alternating minimization over `(U, w)` with warm-started nonconvex ADMM
/// for `U` and the closed-form weight step, starting from uniform weights.
pub fn ama_nadmm_run(family: &KernelFamily, c: usize, lambda: f64, sigma: f64, opts: &AmaOptions) -> Result<AmaNadmmResult> {
    check_family(family, c, opts.rho)?;
    opts.admm.validate()?;
    let mut w = SimplexWeights::uniform(family.len());
    let mut trace = AmaTrace {
        initial_weights: w.as_slice().to_vec(),
        ..Default::default()
    };
    let mut state = AdmmState::spectral(&weighted_laplacian(family, &w)?, c, opts.admm.mu)?;
    let mut prev = f64::INFINITY;
    for iteration in 0..opts.max_outer {
        let lbar = weighted_laplacian(family, &w)?;
        let res = nadmm_from(&lbar, lambda, sigma, &opts.admm, state).map_err(|e| e.at("ama U-step", iteration))?;
        state = res.state;
        let uut = state.u.gram();
        let costs = costs_of(&uut, family);
        w = entropy_simplex_argmin(&costs, opts.rho).map_err(|e| e.at("ama w-step", iteration))?;
        let objective = weight_objective(&costs, &w, opts.rho) + g_sigma(&uut, lambda, sigma)?.0;
        trace.records.push(AmaRecord {
            iteration,
            objective,
            admm_iters: res.trace.iterations(),
            weights: w.as_slice().to_vec(),
        });
        let done = (objective - prev).abs() < opts.stop_tol;
        prev = objective;
        if done {
            trace.converged = true;
            break;
        }
    }
    Ok(AmaNadmmResult {
        u: state.u.clone(),
        weights: w,
        state,
        trace,
    })
}

/// `UUᵀ` of an embedding, for heatmaps and comparisons.
pub fn embedding_gram(u: &StiefelPoint) -> DMatrix<f64> {
    outer_gram(u.matrix())
}
