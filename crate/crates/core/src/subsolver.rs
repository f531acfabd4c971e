//! Tangent-space subproblem of the proximal linear step,
//!
//! ```text
//! min_V  ⟨Z₁, V⟩ + λ‖Z₂ + J V‖₁ + ‖V‖²/(2t)   s.t.  𝒜(V) = 0,
//! ```
//!
//! with `Z₁ = ∇f(U)`, `Z₂ = UUᵀ`, `J V = UVᵀ + VUᵀ`. The linear and quadratic
//! terms are folded into `(1/2t)‖V + tZ₁‖²` (up to a constant), `Y` replaces
//! `JV`, and a proximal point loop runs on `(V, Y)`. Each proximal step is
//! solved through its dual: `Γ₁` is eliminated in closed form and the
//! remaining concave function `Ψ(Γ₂)` is maximized by semismooth Newton with
//! a conjugate-gradient inner solve.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SscError};
use crate::linalg::check_same_shape;
use crate::prox::{h_value, soft_threshold};
use crate::stiefel::{a_adjoint_raw, a_operator_raw, project_tangent_raw, StiefelPoint, TangentDirection};

/// Fixed data of one subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemData {
    u: StiefelPoint,
    z1: DMatrix<f64>,
    z2: DMatrix<f64>,
    lambda: f64,
    t: f64,
}

impl SubproblemData {
    /// `grad` is `∇f(U)`; `Z₂ = UUᵀ` is formed here.
    pub fn new(u: StiefelPoint, grad: DMatrix<f64>, lambda: f64, t: f64) -> Result<Self> {
        check_same_shape("subproblem gradient", u.matrix(), &grad)?;
        if !(t > 0.0) {
            return Err(SscError::InvalidParameter(format!("t must be > 0, got {t}")));
        }
        if !(lambda >= 0.0) {
            return Err(SscError::InvalidParameter(format!("lambda must be >= 0, got {lambda}")));
        }
        let z2 = u.matrix() * u.matrix().transpose();
        Ok(Self {
            u,
            z1: grad,
            z2,
            lambda,
            t,
        })
    }

    pub fn u(&self) -> &StiefelPoint {
        &self.u
    }

    pub fn z1(&self) -> &DMatrix<f64> {
        &self.z1
    }

    pub fn z2(&self) -> &DMatrix<f64> {
        &self.z2
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `⟨Z₁, V⟩ + λ‖Z₂ + JV‖₁ + ‖V‖²/(2t)`.
    pub fn objective(&self, v: &DMatrix<f64>) -> f64 {
        let jv = jacobian_raw(self.u.matrix(), v);
        self.z1.dot(v) + h_value(&(&self.z2 + jv), self.lambda) + v.norm_squared() / (2.0 * self.t)
    }
}

/// PPA center `(V̂, Ŷ)`, the dual pair and the proximal parameter `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemState {
    pub v: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub gamma1: DMatrix<f64>,
    pub gamma2: DMatrix<f64>,
    pub beta: f64,
}

impl SubproblemState {
    /// Zero primal center; `Γ₂` starts at the subgradient guess `−λ sign(Z₂)`.
    pub fn initial(data: &SubproblemData, beta: f64) -> Self {
        let (n, c) = (data.u.n(), data.u.c());
        let lambda = data.lambda;
        Self {
            v: DMatrix::zeros(n, c),
            y: DMatrix::zeros(n, n),
            gamma1: DMatrix::zeros(c, c),
            gamma2: data.z2.map(|z| if z != 0.0 { -lambda * z.signum() } else { 0.0 }),
            beta,
        }
    }

    fn check(&self, data: &SubproblemData) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(SscError::InvalidParameter(format!("beta must be > 0, got {}", self.beta)));
        }
        check_same_shape("subproblem V", data.u.matrix(), &self.v)?;
        check_same_shape("subproblem Y", &data.z2, &self.y)?;
        check_same_shape("subproblem Γ₂", &data.z2, &self.gamma2)?;
        let c = data.u.c();
        if self.gamma1.shape() != (c, c) {
            return Err(SscError::dim("subproblem Γ₁", format!("{c}x{c}"), format!("{:?}", self.gamma1.shape())));
        }
        Ok(())
    }
}

pub fn jacobian_apply(u: &StiefelPoint, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_same_shape("jacobian_apply", u.matrix(), v)?;
    Ok(jacobian_raw(u.matrix(), v))
}

pub fn jacobian_adjoint(u: &StiefelPoint, gamma2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = u.n();
    if gamma2.shape() != (n, n) {
        return Err(SscError::dim("jacobian_adjoint", format!("{n}x{n}"), format!("{:?}", gamma2.shape())));
    }
    Ok(jacobian_adjoint_raw(u.matrix(), gamma2))
}

pub(crate) fn jacobian_raw(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let uv = u * v.transpose();
    &uv + uv.transpose()
}

pub(crate) fn jacobian_adjoint_raw(u: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    (g + g.transpose()) * u
}

fn ppa_weight(t: f64, beta: f64) -> f64 {
    t * beta / (t + beta)
}

/// Closed-form minimizer of the proximal Lagrangian for given multipliers:
/// `V = a(𝒜*Γ₁ + JᵀΓ₂ − Z₁ + V̂/β)` with `a = tβ/(t+β)`, and
/// `Y = Prox_{βh}(Z₂ + Ŷ − βΓ₂) − Z₂`.
pub fn ppa_primal_from_dual(data: &SubproblemData, state: &SubproblemState) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    state.check(data)?;
    let u = data.u.matrix();
    let beta = state.beta;
    let a = ppa_weight(data.t, beta);
    let rhs = a_adjoint_raw(u, &state.gamma1) + jacobian_adjoint_raw(u, &state.gamma2) - &data.z1 + &state.v / beta;
    let v = rhs * a;
    let y = y_from_gamma2(data, &state.y, beta, &state.gamma2);
    Ok((v, y))
}

fn e_of(data: &SubproblemData, yhat: &DMatrix<f64>, beta: f64, gamma2: &DMatrix<f64>) -> DMatrix<f64> {
    &data.z2 + yhat - gamma2 * beta
}

fn y_from_gamma2(data: &SubproblemData, yhat: &DMatrix<f64>, beta: f64, gamma2: &DMatrix<f64>) -> DMatrix<f64> {
    let tau = beta * data.lambda;
    e_of(data, yhat, beta, gamma2).map(|x| soft_threshold(x, tau)) - &data.z2
}

/// `B′ = Z₁ − V̂/β − JᵀΓ₂`.
pub fn b_prime(data: &SubproblemData, state: &SubproblemState, gamma2: &DMatrix<f64>) -> DMatrix<f64> {
    &data.z1 - &state.v / state.beta - jacobian_adjoint_raw(data.u.matrix(), gamma2)
}

/// Least-squares `Γ₁ = argmin ‖B′ − 𝒜*(Γ₁)‖` over symmetric `Γ₁`, which is
/// `𝒜(B′)/4` because `𝒜𝒜* = 4·Id` on symmetric matrices.
pub fn gamma1_closed_form(data: &SubproblemData, b_prime: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_same_shape("gamma1_closed_form", data.u.matrix(), b_prime)?;
    Ok(a_operator_raw(data.u.matrix(), b_prime) / 4.0)
}

/// Everything the dual solver needs at one `Γ₂`.
struct DualPoint {
    v: DMatrix<f64>,
    y: DMatrix<f64>,
    e: DMatrix<f64>,
    grad: DMatrix<f64>,
    residual: f64,
}

fn dual_point(data: &SubproblemData, center: &SubproblemState, gamma2: &DMatrix<f64>) -> DualPoint {
    let u = data.u.matrix();
    let beta = center.beta;
    let a = ppa_weight(data.t, beta);
    let w = jacobian_adjoint_raw(u, gamma2) - &data.z1 + &center.v / beta;
    let v = project_tangent_raw(u, &w) * a;
    let e = e_of(data, &center.y, beta, gamma2);
    let tau = beta * data.lambda;
    let y = e.map(|x| soft_threshold(x, tau)) - &data.z2;
    let grad = &y - jacobian_raw(u, &v);
    let residual = grad.norm();
    DualPoint {
        v,
        y,
        e,
        grad,
        residual,
    }
}

fn theta_constants(data: &SubproblemData, center: &SubproblemState) -> f64 {
    data.t / 2.0 * data.z1.norm_squared() + center.v.norm_squared() / (2.0 * center.beta)
}

/// Terms of the dual objective that depend on `Γ₂` only through `E(Γ₂)`.
fn theta_e_terms(data: &SubproblemData, center: &SubproblemState, gamma2: &DMatrix<f64>, e: &DMatrix<f64>) -> f64 {
    let beta = center.beta;
    let lambda = data.lambda;
    let tau = beta * lambda;
    let mut hp = 0.0;
    let mut clip = 0.0;
    for &x in e.iter() {
        hp += soft_threshold(x, tau).abs();
        let c = (x / beta).clamp(-lambda, lambda);
        clip += c * c;
    }
    lambda * hp + beta / 2.0 * clip + gamma2.dot(&center.y) - beta / 2.0 * gamma2.norm_squared()
}

/// Dual objective `Θ(Γ₁, Γ₂)` of one proximal step, constants included so
/// that it equals the primal optimum at the saddle point.
pub fn theta(data: &SubproblemData, center: &SubproblemState, gamma1: &DMatrix<f64>, gamma2: &DMatrix<f64>) -> Result<f64> {
    center.check(data)?;
    let u = data.u.matrix();
    let beta = center.beta;
    let a = ppa_weight(data.t, beta);
    let r = a_adjoint_raw(u, gamma1) + jacobian_adjoint_raw(u, gamma2) - &data.z1 + &center.v / beta;
    let e = e_of(data, &center.y, beta, gamma2);
    Ok(-a / 2.0 * r.norm_squared() + theta_e_terms(data, center, gamma2, &e) + theta_constants(data, center))
}

/// `Ψ(Γ₂) = max_{Γ₁} Θ(Γ₁, Γ₂)`.
pub fn psi_value(data: &SubproblemData, center: &SubproblemState, gamma2: &DMatrix<f64>) -> Result<f64> {
    center.check(data)?;
    check_same_shape("psi Γ₂", &data.z2, gamma2)?;
    Ok(psi_at(data, center, gamma2, &dual_point(data, center, gamma2)))
}

fn psi_at(data: &SubproblemData, center: &SubproblemState, gamma2: &DMatrix<f64>, p: &DualPoint) -> f64 {
    let a = ppa_weight(data.t, center.beta);
    -p.v.norm_squared() / (2.0 * a) + theta_e_terms(data, center, gamma2, &p.e) + theta_constants(data, center)
}

/// `∇Ψ(Γ₂) = Y(Γ₂) − J V(Γ₂)`.
pub fn psi_grad(data: &SubproblemData, center: &SubproblemState, gamma2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    center.check(data)?;
    check_same_shape("psi Γ₂", &data.z2, gamma2)?;
    Ok(dual_point(data, center, gamma2).grad)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SubsolverOptions {
    /// Proximal parameter `β`, constant across PPA iterations.
    pub beta: f64,
    pub max_ppa_iters: usize,
    /// Cap on dual iterations of [`ssn_solve`].
    pub max_newton_iters: usize,
    /// Cap on Newton iterations inside one proximal dual step.
    pub max_inner_iters: usize,
    /// Required `‖Y − JV‖` at PPA exit.
    pub feasibility_tol: f64,
    /// Cap on the SSN tolerance; the effective value is
    /// `min(ssn_tol, 0.1 · last PPA residual)`.
    pub ssn_tol: f64,
    pub cg_max_iters: usize,
    /// Fixed relative CG tolerance. `None` uses the forcing term `min(0.1, ‖g‖)`.
    pub cg_rel_tol: Option<f64>,
    /// Ridge `ε` added to every Newton system.
    pub ridge: f64,
    /// First proximal weight `σ` on `Γ₂`, grown by `sigma_growth` up to `sigma_max`.
    pub sigma0: f64,
    pub sigma_growth: f64,
    pub sigma_max: f64,
}

impl Default for SubsolverOptions {
    fn default() -> Self {
        Self {
            beta: 1000.0,
            max_ppa_iters: 500,
            max_newton_iters: 100,
            max_inner_iters: 20,
            feasibility_tol: 1e-8,
            ssn_tol: 1e-8,
            cg_max_iters: 500,
            cg_rel_tol: None,
            ridge: 1e-10,
            sigma0: 10.0,
            sigma_growth: 3.0,
            sigma_max: 1e5,
        }
    }
}

impl SubsolverOptions {
    /// Defaults with the SSN cap and the exit feasibility both set to `tol`.
    pub fn loose(tol: f64) -> Self {
        Self {
            feasibility_tol: tol,
            ssn_tol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("feasibility_tol", self.feasibility_tol),
            ("ssn_tol", self.ssn_tol),
            ("sigma0", self.sigma0),
            ("sigma_max", self.sigma_max),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(SscError::InvalidParameter(format!("subsolver {name} must be finite and > 0, got {x}")));
            }
        }
        if !(self.sigma_growth >= 1.0) || !(self.ridge >= 0.0) {
            return Err(SscError::InvalidParameter("subsolver needs sigma_growth >= 1 and ridge >= 0".into()));
        }
        if self.max_ppa_iters == 0 || self.max_newton_iters == 0 || self.max_inner_iters == 0 || self.cg_max_iters == 0 {
            return Err(SscError::InvalidParameter("subsolver iteration caps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsnStep {
    pub iteration: usize,
    /// `‖∇Ψ‖` before the step.
    pub residual: f64,
    /// `None` for a plain Newton step on `Ψ`, otherwise the proximal weight used.
    pub sigma: Option<f64>,
    /// Accepted fraction of the dual step.
    pub step: f64,
    pub newton_iters: usize,
    pub cg_iters: usize,
}

#[derive(Debug, Clone)]
pub struct SsnOutcome {
    pub gamma2: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub residual: f64,
    pub trace: Vec<SsnStep>,
}

impl SsnOutcome {
    /// Number of Newton systems solved.
    pub fn iterations(&self) -> usize {
        self.trace.iter().map(|s| s.newton_iters).sum()
    }
}

/// Maximizes `Ψ` starting from `center.gamma2` until `‖∇Ψ‖ ≤ tol`.
///
/// `Ψ` is linear along every entry where the soft threshold is flat, so a
/// Newton step on `Ψ` is only taken when no entry is flat. Otherwise one
/// proximal step `Γ₂ ← argmax Ψ − ‖Γ₂ − Γ‖²/(2σ)` is taken. That step is
/// the multiplier update of an augmented Lagrangian on `Y = JV`, whose inner
/// problem is smooth and strongly convex in `V ∈ T_U` and is solved by
/// semismooth Newton. Along proximal steps `‖∇Ψ‖` is nonincreasing.
pub fn ssn_solve(data: &SubproblemData, center: &SubproblemState, tol: f64, opts: &SubsolverOptions) -> Result<SsnOutcome> {
    center.check(data)?;
    if !(tol > 0.0) {
        return Err(SscError::InvalidParameter(format!("SSN tolerance must be > 0, got {tol}")));
    }
    let u = data.u.matrix();
    let beta = center.beta;
    let a = ppa_weight(data.t, beta);
    let tau = beta * data.lambda;

    let mut gamma2 = center.gamma2.clone();
    let mut point = dual_point(data, center, &gamma2);
    let mut trace = Vec::new();
    let mut sigma = opts.sigma0;
    let mut v_inner = point.v.clone();

    for iteration in 0..=opts.max_newton_iters {
        if point.residual <= tol {
            return Ok(SsnOutcome {
                gamma2,
                v: point.v,
                y: point.y,
                residual: point.residual,
                trace,
            });
        }
        if iteration == opts.max_newton_iters {
            break;
        }
        let r = point.residual;

        if point.e.iter().all(|x| x.abs() > tau) {
            let diag_val = beta + opts.ridge;
            let op = |d: &DMatrix<f64>| -> DMatrix<f64> {
                let jd = project_tangent_raw(u, &jacobian_adjoint_raw(u, d));
                d * diag_val + jacobian_raw(u, &jd) * a
            };
            let rel = opts.cg_rel_tol.unwrap_or_else(|| r.min(0.1));
            let (d, cg_iters) = conjugate_gradient(op, |r: &DMatrix<f64>| r.clone(), &point.grad, (rel * r).max(0.1 * tol), opts.cg_max_iters);
            let trial = &gamma2 + &d;
            let tp = dual_point(data, center, &trial);
            if tp.residual < 0.9 * r {
                trace.push(SsnStep {
                    iteration,
                    residual: r,
                    sigma: None,
                    step: 1.0,
                    newton_iters: 1,
                    cg_iters,
                });
                gamma2 = trial;
                point = tp;
                v_inner = point.v.clone();
                continue;
            }
        }

        let inner = AugmentedLagrangian::new(data, center, &gamma2, sigma, a);
        let solved = inner.minimize(&v_inner, tol, opts);
        let dir = (&solved.y - jacobian_raw(u, &solved.v)) * sigma;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &gamma2 + &dir * step;
            let tp = dual_point(data, center, &trial);
            if tp.residual < r {
                accepted = Some((trial, tp));
                break;
            }
            step *= 0.5;
        }
        let inner_done = solved.newton_iters < opts.max_inner_iters;
        let Some((next, tp)) = accepted else {
            // The inner solve was too inexact for this σ: retry with a smaller one.
            sigma = (sigma / (opts.sigma_growth * opts.sigma_growth)).max(opts.sigma0.min(sigma));
            v_inner = point.v.clone();
            continue;
        };
        let stalled = tp.residual > 0.9 * r;
        trace.push(SsnStep {
            iteration,
            residual: r,
            sigma: Some(sigma),
            step,
            newton_iters: solved.newton_iters,
            cg_iters: solved.cg_iters,
        });
        v_inner = solved.v;
        gamma2 = next;
        point = tp;
        if !inner_done || (stalled && sigma >= opts.sigma_max) {
            // The inner solve stopped too early for this σ.
            sigma = (sigma / opts.sigma_growth).max(opts.sigma0.min(sigma));
        } else if step == 1.0 || stalled {
            // Where Ψ is locally linear only a longer proximal step helps.
            sigma = (sigma * opts.sigma_growth).min(opts.sigma_max);
        }
    }
    Err(SscError::SolverFailure {
        solver: "semismooth Newton",
        iterations: trace.len(),
        residual: point.residual,
    })
}

/// `min_{V ∈ T_U} ‖V − a·c‖²/(2a) + min_Y [g(Y) + ⟨Γ, Y⟩ + (σ/2)‖JV − Y‖²] − ⟨Γ, JV⟩`
/// with `g(Y) = λ‖Z₂ + Y‖₁ + ‖Y − Ŷ‖²/(2β)` and `c = P_T(V̂/β − Z₁)`.
struct AugmentedLagrangian<'a> {
    data: &'a SubproblemData,
    yhat: &'a DMatrix<f64>,
    gamma: &'a DMatrix<f64>,
    target: DMatrix<f64>,
    beta: f64,
    sigma: f64,
    a: f64,
}

/// Inner gradient bound relative to the coupling residual.
const INNER_FORCING: f64 = 0.3;

struct InnerEval {
    value: f64,
    grad: DMatrix<f64>,
    y: DMatrix<f64>,
    /// Curvature of the envelope term per entry of `JV`.
    weight: DMatrix<f64>,
}

struct InnerSolution {
    v: DMatrix<f64>,
    y: DMatrix<f64>,
    newton_iters: usize,
    cg_iters: usize,
}

impl<'a> AugmentedLagrangian<'a> {
    fn new(data: &'a SubproblemData, center: &'a SubproblemState, gamma: &'a DMatrix<f64>, sigma: f64, a: f64) -> Self {
        let u = data.u.matrix();
        let target = project_tangent_raw(u, &(&center.v / center.beta - &data.z1)) * a;
        Self {
            data,
            yhat: &center.y,
            gamma,
            target,
            beta: center.beta,
            sigma,
            a,
        }
    }

    fn eval(&self, v: &DMatrix<f64>) -> InnerEval {
        let u = self.data.u.matrix();
        let (beta, sigma, lambda) = (self.beta, self.sigma, self.data.lambda);
        let kappa = 1.0 / beta + sigma;
        let thr = lambda / kappa;
        let active_weight = sigma / (1.0 + sigma * beta);
        let jv = jacobian_raw(u, v);
        let z2 = &self.data.z2;
        let n2 = jv.len();
        let mut y = DMatrix::zeros(jv.nrows(), jv.ncols());
        let mut weight = DMatrix::zeros(jv.nrows(), jv.ncols());
        let mut coupling = DMatrix::zeros(jv.nrows(), jv.ncols());
        let mut value = (v - &self.target).norm_squared() / (2.0 * self.a);
        for k in 0..n2 {
            let w = jv[k] - self.gamma[k] / sigma;
            let s = z2[k] + (self.yhat[k] / beta + sigma * w) / kappa;
            let p = soft_threshold(s, thr);
            let yk = p - z2[k];
            y[k] = yk;
            weight[k] = if s.abs() > thr { active_weight } else { sigma };
            coupling[k] = sigma * (w - yk);
            let dy = yk - self.yhat[k];
            let dw = yk - w;
            value += lambda * p.abs() + dy * dy / (2.0 * beta) + sigma / 2.0 * dw * dw;
        }
        let grad = (v - &self.target) / self.a + project_tangent_raw(u, &jacobian_adjoint_raw(u, &coupling));
        InnerEval { value, grad, y, weight }
    }

    /// Semismooth Newton with Armijo backtracking. Stops once the gradient is
    /// small against the coupling residual `‖Y − JV‖`, which bounds the error
    /// of the next `‖∇Ψ‖` through `‖∇Ψ(Γ⁺) − (Y − JV)‖ ≤ 2a‖g‖`.
    fn minimize(&self, v0: &DMatrix<f64>, tol: f64, opts: &SubsolverOptions) -> InnerSolution {
        let u = self.data.u.matrix();
        let mut v = project_tangent_raw(u, v0);
        let mut ev = self.eval(&v);
        let mut cg_total = 0;
        for it in 0..=opts.max_inner_iters {
            let gnorm = ev.grad.norm();
            let coupling = (&ev.y - jacobian_raw(u, &v)).norm();
            if 2.0 * self.a * gnorm <= INNER_FORCING * coupling.max(0.1 * tol) || gnorm == 0.0 {
                return InnerSolution {
                    v,
                    y: ev.y,
                    newton_iters: it,
                    cg_iters: cg_total,
                };
            }
            if it == opts.max_inner_iters {
                break;
            }
            let inv_a = 1.0 / self.a + opts.ridge;
            let weight = &ev.weight;
            let op = |d: &DMatrix<f64>| -> DMatrix<f64> { d * inv_a + project_tangent_raw(u, &weighted_jtj(u, d, weight)) };
            let diag = weighted_jtj_diag(u, weight).add_scalar(inv_a);
            let precond = |r: &DMatrix<f64>| project_tangent_raw(u, &r.component_div(&diag));
            let rel = opts.cg_rel_tol.unwrap_or_else(|| gnorm.min(0.1));
            let rhs = -&ev.grad;
            let (d, cg_iters) = conjugate_gradient(op, precond, &rhs, rel * gnorm, opts.cg_max_iters);
            cg_total += cg_iters;
            let slope = ev.grad.dot(&d);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                let trial = &v + &d * step;
                let te = self.eval(&trial);
                // The gradient test takes over once value differences reach round-off.
                let armijo = te.value <= ev.value + 1e-4 * step * slope;
                if armijo || (step == 1.0 && te.grad.norm() <= 0.5 * gnorm) {
                    accepted = Some((trial, te));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((trial, te)) => {
                    v = trial;
                    ev = te;
                }
                // Armijo fails only at round-off level.
                None => {
                    return InnerSolution {
                        v,
                        y: ev.y,
                        newton_iters: it + 1,
                        cg_iters: cg_total,
                    }
                }
            }
        }
        // An inexact inner solve still gives a usable multiplier update.
        InnerSolution {
            v,
            y: ev.y,
            newton_iters: opts.max_inner_iters,
            cg_iters: cg_total,
        }
    }
}

/// Preconditioned CG for a symmetric positive definite operator. Returns the
/// solution and the iteration count; the stopping test is on the plain
/// residual.
fn conjugate_gradient<F, P>(op: F, precond: P, b: &DMatrix<f64>, abs_tol: f64, max_iters: usize) -> (DMatrix<f64>, usize)
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64>,
    P: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let mut x = DMatrix::zeros(b.nrows(), b.ncols());
    let mut r = b.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let tol2 = abs_tol * abs_tol;
    let mut k = 0;
    while k < max_iters && r.norm_squared() > tol2 {
        let ap = op(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        x += &p * alpha;
        r -= &ap * alpha;
        z = precond(&r);
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
        k += 1;
    }
    (x, k)
}

/// `Jᵀ(W ⊙ J d)` for symmetric `W`, without forming transposes.
fn weighted_jtj(u: &DMatrix<f64>, d: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    let mut m = u * d.transpose();
    for j in 0..n {
        for i in 0..j {
            let s = (m[(i, j)] + m[(j, i)]) * w[(i, j)];
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
        m[(j, j)] *= 2.0 * w[(j, j)];
    }
    m * u * 2.0
}

/// Diagonal of `V ↦ Jᵀ(W ⊙ J V)` for symmetric `W`.
fn weighted_jtj_diag(u: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let u2 = u.component_mul(u);
    let mut diag = w * &u2 * 2.0;
    for i in 0..u.nrows() {
        let wii = w[(i, i)];
        for c in 0..u.ncols() {
            diag[(i, c)] += 2.0 * wii * u2[(i, c)];
        }
    }
    diag
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub v: TangentDirection,
    /// Final PPA center and multipliers, reusable as a warm start.
    pub state: SubproblemState,
    pub ppa_iters: usize,
    pub newton_iters: usize,
    /// Last `‖(Vʲ⁺¹, Yʲ⁺¹) − (Vʲ, Yʲ)‖`.
    pub residual: f64,
}

/// Runs the proximal point loop until the step `‖Δ(V, Y)‖ ≤ tol_outer` and
/// `‖Y − JV‖ ≤ feasibility_tol`.
///
/// A warm start supplies `(V̂, Ŷ, Γ₂)`; its `β` is replaced by `opts.beta`
/// and `V̂` is projected onto the current tangent space.
pub fn solve_subproblem(
    data: &SubproblemData,
    warm_start: Option<&SubproblemState>,
    tol_outer: f64,
    opts: &SubsolverOptions,
) -> Result<SubproblemSolution> {
    if !(tol_outer > 0.0) {
        return Err(SscError::InvalidParameter(format!("tolerance must be > 0, got {tol_outer}")));
    }
    let u = data.u.matrix();
    let mut center = match warm_start {
        Some(w) => {
            let mut s = w.clone();
            s.beta = opts.beta;
            s.check(data)?;
            s.v = project_tangent_raw(u, &s.v);
            s
        }
        None => SubproblemState::initial(data, opts.beta),
    };
    center.check(data)?;

    let mut newton_iters = 0;
    let mut residual = f64::INFINITY;
    for j in 0..opts.max_ppa_iters {
        let tol = opts.ssn_tol.min(0.1 * residual).max(1e-14);
        let out = ssn_solve(data, &center, tol, opts).map_err(|e| e.at("ppa", j))?;
        newton_iters += out.iterations();
        residual = ((&out.v - &center.v).norm_squared() + (&out.y - &center.y).norm_squared()).sqrt();
        let b = b_prime(data, &center, &out.gamma2);
        center.gamma1 = a_operator_raw(u, &b) / 4.0;
        center.gamma2 = out.gamma2;
        center.v = out.v;
        center.y = out.y;
        if residual <= tol_outer && out.residual <= opts.feasibility_tol {
            let v = finish(data, &center.v);
            return Ok(SubproblemSolution {
                v,
                state: center,
                ppa_iters: j + 1,
                newton_iters,
                residual,
            });
        }
    }
    Err(SscError::SolverFailure {
        solver: "proximal point",
        iterations: opts.max_ppa_iters,
        residual,
    })
}

/// Enforces the descent certificate: the zero direction is feasible, so an
/// inexact solution that does worse than it is discarded.
fn finish(data: &SubproblemData, v: &DMatrix<f64>) -> TangentDirection {
    if data.objective(v) > data.objective(&DMatrix::zeros(v.nrows(), v.ncols())) {
        TangentDirection::from_tangent_unchecked(DMatrix::zeros(v.nrows(), v.ncols()))
    } else {
        TangentDirection::from_tangent_unchecked(v.clone())
    }
}

/// Residuals of the optimality system of the unregularized subproblem at a
/// PPA state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// `‖V/t + Z₁ − 𝒜*Γ₁ − JᵀΓ₂‖`.
    pub stationarity_v: f64,
    /// `‖(Z₂+Y) − Prox_h(Z₂ + Y − Γ₂)‖`, zero iff `−Γ₂ ∈ ∂h(Z₂+Y)`.
    pub stationarity_y: f64,
    pub tangency: f64,
    pub coupling: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity_v
            .max(self.stationarity_y)
            .max(self.tangency)
            .max(self.coupling)
    }
}

pub fn kkt_residual(data: &SubproblemData, state: &SubproblemState) -> Result<KktResidual> {
    state.check(data)?;
    let u = data.u.matrix();
    let sv = &state.v / data.t + &data.z1 - a_adjoint_raw(u, &state.gamma1) - jacobian_adjoint_raw(u, &state.gamma2);
    let w = &data.z2 + &state.y;
    let sy = &w - (&w - &state.gamma2).map(|x| soft_threshold(x, data.lambda));
    Ok(KktResidual {
        stationarity_v: sv.norm(),
        stationarity_y: sy.norm(),
        tangency: a_operator_raw(u, &state.v).norm(),
        coupling: (&state.y - jacobian_raw(u, &state.v)).norm(),
    })
}
