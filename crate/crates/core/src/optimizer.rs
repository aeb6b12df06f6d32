//! Box-constrained mass minimization under inequality constraints.
//!
//! The problem interface is solver-agnostic; the built-in solver is a
//! log-barrier interior-point method. Bounds and constraints enter one
//! barrier functional; steps come from a Gauss-Newton model of the barrier
//! Hessian (exact for the bound terms, first-order for the constraints),
//! safeguarded by a fraction-to-boundary rule, an infinity-norm step cap,
//! and an Armijo backtracking line search. The barrier parameter shrinks
//! geometrically; the run is deterministic for a fixed configuration.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::SimpLaw;
use crate::ground::GroundStructure;
use crate::mesh::ComponentSet;
use crate::offline::OfflineSet;
use crate::sensitivity::{constraint_gradient, objective_gradient};
use crate::solver::{assemble_condensed, solve_condensed, CondensedSolution};
use crate::stress::{
    evaluate_aggregates, evaluate_stress, AggregationPlan, KsConfig, KsEvaluation, StressField,
    StressOperators,
};

/// The nonlinear program: minimize `objective` over `[0,1]^n` subject to
/// `constraints(x) <= 0` componentwise. Callbacks must be pure functions of
/// `x` (internal caching is fine).
pub trait NlpProblem {
    fn n_vars(&self) -> usize;
    fn n_constraints(&self) -> usize;
    fn initial_point(&self) -> DVector<f64>;
    fn objective(&mut self, x: &DVector<f64>) -> f64;
    fn objective_gradient(&mut self, x: &DVector<f64>) -> DVector<f64>;
    fn constraints(&mut self, x: &DVector<f64>) -> Result<DVector<f64>>;
    /// `n_constraints x n_vars`.
    fn jacobian(&mut self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// First-order optimality tolerance on the scaled KKT residual.
    pub tol: f64,
    /// Cap on trust-region cycles across all barrier levels.
    pub max_iter: usize,
    /// Initial barrier parameter (scaled objective units).
    pub mu_init: f64,
    /// Geometric barrier reduction factor.
    pub mu_shrink: f64,
    /// Fraction-to-boundary rule.
    pub tau: f64,
    /// Initial trust-region radius.
    pub step_cap: f64,
    /// Smallest actual-to-predicted reduction ratio that accepts a step.
    pub armijo: f64,
    /// Distance variables are pushed off their bounds at the start.
    pub bound_push: f64,
    /// Feasibility tolerance used for best-point tracking.
    pub feas_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            max_iter: 10_000,
            mu_init: 1e-1,
            mu_shrink: 0.2,
            tau: 0.995,
            step_cap: 0.1,
            armijo: 1e-4,
            bound_push: 1e-3,
            feas_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub objective: f64,
    pub max_violation: f64,
    pub step_norm: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Default)]
pub struct OptimizationTrace {
    pub iterations: Vec<IterationRecord>,
    /// Constraint evaluations issued by the solver.
    pub n_cons: usize,
    /// Jacobian evaluations issued by the solver.
    pub n_jac: usize,
    pub wall_seconds: f64,
    pub converged: bool,
    /// Scaled first-order optimality at the final point.
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    /// Final iterate.
    pub x: DVector<f64>,
    /// Lowest-mass iterate whose worst constraint stayed within `feas_tol`.
    pub best_feasible: DVector<f64>,
    pub best_objective: f64,
    pub trace: OptimizationTrace,
}

struct BarrierState {
    phi: f64,
    grad: DVector<f64>,
}

/// Barrier value/gradient at a strictly interior point; `None` when any
/// logarithm is out of domain.
fn barrier_eval(
    gf_scaled: &DVector<f64>,
    f_scaled: f64,
    g: &DVector<f64>,
    jac: Option<&DMatrix<f64>>,
    x: &DVector<f64>,
    mu: f64,
) -> Option<BarrierState> {
    let mut phi = f_scaled;
    for m in 0..g.len() {
        if g[m] >= 0.0 {
            return None;
        }
        phi -= mu * (-g[m]).ln();
    }
    for i in 0..x.len() {
        if x[i] <= 0.0 || x[i] >= 1.0 {
            return None;
        }
        phi -= mu * (x[i].ln() + (1.0 - x[i]).ln());
    }
    let grad = match jac {
        Some(jac) => {
            let mut grad = gf_scaled.clone();
            for m in 0..g.len() {
                let w = mu / (-g[m]);
                grad.axpy(w, &jac.row(m).transpose(), 1.0);
            }
            for i in 0..x.len() {
                grad[i] += mu * (1.0 / (1.0 - x[i]) - 1.0 / x[i]);
            }
            grad
        }
        None => DVector::zeros(0),
    };
    Some(BarrierState { phi, grad })
}

/// One full forward evaluation, cached at its design point so value and
/// Jacobian requests at the same point do one solve.
struct ForwardCache {
    rho: Vec<f64>,
    solution: CondensedSolution,
    field: StressField,
    eval: KsEvaluation,
}

/// The lattice mass-minimization NLP: one variable per component instance,
/// aggregated stress constraints. Values and Jacobians for the same design
/// share a single condensed solve.
pub struct LatticeNlp<'a> {
    pub gs: &'a GroundStructure,
    pub set: &'a ComponentSet,
    pub offline: &'a OfflineSet,
    pub ops: &'a StressOperators,
    pub plan: &'a AggregationPlan,
    pub ks: KsConfig,
    pub simp: SimpLaw,
    volumes: DVector<f64>,
    cache: Option<ForwardCache>,
}

/// Binds a ground structure to the optimizer interface. The normalization
/// inside `ks` must already be anchored (computed at the fully solid
/// design).
pub fn build_nlp<'a>(
    gs: &'a GroundStructure,
    set: &'a ComponentSet,
    offline: &'a OfflineSet,
    ops: &'a StressOperators,
    plan: &'a AggregationPlan,
    ks: KsConfig,
    simp: SimpLaw,
) -> Result<LatticeNlp<'a>> {
    ks.validate()?;
    let volumes = objective_gradient(gs, set);
    Ok(LatticeNlp {
        gs,
        set,
        offline,
        ops,
        plan,
        ks,
        simp,
        volumes,
        cache: None,
    })
}

impl LatticeNlp<'_> {
    fn ensure_cache(&mut self, x: &DVector<f64>) -> Result<&ForwardCache> {
        let rho: Vec<f64> = x.iter().copied().collect();
        let fresh = match &self.cache {
            Some(c) => c.rho != rho,
            None => true,
        };
        if fresh {
            let sys = assemble_condensed(self.gs, self.offline, &self.simp, &rho)?;
            let solution = solve_condensed(sys)?;
            let field =
                evaluate_stress(self.gs, self.offline, self.ops, self.plan, &rho, &solution);
            let eval = evaluate_aggregates(self.plan, &self.ks, &field.relaxed);
            self.cache = Some(ForwardCache {
                rho,
                solution,
                field,
                eval,
            });
        }
        Ok(self.cache.as_ref().unwrap())
    }
}

impl NlpProblem for LatticeNlp<'_> {
    fn n_vars(&self) -> usize {
        self.gs.n_instances()
    }

    fn n_constraints(&self) -> usize {
        self.plan.n_agg
    }

    fn initial_point(&self) -> DVector<f64> {
        DVector::from_element(self.gs.n_instances(), 1.0)
    }

    fn objective(&mut self, x: &DVector<f64>) -> f64 {
        self.volumes.dot(x)
    }

    fn objective_gradient(&mut self, _x: &DVector<f64>) -> DVector<f64> {
        self.volumes.clone()
    }

    fn constraints(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.ensure_cache(x)?.eval.g.clone())
    }

    fn jacobian(&mut self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.ensure_cache(x)?;
        let cache = self.cache.as_ref().unwrap();
        let grads = constraint_gradient(
            self.gs,
            self.offline,
            self.ops,
            self.plan,
            &self.ks,
            &self.simp,
            &cache.rho,
            &cache.solution,
            &cache.field,
            &cache.eval,
        )?;
        Ok(grads.grads)
    }
}

/// Runs the interior-point solve. Requires a strictly feasible start after
/// the bound push; non-convergence within the iteration cap is reported in
/// the trace, not as an error.
/// Extends `d` along `p` to the trust-region boundary (nonnegative root).
fn boundary_tau(d: &DVector<f64>, p: &DVector<f64>, delta: f64) -> f64 {
    let a = p.norm_squared();
    if a == 0.0 {
        return 0.0;
    }
    let b = 2.0 * d.dot(p);
    let c = d.norm_squared() - delta * delta;
    ((-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a)).max(0.0)
}

/// Steihaug-CG solution of `min g·d + d·H·d/2` over `|d| <= delta`, with H
/// given as a product operator. Stops at the boundary, on negative
/// curvature, or at the forcing tolerance. Returns the step and `H d` so
/// the caller can form the model reduction without another product.
fn steihaug(
    hv: &mut dyn FnMut(&DVector<f64>) -> DVector<f64>,
    grad: &DVector<f64>,
    delta: f64,
) -> (DVector<f64>, DVector<f64>) {
    let n = grad.len();
    let mut d = DVector::<f64>::zeros(n);
    let mut hd = DVector::<f64>::zeros(n);
    let mut r = -grad.clone();
    let r0 = r.norm();
    if r0 == 0.0 {
        return (d, hd);
    }
    let stop = 0.1 * r0;
    let mut p = r.clone();
    for _ in 0..(2 * n + 10) {
        let hp = hv(&p);
        let php = p.dot(&hp);
        if php <= 0.0 {
            let tau = boundary_tau(&d, &p, delta);
            return (&d + tau * &p, &hd + tau * &hp);
        }
        let rr = r.norm_squared();
        let alpha = rr / php;
        let d_next = &d + alpha * &p;
        if d_next.norm() >= delta {
            let tau = boundary_tau(&d, &p, delta);
            return (&d + tau * &p, &hd + tau * &hp);
        }
        d = d_next;
        hd += alpha * &hp;
        r -= alpha * &hp;
        if r.norm() <= stop {
            return (d, hd);
        }
        let beta = r.norm_squared() / rr;
        p = &r + beta * &p;
    }
    (d, hd)
}

pub fn run_optimization(
    problem: &mut dyn NlpProblem,
    cfg: &SolverConfig,
) -> Result<OptimizationResult> {
    let start = Instant::now();
    let n = problem.n_vars();
    let mut trace = OptimizationTrace::default();

    // push the start strictly inside the box
    let mut x = problem.initial_point();
    for i in 0..n {
        x[i] = x[i].clamp(cfg.bound_push, 1.0 - cfg.bound_push);
    }

    // objective scaling keeps tolerances meaningful across load magnitudes
    let gf = problem.objective_gradient(&x);
    let f_scale = 1.0 / gf.amax().max(f64::MIN_POSITIVE);
    let gf_scaled = &gf * f_scale;

    let mut g = problem.constraints(&x)?;
    trace.n_cons += 1;
    if g.iter().any(|&v| v >= 0.0) {
        return Err(Error::Optimization(format!(
            "start is infeasible: max constraint {:.3e}",
            g.max()
        )));
    }

    let mut f_scaled = problem.objective(&x) * f_scale;
    let mut best_feasible = x.clone();
    let mut best_objective = f_scaled / f_scale;
    let mut mu = cfg.mu_init;
    let mut kkt;
    let mu_min = (cfg.tol / 10.0).min(cfg.mu_init);
    let mut jac = problem.jacobian(&x)?;
    trace.n_jac += 1;
    let mut delta = cfg.step_cap;
    let mut cycles = 0;

    'outer: loop {
        let state = barrier_eval(&gf_scaled, f_scaled, &g, Some(&jac), &x, mu)
            .expect("iterate is interior");
        kkt = state.grad.amax();

        // subproblem solved to its mu-proportional tolerance: tighten the
        // barrier, or stop when already at the last level
        if kkt <= (10.0 * mu).max(0.5 * cfg.tol) {
            if mu <= mu_min && kkt <= cfg.tol {
                trace.converged = true;
                break 'outer;
            }
            mu = (mu * cfg.mu_shrink).max(mu_min);
            continue;
        }
        if cycles >= cfg.max_iter {
            break 'outer;
        }
        cycles += 1;

        // barrier Hessian as a product operator: Gauss-Newton and bound
        // terms exactly from the Jacobian, and the constraints' curvature
        // Σ λ_m ∇²g_m applied by differencing the Jacobian along v
        let lambda: Vec<f64> = g.iter().map(|&gm| mu / (-gm)).collect();
        let mut jtl = DVector::<f64>::zeros(n);
        for m in 0..g.len() {
            jtl.axpy(lambda[m], &jac.row(m).transpose(), 1.0);
        }
        let gn_w: Vec<f64> = g.iter().map(|&gm| mu / (gm * gm)).collect();
        let bound_diag =
            DVector::from_fn(n, |i, _| {
                mu * (1.0 / (x[i] * x[i]) + 1.0 / ((1.0 - x[i]) * (1.0 - x[i])))
            });
        let mut hv = |v: &DVector<f64>| -> DVector<f64> {
            let jv = &jac * v;
            let mut out = DVector::<f64>::zeros(n);
            for m in 0..g.len() {
                out.axpy(gn_w[m] * jv[m], &jac.row(m).transpose(), 1.0);
            }
            for i in 0..n {
                out[i] += bound_diag[i] * v[i];
            }
            let vn = v.norm();
            if vn > 0.0 {
                // probe step clipped so the sample point stays in the box
                let mut hfd = 1e-6_f64;
                for i in 0..n {
                    let vi = v[i] / vn;
                    if vi > 0.0 {
                        hfd = hfd.min(0.5 * (1.0 - x[i]) / vi);
                    } else if vi < 0.0 {
                        hfd = hfd.min(0.5 * x[i] / (-vi));
                    }
                }
                if hfd >= 1e-9 {
                    let probe = &x + (hfd / vn) * v;
                    if let Ok(jp) = problem.jacobian(&probe) {
                        trace.n_jac += 1;
                        let mut jtl_p = DVector::<f64>::zeros(n);
                        for m in 0..g.len() {
                            jtl_p.axpy(lambda[m], &jp.row(m).transpose(), 1.0);
                        }
                        out += (vn / hfd) * (jtl_p - &jtl);
                    }
                }
            }
            out
        };
        let (mut d, mut hd) = steihaug(&mut hv, &state.grad, delta);

        // pulled in by the fraction-to-boundary rule so the trial stays
        // strictly inside the box
        let mut scale = 1.0_f64;
        for i in 0..n {
            if d[i] > 0.0 {
                scale = scale.min(cfg.tau * (1.0 - x[i]) / d[i]);
            } else if d[i] < 0.0 {
                scale = scale.min(cfg.tau * x[i] / (-d[i]));
            }
        }
        if scale < 1.0 {
            d *= scale;
            hd *= scale;
        }
        let step_norm = d.norm();
        let pred = -(state.grad.dot(&d) + 0.5 * d.dot(&hd));

        // trial point; a crossed constraint leaves the barrier undefined
        let evaluated = if pred > 0.0 && step_norm > 0.0 {
            let x_new = &x + &d;
            match problem.constraints(&x_new) {
                Ok(g_new) => {
                    trace.n_cons += 1;
                    let f_new = problem.objective(&x_new) * f_scale;
                    let phi_new =
                        barrier_eval(&gf_scaled, f_new, &g_new, None, &x_new, mu).map(|t| t.phi);
                    Some((x_new, g_new, f_new, phi_new))
                }
                Err(_) => None,
            }
        } else {
            None
        };
        // below this floor the actual reduction is roundoff in phi, so the
        // ratio cannot certify anything; trust a feasible model step
        let certifiable = pred > 1e-12 * state.phi.abs().max(1.0);
        let rate = |phi_new: Option<f64>| match phi_new {
            Some(p) if certifiable => (state.phi - p) / pred,
            Some(_) => 1.0,
            None => f64::NEG_INFINITY,
        };
        let plain_ratio = evaluated.as_ref().map_or(f64::NEG_INFINITY, |t| rate(t.3));

        // a trial spoiled by active-constraint curvature (crossed the
        // boundary, or the barrier ate the predicted decrease) gets one
        // second-order correction restoring the constraint values along d
        let mut accepted: Option<(DVector<f64>, DVector<f64>, f64, f64)> = None;
        if plain_ratio <= 0.75 {
            if let Some((x_new, g_new, _, _)) = &evaluated {
                let resid = g_new - &g - &jac * &d;
                let mut jjt = &jac * jac.transpose();
                for k in 0..jjt.nrows() {
                    jjt[(k, k)] += 1e-12 * (1.0 + jjt[(k, k)]);
                }
                if let Some(chol) = nalgebra::Cholesky::new(jjt) {
                    let mut d_soc = -(jac.transpose() * chol.solve(&resid));
                    let mut s_soc = 1.0_f64;
                    for i in 0..n {
                        if d_soc[i] > 0.0 {
                            s_soc = s_soc.min(cfg.tau * (1.0 - x_new[i]) / d_soc[i]);
                        } else if d_soc[i] < 0.0 {
                            s_soc = s_soc.min(cfg.tau * x_new[i] / (-d_soc[i]));
                        }
                    }
                    if s_soc < 1.0 {
                        d_soc *= s_soc;
                    }
                    if d_soc.norm() <= step_norm {
                        let x_soc = x_new + &d_soc;
                        if let Ok(g_soc) = problem.constraints(&x_soc) {
                            trace.n_cons += 1;
                            let f_soc = problem.objective(&x_soc) * f_scale;
                            let phi_soc =
                                barrier_eval(&gf_scaled, f_soc, &g_soc, None, &x_soc, mu)
                                    .map(|t| t.phi);
                            let soc_ratio = rate(phi_soc);
                            if soc_ratio > plain_ratio.max(cfg.armijo) {
                                accepted = Some((x_soc, g_soc, f_soc, soc_ratio));
                            }
                        }
                    }
                }
            }
        }
        if accepted.is_none() && plain_ratio > cfg.armijo {
            if let Some((x_new, g_new, f_new, _)) = evaluated {
                accepted = Some((x_new, g_new, f_new, plain_ratio));
            }
        }

        let Some((x_new, g_new, f_new, ratio)) = accepted else {
            // model disagrees at this radius
            delta *= 0.25;
            if delta < 1e-13 {
                // radius collapse: no usable step at this barrier level
                delta = cfg.step_cap;
                if mu <= mu_min {
                    break 'outer;
                }
                mu = (mu * cfg.mu_shrink).max(mu_min);
            }
            continue;
        };
        if ratio > 0.75 && scale >= 1.0 && step_norm >= 0.99 * delta {
            delta = (2.0 * delta).min((n as f64).sqrt());
        } else if ratio < 0.25 {
            delta *= 0.5;
        }

        let jac_new = problem.jacobian(&x_new)?;
        trace.n_jac += 1;

        let moved = (&x_new - &x).norm();
        x = x_new;
        g = g_new;
        f_scaled = f_new;
        jac = jac_new;
        let violation = g.max().max(0.0);
        trace.iterations.push(IterationRecord {
            objective: f_scaled / f_scale,
            max_violation: violation,
            step_norm: moved,
            mu,
        });
        if violation <= cfg.feas_tol && f_scaled / f_scale < best_objective {
            best_feasible = x.clone();
            best_objective = f_scaled / f_scale;
        }
    }

    trace.kkt_residual = kkt;
    trace.wall_seconds = start.elapsed().as_secs_f64();
    Ok(OptimizationResult {
        x,
        best_feasible,
        best_objective,
        trace,
    })
}
