//! Exact design gradients of mass and aggregated stress constraints.
//!
//! The mass objective is linear, so its gradient is the vector of component
//! volumes. Constraint gradients use the adjoint method: one adjoint solve
//! per aggregation region against the factorization retained from the
//! forward solve, plus the explicit density term from the stress
//! relaxation. The condensed stiffness is affine in the density law, so the
//! matrix-derivative action reduces to the precomputed unit-density blocks.
//!
//! Derivative-only clamps guard the two singular limits: the relaxation
//! factor at vanishing density and the Von Mises normalization at zero
//! stress. Forward evaluations are never clamped.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::SimpLaw;
use crate::ground::GroundStructure;
use crate::mesh::ComponentSet;
use crate::offline::OfflineSet;
use crate::solver::{instance_rows, CondensedSolution};
use crate::stress::{AggregationPlan, KsConfig, KsEvaluation, StressField, StressOperators};

/// Density floor inside derivative denominators only.
pub const RHO_GRAD_MIN: f64 = 1e-6;

/// Relative Von Mises floor inside derivative denominators only.
pub const VM_EPS_REL: f64 = 1e-9;

/// Gradient of the mass objective: component volumes, constant in density.
pub fn objective_gradient(gs: &GroundStructure, set: &ComponentSet) -> DVector<f64> {
    DVector::from_iterator(
        gs.n_instances(),
        gs.instances
            .iter()
            .map(|inst| set.component(inst.kind).volume()),
    )
}

/// `d g_m / d sigma_r` over all quadrature points; zero outside region `m`.
/// The max shift cancels between numerator and denominator.
pub fn dg_dsigma(
    plan: &AggregationPlan,
    cfg: &KsConfig,
    eval: &KsEvaluation,
    m: usize,
) -> DVector<f64> {
    let mut out = DVector::zeros(plan.n_qp());
    let denom = cfg.sigma_hat * eval.region_sum[m];
    for &q in &plan.region_qps[m] {
        out[q] = plan.weights[q] * eval.shifted_exp[q] / denom;
    }
    out
}

/// Derivative of the relaxed stress at each quadrature point with respect to
/// its owning component's density (the only nonzero entry of that row).
pub fn dsigma_drho(plan: &AggregationPlan, vm: &DVector<f64>, rho: &[f64]) -> DVector<f64> {
    DVector::from_fn(plan.n_qp(), |q, _| {
        let r = rho[plan.qp_instance[q]].max(RHO_GRAD_MIN);
        vm[q] / (2.0 * r.sqrt())
    })
}

/// Row `q` of the Jacobian of the relaxed stress with respect to the owning
/// instance's modal coefficients.
pub fn dsigma_du_row(
    ops: &[DMatrix<f64>; 3],
    field: &StressField,
    plan: &AggregationPlan,
    rho: &[f64],
    sigma_hat: f64,
    q: usize,
) -> DVector<f64> {
    let i = plan.qp_instance[q];
    let lq = q - plan.qp_offsets[i];
    let vm = field.von_mises[q].max(VM_EPS_REL * sigma_hat);
    let scale = rho[i].sqrt() / (2.0 * vm);
    let (sxx, syy, sxy) = (field.sxx[q], field.syy[q], field.sxy[q]);
    let [oxx, oyy, oxy] = ops;
    let n = oxx.ncols();
    DVector::from_fn(n, |k, _| {
        scale
            * ((2.0 * sxx - syy) * oxx[(lq, k)]
                + (2.0 * syy - sxx) * oyy[(lq, k)]
                + 6.0 * sxy * oxy[(lq, k)])
    })
}

/// Adjoint vectors and full constraint Jacobian at one design point.
pub struct ConstraintGradients {
    /// `n_agg x n_c` Jacobian of the aggregates.
    pub grads: DMatrix<f64>,
    /// One adjoint vector (kept rows) per region.
    pub lambdas: Vec<DVector<f64>>,
}

/// Assembles the constraint Jacobian by the adjoint method, reusing the
/// factorization retained in `solution`. Rejects a solution computed at a
/// different design point.
#[allow(clippy::too_many_arguments)]
pub fn constraint_gradient(
    gs: &GroundStructure,
    offline: &OfflineSet,
    ops: &StressOperators,
    plan: &AggregationPlan,
    cfg: &KsConfig,
    simp: &SimpLaw,
    rho: &[f64],
    solution: &CondensedSolution,
    field: &StressField,
    eval: &KsEvaluation,
) -> Result<ConstraintGradients> {
    if solution.rho.len() != rho.len()
        || solution.rho.iter().zip(rho).any(|(a, b)| a != b)
    {
        return Err(Error::StaleFactorization);
    }
    let n_c = gs.n_instances();
    let n_kept = solution.map.n_kept;

    // dK/drho_i acting on U, one kept-space column per component
    let mut w_cols: Vec<DVector<f64>> = Vec::with_capacity(n_c);
    let mut all_rows: Vec<Vec<Option<usize>>> = Vec::with_capacity(n_c);
    for i in 0..n_c {
        let off = offline.component(gs.instances[i].kind);
        let rows = instance_rows(gs, offline, &solution.map, i);
        let coeffs = solution.instance_coeffs(gs, offline, i);
        let au = &off.a0 * coeffs;
        let ds = simp.dstiffness(rho[i]);
        let mut col = DVector::zeros(n_kept);
        for (a, &ra) in rows.iter().enumerate() {
            if let Some(ra) = ra {
                col[ra] += ds * au[a];
            }
        }
        w_cols.push(col);
        all_rows.push(rows);
    }

    let mut grads = DMatrix::zeros(plan.n_agg, n_c);
    let mut lambdas = Vec::with_capacity(plan.n_agg);
    for m in 0..plan.n_agg {
        let dg_ds = dg_dsigma(plan, cfg, eval, m);
        // chain through the stress operators into each instance's block
        let mut rhs = DVector::zeros(n_kept);
        let mut local: Vec<Option<DVector<f64>>> = vec![None; n_c];
        for &q in &plan.region_qps[m] {
            let i = plan.qp_instance[q];
            let row = dsigma_du_row(
                ops.of(gs.instances[i].kind),
                field,
                plan,
                rho,
                cfg.sigma_hat,
                q,
            );
            let acc = local[i].get_or_insert_with(|| DVector::zeros(row.len()));
            acc.axpy(dg_ds[q], &row, 1.0);
        }
        for (i, acc) in local.iter().enumerate() {
            let Some(acc) = acc else { continue };
            for (a, &ra) in all_rows[i].iter().enumerate() {
                if let Some(ra) = ra {
                    rhs[ra] += acc[a];
                }
            }
        }
        let lambda = solution.adjoint(&rhs);

        for i in 0..n_c {
            // explicit relaxation term, clamped only in the denominator
            let mut explicit = 0.0;
            let r = rho[i].max(RHO_GRAD_MIN);
            for &q in &plan.region_qps[m] {
                if plan.qp_instance[q] == i {
                    explicit += dg_ds[q] * field.von_mises[q] / (2.0 * r.sqrt());
                }
            }
            grads[(m, i)] = explicit - w_cols[i].dot(&lambda);
        }
        lambdas.push(lambda);
    }
    Ok(ConstraintGradients { grads, lambdas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::Material;
    use crate::ground::{instantiate, CellEdge, Layout};
    use crate::mesh::{ComponentKind, EdgeId, ElementOrder};
    use crate::offline::PortBasisSet;
    use crate::solver::{assemble_condensed, solve_condensed};
    use crate::stress::{
        assign_regions, build_stress_operators, compute_alpha, evaluate_aggregates,
        evaluate_stress,
    };
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn mat() -> Material {
        Material::new(113.8e9, 0.34).unwrap()
    }

    fn fixture(order: ElementOrder, b: usize) -> (ComponentSet, OfflineSet) {
        let set = ComponentSet::build(order, b, 0.0625, 0.05).unwrap();
        let bases = PortBasisSet::full(order, b, set.cell_size / 3.0).unwrap();
        let offline = OfflineSet::build(&set, &mat(), bases).unwrap();
        (set, offline)
    }

    fn loaded_pair(set: &ComponentSet) -> GroundStructure {
        let mut layout = Layout::empty(2, 1);
        layout.set(0, 0, ComponentKind::Solid);
        layout.set(1, 0, ComponentKind::Frame);
        layout.dirichlet.push(CellEdge::new(0, 0, EdgeId::Left));
        layout
            .loads
            .push((CellEdge::new(1, 0, EdgeId::Right), [2000.0, -6000.0]));
        instantiate(&layout, set).unwrap()
    }

    struct Pipeline {
        gs: GroundStructure,
        offline: OfflineSet,
        ops: StressOperators,
        plan: AggregationPlan,
        simp: SimpLaw,
        cfg: KsConfig,
    }

    fn pipeline(order: ElementOrder, b: usize, n_agg: usize) -> Pipeline {
        let (set, offline) = fixture(order, b);
        let gs = loaded_pair(&set);
        let ops = build_stress_operators(&offline, &mat());
        let plan = assign_regions(&gs, &offline, n_agg, 17).unwrap();
        let simp = SimpLaw::default();
        // anchor the normalization at the fully solid design
        let rho0 = vec![1.0; gs.n_instances()];
        let sys = assemble_condensed(&gs, &offline, &simp, &rho0).unwrap();
        let sol = solve_condensed(sys).unwrap();
        let field0 = evaluate_stress(&gs, &offline, &ops, &plan, &rho0, &sol);
        let sigma_hat = 8.8e8;
        let p = 12.0;
        let alpha = compute_alpha(&plan, &field0.relaxed, p, sigma_hat).unwrap();
        let cfg = KsConfig {
            p,
            sigma_max: sigma_hat,
            sigma_hat,
            alpha,
        };
        Pipeline {
            gs,
            offline,
            ops,
            plan,
            simp,
            cfg,
        }
    }

    fn aggregates_at(pl: &Pipeline, rho: &[f64]) -> DVector<f64> {
        let sys = assemble_condensed(&pl.gs, &pl.offline, &pl.simp, rho).unwrap();
        let sol = solve_condensed(sys).unwrap();
        let field = evaluate_stress(&pl.gs, &pl.offline, &pl.ops, &pl.plan, rho, &sol);
        evaluate_aggregates(&pl.plan, &pl.cfg, &field.relaxed).g
    }

    #[test]
    fn objective_gradient_is_component_volumes() {
        let (set, _) = fixture(ElementOrder::Linear, 1);
        let gs = loaded_pair(&set);
        let g = objective_gradient(&gs, &set);
        assert_eq!(g.len(), 2);
        assert_relative_eq!(g[0], set.component(ComponentKind::Solid).volume());
        assert_relative_eq!(g[1], set.component(ComponentKind::Frame).volume());
        // linear objective: exact finite differences at any step
        let mass = |rho: &[f64]| -> f64 {
            rho.iter().zip(g.iter()).map(|(r, v)| r * v).sum()
        };
        let delta = 0.3;
        assert_relative_eq!(
            mass(&[1.0, 0.8]) - mass(&[1.0 - delta, 0.8]),
            g[0] * delta,
            max_relative = 1e-14
        );
    }

    #[test]
    fn ks_derivative_matches_finite_differences() {
        let pl = pipeline(ElementOrder::Linear, 1, 2);
        let rho = vec![0.9, 0.7];
        let sys = assemble_condensed(&pl.gs, &pl.offline, &pl.simp, &rho).unwrap();
        let sol = solve_condensed(sys).unwrap();
        let field = evaluate_stress(&pl.gs, &pl.offline, &pl.ops, &pl.plan, &rho, &sol);
        let eval = evaluate_aggregates(&pl.plan, &pl.cfg, &field.relaxed);
        for m in 0..pl.plan.n_agg {
            let d = dg_dsigma(&pl.plan, &pl.cfg, &eval, m);
            // entries over the region sum to 1/sigma_hat (normalized weights)
            let total: f64 = pl.plan.region_qps[m].iter().map(|&q| d[q]).sum();
            assert_relative_eq!(total, 1.0 / pl.cfg.sigma_hat, max_relative = 1e-12);
            // spot-check three entries against finite differences
            let h = 1e-7 * pl.cfg.sigma_hat;
            for &q in pl.plan.region_qps[m].iter().step_by(7).take(3) {
                let mut up = field.relaxed.clone();
                up[q] += h;
                let mut dn = field.relaxed.clone();
                dn[q] -= h;
                let gu = evaluate_aggregates(&pl.plan, &pl.cfg, &up).g[m];
                let gd = evaluate_aggregates(&pl.plan, &pl.cfg, &dn).g[m];
                let fd = (gu - gd) / (2.0 * h);
                assert_relative_eq!(d[q], fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn relaxation_density_derivative_matches_finite_differences() {
        let pl = pipeline(ElementOrder::Linear, 1, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rho: Vec<f64> = (0..2).map(|_| 0.2 + 0.8 * rng.random::<f64>()).collect();
        let sys = assemble_condensed(&pl.gs, &pl.offline, &pl.simp, &rho).unwrap();
        let sol = solve_condensed(sys).unwrap();
        let field = evaluate_stress(&pl.gs, &pl.offline, &pl.ops, &pl.plan, &rho, &sol);
        let d = dsigma_drho(&pl.plan, &field.von_mises, &rho);
        let h = 1e-6;
        for q in (0..pl.plan.n_qp()).step_by(11) {
            let i = pl.plan.qp_instance[q];
            // vm is held fixed; only the relaxation factor varies
            let fd = ((rho[i] + h).sqrt() - (rho[i] - h).sqrt()) / (2.0 * h)
                * field.von_mises[q];
            if field.von_mises[q] > 1e-6 * field.von_mises.amax() {
                assert_relative_eq!(d[q], fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn stress_jacobian_row_matches_finite_differences() {
        let pl = pipeline(ElementOrder::Quadratic, 1, 1);
        let rho = vec![0.8, 0.6];
        let sys = assemble_condensed(&pl.gs, &pl.offline, &pl.simp, &rho).unwrap();
        let sol = solve_condensed(sys).unwrap();
        let field = evaluate_stress(&pl.gs, &pl.offline, &pl.ops, &pl.plan, &rho, &sol);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let vm_scale = field.von_mises.amax();
        for q in (0..pl.plan.n_qp()).step_by(23) {
            if field.von_mises[q] < 1e-4 * vm_scale {
                continue;
            }
            let i = pl.plan.qp_instance[q];
            let kind = pl.gs.instances[i].kind;
            let ops_i = pl.ops.of(kind);
            let row = dsigma_du_row(ops_i, &field, &pl.plan, &rho, pl.cfg.sigma_hat, q);
            let coeffs = sol.instance_coeffs(&pl.gs, &pl.offline, i);
            let dir = DVector::from_fn(coeffs.len(), |_, _| rng.random::<f64>() - 0.5);
            let h = 1e-7 * coeffs.amax().max(1e-12);
            let eval_at = |c: &DVector<f64>| -> f64 {
                let lq = q - pl.plan.qp_offsets[i];
                let sxx = ops_i[0].row(lq).transpose().dot(c);
                let syy = ops_i[1].row(lq).transpose().dot(c);
                let sxy = ops_i[2].row(lq).transpose().dot(c);
                rho[i].sqrt() * crate::stress::von_mises(sxx, syy, sxy)
            };
            let up = eval_at(&(&coeffs + h * &dir));
            let dn = eval_at(&(&coeffs - h * &dir));
            let fd = (up - dn) / (2.0 * h);
            assert_relative_eq!(row.dot(&dir), fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn rigid_direction_has_zero_stress_derivative() {
        let pl = pipeline(ElementOrder::Linear, 1, 1);
        let rho = vec![1.0, 1.0];
        let sys = assemble_condensed(&pl.gs, &pl.offline, &pl.simp, &rho).unwrap();
        let sol = solve_condensed(sys).unwrap();
        let field = evaluate_stress(&pl.gs, &pl.offline, &pl.ops, &pl.plan, &rho, &sol);
        // uniform x-translation of one instance: constant mode of every port
        let i = 1;
        let off = pl.offline.component(pl.gs.instances[i].kind);
        let ell = pl.offline.bases.basis1d.length;
        let mut dir = DVector::zeros(off.n_modes());
        for (l, _) in pl.gs.local_to_global[i].iter().enumerate() {
            let range = off.port_mode_range(l);
            dir[range.start] = ell.sqrt(); // x constant mode, unit amplitude
        }
        let vm_scale = field.von_mises.amax();
        for q in (0..pl.plan.n_qp()).step_by(5) {
            if pl.plan.qp_instance[q] != i || field.von_mises[q] < 1e-4 * vm_scale {
                continue;
            }
            let row = dsigma_du_row(
                pl.ops.of(pl.gs.instances[i].kind),
                &field,
                &pl.plan,
                &rho,
                pl.cfg.sigma_hat,
                q,
            );
            // zero up to cancellation roundoff of the dot product terms
            assert!(
                row.dot(&dir).abs() < 1e-9 * row.norm() * dir.norm(),
                "rigid motion changed stress at qp {q}"
            );
        }
    }

    #[test]
    fn condensed_matrix_derivative_is_exactly_affine() {
        let pl = pipeline(ElementOrder::Linear, 1, 1);
        let rho = [0.7, 0.5];
        let delta = 1e-3;
        let a = assemble_condensed(&pl.gs, &pl.offline, &pl.simp, &rho).unwrap();
        let b =
            assemble_condensed(&pl.gs, &pl.offline, &pl.simp, &[0.7 + delta, 0.5]).unwrap();
        let fd = (&b.k - &a.k) / delta;
        // scatter the unit block of instance 0 scaled by the scalar FD
        let ds = (pl.simp.stiffness(0.7 + delta) - pl.simp.stiffness(0.7)) / delta;
        let off = pl.offline.component(pl.gs.instances[0].kind);
        let rows = instance_rows(&pl.gs, &pl.offline, &a.map, 0);
        let mut expected = DMatrix::zeros(a.map.n_kept, a.map.n_kept);
        for (x, &rx) in rows.iter().enumerate() {
            let Some(rx) = rx else { continue };
            for (y, &ry) in rows.iter().enumerate() {
                if let Some(ry) = ry {
                    expected[(rx, ry)] = ds * off.a0[(x, y)];
                }
            }
        }
        let err = (&fd - &expected).amax() / expected.amax();
        assert!(err < 1e-9, "affine structure violated: {err}");
    }

    #[test]
    fn adjoint_gradient_matches_global_finite_differences() {
        let pl = pipeline(ElementOrder::Linear, 1, 2);
        let rho = vec![0.55, 0.75];
        let sys = assemble_condensed(&pl.gs, &pl.offline, &pl.simp, &rho).unwrap();
        let sol = solve_condensed(sys).unwrap();
        let field = evaluate_stress(&pl.gs, &pl.offline, &pl.ops, &pl.plan, &rho, &sol);
        let eval = evaluate_aggregates(&pl.plan, &pl.cfg, &field.relaxed);
        let grads = constraint_gradient(
            &pl.gs,
            &pl.offline,
            &pl.ops,
            &pl.plan,
            &pl.cfg,
            &pl.simp,
            &rho,
            &sol,
            &field,
            &eval,
        )
        .unwrap();
        assert_eq!(grads.lambdas.len(), pl.plan.n_agg);
        let h = 1e-6;
        for m in 0..pl.plan.n_agg {
            let mut fd = DVector::zeros(rho.len());
            for i in 0..rho.len() {
                let mut up = rho.clone();
                up[i] += h;
                let mut dn = rho.clone();
                dn[i] -= h;
                fd[i] = (aggregates_at(&pl, &up)[m] - aggregates_at(&pl, &dn)[m]) / (2.0 * h);
            }
            let adj = grads.grads.row(m).transpose();
            let rel = (&adj - &fd).norm() / fd.norm();
            assert!(rel < 1e-5, "constraint {m}: adjoint vs FD rel err {rel}");
        }
    }

    #[test]
    fn zero_load_means_zero_gradients() {
        let (set, offline) = fixture(ElementOrder::Linear, 1);
        let mut layout = Layout::empty(2, 1);
        layout.set(0, 0, ComponentKind::Solid);
        layout.set(1, 0, ComponentKind::Frame);
        layout.dirichlet.push(CellEdge::new(0, 0, EdgeId::Left));
        let gs = instantiate(&layout, &set).unwrap();
        let ops = build_stress_operators(&offline, &mat());
        let plan = assign_regions(&gs, &offline, 2, 17).unwrap();
        let simp = SimpLaw::default();
        let rho = vec![0.8, 0.9];
        let sys = assemble_condensed(&gs, &offline, &simp, &rho).unwrap();
        let sol = solve_condensed(sys).unwrap();
        let field = evaluate_stress(&gs, &offline, &ops, &plan, &rho, &sol);
        let cfg = KsConfig {
            p: 12.0,
            sigma_max: 8.8e8,
            sigma_hat: 8.8e8,
            alpha: 1e-4,
        };
        let eval = evaluate_aggregates(&plan, &cfg, &field.relaxed);
        let grads = constraint_gradient(
            &gs, &offline, &ops, &plan, &cfg, &simp, &rho, &sol, &field, &eval,
        )
        .unwrap();
        assert_eq!(grads.grads.amax(), 0.0);
    }

    #[test]
    fn stale_solution_is_rejected() {
        let pl = pipeline(ElementOrder::Linear, 1, 1);
        let rho_a = vec![0.9, 0.9];
        let rho_b = vec![0.9, 0.8];
        let sys = assemble_condensed(&pl.gs, &pl.offline, &pl.simp, &rho_a).unwrap();
        let sol = solve_condensed(sys).unwrap();
        let field = evaluate_stress(&pl.gs, &pl.offline, &pl.ops, &pl.plan, &rho_b, &sol);
        let eval = evaluate_aggregates(&pl.plan, &pl.cfg, &field.relaxed);
        let out = constraint_gradient(
            &pl.gs,
            &pl.offline,
            &pl.ops,
            &pl.plan,
            &pl.cfg,
            &pl.simp,
            &rho_b,
            &sol,
            &field,
            &eval,
        );
        assert!(matches!(out, Err(Error::StaleFactorization)));
    }

    #[test]
    fn single_region_gradient_is_exponent_weighted_mix_of_split_regions() {
        // splitting a region changes the Jacobian rows to a convex
        // combination weighted by each region's share of the exponential sum
        let pl2 = pipeline(ElementOrder::Linear, 1, 2);
        let rho = vec![0.65, 0.85];
        let sys = assemble_condensed(&pl2.gs, &pl2.offline, &pl2.simp, &rho).unwrap();
        let sol = solve_condensed(sys).unwrap();
        let field = evaluate_stress(&pl2.gs, &pl2.offline, &pl2.ops, &pl2.plan, &rho, &sol);
        let eval2 = evaluate_aggregates(&pl2.plan, &pl2.cfg, &field.relaxed);
        let g2 = constraint_gradient(
            &pl2.gs,
            &pl2.offline,
            &pl2.ops,
            &pl2.plan,
            &pl2.cfg,
            &pl2.simp,
            &rho,
            &sol,
            &field,
            &eval2,
        )
        .unwrap();

        let plan1 = assign_regions(&pl2.gs, &pl2.offline, 1, pl2.plan.seed).unwrap();
        let eval1 = evaluate_aggregates(&plan1, &pl2.cfg, &field.relaxed);
        let g1 = constraint_gradient(
            &pl2.gs,
            &pl2.offline,
            &pl2.ops,
            &plan1,
            &pl2.cfg,
            &pl2.simp,
            &rho,
            &sol,
            &field,
            &eval1,
        )
        .unwrap();

        // unshifted exponential masses per split region, via the global max
        let p = pl2.cfg.p;
        let max_all = eval2
            .region_max
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let masses: Vec<f64> = (0..2)
            .map(|m| (p * (eval2.region_max[m] - max_all)).exp() * eval2.region_sum[m])
            .collect();
        let total: f64 = masses.iter().sum();
        let mixed = (masses[0] / total) * g2.grads.row(0)
            + (masses[1] / total) * g2.grads.row(1);
        let rel = (mixed - g1.grads.row(0)).amax() / g1.grads.row(0).amax();
        assert!(rel < 1e-10, "region mixing identity violated: {rel}");
    }
}
