//! Relaxed Von Mises stress evaluation and KS constraint aggregation.
//!
//! Stresses are evaluated at element quadrature points straight from the
//! precomputed modal gradient tables, using the base-material stiffness (no
//! density penalty inside the operators). Quadrature points are grouped into
//! randomized aggregation regions; each region contributes one constraint
//! through a Kreisselmeier-Steinhauser aggregate whose exponentials are
//! max-shifted so large multipliers never overflow.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::Material;
use crate::ground::GroundStructure;
use crate::mesh::{ComponentKind, ALL_KINDS};
use crate::offline::OfflineSet;
use crate::solver::CondensedSolution;

/// Randomized partition of all quadrature points into aggregation regions.
///
/// Quadrature points are numbered instance-major in element order, matching
/// the per-component offline tables.
#[derive(Debug, Clone)]
pub struct AggregationPlan {
    pub n_agg: usize,
    pub seed: u64,
    /// `memberships[i][e]` = region of element `e` of instance `i`.
    pub memberships: Vec<Vec<usize>>,
    /// First global quadrature point of each instance.
    pub qp_offsets: Vec<usize>,
    /// Region of every global quadrature point.
    pub qp_region: Vec<usize>,
    /// Owning instance of every global quadrature point.
    pub qp_instance: Vec<usize>,
    /// Physical quadrature coefficient of every global quadrature point.
    pub weights: Vec<f64>,
    /// Global quadrature point indices per region.
    pub region_qps: Vec<Vec<usize>>,
}

impl AggregationPlan {
    pub fn n_qp(&self) -> usize {
        self.weights.len()
    }
}

/// Splits every instance's elements into `n_agg` near-equal random chunks.
pub fn assign_regions(
    gs: &GroundStructure,
    offline: &OfflineSet,
    n_agg: usize,
    seed: u64,
) -> Result<AggregationPlan> {
    if n_agg == 0 {
        return Err(Error::Aggregation("need at least one region".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut memberships = Vec::with_capacity(gs.n_instances());
    let mut qp_offsets = Vec::with_capacity(gs.n_instances());
    let mut qp_region = Vec::new();
    let mut qp_instance = Vec::new();
    let mut weights = Vec::new();
    for (i, inst) in gs.instances.iter().enumerate() {
        let off = offline.component(inst.kind);
        let n_el = off.qp_element.last().map_or(0, |&e| e + 1);
        if n_agg > n_el {
            return Err(Error::Aggregation(format!(
                "{n_agg} regions but only {n_el} elements per component"
            )));
        }
        let mut ids: Vec<usize> = (0..n_el).collect();
        ids.shuffle(&mut rng);
        // first (n_el % n_agg) regions take the extra element
        let base = n_el / n_agg;
        let extra = n_el % n_agg;
        let mut member = vec![0usize; n_el];
        let mut at = 0;
        for m in 0..n_agg {
            let take = base + usize::from(m < extra);
            for &e in &ids[at..at + take] {
                member[e] = m;
            }
            at += take;
        }
        qp_offsets.push(qp_region.len());
        for (q, &e) in off.qp_element.iter().enumerate() {
            qp_region.push(member[e]);
            qp_instance.push(i);
            weights.push(off.qp_weights[q]);
        }
        memberships.push(member);
    }
    let mut region_qps = vec![Vec::new(); n_agg];
    for (q, &m) in qp_region.iter().enumerate() {
        region_qps[m].push(q);
    }
    if region_qps.iter().any(|r| r.is_empty()) {
        return Err(Error::Aggregation("empty aggregation region".into()));
    }
    Ok(AggregationPlan {
        n_agg,
        seed,
        memberships,
        qp_offsets,
        qp_region,
        qp_instance,
        weights,
        region_qps,
    })
}

/// Modal stress operators per component kind: matrices taking modal
/// coefficients to stress-tensor components at quadrature points. Built with
/// the base-material stiffness; instances of a kind share one operator.
pub struct StressOperators {
    /// `[S_xx, S_yy, S_xy]` indexed like `ALL_KINDS`.
    per_kind: Vec<[DMatrix<f64>; 3]>,
}

impl StressOperators {
    pub fn of(&self, kind: ComponentKind) -> &[DMatrix<f64>; 3] {
        let idx = ALL_KINDS.iter().position(|&k| k == kind).unwrap();
        &self.per_kind[idx]
    }

    /// Bytes held by the dense operators.
    pub fn storage_bytes(&self) -> usize {
        self.per_kind
            .iter()
            .flatten()
            .map(|m| m.len() * std::mem::size_of::<f64>())
            .sum()
    }
}

pub fn build_stress_operators(offline: &OfflineSet, material: &Material) -> StressOperators {
    let mu = material.shear_modulus();
    let lam = material.lambda_eff();
    let per_kind = ALL_KINDS
        .iter()
        .map(|&kind| {
            let off = offline.component(kind);
            let [gxx, gxy, gyx, gyy] = &off.grads;
            let sxx = gxx * (2.0 * mu + lam) + gyy * lam;
            let syy = gxx * lam + gyy * (2.0 * mu + lam);
            let sxy = (gxy + gyx) * mu;
            [sxx, syy, sxy]
        })
        .collect();
    StressOperators { per_kind }
}

/// Per-quadrature-point stress state of the whole structure, instance-major.
#[derive(Debug, Clone)]
pub struct StressField {
    pub sxx: DVector<f64>,
    pub syy: DVector<f64>,
    pub sxy: DVector<f64>,
    pub von_mises: DVector<f64>,
    /// Density-relaxed Von Mises stress `sqrt(rho) * vm`.
    pub relaxed: DVector<f64>,
}

pub fn von_mises(sxx: f64, syy: f64, sxy: f64) -> f64 {
    (sxx * sxx + syy * syy - sxx * syy + 3.0 * sxy * sxy).sqrt()
}

/// Evaluates all stress measures from a condensed solution.
pub fn evaluate_stress(
    gs: &GroundStructure,
    offline: &OfflineSet,
    ops: &StressOperators,
    plan: &AggregationPlan,
    rho: &[f64],
    solution: &CondensedSolution,
) -> StressField {
    let n_qp = plan.n_qp();
    let mut sxx = DVector::zeros(n_qp);
    let mut syy = DVector::zeros(n_qp);
    let mut sxy = DVector::zeros(n_qp);
    for (i, inst) in gs.instances.iter().enumerate() {
        let coeffs = solution.instance_coeffs(gs, offline, i);
        let [oxx, oyy, oxy] = ops.of(inst.kind);
        let local = [oxx * &coeffs, oyy * &coeffs, oxy * &coeffs];
        let at = plan.qp_offsets[i];
        for q in 0..local[0].len() {
            sxx[at + q] = local[0][q];
            syy[at + q] = local[1][q];
            sxy[at + q] = local[2][q];
        }
    }
    let von = DVector::from_fn(n_qp, |q, _| von_mises(sxx[q], syy[q], sxy[q]));
    let relaxed = DVector::from_fn(n_qp, |q, _| {
        rho[plan.qp_instance[q]].sqrt() * von[q]
    });
    StressField {
        sxx,
        syy,
        sxy,
        von_mises: von,
        relaxed,
    }
}

/// KS aggregation settings.
#[derive(Debug, Clone)]
pub struct KsConfig {
    /// Aggregation multiplier.
    pub p: f64,
    /// Material yield bound (Pa).
    pub sigma_max: f64,
    /// Optimization bound, at most `sigma_max`.
    pub sigma_hat: f64,
    /// Normalization, smallest of the per-region values at the anchor point.
    pub alpha: f64,
}

impl KsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p <= 0.0 {
            return Err(Error::Aggregation("multiplier p must be positive".into()));
        }
        if self.sigma_hat <= 0.0 || self.sigma_hat > self.sigma_max {
            return Err(Error::Aggregation(
                "need 0 < sigma_hat <= sigma_max".into(),
            ));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Aggregation("alpha must be positive".into()));
        }
        Ok(())
    }
}

/// Per-region normalizations at the anchor design; the final `alpha` is
/// their minimum, which keeps every aggregate an upper bound of its region's
/// stress ratio at the anchor.
pub fn compute_alpha(plan: &AggregationPlan, relaxed0: &DVector<f64>, p: f64, sigma_hat: f64) -> Result<f64> {
    let mut alpha = f64::INFINITY;
    for qps in &plan.region_qps {
        if qps.is_empty() {
            return Err(Error::Aggregation("empty aggregation region".into()));
        }
        let max_r = qps
            .iter()
            .map(|&q| relaxed0[q] / sigma_hat)
            .fold(f64::NEG_INFINITY, f64::max);
        let alpha_m: f64 = qps
            .iter()
            .map(|&q| plan.weights[q] * (p * (relaxed0[q] / sigma_hat - max_r)).exp())
            .sum();
        alpha = alpha.min(alpha_m);
    }
    Ok(alpha)
}

/// One evaluation of every aggregate, with intermediates kept for the
/// sensitivity chain.
#[derive(Debug, Clone)]
pub struct KsEvaluation {
    /// Constraint values, `g_m <= 0` feasible.
    pub g: DVector<f64>,
    /// Max-shifted exponentials per quadrature point.
    pub shifted_exp: DVector<f64>,
    /// Region stress-ratio maxima used as shifts.
    pub region_max: Vec<f64>,
    /// Weighted sums of shifted exponentials per region.
    pub region_sum: Vec<f64>,
}

/// `g_m = (1/p) ln((1/alpha) sum w exp(p sigma_r/sigma_hat)) - 1`, computed
/// with the region maximum factored out of the exponentials.
pub fn evaluate_aggregates(
    plan: &AggregationPlan,
    cfg: &KsConfig,
    relaxed: &DVector<f64>,
) -> KsEvaluation {
    let n_qp = plan.n_qp();
    let mut shifted_exp = DVector::zeros(n_qp);
    let mut region_max = vec![0.0; plan.n_agg];
    let mut region_sum = vec![0.0; plan.n_agg];
    let mut g = DVector::zeros(plan.n_agg);
    for (m, qps) in plan.region_qps.iter().enumerate() {
        let max_r = qps
            .iter()
            .map(|&q| relaxed[q] / cfg.sigma_hat)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &q in qps {
            let e = (cfg.p * (relaxed[q] / cfg.sigma_hat - max_r)).exp();
            shifted_exp[q] = e;
            sum += plan.weights[q] * e;
        }
        region_max[m] = max_r;
        region_sum[m] = sum;
        g[m] = max_r - 1.0 + (sum / cfg.alpha).ln() / cfg.p;
    }
    KsEvaluation {
        g,
        shifted_exp,
        region_max,
        region_sum,
    }
}
