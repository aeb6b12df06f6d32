//! Triangle quadrature rules on the reference element {(x, y) : x, y >= 0,
//! x + y <= 1}.
//!
//! Stiffness assembly and stress sampling share the positive four-point rule,
//! which integrates quadratics exactly, so second-order stiffness integrands
//! are handled without negative weights. Full-order stress validation scans a
//! nine-point degree-5 conical product rule in addition to element centroids.

/// Quadrature points in reference coordinates with matching weights.
/// Weights sum to the reference area 1/2 and are all positive.
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Positive four-point rule, exact for polynomials of total degree <= 2.
///
/// Symmetric orbit at barycentric (1/12, 1/12, 5/6) with weight 4/27 of the
/// area plus the centroid at 5/9 of the area.
pub fn degree2_four_point() -> QuadRule {
    let area = 0.5;
    let a = 1.0 / 12.0;
    let c = 5.0 / 6.0;
    QuadRule {
        points: vec![
            [1.0 / 3.0, 1.0 / 3.0],
            [a, a],
            [c, a],
            [a, c],
        ],
        weights: vec![
            area * 5.0 / 9.0,
            area * 4.0 / 27.0,
            area * 4.0 / 27.0,
            area * 4.0 / 27.0,
        ],
    }
}

// Conical product rule: 3-point Gauss-Jacobi (weight 1-u) times 3-point
// Gauss-Legendre, collapsed onto the triangle. Exact for degree <= 5.
const JACOBI_U: [f64; 3] = [
    0.088587959512703947,
    0.409466864440734711,
    0.787659461760847056,
];
const JACOBI_W: [f64; 3] = [
    0.200931913738959631,
    0.229241106359586247,
    0.069826979901454123,
];
const LEGENDRE_U: [f64; 3] = [
    0.112701665379258311,
    0.5,
    0.887298334620741689,
];
const LEGENDRE_W: [f64; 3] = [
    5.0 / 18.0,
    4.0 / 9.0,
    5.0 / 18.0,
];

/// Nine-point symmetric-degree rule, exact for polynomials of degree <= 5.
/// All points are interior, so no sample lands on an element boundary.
pub fn degree5_nine_point() -> QuadRule {
    let mut points = Vec::with_capacity(9);
    let mut weights = Vec::with_capacity(9);
    for (u, wu) in JACOBI_U.iter().zip(JACOBI_W) {
        for (v, wv) in LEGENDRE_U.iter().zip(LEGENDRE_W) {
            points.push([*u, v * (1.0 - u)]);
            weights.push(wu * wv);
        }
    }
    QuadRule { points, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exact_monomial(p: u32, q: u32) -> f64 {
        // integral over reference triangle of x^p y^q = p! q! / (p + q + 2)!
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
        fact(p) * fact(q) / fact(p + q + 2)
    }

    fn check_rule(rule: &QuadRule, degree: u32) {
        assert!(rule.weights.iter().all(|&w| w > 0.0), "weights positive");
        let total: f64 = rule.weights.iter().sum();
        assert_relative_eq!(total, 0.5, max_relative = 1e-14);
        for p in 0..=degree {
            for q in 0..=(degree - p) {
                let got: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(pt, w)| w * pt[0].powi(p as i32) * pt[1].powi(q as i32))
                    .sum();
                assert_relative_eq!(
                    got,
                    exact_monomial(p, q),
                    max_relative = 1e-12,
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn four_point_rule_exact_degree_two() {
        check_rule(&degree2_four_point(), 2);
    }

    #[test]
    fn nine_point_rule_exact_degree_five() {
        let rule = degree5_nine_point();
        check_rule(&rule, 5);
        assert_eq!(rule.points.len(), 9);
        // every point strictly interior
        for p in &rule.points {
            assert!(p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < 1.0);
        }
    }

    #[test]
    fn four_point_rule_misses_some_cubic() {
        // The rule is degree 2 by construction; x^3 integrates inexactly,
        // which documents that the positivity trade-off costs one order.
        let rule = degree2_four_point();
        let got: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(pt, w)| w * pt[0].powi(3))
            .sum();
        assert!((got - exact_monomial(3, 0)).abs() > 1e-6);
    }
}
