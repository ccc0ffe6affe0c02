//! Gauss–Legendre rules and adaptive tensor-product integration on rectangles.

use alloc::vec::Vec;

use crate::math::{cos, PI};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "rule needs at least one node");
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-15 {
                    let (_, d) = legendre_with_derivative(n, z);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Tensor-product rule over `[x0, x1] × [y0, y1]`.
    pub fn integrate_rect<F: FnMut(f64, f64) -> f64>(
        &self,
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        mut f: F,
    ) -> f64 {
        let hx = 0.5 * (x1 - x0);
        let mx = 0.5 * (x0 + x1);
        let hy = 0.5 * (y1 - y0);
        let my = 0.5 * (y0 + y1);
        let mut acc = 0.0;
        for (&xi, &wi) in self.nodes.iter().zip(&self.weights) {
            let x = mx + hx * xi;
            let mut row = 0.0;
            for (&yj, &wj) in self.nodes.iter().zip(&self.weights) {
                row += wj * f(x, my + hy * yj);
            }
            acc += wi * row;
        }
        acc * hx * hy
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (z * p1 - p0) / (z * z - 1.0))
}

/// Adaptive quadrature over a rectangle by recursive quadrisection.
///
/// A box is accepted once its tensor-rule value agrees with the sum over its
/// four children to within `tol`; children inherit `tol / 2`.
pub fn integrate_rect_adaptive<F: FnMut(f64, f64) -> f64>(
    rule: &GaussLegendre,
    rect: [f64; 4],
    tol: f64,
    max_depth: u32,
    f: &mut F,
) -> f64 {
    let [x0, x1, y0, y1] = rect;
    let whole = rule.integrate_rect(x0, x1, y0, y1, &mut *f);
    refine(rule, rect, whole, tol, max_depth, f)
}

fn refine<F: FnMut(f64, f64) -> f64>(
    rule: &GaussLegendre,
    rect: [f64; 4],
    whole: f64,
    tol: f64,
    depth_left: u32,
    f: &mut F,
) -> f64 {
    let [x0, x1, y0, y1] = rect;
    let xm = 0.5 * (x0 + x1);
    let ym = 0.5 * (y0 + y1);
    let children = [
        [x0, xm, y0, ym],
        [xm, x1, y0, ym],
        [x0, xm, ym, y1],
        [xm, x1, ym, y1],
    ];
    let mut parts = [0.0; 4];
    for (part, c) in parts.iter_mut().zip(&children) {
        *part = rule.integrate_rect(c[0], c[1], c[2], c[3], &mut *f);
    }
    let sum: f64 = parts.iter().sum();
    if depth_left == 0 || (sum - whole).abs() <= tol {
        return sum;
    }
    children
        .iter()
        .zip(parts)
        .map(|(c, part)| refine(rule, *c, part, 0.5 * tol, depth_left - 1, f))
        .sum()
}
