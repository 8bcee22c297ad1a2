//! Frequency quadrature over the whole real line.
//!
//! The line is compactified by lambda = c tan(u) with u on (-pi/2, pi/2) and
//! the u-interval is covered by composite Gauss-Legendre panels.  Integrands
//! here decay like 1/lambda^2, so the transformed integrand is smooth and
//! bounded up to the interval ends.

use nalgebra::DMatrix;

use crate::linalg::spectral_radius;
use crate::model::OqhoModel;

/// Gauss-Legendre nodes per panel.
const PANEL_ORDER: usize = 8;

/// Default node budget used by the command-line tools.
pub const DEFAULT_NODES: usize = 2048;

/// Nodes and weights of an order-p Gauss-Legendre rule on [-1, 1], by Newton
/// iteration on the Legendre recurrence.
fn gauss_legendre(p: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; p];
    let mut weights = vec![0.0; p];
    for i in 0..p {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (p as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre value and derivative by the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=p {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            dp = p as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Symmetric quadrature rule for integrals over the real frequency axis.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    scale: f64,
}

impl FrequencyGrid {
    /// Builds a rule with at least `min_nodes` nodes and compactification
    /// scale `scale`.  The panel count is rounded up to an even number so
    /// the rule is symmetric about zero.
    pub fn new(min_nodes: usize, scale: f64) -> Self {
        assert!(scale > 0.0 && scale.is_finite(), "scale must be positive");
        let mut panels = min_nodes.max(PANEL_ORDER).div_ceil(PANEL_ORDER);
        if panels % 2 != 0 {
            panels += 1;
        }
        let (gl_nodes, gl_weights) = gauss_legendre(PANEL_ORDER);

        let half_pi = std::f64::consts::FRAC_PI_2;
        let width = std::f64::consts::PI / panels as f64;
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(panels * PANEL_ORDER);
        for panel in 0..panels {
            let left = -half_pi + panel as f64 * width;
            let center = left + width / 2.0;
            for (x, w) in gl_nodes.iter().zip(gl_weights.iter()) {
                let u = center + x * width / 2.0;
                let wu = w * width / 2.0;
                let cos_u = u.cos();
                points.push((scale * u.tan(), wu * scale / (cos_u * cos_u)));
            }
        }
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (nodes, weights) = points.into_iter().unzip();
        Self {
            nodes,
            weights,
            scale,
        }
    }

    /// Default rule for a model: the scale is ten times the spectral radius
    /// of the drift matrix, which brackets all resonances of the spectral
    /// functions.
    pub fn for_model(model: &OqhoModel, min_nodes: usize) -> Self {
        Self::new(min_nodes, Self::default_scale(model.a()))
    }

    /// Default compactification scale for a drift matrix.
    pub fn default_scale(a: &DMatrix<f64>) -> f64 {
        (10.0 * spectral_radius(a)).max(1.0)
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

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Weighted sum of per-node values given in node order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.nodes.len());
        self.weights
            .iter()
            .zip(values.iter())
            .map(|(w, v)| w * v)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rule_is_symmetric_and_sorted() {
        let grid = FrequencyGrid::new(200, 7.0);
        let n = grid.len();
        assert!(n >= 200);
        for i in 1..n {
            assert!(grid.nodes()[i] > grid.nodes()[i - 1]);
        }
        for i in 0..n {
            assert_abs_diff_eq!(grid.nodes()[i], -grid.nodes()[n - 1 - i], epsilon = 1e-9);
            assert_abs_diff_eq!(
                grid.weights()[i],
                grid.weights()[n - 1 - i],
                epsilon = 1e-9 * grid.weights()[i].abs()
            );
            assert!(grid.weights()[i] > 0.0);
        }
    }

    #[test]
    fn integrates_a_cauchy_density_exactly() {
        // int 1/(c^2 + x^2) dx = pi / c for every compactification scale.
        for &c in &[1.0, 5.0, 40.0] {
            let grid = FrequencyGrid::new(512, c);
            let values: Vec<f64> = grid.nodes().iter().map(|x| 1.0 / (c * c + x * x)).collect();
            assert_abs_diff_eq!(
                grid.integrate(&values),
                std::f64::consts::PI / c,
                epsilon = 1e-12 / c
            );
        }
    }

    #[test]
    fn integrates_a_shifted_lorentzian() {
        // Peak away from the origin, mimicking a resonance.
        let c = 30.0;
        let grid = FrequencyGrid::new(2048, c);
        let (x0, hw) = (3.3, 1.3);
        let values: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|x| 1.0 / (hw * hw + (x - x0) * (x - x0)))
            .collect();
        assert_abs_diff_eq!(
            grid.integrate(&values),
            std::f64::consts::PI / hw,
            epsilon = 1e-8
        );
    }
}
