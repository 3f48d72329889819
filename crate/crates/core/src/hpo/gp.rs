//! Gaussian-process surrogate with a Matérn-5/2 kernel and Expected
//! Improvement acquisition, on inputs already encoded into `[0, 1]^d`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::erf::erfc;

pub const NOISE: f64 = 1e-6;

/// Candidate isotropic length scales, chosen by marginal likelihood.
const LENGTH_SCALES: [f64; 12] = [0.02, 0.04, 0.07, 0.1, 0.15, 0.2, 0.3, 0.45, 0.7, 1.0, 1.5, 2.5];

pub fn matern52(r: f64, length_scale: f64) -> f64 {
    let s = 5f64.sqrt() * r / length_scale;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub struct Gp {
    xs: Vec<Vec<f64>>,
    length_scale: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    y_mean: f64,
    y_std: f64,
}

impl Gp {
    /// Fits on raw objectives. Returns `None` when the targets carry no
    /// information (fewer than two points or zero spread) or every kernel
    /// matrix fails to factor.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Option<Self> {
        let n = ys.len();
        if n < 2 {
            return None;
        }
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let y_std = (ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if !(y_std > 0.0 && y_std.is_finite()) {
            return None;
        }
        let y = DVector::from_iterator(n, ys.iter().map(|v| (v - y_mean) / y_std));

        type Candidate = (f64, f64, Cholesky<f64, Dyn>, DVector<f64>);
        let mut best: Option<Candidate> = None;
        for &ls in &LENGTH_SCALES {
            let k = DMatrix::from_fn(n, n, |i, j| {
                matern52(dist(&xs[i], &xs[j]), ls) + if i == j { NOISE } else { 0.0 }
            });
            let Some(chol) = k.cholesky() else { continue };
            let alpha = chol.solve(&y);
            let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det;
            if lml.is_finite() && best.as_ref().is_none_or(|b| lml > b.0) {
                best = Some((lml, ls, chol, alpha));
            }
        }
        let (_, length_scale, chol, alpha) = best?;
        Some(Self {
            xs: xs.to_vec(),
            length_scale,
            chol,
            alpha,
            y_mean,
            y_std,
        })
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    /// Posterior mean and standard deviation in the original objective units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| matern52(dist(xi, x), self.length_scale)));
        let mean = k.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&k).unwrap_or_else(|| DVector::zeros(k.len()));
        let var = (1.0 - v.norm_squared()).max(0.0);
        (self.y_mean + self.y_std * mean, self.y_std * var.sqrt())
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement below `best` for a Gaussian posterior.
pub fn expected_improvement(mean: f64, sd: f64, best: f64) -> f64 {
    let diff = best - mean;
    if sd <= 0.0 {
        return diff.max(0.0);
    }
    let z = diff / sd;
    diff * normal_cdf(z) + sd * normal_pdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_at_zero_and_decay() {
        assert_eq!(matern52(0.0, 0.3), 1.0);
        let s = 5f64.sqrt();
        let want = (1.0 + s + 5.0 / 3.0) * (-s).exp();
        assert!((matern52(0.5, 0.5) - want).abs() < 1e-15);
        assert!(matern52(0.2, 0.3) > matern52(0.4, 0.3));
    }

    #[test]
    fn interpolates_training_points() {
        let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x[0]).sin()).collect();
        let gp = Gp::fit(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (m, s) = gp.predict(x);
            assert!((m - y).abs() < 1e-3, "{m} vs {y}");
            assert!(s < 1e-2);
        }
        let (_, s_far) = gp.predict(&[3.0]);
        assert!(s_far > 0.5);
    }

    #[test]
    fn flat_targets_are_degenerate() {
        let xs = vec![vec![0.0], vec![1.0]];
        assert!(Gp::fit(&xs, &[2.0, 2.0]).is_none());
        assert!(Gp::fit(&xs[..1], &[1.0]).is_none());
    }

    #[test]
    fn expected_improvement_reference() {
        // Closed form at mean == best: sd / sqrt(2π).
        let ei = expected_improvement(1.0, 2.0, 1.0);
        assert!((ei - 2.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert_eq!(expected_improvement(3.0, 0.0, 1.0), 0.0);
        assert_eq!(expected_improvement(0.5, 0.0, 1.0), 0.5);
        assert!(expected_improvement(0.0, 1.0, 1.0) > expected_improvement(0.5, 1.0, 1.0));
    }
}
