//! Variance-preserving forward diffusion on `t ∈ [0, 1]`.
//!
//! The forward process is `dx = -½ β(t) x dt + √β(t) dw` with the linear
//! schedule `β(t) = β_min + (β_max − β_min) t`. Its transition kernel from
//! `x₀` is Gaussian with mean `α(t) x₀` and variance `1 − α(t)²`, where
//! `α(t) = exp(−½ ∫₀ᵗ β)`.

use crate::error::{Error, Result};
use crate::numerics::{gaussian_sample, Matrix, Rng, Vector};

/// Reverse integration stops here instead of at `t = 0`.
pub const DEFAULT_T_EPS: f64 = 1e-3;

pub const DEFAULT_BETA_MIN: f64 = 0.01;
pub const DEFAULT_BETA_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    beta_min: f64,
    beta_max: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule {
            beta_min: DEFAULT_BETA_MIN,
            beta_max: DEFAULT_BETA_MAX,
        }
    }
}

/// Closed-form Gaussian kernel `p_t(x_t | x_0)` at a fixed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationKernel {
    pub mean_coeff: f64,
    pub variance: f64,
}

/// A noised sample together with its denoising score-matching target.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub xt: Vector,
    pub score_target: Vector,
    /// The standard normal draw that produced `xt`.
    pub noise: Vector,
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange { t, domain: "[0, 1]" })
    }
}

impl NoiseSchedule {
    pub fn new(beta_min: f64, beta_max: f64) -> Result<Self> {
        if !(beta_min > 0.0 && beta_min < beta_max && beta_max.is_finite()) {
            return Err(Error::invalid(format!(
                "noise schedule needs 0 < beta_min < beta_max, got {beta_min} and {beta_max}"
            )));
        }
        Ok(NoiseSchedule { beta_min, beta_max })
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    pub fn beta(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.beta_min + (self.beta_max - self.beta_min) * t)
    }

    pub fn integral_beta(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t)
    }

    pub fn kernel(&self, t: f64) -> Result<PerturbationKernel> {
        let b = self.integral_beta(t)?;
        Ok(PerturbationKernel {
            mean_coeff: (-0.5 * b).exp(),
            variance: -(-b).exp_m1(),
        })
    }

    pub fn mean_coeff(&self, t: f64) -> Result<f64> {
        Ok(self.kernel(t)?.mean_coeff)
    }

    pub fn variance(&self, t: f64) -> Result<f64> {
        Ok(self.kernel(t)?.variance)
    }

    /// `g(t) = √β(t)`.
    pub fn diffusion(&self, t: f64) -> Result<f64> {
        Ok(self.beta(t)?.sqrt())
    }

    /// Draws `x_t ~ p_t(· | x0)` and returns the exact conditional score there.
    pub fn perturb(&self, x0: &[f64], t: f64, rng: &mut Rng) -> Result<Perturbation> {
        let z = gaussian_sample(rng, x0.len())?;
        self.perturb_with_noise(x0, t, z)
    }

    /// As [`perturb`](Self::perturb) with the standard normal draw supplied.
    pub fn perturb_with_noise(&self, x0: &[f64], t: f64, noise: Vector) -> Result<Perturbation> {
        check_time(t)?;
        if t == 0.0 {
            return Err(Error::TimeOutOfRange {
                t,
                domain: "(0, 1] (the score target is undefined at zero variance)",
            });
        }
        if noise.len() != x0.len() {
            return Err(Error::ShapeMismatch {
                op: "perturb",
                left: (x0.len(), 1),
                right: (noise.len(), 1),
            });
        }
        let k = self.kernel(t)?;
        let std = k.variance.sqrt();
        let xt: Vec<f64> = x0
            .iter()
            .zip(noise.iter())
            .map(|(x, z)| k.mean_coeff * x + std * z)
            .collect();
        let score_target = xt
            .iter()
            .zip(x0)
            .map(|(xt, x0)| -(xt - k.mean_coeff * x0) / k.variance)
            .collect::<Vec<_>>();
        Ok(Perturbation {
            xt: xt.into(),
            score_target: score_target.into(),
            noise,
        })
    }

    /// Drift of the reverse-time SDE, `f(x, t) − g(t)² s`, for one point.
    pub fn reverse_drift(&self, x: &[f64], t: f64, score: &[f64]) -> Result<Vector> {
        if x.len() != score.len() {
            return Err(Error::ShapeMismatch {
                op: "reverse_drift",
                left: (x.len(), 1),
                right: (score.len(), 1),
            });
        }
        let beta = self.beta(t)?;
        Ok(x.iter()
            .zip(score)
            .map(|(x, s)| -0.5 * beta * x - beta * s)
            .collect::<Vec<_>>()
            .into())
    }

    /// Row-wise [`reverse_drift`](Self::reverse_drift) over a batch.
    pub fn reverse_drift_batch(&self, x: &Matrix, t: f64, score: &Matrix) -> Result<Matrix> {
        if x.shape() != score.shape() {
            return Err(Error::ShapeMismatch {
                op: "reverse_drift_batch",
                left: x.shape(),
                right: score.shape(),
            });
        }
        let beta = self.beta(t)?;
        let data = x
            .as_slice()
            .iter()
            .zip(score.as_slice())
            .map(|(x, s)| -0.5 * beta * x - beta * s)
            .collect();
        Matrix::new(x.rows(), x.cols(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Adaptive Simpson quadrature, independent of the closed form.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            let m = 0.5 * (a + b);
            (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
        }
        fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            recurse(f, a, m, left, tol / 2.0, depth - 1) + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
        recurse(f, a, b, simpson(f, a, b), tol, 40)
    }

    #[test]
    fn beta_endpoints() {
        let s = NoiseSchedule::default();
        assert_eq!(s.beta(0.0).unwrap(), 0.01);
        assert_eq!(s.beta(1.0).unwrap(), 2.0);
        assert!((s.beta(0.5).unwrap() - 1.005).abs() < 1e-15);
        assert!(s.beta(1.5).is_err());
        assert!(s.beta(-0.1).is_err());
        assert!(s.integral_beta(1.01).is_err());
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(NoiseSchedule::new(0.0, 1.0).is_err());
        assert!(NoiseSchedule::new(2.0, 1.0).is_err());
        assert!(NoiseSchedule::new(1.0, 1.0).is_err());
    }

    #[test]
    fn integral_matches_quadrature() {
        let s = NoiseSchedule::default();
        assert_eq!(s.integral_beta(0.0).unwrap(), 0.0);
        assert!((s.integral_beta(1.0).unwrap() - 1.005).abs() < 1e-15);
        let mut rng = Rng::new(1);
        for _ in 0..50 {
            let t = rng.uniform();
            let beta = |u: f64| s.beta(u).unwrap();
            let q = adaptive_simpson(&beta, 0.0, t, 1e-13);
            assert!((q - s.integral_beta(t).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_at_endpoints() {
        let s = NoiseSchedule::default();
        let k0 = s.kernel(0.0).unwrap();
        assert_eq!(k0.mean_coeff, 1.0);
        assert_eq!(k0.variance, 0.0);
        let k1 = s.kernel(1.0).unwrap();
        assert!((k1.mean_coeff - (-0.5025f64).exp()).abs() < 1e-15);
        assert!((k1.variance - (1.0 - (-1.005f64).exp())).abs() < 1e-15);
        assert!((k1.mean_coeff - 0.60502).abs() < 1e-5);
        assert!((k1.variance - 0.63396).abs() < 1e-5);
    }

    #[test]
    fn variance_preserving_identity() {
        let s = NoiseSchedule::default();
        let mut rng = Rng::new(3);
        let mut last = 0.0;
        let mut ts: Vec<f64> = (0..1000).map(|_| rng.uniform()).collect();
        ts.sort_by(f64::total_cmp);
        for t in ts {
            let k = s.kernel(t).unwrap();
            assert!((k.mean_coeff * k.mean_coeff + k.variance - 1.0).abs() < 1e-12);
            assert!(k.variance >= last);
            last = k.variance;
        }
    }

    #[test]
    fn perturb_near_zero_and_at_zero() {
        let s = NoiseSchedule::default();
        let x0 = [1.5, -2.0];
        let p = s.perturb(&x0, 1e-9, &mut Rng::new(0)).unwrap();
        for (a, b) in p.xt.iter().zip(x0) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!(s.perturb(&x0, 0.0, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn score_target_is_scaled_noise() {
        let s = NoiseSchedule::default();
        let mut rng = Rng::new(4);
        for _ in 0..100 {
            let t = 1.0 - rng.uniform() * 0.999;
            let x0 = [rng.normal(), rng.normal(), rng.normal()];
            let p = s.perturb(&x0, t, &mut rng).unwrap();
            let sd = s.variance(t).unwrap().sqrt();
            for (target, z) in p.score_target.iter().zip(p.noise.iter()) {
                assert!((target + z / sd).abs() <= 1e-9 * (1.0 + target.abs()));
            }
        }
    }

    #[test]
    fn standard_normal_stays_standard_normal() {
        let s = NoiseSchedule::default();
        let mut rng = Rng::new(8);
        let n = 20_000;
        for &t in &[0.05, 0.4, 0.9] {
            let mut sum = [0.0; 2];
            let mut sq = [0.0; 2];
            let mut cross = 0.0;
            for _ in 0..n {
                let x0 = [rng.normal(), rng.normal()];
                let p = s.perturb(&x0, t, &mut rng).unwrap();
                for d in 0..2 {
                    sum[d] += p.xt[d];
                    sq[d] += p.xt[d] * p.xt[d];
                }
                cross += p.xt[0] * p.xt[1];
            }
            for d in 0..2 {
                let mean = sum[d] / n as f64;
                let var = sq[d] / n as f64 - mean * mean;
                assert!(mean.abs() < 4.0 / (n as f64).sqrt());
                assert!((var - 1.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
            }
            assert!((cross / n as f64).abs() < 4.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn reverse_drift_cases() {
        let s = NoiseSchedule::default();
        let t = 0.3;
        let beta = s.beta(t).unwrap();
        let d = s.reverse_drift(&[2.0, -1.0], t, &[0.0, 0.0]).unwrap();
        assert_eq!(&d[..], &[-0.5 * beta * 2.0, 0.5 * beta]);
        let d = s.reverse_drift(&[0.0], t, &[3.0]).unwrap();
        assert_eq!(d[0], -beta * 3.0);
        assert!(s.reverse_drift(&[0.0, 1.0], t, &[3.0]).is_err());

        let mut rng = Rng::new(6);
        for _ in 0..100 {
            let t = rng.uniform();
            let x = [rng.normal(), rng.normal()];
            let sc = [rng.normal(), rng.normal()];
            let d = s.reverse_drift(&x, t, &sc).unwrap();
            let b = s.beta_min() + (s.beta_max() - s.beta_min()) * t;
            for i in 0..2 {
                let expected = -0.5 * b * x[i] - b * sc[i];
                assert!((d[i] - expected).abs() <= 1e-14 * (1.0 + expected.abs()));
            }
        }
    }
}
