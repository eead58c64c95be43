//! Beta distribution truncated to `[lambda, 1]`.
//!
//! Draws use inversion of the Beta CDF. When the truncation point leaves
//! less mass in the lower tail than in the upper one, the inversion runs on
//! the upper tail `1 - F(x) = I_{1-x}(beta, alpha)` so that no precision is
//! lost to cancellation. If the upper tail mass underflows the draw falls
//! back to rejection from an exponential envelope at `lambda`.

use rand::Rng;
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};

/// Largest double below one; draws are clamped to stay inside `(0, 1)`.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;
const TAIL_UNDERFLOW: f64 = 1e-280;
pub const MAX_REJECTION_TRIES: usize = 10_000;

fn check(alpha: f64, beta: f64, lambda: f64) -> Result<()> {
    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::Sampler(format!(
            "invalid Beta shapes ({alpha}, {beta})"
        )));
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::Sampler(format!(
            "truncation point {lambda} outside [0, 1)"
        )));
    }
    Ok(())
}

fn ln_density(x: f64, alpha: f64, beta: f64, ln_b: f64) -> f64 {
    (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - ln_b
}

/// Log density of `TBeta(alpha, beta, lambda, 1)`; `-inf` outside the support.
pub fn ln_pdf(x: f64, alpha: f64, beta: f64, lambda: f64) -> f64 {
    if !(x >= lambda && x <= 1.0 && x > 0.0 && x < 1.0) || check(alpha, beta, lambda).is_err() {
        return f64::NEG_INFINITY;
    }
    let tail = if lambda == 0.0 {
        1.0
    } else {
        beta_reg(beta, alpha, 1.0 - lambda)
    };
    ln_density(x, alpha, beta, ln_beta(alpha, beta)) - tail.ln()
}

/// Draw from `Beta(alpha, beta)` truncated to `[lambda, 1]`.
pub fn sample_truncated_beta<R: Rng + ?Sized>(
    alpha: f64,
    beta: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<f64> {
    check(alpha, beta, lambda)?;
    let u: f64 = rng.random();
    let ln_b = ln_beta(alpha, beta);
    let upper_mass = if lambda == 0.0 {
        1.0
    } else {
        beta_reg(beta, alpha, 1.0 - lambda)
    };
    if upper_mass < TAIL_UNDERFLOW {
        return reject_near_boundary(alpha, beta, lambda, rng);
    }
    // 1 - target CDF value, computed without cancellation
    let tail_target = (1.0 - u) * upper_mass;
    let x = if tail_target >= 0.5 {
        let p = 1.0 - tail_target;
        invert(lambda, 1.0, alpha, beta, ln_b, |x| {
            beta_reg(alpha, beta, x) - p
        })
    } else {
        invert(lambda, 1.0, alpha, beta, ln_b, |x| {
            tail_target - beta_reg(beta, alpha, 1.0 - x)
        })
    };
    Ok(x.clamp(lambda.max(f64::MIN_POSITIVE), BELOW_ONE))
}

/// Safeguarded Newton iteration for an increasing `g` with a root in
/// `[lo, hi]`; `g' = pdf`.
fn invert(
    mut lo: f64,
    mut hi: f64,
    alpha: f64,
    beta: f64,
    ln_b: f64,
    g: impl Fn(f64) -> f64,
) -> f64 {
    let mean = alpha / (alpha + beta);
    let mut x = if mean > lo && mean < hi {
        mean
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        let gx = g(x);
        if gx == 0.0 {
            return x;
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = ln_density(x, alpha, beta, ln_b).exp();
        let newton = x - gx / d;
        let next = if d.is_finite() && d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300)
            || hi - lo <= f64::EPSILON * hi
        {
            return next;
        }
        x = next;
    }
    x
}

/// Mass piles up right above `lambda`. For log-concave densities
/// (`alpha, beta >= 1`) the tangent of the log density at `lambda` bounds it
/// from above, giving an exponential envelope.
fn reject_near_boundary<R: Rng + ?Sized>(
    alpha: f64,
    beta: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<f64> {
    if alpha < 1.0 || beta < 1.0 {
        return Err(Error::Sampler(format!(
            "TBeta({alpha}, {beta}, {lambda}) has no mass above the truncation point"
        )));
    }
    let slope = (alpha - 1.0) / lambda - (beta - 1.0) / (1.0 - lambda);
    if slope >= 0.0 {
        return Err(Error::Sampler(
            "rejection envelope requires a decreasing density".into(),
        ));
    }
    let rate = -slope;
    let width = 1.0 - lambda;
    let ln_at = |x: f64| (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln();
    let ln_f0 = ln_at(lambda);
    // exponential truncated to [0, width]
    let cap = -(-rate * width).exp_m1();
    for _ in 0..MAX_REJECTION_TRIES {
        let v: f64 = rng.random();
        let t = -(-v * cap).ln_1p() / rate;
        let x = lambda + t;
        if x >= 1.0 {
            continue;
        }
        let accept = ln_at(x) - (ln_f0 - rate * t);
        let w: f64 = rng.random();
        if w.ln() <= accept {
            return Ok(x.clamp(lambda, BELOW_ONE));
        }
    }
    Err(Error::Sampler(format!(
        "TBeta({alpha}, {beta}, {lambda}) rejection sampler exceeded {MAX_REJECTION_TRIES} tries"
    )))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Mean of the truncated density by composite Simpson quadrature of the
    /// unnormalized kernel, independent of the incomplete beta function.
    pub(crate) fn quadrature_mean(alpha: f64, beta: f64, lambda: f64) -> (f64, f64) {
        let n = 20_000;
        let h = (1.0 - lambda) / n as f64;
        let kernel = |x: f64| {
            if x <= 0.0 || x >= 1.0 {
                // endpoints: the kernels used here are finite there
                x.powf(alpha - 1.0) * (1.0 - x).powf(beta - 1.0)
            } else {
                ((alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln()).exp()
            }
        };
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for k in 0..=n {
            let x = lambda + k as f64 * h;
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let f = kernel(x);
            z += w * f;
            m1 += w * x * f;
            m2 += w * x * x * f;
        }
        let mean = m1 / z;
        (mean, (m2 / z - mean * mean).sqrt())
    }

    #[test]
    fn uniform_case_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = sample_truncated_beta(1.0, 1.0, 0.85, &mut rng).unwrap();
            assert!((0.85..1.0).contains(&x));
            sum += x;
        }
        let se = 0.15 / 12f64.sqrt() / (n as f64).sqrt();
        assert!((sum / n as f64 - 0.925).abs() < 3.0 * se);
    }

    #[test]
    fn conjugate_case_matches_quadrature() {
        let (mean, sd) = quadrature_mean(11.0, 1.0, 0.85);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let s: f64 = (0..n)
            .map(|_| sample_truncated_beta(11.0, 1.0, 0.85, &mut rng).unwrap())
            .sum();
        assert!((s / n as f64 - mean).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn untruncated_matches_beta_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_truncated_beta(2.0, 5.0, 0.0, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var_exact = 2.0 * 5.0 / (49.0 * 8.0);
        assert!((mean - 2.0 / 7.0).abs() < 3.0 * (var_exact / n as f64).sqrt());
    }

    #[test]
    fn untruncated_ks_against_rand_distr() {
        use rand_distr::{Beta, Distribution};
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 20_000;
        let mut a: Vec<f64> = (0..n)
            .map(|_| sample_truncated_beta(3.0, 2.0, 0.0, &mut rng).unwrap())
            .collect();
        let beta = Beta::new(3.0, 2.0).unwrap();
        let mut b: Vec<f64> = (0..n).map(|_| beta.sample(&mut rng)).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        // two-sample Kolmogorov-Smirnov statistic
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < n && j < n {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 - j as f64).abs() / n as f64);
        }
        // critical value at alpha = 0.001
        let crit = 1.95 * (2.0 / n as f64).sqrt();
        assert!(d < crit, "KS statistic {d} >= {crit}");
    }

    #[test]
    fn far_tail_truncation_stays_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // almost all mass of Beta(2, 400) lies below 0.9
        for _ in 0..1000 {
            let x = sample_truncated_beta(2.0, 400.0, 0.9, &mut rng).unwrap();
            assert!((0.9..1.0).contains(&x));
        }
        // upper mass underflows: rejection fallback
        for _ in 0..1000 {
            let x = sample_truncated_beta(1.0, 5000.0, 0.5, &mut rng).unwrap();
            assert!((0.5..0.52).contains(&x), "{x}");
        }
        let mut big = 0.0;
        for _ in 0..1000 {
            big += sample_truncated_beta(5000.0, 1.0, 0.95, &mut rng).unwrap();
        }
        assert!(big / 1000.0 > 0.999);
    }

    #[test]
    fn rejection_matches_quadrature() {
        // exponential-envelope branch against the quadrature oracle
        let (mean, sd) = quadrature_mean(3.0, 60.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 50_000;
        let s: f64 = (0..n)
            .map(|_| reject_near_boundary(3.0, 60.0, 0.5, &mut rng).unwrap())
            .sum();
        assert!((s / n as f64 - mean).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn invalid_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(sample_truncated_beta(0.0, 1.0, 0.5, &mut rng).is_err());
        assert!(sample_truncated_beta(1.0, 1.0, 1.0, &mut rng).is_err());
        assert!(sample_truncated_beta(1.0, 1.0, -0.1, &mut rng).is_err());
    }

    #[test]
    fn density_support_and_normalization() {
        assert_eq!(ln_pdf(0.8, 1.0, 1.0, 0.85), f64::NEG_INFINITY);
        assert!((ln_pdf(0.9, 1.0, 1.0, 0.85) - (1.0 / 0.15f64).ln()).abs() < 1e-12);
        // integrates to one
        let n = 10_000;
        let h = (1.0 - 0.6) / n as f64;
        let s: f64 = (0..n)
            .map(|k| ln_pdf(0.6 + (k as f64 + 0.5) * h, 4.0, 2.0, 0.6).exp() * h)
            .sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}
