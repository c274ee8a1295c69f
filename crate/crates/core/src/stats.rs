//! Welch's unequal-variance t-test.
//!
//! The two-sided p-value is the Student-t tail mass `I_{ν/(ν+t²)}(ν/2, 1/2)`,
//! evaluated with a Lanczos log-gamma and the continued fraction for the
//! regularized incomplete beta function.

use crate::error::{Error, Result};

const CF_MAX_ITERS: usize = 500;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Lanczos approximation (g = 7, 9 terms), valid for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let series = COEFFS[1..].iter().enumerate().fold(COEFFS[0], |acc, (i, &c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITERS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    incomplete_beta(0.5 * df, 0.5, df / (df + t * t))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Welch's t statistic for `mean(a) − mean(b)` with Welch–Satterthwaite degrees of freedom.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Degenerate(format!("need at least two samples per group, got {} and {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (variance(a) / na, variance(b) / nb);
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return Err(Error::Degenerate("both samples have zero variance".into()));
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchTest { t, df, p: student_t_two_sided(t, df) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_known_values() {
        assert_relative_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(5.0), 24f64.ln(), epsilon = 1e-13);
        assert_relative_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(0.1), 2.252_712_651_734_206, epsilon = 1e-13);
    }

    #[test]
    fn incomplete_beta_identities() {
        // I_x(1, 1) = x and I_x(a, 1) = x^a.
        assert_relative_eq!(incomplete_beta(1.0, 1.0, 0.3), 0.3, epsilon = 1e-14);
        assert_relative_eq!(incomplete_beta(2.5, 1.0, 0.4), 0.4f64.powf(2.5), epsilon = 1e-14);
        assert_relative_eq!(incomplete_beta(3.0, 4.0, 0.5) + incomplete_beta(4.0, 3.0, 0.5), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn t_tail_one_df_is_cauchy() {
        // df = 1: P(|T| > t) = 1 − 2 atan(t) / π.
        for t in [0.3, 1.0, 4.0, 30.0] {
            let want = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert_relative_eq!(student_t_two_sided(t, 1.0), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn welch_examples() {
        let r = welch_ttest(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_relative_eq!(r.t, -1.0, epsilon = 1e-12);
        assert_relative_eq!(r.df, 8.0, epsilon = 1e-12);
        assert_relative_eq!(r.p, 0.3466, epsilon = 1e-4);

        let same = welch_ttest(&[1.0, 3.0, 2.0], &[1.0, 3.0, 2.0]).unwrap();
        assert_eq!((same.t, same.p), (0.0, 1.0));
    }

    #[test]
    fn welch_scale_invariant() {
        let a = [0.3, 1.7, 2.2, 0.9];
        let b = [1.1, 2.9, 3.5, 2.0, 2.4];
        let r = welch_ttest(&a, &b).unwrap();
        let a10: Vec<f64> = a.iter().map(|x| x * 10.0).collect();
        let b10: Vec<f64> = b.iter().map(|x| x * 10.0).collect();
        let s = welch_ttest(&a10, &b10).unwrap();
        assert_relative_eq!(r.t, s.t, epsilon = 1e-12);
        assert_relative_eq!(r.p, s.p, epsilon = 1e-12);
    }

    #[test]
    fn welch_degenerate() {
        assert!(matches!(welch_ttest(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(matches!(welch_ttest(&[1.0], &[2.0, 3.0]), Err(Error::Degenerate(_))));
    }
}
