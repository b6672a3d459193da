//! Log-gamma, regularized incomplete gamma/beta, and the distribution tails built on them.

use super::StatsError;

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
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

/// Natural log of |Γ(x)| (Lanczos approximation, reflection below 0.5).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn gamma_series(a: f64, x: f64) -> Result<f64, StatsError> {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            return Ok(sum * (-x + a * x.ln() - ln_gamma(a)).exp());
        }
    }
    Err(StatsError::NoConvergence("incomplete gamma series"))
}

fn gamma_continued_fraction(a: f64, x: f64) -> Result<f64, StatsError> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok((-x + a * x.ln() - ln_gamma(a)).exp() * h);
        }
    }
    Err(StatsError::NoConvergence("incomplete gamma continued fraction"))
}

fn check_gamma_args(a: f64, x: f64) -> Result<(), StatsError> {
    if !(a > 0.0 && a.is_finite()) || x.is_nan() || x < 0.0 {
        return Err(StatsError::Domain(format!("incomplete gamma at a = {a}, x = {x}")));
    }
    Ok(())
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> Result<f64, StatsError> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let p = if x < a + 1.0 {
        gamma_series(a, x)?
    } else {
        1.0 - gamma_continued_fraction(a, x)?
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Regularized upper incomplete gamma Q(a, x) = 1 − P(a, x).
pub fn gamma_q(a: f64, x: f64) -> Result<f64, StatsError> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let q = if x < a + 1.0 {
        1.0 - gamma_series(a, x)?
    } else {
        gamma_continued_fraction(a, x)?
    };
    Ok(q.clamp(0.0, 1.0))
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(StatsError::NoConvergence("incomplete beta continued fraction"))
}

/// Regularized incomplete beta I_x(a, b).
pub fn beta_regularized(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) || !(0.0..=1.0).contains(&x) {
        return Err(StatsError::Domain(format!(
            "incomplete beta at a = {a}, b = {b}, x = {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    let front = ln_front.exp();
    let v = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x)? / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x)? / b
    };
    Ok(v.clamp(0.0, 1.0))
}

fn check_df(df: f64) -> Result<(), StatsError> {
    if df > 0.0 && df.is_finite() {
        Ok(())
    } else {
        Err(StatsError::Domain(format!("degrees of freedom {df}")))
    }
}

/// P(X ≥ x) for X ~ χ²(df).
pub fn chi_square_upper(x: f64, df: f64) -> Result<f64, StatsError> {
    check_df(df)?;
    if x.is_nan() || x < 0.0 {
        return Err(StatsError::Domain(format!("chi-square statistic {x}")));
    }
    gamma_q(df / 2.0, x / 2.0)
}

/// P(|T| ≥ |t|) for T ~ Student-t(df).
pub fn student_t_two_sided(t: f64, df: f64) -> Result<f64, StatsError> {
    check_df(df)?;
    if t.is_nan() {
        return Err(StatsError::Domain("t statistic is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    beta_regularized(df / 2.0, 0.5, df / (df + t * t))
}

/// P(X ≥ f) for X ~ F(d1, d2).
pub fn f_upper(f: f64, d1: f64, d2: f64) -> Result<f64, StatsError> {
    check_df(d1)?;
    check_df(d2)?;
    if f.is_nan() || f < 0.0 {
        return Err(StatsError::Domain(format!("F statistic {f}")));
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    beta_regularized(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

/// ln C(n, k), summed term by term so it stays accurate for large n.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    assert!(k <= n, "k = {k} exceeds n = {n}");
    let k = k.min(n - k);
    (1..=k)
        .map(|i| ((n - k + i) as f64 / i as f64).ln())
        .sum()
}

fn check_binomial(k: u64, n: u64, p: f64) -> Result<(), StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::Domain(format!("binomial p = {p} outside (0, 1)")));
    }
    if k > n {
        return Err(StatsError::Domain(format!("k = {k} exceeds n = {n}")));
    }
    Ok(())
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// ln P(X = j) for every j in `0..=n`, anchored at the mode and extended
/// outward with the pmf ratio so rounding grows with distance from the bulk.
fn binomial_log_pmf(n: u64, p: f64) -> Vec<f64> {
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let ln_odds = ln_p - ln_q;
    let mode = (((n + 1) as f64 * p).floor() as u64).min(n);
    let mut out = vec![0.0; (n + 1) as usize];
    out[mode as usize] = ln_choose(n, mode) + mode as f64 * ln_p + (n - mode) as f64 * ln_q;
    for j in mode..n {
        out[(j + 1) as usize] = out[j as usize] + ((n - j) as f64 / (j + 1) as f64).ln() + ln_odds;
    }
    for j in (1..=mode).rev() {
        out[(j - 1) as usize] = out[j as usize] + (j as f64 / (n - j + 1) as f64).ln() - ln_odds;
    }
    out
}

/// `(P(X < b), P(X ≥ b))`. The side away from the mean is summed directly
/// and the other is its complement, so both tails sum to 1 and small tails
/// keep full relative precision.
fn binomial_split(b: u64, n: u64, p: f64) -> (f64, f64) {
    if b == 0 {
        return (0.0, 1.0);
    }
    if b > n {
        return (1.0, 0.0);
    }
    let logs = binomial_log_pmf(n, p);
    let sum = |range: &[f64]| log_sum_exp(range.iter().copied()).exp().clamp(0.0, 1.0);
    if b as f64 > n as f64 * p {
        let upper = sum(&logs[b as usize..]);
        (1.0 - upper, upper)
    } else {
        let lower = sum(&logs[..b as usize]);
        (lower, 1.0 - lower)
    }
}

/// Exact one-sided tail P(X ≥ k) for X ~ Binomial(n, p), summed in log space.
pub fn binomial_tail_greater(k: u64, n: u64, p: f64) -> Result<f64, StatsError> {
    check_binomial(k, n, p)?;
    Ok(binomial_split(k, n, p).1)
}

/// Lower tail P(X ≤ k) for X ~ Binomial(n, p).
pub fn binomial_tail_lesser(k: u64, n: u64, p: f64) -> Result<f64, StatsError> {
    check_binomial(k, n, p)?;
    Ok(binomial_split(k + 1, n, p).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        // ln(9!) = ln 362880
        assert!((ln_gamma(10.0) - 362_880f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn chi_square_df2_closed_form() {
        assert_eq!(chi_square_upper(0.0, 3.0).unwrap(), 1.0);
        for x in [0.1, 1.0, 7.2, 20.0, 60.0] {
            let v = chi_square_upper(x, 2.0).unwrap();
            assert!((v - (-x / 2.0f64).exp()).abs() < 1e-14, "x = {x}");
        }
    }

    #[test]
    fn t_and_f_edges() {
        assert_eq!(student_t_two_sided(0.0, 5.0).unwrap(), 1.0);
        assert_eq!(student_t_two_sided(f64::INFINITY, 5.0).unwrap(), 0.0);
        assert_eq!(f_upper(0.0, 2.0, 7.0).unwrap(), 1.0);
        // t(1) is Cauchy: P(|T| ≥ 1) = 1/2
        assert!((student_t_two_sided(1.0, 1.0).unwrap() - 0.5).abs() < 1e-14);
        // F(2, d2) upper tail has the closed form (1 + 2F/d2)^(-d2/2)
        let f = 3.1;
        let closed = (1.0 + 2.0 * f / 10.0f64).powf(-5.0);
        assert!((f_upper(f, 2.0, 10.0).unwrap() - closed).abs() < 1e-13);
    }

    #[test]
    fn domain_errors() {
        assert!(chi_square_upper(-1.0, 2.0).is_err());
        assert!(chi_square_upper(1.0, 0.0).is_err());
        assert!(f_upper(1.0, 2.0, -3.0).is_err());
        assert!(gamma_p(-1.0, 1.0).is_err());
        assert!(beta_regularized(1.0, 1.0, 1.5).is_err());
        assert!(binomial_tail_greater(5, 4, 0.5).is_err());
        assert!(binomial_tail_greater(1, 4, 1.0).is_err());
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(binomial_tail_greater(0, 30, 0.05).unwrap(), 1.0);
        let all = binomial_tail_greater(10, 10, 0.05).unwrap();
        assert!((all / 0.05f64.powi(10) - 1.0).abs() < 1e-12);
        // 1 - P(0) - P(1) for Binomial(30, 0.05)
        let p = binomial_tail_greater(2, 30, 0.05).unwrap();
        assert!((p - 0.44645792456821287).abs() < 1e-12);
        let tiny = binomial_tail_greater(30, 30, 0.05).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-38);
    }

    #[test]
    fn ln_choose_small() {
        assert_eq!(ln_choose(5, 0), 0.0);
        assert!((ln_choose(5, 2) - 10f64.ln()).abs() < 1e-14);
        assert!((ln_choose(52, 5) - 2_598_960f64.ln()).abs() < 1e-12);
    }
}
