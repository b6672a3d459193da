//! Reference implementations used as test oracles.
//!
//! Each one is written differently from the library routine it checks:
//! gift wrapping instead of monotone chain, pure power series instead of
//! continued fractions, exact rational arithmetic for binomial tails.

#![allow(dead_code)]

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, ToPrimitive, Zero};

pub fn iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = w * h;
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    inter / (area(a) + area(b) - inter)
}

/// Convex hull area by gift wrapping, then the shoelace formula.
pub fn hull_area(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return 0.0;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let dist2 = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2);
    let start = 0;
    let mut hull = vec![start];
    let mut current = start;
    loop {
        let mut candidate = (current + 1) % pts.len();
        for i in 0..pts.len() {
            if i == current {
                continue;
            }
            let c = cross(pts[current], pts[candidate], pts[i]);
            if c < 0.0 || (c == 0.0 && dist2(pts[current], pts[i]) > dist2(pts[current], pts[candidate])) {
                candidate = i;
            }
        }
        current = candidate;
        if current == start || hull.len() > pts.len() {
            break;
        }
        hull.push(current);
    }
    let mut twice = 0.0;
    for i in 0..hull.len() {
        let (a, b) = (pts[hull[i]], pts[hull[(i + 1) % hull.len()]]);
        twice += a.0 * b.1 - b.0 * a.1;
    }
    (twice / 2.0).abs()
}

pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

pub fn variation_ratio(labels: &[usize]) -> f64 {
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; max_label + 1];
    for &l in labels {
        counts[l] += 1;
    }
    1.0 - *counts.iter().max().unwrap() as f64 / labels.len() as f64
}

/// Mean of the probability vectors, zero-padding shorter ones.
pub fn mean_probs(probs: &[Vec<f64>]) -> Vec<f64> {
    let k = probs.iter().map(|p| p.len()).max().unwrap_or(0);
    let mut m = vec![0.0; k];
    for p in probs {
        for (i, v) in p.iter().enumerate() {
            m[i] += v;
        }
    }
    m.iter().map(|v| v / probs.len() as f64).collect()
}

pub fn mutual_information(probs: &[Vec<f64>]) -> f64 {
    let expected: f64 = probs.iter().map(|p| entropy(p)).sum::<f64>() / probs.len() as f64;
    (entropy(&mean_probs(probs)) - expected).max(0.0)
}

/// Sum over the four coordinates of the population variance.
pub fn total_variance(boxes: &[[f64; 4]]) -> f64 {
    let n = boxes.len() as f64;
    (0..4)
        .map(|c| {
            let mean = boxes.iter().map(|b| b[c]).sum::<f64>() / n;
            boxes.iter().map(|b| (b[c] - mean).powi(2)).sum::<f64>() / n
        })
        .sum()
}

/// Sum of the hull areas of each corner's cloud.
pub fn prediction_surface(boxes: &[[f64; 4]]) -> f64 {
    let corners = [(0, 1), (2, 1), (0, 3), (2, 3)];
    corners
        .iter()
        .map(|&(xi, yi)| {
            let pts: Vec<(f64, f64)> = boxes.iter().map(|b| (b[xi], b[yi])).collect();
            hull_area(&pts)
        })
        .sum()
}

/// ln Γ(a) for a a positive multiple of 1/2, from the factorial identities.
pub fn ln_gamma_half(a: f64) -> f64 {
    let twice = (2.0 * a).round() as u64;
    assert!(twice >= 1 && (twice as f64 - 2.0 * a).abs() < 1e-12, "a = {a} is not a half-integer");
    if twice.is_multiple_of(2) {
        // Γ(m) = (m − 1)!
        (1..twice / 2).map(|i| (i as f64).ln()).sum()
    } else {
        // Γ(m + 1/2) = √π · Π_{i=1..m} (i − 1/2)
        let m = (twice - 1) / 2;
        0.5 * std::f64::consts::PI.ln() + (1..=m).map(|i| (i as f64 - 0.5).ln()).sum::<f64>()
    }
}

/// Lower regularized gamma P(a, x) by its power series alone.
pub fn gamma_p_series(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut n = 1.0;
    while term.abs() > sum.abs() * 1e-18 {
        term *= x / (a + n);
        sum += term;
        n += 1.0;
        assert!(n < 1e6, "gamma series did not converge");
    }
    (a * x.ln() - x - ln_gamma_half(a) + sum.ln()).exp()
}

pub fn chi_square_upper(x: f64, df: f64) -> f64 {
    1.0 - gamma_p_series(df / 2.0, x / 2.0)
}

/// Regularized incomplete beta by the hypergeometric power series, using
/// the reflection `I_x(a, b) = 1 − I_{1−x}(b, a)` above the mean.
pub fn beta_series(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x > a / (a + b) {
        return 1.0 - beta_series(1.0 - x, b, a);
    }
    let mut coeff = 1.0;
    let mut sum = 1.0 / a;
    let mut n = 1.0;
    loop {
        coeff *= (n - b) * x / n;
        let t = coeff / (a + n);
        sum += t;
        n += 1.0;
        if t.abs() < 1e-20 * sum.abs() || coeff == 0.0 {
            break;
        }
        assert!(n < 1e6, "beta series did not converge");
    }
    let ln_beta = ln_gamma_half(a) + ln_gamma_half(b) - ln_gamma_half(a + b);
    (a * x.ln() - ln_beta).exp() * sum
}

pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    beta_series(df / (df + t * t), df / 2.0, 0.5)
}

pub fn f_upper(f: f64, d1: f64, d2: f64) -> f64 {
    beta_series(d2 / (d2 + d1 * f), d2 / 2.0, d1 / 2.0)
}

/// Exact P(X ≥ k) for X ~ Binomial(n, num/den), rounded to f64 at the end.
pub fn binomial_tail_exact(k: u64, n: u64, num: i64, den: i64) -> f64 {
    let p = BigRational::new(BigInt::from(num), BigInt::from(den));
    let q = BigRational::one() - p.clone();
    let mut total = BigRational::zero();
    let mut choose = BigInt::one();
    for j in 0..=n {
        if j > 0 {
            choose = choose * BigInt::from(n - j + 1) / BigInt::from(j);
        }
        if j >= k {
            let term = BigRational::from_integer(choose.clone())
                * num::pow(p.clone(), j as usize)
                * num::pow(q.clone(), (n - j) as usize);
            total += term;
        }
    }
    total.to_f64().expect("tail converts to f64")
}

/// Two-sided Student-t p-value for three degrees of freedom in closed form.
pub fn student_t3_two_sided(t: f64) -> f64 {
    let u = t.abs() / 3f64.sqrt();
    1.0 - 2.0 / std::f64::consts::PI * (u.atan() + u / (1.0 + u * u))
}
