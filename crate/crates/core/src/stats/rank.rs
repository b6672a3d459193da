use super::special::{chi_square_upper, f_upper, student_t_two_sided};
use super::{Band, StatResult, StatsError, TestKind};

/// Ranks 1..=N with tied values sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share rank ((i+1) + (j+1)) / 2
        let rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    Ok(ranks)
}

/// Σ (t³ − t) over tie groups.
fn tie_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        sum += t * t * t - t;
        i = j + 1;
    }
    sum
}

/// Kruskal–Wallis H with tie correction, χ² p-value on k − 1 df, and η² effect size.
pub fn kruskal_wallis<G: AsRef<[f64]>>(groups: &[G]) -> Result<StatResult, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::InsufficientData { needed: 2, got: k });
    }
    if let Some(i) = groups.iter().position(|g| g.as_ref().is_empty()) {
        return Err(StatsError::EmptyGroup(i));
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let n = pooled.len();
    if n < 3 {
        return Err(StatsError::InsufficientData { needed: 3, got: n });
    }
    let ranks = average_ranks(&pooled)?;
    let nf = n as f64;
    let df = (k - 1) as f64;

    let correction = 1.0 - tie_sum(&pooled) / (nf * nf * nf - nf);
    let h = if correction <= 0.0 {
        // every value tied
        0.0
    } else {
        let mut offset = 0;
        let mut sum = 0.0;
        for g in groups {
            let len = g.as_ref().len();
            let r: f64 = ranks[offset..offset + len].iter().sum();
            sum += r * r / len as f64;
            offset += len;
        }
        let raw = 12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0);
        (raw / correction).max(0.0)
    };
    let p = chi_square_upper(h, df)?;
    let eta2 = if n > k {
        ((h - k as f64 + 1.0) / (nf - k as f64)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(StatResult {
        test: TestKind::KruskalWallis,
        statistic: h,
        p_value: p,
        effect: Some(eta2),
        df: vec![df],
        band: Some(Band::eta_squared(eta2)),
    })
}

/// Pearson product-moment correlation; `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn check_pair(x: &[f64], y: &[f64], needed: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < needed {
        return Err(StatsError::InsufficientData {
            needed,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

const PERFECT: f64 = 1.0 - 1e-12;

/// Spearman rank correlation with a two-sided t-approximation p-value on n − 2 df.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<StatResult, StatsError> {
    check_pair(x, y, 3)?;
    let rx = average_ranks(x)?;
    let ry = average_ranks(y)?;
    let rho = pearson(&rx, &ry).ok_or(StatsError::Degenerate("all values tied"))?;
    let df = (x.len() - 2) as f64;
    let (t, p) = if rho.abs() >= PERFECT {
        (f64::INFINITY.copysign(rho), 0.0)
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        (t, student_t_two_sided(t, df)?)
    };
    Ok(StatResult {
        test: TestKind::Spearman,
        statistic: t,
        p_value: p,
        effect: Some(rho),
        df: vec![df],
        band: Some(Band::correlation(rho)),
    })
}

/// Multiple correlation R of `y` on two predictors, with an F-test on (2, n − 3) df.
pub fn multiple_correlation(x1: &[f64], x2: &[f64], y: &[f64]) -> Result<StatResult, StatsError> {
    check_pair(x1, y, 4)?;
    check_pair(x2, y, 4)?;
    let degenerate = StatsError::Degenerate("constant variable");
    let ry1 = pearson(y, x1).ok_or(degenerate.clone())?;
    let ry2 = pearson(y, x2).ok_or(degenerate.clone())?;
    let r12 = pearson(x1, x2).ok_or(degenerate)?;
    if r12.abs() >= PERFECT {
        return Err(StatsError::Collinear(r12.abs()));
    }
    let r2 = ((ry1 * ry1 + ry2 * ry2 - 2.0 * ry1 * ry2 * r12) / (1.0 - r12 * r12)).clamp(0.0, 1.0);
    let r = r2.sqrt();
    let n = y.len() as f64;
    let d2 = n - 3.0;
    let (f, p) = if r2 >= PERFECT {
        (f64::INFINITY, 0.0)
    } else {
        let f = (r2 / 2.0) / ((1.0 - r2) / d2);
        (f, f_upper(f, 2.0, d2)?)
    };
    Ok(StatResult {
        test: TestKind::MultipleCorrelation,
        statistic: f,
        p_value: p,
        effect: Some(r),
        df: vec![2.0, d2],
        band: Some(Band::correlation(r)),
    })
}
