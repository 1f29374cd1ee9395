//! Small statistical helpers used by the experiment harnesses.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Half-width of the two-sided 95% Student-t interval around the mean.
pub fn ci95_half_width(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("valid dof")
        .inverse_cdf(0.975);
    t * (sample_variance(xs) / n).sqrt()
}

/// Central interval `[lo, hi]` of success counts holding at least `level` of
/// the Binomial(n, p) mass, split evenly between the tails.
pub fn binomial_interval(p: f64, n: u64, level: f64) -> (u64, u64) {
    if n == 0 {
        return (0, 0);
    }
    if p <= 0.0 {
        return (0, 0);
    }
    if p >= 1.0 {
        return (n, n);
    }
    let dist = Binomial::new(p, n).expect("valid binomial");
    let tail = (1.0 - level) / 2.0;
    let quantile = |q: f64| -> u64 {
        let (mut lo, mut hi) = (0u64, n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if dist.cdf(mid) >= q {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    };
    (quantile(tail), quantile(1.0 - tail))
}

/// Whether `successes` out of `n` is inside the 95% binomial interval of `p`.
pub fn within_binomial_ci95(p: f64, successes: u64, n: u64) -> bool {
    let (lo, hi) = binomial_interval(p, n, 0.95);
    (lo..=hi).contains(&successes)
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Spearman rank correlation with a one-sided p-value for `rho < 0`, using the
/// t approximation with `n - 2` degrees of freedom.
pub fn spearman_decreasing(x: &[f64], y: &[f64]) -> TestResult {
    assert_eq!(x.len(), y.len());
    let rho = pearson(&ranks(x), &ranks(y));
    let n = x.len() as f64;
    if n < 3.0 {
        return TestResult {
            statistic: rho,
            p_value: 1.0,
        };
    }
    if rho <= -1.0 + 1e-15 {
        return TestResult {
            statistic: rho,
            p_value: 0.0,
        };
    }
    let t = rho * ((n - 2.0) / (1.0 - rho * rho)).sqrt();
    let p = StudentsT::new(0.0, 1.0, n - 2.0).expect("valid dof").cdf(t);
    TestResult {
        statistic: rho,
        p_value: p,
    }
}

/// One-sided Mann-Whitney U test of `a > b` (normal approximation with tie
/// correction and continuity correction). The statistic is U for `a`.
pub fn mann_whitney_greater(a: &[f64], b: &[f64]) -> TestResult {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let r = ranks(&pooled);
    let r1: f64 = r[..a.len()].iter().sum();
    let u1 = r1 - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let mut tie_term = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return TestResult {
            statistic: u1,
            p_value: 1.0,
        };
    }
    let z = (u1 - n1 * n2 / 2.0 - 0.5) / var.sqrt();
    let p = 1.0 - Normal::new(0.0, 1.0).expect("unit normal").cdf(z);
    TestResult {
        statistic: u1,
        p_value: p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_interval_brackets_mean() {
        let (lo, hi) = binomial_interval(0.3, 1000, 0.95);
        assert!(lo < 300 && hi > 300);
        // about 1.96 * sqrt(210) ~ 28 on each side
        assert!(
            (265..=275).contains(&lo) && (325..=335).contains(&hi),
            "{lo} {hi}"
        );
        assert_eq!(binomial_interval(0.0, 10, 0.95), (0, 0));
        assert_eq!(binomial_interval(1.0, 10, 0.95), (10, 10));
    }

    #[test]
    fn binomial_interval_coverage_is_at_least_level() {
        let dist = Binomial::new(0.07, 400).unwrap();
        let (lo, hi) = binomial_interval(0.07, 400, 0.95);
        let lower = if lo == 0 { 0.0 } else { dist.cdf(lo - 1) };
        assert!(dist.cdf(hi) - lower >= 0.95);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn spearman_perfect_decrease() {
        let r = spearman_decreasing(&[0.0, 1.0, 2.0, 3.0, 4.0], &[5.0, 4.0, 3.0, 2.0, 1.0]);
        assert!((r.statistic + 1.0).abs() < 1e-12);
        assert_eq!(r.p_value, 0.0);
        let r = spearman_decreasing(&[0.0, 1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn mann_whitney_separated_samples() {
        let a: Vec<f64> = (0..20).map(|i| 10.0 + i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        assert!(mann_whitney_greater(&a, &b).p_value < 1e-6);
        assert!(mann_whitney_greater(&b, &a).p_value > 0.99);
        let same = vec![1.0; 10];
        assert_eq!(mann_whitney_greater(&same, &same).p_value, 1.0);
    }

    #[test]
    fn ci_half_width_matches_t_table() {
        // t(0.975, 9) = 2.262
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let expected = 2.262157 * (sample_variance(&xs) / 10.0).sqrt();
        assert!((ci95_half_width(&xs) - expected).abs() < 1e-4);
    }
}
