//! Effect size and significance tests used by the experiment reports.

// the erfc rational coefficients are full-precision constants
#![allow(clippy::excessive_precision)]

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum StatsError {
    #[error("samples must be nonempty")]
    EmptySample,
}

/// Vargha-Delaney A12 effect size: probability that a random draw from `x`
/// beats a random draw from `y`, ties counted half.
pub fn a12(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut wins = 0.0;
    for &a in x {
        for &b in y {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (x.len() as f64 * y.len() as f64))
}

/// Exact enumeration is used up to this product of sample sizes.
pub const MWU_EXACT_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwuResult {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-sided p value.
    pub p: f64,
    /// True when p came from exact enumeration rather than the normal
    /// approximation.
    pub exact: bool,
}

/// Mann-Whitney U test with average ranks for ties. Exact two-sided p by
/// enumerating all arrangements when |x|*|y| <= 400, otherwise the normal
/// approximation with tie correction and continuity correction.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MwuResult, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let n = x.len();
    let m = y.len();
    let ranks = midranks(x, y);
    let rank_sum_x: f64 = ranks[..n].iter().sum();
    let u = rank_sum_x - (n * (n + 1)) as f64 / 2.0;

    if n * m <= MWU_EXACT_LIMIT {
        let p = exact_two_sided_p(&ranks, n, u);
        Ok(MwuResult { u, p, exact: true })
    } else {
        let p = normal_approx_p(&ranks, n, m, u);
        Ok(MwuResult { u, p, exact: false })
    }
}

/// Pooled midranks: x's ranks first, then y's.
fn midranks(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut pooled: Vec<(f64, usize)> = x
        .iter()
        .chain(y.iter())
        .copied()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // average of ranks i+1 ..= j+1
        let avg = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            ranks[pooled[k].1] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Exact conditional permutation test over every n-subset of the pooled
/// midranks. Counts arrangements by dynamic programming on (subset size,
/// doubled rank sum), which stays exact in the presence of ties.
fn exact_two_sided_p(ranks: &[f64], n: usize, u_observed: f64) -> f64 {
    let total = ranks.len();
    // midranks are multiples of 0.5; double them into exact integers
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();

    // ways[c][s] = number of c-subsets with doubled rank sum s
    let mut ways = vec![vec![0u64; max_sum + 1]; n + 1];
    ways[0][0] = 1;
    for &r in &doubled {
        for c in (0..n).rev() {
            for s in (0..=max_sum.saturating_sub(r)).rev() {
                if ways[c][s] > 0 {
                    ways[c + 1][s + r] += ways[c][s];
                }
            }
        }
    }

    let base = n * (n + 1); // doubled n(n+1)/2
    let u_doubled = 2.0 * u_observed;
    let eps = 1e-6;
    let mut le = 0u64;
    let mut ge = 0u64;
    let mut count = 0u64;
    for (s, &w) in ways[n].iter().enumerate() {
        if w == 0 {
            continue;
        }
        let u = s as f64 - base as f64;
        if u <= u_doubled + eps {
            le += w;
        }
        if u >= u_doubled - eps {
            ge += w;
        }
        count += w;
    }
    debug_assert!(total >= n && count > 0);

    let p = 2.0 * (le.min(ge) as f64) / count as f64;
    p.min(1.0)
}

fn normal_approx_p(ranks: &[f64], n: usize, m: usize, u: f64) -> f64 {
    let total = (n + m) as f64;
    let mu = (n * m) as f64 / 2.0;

    // tie correction over pooled rank groups
    let mut sorted: Vec<f64> = ranks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
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
    let sigma2 =
        (n * m) as f64 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if sigma2 <= 0.0 {
        return 1.0;
    }
    let sigma = sigma2.sqrt();
    // continuity correction toward the mean
    let diff = u - mu;
    let corrected = if diff > 0.5 {
        diff - 0.5
    } else if diff < -0.5 {
        diff + 0.5
    } else {
        0.0
    };
    let z = corrected / sigma;
    (2.0 * normal_cdf(-z.abs())).min(1.0)
}

/// Standard normal CDF via Cody's rational approximations of erfc.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// erfc(x) accurate to ~1e-16, after W. J. Cody (1969).
pub fn erfc(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.46875 {
        1.0 - erf_small(x)
    } else if ax <= 4.0 {
        let e = erfc_mid(ax);
        if x < 0.0 {
            2.0 - e
        } else {
            e
        }
    } else {
        let e = erfc_large(ax);
        if x < 0.0 {
            2.0 - e
        } else {
            e
        }
    }
}

fn erf_small(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.16112374387056560e0,
        1.13864154151050156e2,
        3.77485237685302021e2,
        3.20937758913846947e3,
        1.85777706184603153e-1,
    ];
    const B: [f64; 4] = [
        2.36012909523441209e1,
        2.44024637934444173e2,
        1.28261652607737228e3,
        2.84423683343917062e3,
    ];
    let z = x * x;
    let mut num = A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + A[i]) * z;
        den = (den + B[i]) * z;
    }
    x * (num + A[3]) / (den + B[3])
}

fn erfc_mid(x: f64) -> f64 {
    const C: [f64; 9] = [
        5.64188496988670089e-1,
        8.88314979438837594e0,
        6.61191906371416295e1,
        2.98635138197400131e2,
        8.81952221241769090e2,
        1.71204761263407058e3,
        2.05107837782607147e3,
        1.23033935479799725e3,
        2.15311535474403846e-8,
    ];
    const D: [f64; 8] = [
        1.57449261107098347e1,
        1.17693950891312499e2,
        5.37181101862009858e2,
        1.62138957456669019e3,
        3.29079923573345963e3,
        4.36261909014324716e3,
        3.43936767414372164e3,
        1.23033935480374942e3,
    ];
    let mut num = C[8] * x;
    let mut den = x;
    for i in 0..7 {
        num = (num + C[i]) * x;
        den = (den + D[i]) * x;
    }
    let ratio = (num + C[7]) / (den + D[7]);
    exp_neg_sq(x) * ratio
}

fn erfc_large(x: f64) -> f64 {
    const P: [f64; 6] = [
        3.05326634961232344e-1,
        3.60344899949804439e-1,
        1.25781726111229246e-1,
        1.60837851487422766e-2,
        6.58749161529837803e-4,
        1.63153871373020978e-2,
    ];
    const Q: [f64; 5] = [
        2.56852019228982242e0,
        1.87295284992346047e0,
        5.27905102951428412e-1,
        6.05183413124413191e-2,
        2.33520497626869185e-3,
    ];
    let z = 1.0 / (x * x);
    let mut num = P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + P[i]) * z;
        den = (den + Q[i]) * z;
    }
    let ratio = z * (num + P[4]) / (den + Q[4]);
    let r = (std::f64::consts::FRAC_1_PI.sqrt() - ratio) / x;
    exp_neg_sq(x) * r
}

/// exp(-x*x) computed with the split trick to preserve accuracy.
fn exp_neg_sq(x: f64) -> f64 {
    let xsq = (x * 16.0).trunc() / 16.0;
    let del = (x - xsq) * (x + xsq);
    (-xsq * xsq).exp() * (-del).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Pcg32;

    #[test]
    fn a12_identical_samples_is_half() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(a12(&x, &x).unwrap(), 0.5);
    }

    #[test]
    fn a12_dominating_sample_is_one() {
        assert_eq!(a12(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 1.0);
    }

    #[test]
    fn a12_enumerated_example() {
        // pairs: (1,1)=tie .5, (1,3)=loss 0, (2,1)=win 1, (2,3)=loss 0
        assert_eq!(a12(&[1.0, 2.0], &[1.0, 3.0]).unwrap(), 0.375);
    }

    #[test]
    fn a12_rejects_empty() {
        assert_eq!(a12(&[], &[1.0]), Err(StatsError::EmptySample));
    }

    #[test]
    fn mwu_separated_samples_exact() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!(r.exact);
        assert_eq!(r.u, 0.0);
        assert!((r.p - 0.1).abs() < 1e-12, "exact two-sided p over C(6,3)=20: {}", r.p);
    }

    #[test]
    fn mwu_identical_samples_p_is_one() {
        let x = [2.0, 2.0, 2.0, 2.0];
        let r = mann_whitney_u(&x, &x).unwrap();
        assert!(r.p > 0.99, "identical samples should give p ~ 1, got {}", r.p);
    }

    #[test]
    fn mwu_invariant_under_shift() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0];
        let y = [3.0, 7.0, 6.0, 9.0, 2.0];
        let shifted_x: Vec<f64> = x.iter().map(|v| v + 100.0).collect();
        let shifted_y: Vec<f64> = y.iter().map(|v| v + 100.0).collect();
        let a = mann_whitney_u(&x, &y).unwrap();
        let b = mann_whitney_u(&shifted_x, &shifted_y).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn normal_cdf_matches_statrs() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut z = -8.0;
        while z <= 8.0 {
            let ours = normal_cdf(z);
            let reference = normal.cdf(z);
            // statrs's own erf carries ~1e-12 absolute error
            assert!(
                (ours - reference).abs() < 1e-10,
                "normal_cdf({z}) = {ours}, statrs = {reference}"
            );
            z += 0.0625;
        }
    }

    #[test]
    fn normal_cdf_matches_correctly_rounded_reference() {
        // values from a correctly rounded erfc implementation
        let cases = [
            (-2.0, 0.02275013194817922),
            (-1.0, 0.15865525393145707),
            (0.5, 0.6914624612740131),
            (3.0, 0.9986501019683699),
            (-6.0, 9.865876450377012e-10),
        ];
        for (z, want) in cases {
            let got = normal_cdf(z);
            assert!(
                (got - want).abs() <= want.abs() * 1e-14 + 1e-16,
                "normal_cdf({z}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn approx_p_close_to_exact_at_boundary_sizes() {
        // at n = m = 20 the exact path is skipped; verify the approximation
        // against exact enumeration on sizes just inside the boundary
        let mut rng = Pcg32::new(11);
        for _ in 0..5 {
            let x: Vec<f64> = (0..20).map(|_| rng.uniform53()).collect();
            let y: Vec<f64> = (0..20).map(|_| rng.uniform53() + 0.2).collect();
            let exact = mann_whitney_u(&x, &y).unwrap();
            assert!(exact.exact);
            let ranks = midranks(&x, &y);
            let approx_p = normal_approx_p(&ranks, x.len(), y.len(), exact.u);
            assert!(
                (approx_p - exact.p).abs() < 0.02,
                "normal approximation drifted: exact {} vs approx {approx_p}",
                exact.p
            );
        }
    }

    #[test]
    fn large_samples_take_approx_path() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..30).map(|i| i as f64 + 5.0).collect();
        let r = mann_whitney_u(&x, &y).unwrap();
        assert!(!r.exact);
        assert!(r.p < 0.05);
    }
}
