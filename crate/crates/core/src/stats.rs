//! Small statistical tests used to validate sampler output.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Standard normal CDF.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd)
        .expect("valid normal parameters")
        .cdf(x)
}

/// CDF of a 1D Gaussian mixture.
pub fn gaussian_mixture_cdf(x: f64, weights: &[f64], means: &[f64], sds: &[f64]) -> f64 {
    weights
        .iter()
        .zip(means)
        .zip(sds)
        .map(|((w, m), s)| w * normal_cdf(x, *m, *s))
        .sum()
}

/// Survival function of the Kolmogorov distribution:
/// `Q(λ) = 2 Σ_{j≥1} (−1)^{j−1} exp(−2 j² λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS statistic of `samples` against a reference CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = cdf(*x);
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi.max(lo));
    }
    d
}

/// One-sample KS test; the p-value uses the Stephens finite-sample
/// correction of the asymptotic Kolmogorov distribution.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> (f64, f64) {
    let d = ks_statistic(samples, cdf);
    let n = samples.len() as f64;
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// Two-sample KS test.
pub fn ks_test_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (sa.len(), sb.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let xa = sa[i];
        let xb = sb[j];
        let x = xa.min(xb);
        while i < na && sa[i] <= x {
            i += 1;
        }
        while j < nb && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// Chi-square goodness-of-fit test of observed counts against expected
/// counts (must have the same total); df = bins − 1. Bins with expected
/// count below 5 should be merged by the caller.
pub fn chi_square_gof(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    assert_eq!(observed.len(), expected.len());
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .filter(|(_, e)| **e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let df = observed.len().saturating_sub(1).max(1) as f64;
    let p = 1.0 - ChiSquared::new(df).expect("valid df").cdf(stat);
    (stat, p)
}

/// Pairwise transition-flow symmetry statistic for a discretized chain.
///
/// Under stationarity and detailed balance the counts `N_ij` and `N_ji` of
/// transitions between bins are exchangeable, so
/// `Σ_{i<j} (N_ij − N_ji)² / (N_ij + N_ji)` is approximately chi-squared
/// with one degree of freedom per counted pair. Returns `(statistic, df, p)`.
pub fn transition_flow_symmetry(bins: &[usize], n_bins: usize) -> (f64, usize, f64) {
    let mut counts = vec![0.0f64; n_bins * n_bins];
    for w in bins.windows(2) {
        counts[w[0] * n_bins + w[1]] += 1.0;
    }
    let mut stat = 0.0;
    let mut df = 0usize;
    for i in 0..n_bins {
        for j in (i + 1)..n_bins {
            let nij = counts[i * n_bins + j];
            let nji = counts[j * n_bins + i];
            let total = nij + nji;
            if total >= 10.0 {
                stat += (nij - nji) * (nij - nji) / total;
                df += 1;
            }
        }
    }
    if df == 0 {
        return (0.0, 0, 1.0);
    }
    let p = 1.0 - ChiSquared::new(df as f64).expect("valid df").cdf(stat);
    (stat, df, p)
}
