//! Log-log least-squares fits of a metric's mean against the sample size.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::num::ln;

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination, clamped to `[0, 1]`.
    pub r_squared: f64,
    /// `(ln n, ln mean)` pairs the line was fitted to.
    pub points: Vec<(f64, f64)>,
}

/// Ordinary least squares of `ln mean` on `ln n`. Needs at least three
/// distinct sample sizes and strictly positive means.
pub fn fit_loglog(means: &[(u64, f64)]) -> Result<RateFit> {
    let mut distinct: Vec<u64> = means.iter().map(|&(n, _)| n).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            found: distinct.len(),
        });
    }
    let mut points = Vec::with_capacity(means.len());
    for &(n, mean) in means {
        if !(mean > 0.0) {
            return Err(Error::NonPositiveMean { n, mean });
        }
        points.push((ln(n as f64), ln(mean)));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points,
    })
}

/// Fits per-`n` means of grouped replicate values; each group needs at least
/// `min_replicates` values.
pub fn fit_groups(groups: &[(u64, Vec<f64>)], min_replicates: usize) -> Result<RateFit> {
    let mut means = Vec::with_capacity(groups.len());
    for (n, values) in groups {
        if values.len() < min_replicates {
            return Err(Error::TooFewReplicates {
                n: *n,
                found: values.len(),
                needed: min_replicates,
            });
        }
        means.push((*n, values.iter().sum::<f64>() / values.len() as f64));
    }
    fit_loglog(&means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::sqrt;
    use alloc::vec;

    #[test]
    fn planted_inverse_root_law() {
        let means: Vec<(u64, f64)> = [256u64, 1024, 4096, 16384].iter().map(|&n| (n, 3.7 / sqrt(n as f64))).collect();
        let fit = fit_loglog(&means).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-9);
        assert!((fit.intercept - ln(3.7)).abs() < 1e-9);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn constant_rows_have_zero_slope() {
        let groups: Vec<(u64, Vec<f64>)> = [10u64, 100, 1000].iter().map(|&n| (n, vec![0.25; 10])).collect();
        let fit = fit_groups(&groups, 10).unwrap();
        assert_eq!(fit.slope, 0.0);
    }

    #[test]
    fn preconditions() {
        assert!(matches!(fit_loglog(&[(1, 1.0), (2, 1.0)]), Err(Error::TooFewPoints { found: 2, .. })));
        assert!(matches!(
            fit_loglog(&[(1, 1.0), (2, 0.0), (3, 1.0)]),
            Err(Error::NonPositiveMean { n: 2, .. })
        ));
        let groups = vec![(1, vec![1.0; 10]), (2, vec![1.0; 9]), (3, vec![1.0; 10])];
        assert!(matches!(fit_groups(&groups, 10), Err(Error::TooFewReplicates { n: 2, found: 9, needed: 10 })));
    }
}
