//! Error statistics.

use crate::error::{Error, Result};

pub fn rmse(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("rmse of an empty error list".into()));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Sorted distinct values with the fraction of samples at or below each.
pub fn empirical_cdf(errors: &[f64]) -> Result<Vec<(f64, f64)>> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("CDF of an empty error list".into()));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::InvalidInput("CDF input contains NaN".into()));
    }
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, x) in v.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    Ok(out)
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `trials` fair coin flips. Ties should be dropped before counting.
pub fn sign_test_p(wins: usize, trials: usize) -> f64 {
    if wins > trials {
        return 0.0;
    }
    // Log-space binomial terms keep large `trials` finite.
    let ln_choose = |n: usize, k: usize| -> f64 {
        (1..=k).map(|i| ((n - k + i) as f64).ln() - (i as f64).ln()).sum()
    };
    let half = -(trials as f64) * std::f64::consts::LN_2;
    (wins..=trials).map(|k| (ln_choose(trials, k) + half).exp()).sum::<f64>().min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        assert!((rmse(&[3.0, 4.0]).unwrap() - 12.5_f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[5.0]).unwrap(), 5.0);
        assert!(rmse(&[]).is_err());
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(
            empirical_cdf(&[1.0, 2.0, 3.0]).unwrap(),
            vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]
        );
        assert_eq!(empirical_cdf(&[2.0, 2.0]).unwrap(), vec![(2.0, 1.0)]);
        assert!(empirical_cdf(&[]).is_err());
        assert_eq!(
            empirical_cdf(&[3.0, 1.0, 3.0]).unwrap(),
            vec![(1.0, 1.0 / 3.0), (3.0, 1.0)]
        );
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn sign_test_values() {
        assert!((sign_test_p(10, 10) - 1.0 / 1024.0).abs() < 1e-15);
        assert!((sign_test_p(0, 10) - 1.0).abs() < 1e-12);
        // P(X ≥ 8 | n = 10) = 56/1024.
        assert!((sign_test_p(8, 10) - 56.0 / 1024.0).abs() < 1e-12);
        assert!(sign_test_p(31, 50) > 0.05 && sign_test_p(32, 50) < 0.05);
    }
}
