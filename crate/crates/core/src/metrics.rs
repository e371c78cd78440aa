use crate::error::{Error, Result};

/// Fraction of positions where the predicted identity differs from the truth.
pub fn compute_error_rate(true_labels: &[u8], predicted: &[u8]) -> Result<f64> {
    if true_labels.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: true_labels.len(),
            right: predicted.len(),
        });
    }
    if true_labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let wrong = true_labels
        .iter()
        .zip(predicted)
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / true_labels.len() as f64)
}

/// Error rate under imperfect CSI minus the error rate under perfect CSI.
pub fn compute_error_difference(r_imperfect: f64, r_perfect: f64) -> f64 {
    r_imperfect - r_perfect
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Average ranks, ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; NaN when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, _) = mean_std(&ra);
    let (mb, _) = mean_std(&rb);
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    num / (da * db).sqrt()
}

/// One-sided exact sign test: probability of at least `wins` successes out
/// of `wins + losses` fair coin flips. Ties are dropped by the caller.
pub fn sign_test_p_value(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in wins..=n {
        p += binomial(n, k) * 0.5f64.powi(n as i32);
    }
    p.min(1.0)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_rate_examples() {
        assert_eq!(compute_error_rate(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.25);
        assert_eq!(compute_error_rate(&[0, 1, 1], &[0, 1, 1]).unwrap(), 0.0);
        assert_eq!(compute_error_rate(&[0, 1, 1], &[1, 0, 0]).unwrap(), 1.0);
        assert_eq!(compute_error_rate(&[], &[]), Err(Error::EmptyInput));
        assert!(matches!(
            compute_error_rate(&[0], &[0, 1]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn error_difference_examples() {
        assert!((compute_error_difference(0.30, 0.10) - 0.20).abs() < 1e-15);
        assert_eq!(compute_error_difference(0.10, 0.10), 0.0);
        assert!((compute_error_difference(0.05, 0.10) + 0.05).abs() < 1e-15);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_nan());
    }

    #[test]
    fn sign_test_values() {
        assert!((sign_test_p_value(5, 0) - 1.0 / 32.0).abs() < 1e-15);
        assert_eq!(sign_test_p_value(0, 0), 1.0);
        assert!(sign_test_p_value(15, 5) < 0.05);
        assert!(sign_test_p_value(12, 8) > 0.05);
    }
}
