//! Small statistical helpers used across the pipeline.

/// Arithmetic mean. Returns 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (denominator n-1). Returns 0 for fewer than two points.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Pearson correlation. Returns 0 when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "pearson: length mismatch");
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..n {
        let da = a[i] - ma;
        let db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Ranks with ties replaced by the average of the tied ranks (1-based).
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).expect("NaN in rank input"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the average
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman: length mismatch");
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_and_variance() {
        assert_relative_eq!(mean(&[1.0, 3.0]), 2.0);
        // sample variance of [0, 2]: ((0-1)^2 + (2-1)^2) / 1 = 2
        assert_relative_eq!(sample_variance(&[0.0, 2.0]), 2.0);
        assert_eq!(sample_variance(&[5.0]), 0.0);
    }

    #[test]
    fn pearson_perfect_and_zero() {
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), 1.0);
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]), -1.0);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn ranks_average_ties() {
        // [10, 20, 20, 30] -> ranks [1, 2.5, 2.5, 4]
        let r = average_ranks(&[10.0, 20.0, 20.0, 30.0]);
        assert_eq!(r, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn spearman_monotone_invariance() {
        let a: [f64; 5] = [0.1, 0.7, 0.3, 0.9, 0.5];
        let b: Vec<f64> = a.iter().map(|x| x.exp() * 10.0).collect();
        assert_relative_eq!(spearman(&a, &b), 1.0);
    }

    #[test]
    fn spearman_hand_value_with_ties() {
        // a ranks: [1, 2.5, 2.5, 4]; b ranks: [4, 3, 1.5, 1.5]
        // hand computation: cov = -3.75, both variances 4.5 -> r = -5/6
        let a = [1.0, 2.0, 2.0, 3.0];
        let b = [9.0, 7.0, 5.0, 5.0];
        assert_relative_eq!(spearman(&a, &b), -5.0 / 6.0, max_relative = 1e-12);
        let expect = pearson(&[1.0, 2.5, 2.5, 4.0], &[4.0, 3.0, 1.5, 1.5]);
        assert_relative_eq!(spearman(&a, &b), expect, max_relative = 1e-12);
    }
}
