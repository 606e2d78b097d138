//! Kendall's rank correlation with tie correction (the tau-b variant),
//! computed in O(n log n) by sorting plus merge-sort inversion counting.

use crate::error::{Error, Result};

/// Tau-b: `(concordant - discordant) / sqrt((n0 - ties_a)(n0 - ties_b))`
/// with `n0 = n(n-1)/2`. Returns [`Error::NaNCorrelation`] when every value
/// of either list is tied, where the coefficient is undefined.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeError(format!(
            "rank lists differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InsufficientData(
            "rank correlation needs at least 2 observations".into(),
        ));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    let n0 = n * (n - 1) / 2;
    let mut ties_a = 0usize;
    let mut ties_both = 0usize;
    let mut run_a = 1usize;
    let mut run_ab = 1usize;
    for w in order.windows(2) {
        let same_a = a[w[0]] == a[w[1]];
        if same_a {
            run_a += 1;
        } else {
            ties_a += run_a * (run_a - 1) / 2;
            run_a = 1;
        }
        if same_a && b[w[0]] == b[w[1]] {
            run_ab += 1;
        } else {
            ties_both += run_ab * (run_ab - 1) / 2;
            run_ab = 1;
        }
    }
    ties_a += run_a * (run_a - 1) / 2;
    ties_both += run_ab * (run_ab - 1) / 2;

    let mut b_seq: Vec<f64> = order.iter().map(|&i| b[i]).collect();
    let mut scratch = vec![0.0; n];
    let discordant = count_inversions(&mut b_seq, &mut scratch);

    let mut ties_b = 0usize;
    b_seq.sort_by(f64::total_cmp);
    let mut run_b = 1usize;
    for w in b_seq.windows(2) {
        if w[0] == w[1] {
            run_b += 1;
        } else {
            ties_b += run_b * (run_b - 1) / 2;
            run_b = 1;
        }
    }
    ties_b += run_b * (run_b - 1) / 2;

    if ties_a == n0 || ties_b == n0 {
        return Err(Error::NaNCorrelation(
            "all values tied in one list; tau-b is undefined".into(),
        ));
    }

    let numer = n0 as f64 - (ties_a + ties_b) as f64 + ties_both as f64 - 2.0 * discordant as f64;
    let denom = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    Ok(numer / denom)
}

/// Counts pairs `i < j` with `v[i] > v[j]` (strict), sorting `v` as a side
/// effect.
fn count_inversions(v: &mut [f64], scratch: &mut [f64]) -> usize {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = v.split_at_mut(mid);
    let mut count = count_inversions(left, scratch) + count_inversions(right, scratch);
    let (mut i, mut j, mut k) = (0usize, 0usize, 0usize);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            scratch[k] = left[i];
            i += 1;
        } else {
            count += left.len() - i;
            scratch[k] = right[j];
            j += 1;
        }
        k += 1;
    }
    while i < left.len() {
        scratch[k] = left[i];
        i += 1;
        k += 1;
    }
    while j < right.len() {
        scratch[k] = right[j];
        j += 1;
        k += 1;
    }
    v.copy_from_slice(&scratch[..n]);
    count
}

/// All-pairs reference implementation, kept for oracle tests.
#[cfg(test)]
pub fn kendall_tau_bruteforce(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len();
    let n0 = n * (n - 1) / 2;
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_a, mut ties_b) = (0usize, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            if da == 0.0 {
                ties_a += 1;
            }
            if db == 0.0 {
                ties_b += 1;
            }
            if da * db > 0.0 {
                concordant += 1;
            } else if da * db < 0.0 {
                discordant += 1;
            }
        }
    }
    if ties_a == n0 || ties_b == n0 {
        return Err(Error::NaNCorrelation("all tied".into()));
    }
    let denom = ((n0 - ties_a) as f64 * (n0 - ties_b) as f64).sqrt();
    Ok((concordant - discordant) as f64 / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn identical_lists_give_one() {
        let a = [3.0, 1.0, 2.0, 5.0];
        assert_abs_diff_eq!(kendall_tau(&a, &a).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn reversed_distinct_lists_give_minus_one() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [4.0, 3.0, 2.0, 1.0];
        assert_abs_diff_eq!(kendall_tau(&a, &b).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn single_swap_example() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 3.0, 2.0, 4.0];
        assert_abs_diff_eq!(kendall_tau(&a, &b).unwrap(), 4.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn all_tied_is_an_error() {
        let a = [1.0, 1.0, 1.0];
        let b = [1.0, 2.0, 3.0];
        assert!(matches!(kendall_tau(&a, &b), Err(Error::NaNCorrelation(_))));
        assert!(matches!(kendall_tau(&b, &a), Err(Error::NaNCorrelation(_))));
    }

    #[test]
    fn matches_bruteforce_on_random_tied_data() {
        let mut rng = seed::rng(0xC0FFEE);
        for _ in 0..200 {
            let n = rng.gen_range(2..=30);
            // Coarse quantization forces plenty of ties.
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            match (kendall_tau(&a, &b), kendall_tau_bruteforce(&a, &b)) {
                (Ok(fast), Ok(brute)) => assert_abs_diff_eq!(fast, brute, epsilon = 1e-12),
                (Err(_), Err(_)) => {}
                (fast, brute) => panic!("disagreement: {fast:?} vs {brute:?}"),
            }
        }
    }

    #[test]
    fn antisymmetric_under_order_reversal() {
        let mut rng = seed::rng(0xAB);
        for _ in 0..50 {
            let n = rng.gen_range(2..=20);
            let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let neg_b: Vec<f64> = b.iter().map(|x| -x).collect();
            let t1 = kendall_tau(&a, &b).unwrap();
            let t2 = kendall_tau(&a, &neg_b).unwrap();
            assert_abs_diff_eq!(t1, -t2, epsilon = 1e-12);
        }
    }

    #[test]
    fn invariant_under_monotone_transform() {
        let mut rng = seed::rng(0xCD);
        for _ in 0..50 {
            let n = rng.gen_range(2..=20);
            let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let a2: Vec<f64> = a.iter().map(|x| (3.0 * x + 1.0).exp()).collect();
            let t1 = kendall_tau(&a, &b).unwrap();
            let t2 = kendall_tau(&a2, &b).unwrap();
            assert_abs_diff_eq!(t1, t2, epsilon = 1e-12);
        }
    }
}
