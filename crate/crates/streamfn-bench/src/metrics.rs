//! Pure metric computations over run timestamps.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("timestamps must be ordered t0 <= t1 <= t2 (got t0={t0}, t1={t1}, t2={t2})")]
    NonMonotonic { t0: u64, t1: u64, t2: u64 },
    #[error("run has zero total duration (t2 == t0)")]
    ZeroDuration,
    #[error("stream_seconds must be nonnegative and finite (got {0})")]
    BadStreamSeconds(f64),
}

/// Fraction of the run spent waiting for the first event to reach the
/// function: `(t1 - t0) / (t2 - t0)`. Always in `[0, 1]` for valid input.
pub fn compute_theta(t0_ns: u64, t1_ns: u64, t2_ns: u64) -> Result<f64, MetricError> {
    if !(t0_ns <= t1_ns && t1_ns <= t2_ns) {
        return Err(MetricError::NonMonotonic {
            t0: t0_ns,
            t1: t1_ns,
            t2: t2_ns,
        });
    }
    if t2_ns == t0_ns {
        return Err(MetricError::ZeroDuration);
    }
    Ok((t1_ns - t0_ns) as f64 / (t2_ns - t0_ns) as f64)
}

/// Wall-clock cost beyond the stream itself: `(t2 - t0)` in seconds minus
/// the time the generator spent producing the stream.
pub fn compute_overhead_s(
    t0_ns: u64,
    t2_ns: u64,
    stream_seconds: f64,
) -> Result<f64, MetricError> {
    if t2_ns < t0_ns {
        return Err(MetricError::NonMonotonic {
            t0: t0_ns,
            t1: t0_ns,
            t2: t2_ns,
        });
    }
    if !stream_seconds.is_finite() || stream_seconds < 0.0 {
        return Err(MetricError::BadStreamSeconds(stream_seconds));
    }
    Ok((t2_ns - t0_ns) as f64 / 1e9 - stream_seconds)
}

/// Nearest-rank percentile of an unsorted sample; `p` in `[0, 100]`.
pub fn percentile(samples: &[f64], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent check: (t1-t0)/(t2-t0) via u128 fixed-point long
    /// division at 18 fractional decimal digits.
    fn theta_fixed_point(t0: u64, t1: u64, t2: u64) -> f64 {
        let numer = (t1 - t0) as u128 * 10u128.pow(18);
        let denom = (t2 - t0) as u128;
        (numer / denom) as f64 / 1e18
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            a.abs()
        } else {
            ((a - b) / b).abs()
        }
    }

    #[test]
    fn theta_matches_fixed_point_oracle_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let t0: u64 = rng.gen_range(0..1u64 << 60);
            let span: u64 = rng.gen_range(1..1u64 << 40);
            let wait: u64 = rng.gen_range(0..=span);
            let (t1, t2) = (t0 + wait, t0 + span);
            let got = compute_theta(t0, t1, t2).unwrap();
            let want = theta_fixed_point(t0, t1, t2);
            assert!(
                rel_err(got, want) < 1e-12,
                "theta({t0},{t1},{t2}) = {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn immediate_first_event_means_zero_theta() {
        assert_eq!(compute_theta(0, 0, 10).unwrap(), 0.0);
    }

    #[test]
    fn first_event_at_the_end_means_theta_one() {
        assert_eq!(compute_theta(5, 25, 25).unwrap(), 1.0);
    }

    #[test]
    fn ten_second_wait_in_a_slightly_longer_run() {
        let theta = compute_theta(0, 10_000_000_000, 10_100_000_000).unwrap();
        assert!(rel_err(theta, 0.990_099_009_9) < 1e-9);
    }

    #[test]
    fn long_wait_short_run_gives_theta_near_one() {
        // 117.584 s wait inside a 127.784 s run.
        let theta = compute_theta(0, 117_584_000_000, 127_784_000_000).unwrap();
        assert!(rel_err(theta, 0.920_177_800) < 1e-8);
        assert!(theta > 0.9);
    }

    #[test]
    fn invalid_triples_are_rejected() {
        assert!(matches!(
            compute_theta(10, 5, 20),
            Err(MetricError::NonMonotonic { .. })
        ));
        assert!(matches!(
            compute_theta(10, 25, 20),
            Err(MetricError::NonMonotonic { .. })
        ));
        assert_eq!(compute_theta(7, 7, 7), Err(MetricError::ZeroDuration));
    }

    #[test]
    fn overhead_is_span_minus_stream_seconds() {
        let got = compute_overhead_s(1_000_000_000, 11_000_000_000, 9.9).unwrap();
        assert!((got - 0.1).abs() < 1e-9);
        let engine = compute_overhead_s(0, 128_100_000_000, 9.9).unwrap();
        assert!((engine - 118.2).abs() < 1e-9);
    }

    #[test]
    fn overhead_rejects_bad_input() {
        assert!(matches!(
            compute_overhead_s(10, 5, 1.0),
            Err(MetricError::NonMonotonic { .. })
        ));
        assert_eq!(
            compute_overhead_s(0, 10, -1.0),
            Err(MetricError::BadStreamSeconds(-1.0))
        );
        assert!(matches!(
            compute_overhead_s(0, 10, f64::NAN),
            Err(MetricError::BadStreamSeconds(_))
        ));
    }

    #[test]
    fn percentiles_use_nearest_rank() {
        let data: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(percentile(&data, 50.0), Some(50.0));
        assert_eq!(percentile(&data, 90.0), Some(90.0));
        assert_eq!(percentile(&data, 99.0), Some(99.0));
        assert_eq!(percentile(&data, 100.0), Some(100.0));
        assert_eq!(percentile(&data, 0.0), Some(1.0));
        assert_eq!(percentile(&[], 50.0), None);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), Some(2.0));
    }

    proptest! {
        #[test]
        fn theta_stays_in_unit_interval(
            t0 in 0u64..1 << 60,
            wait in 0u64..1 << 40,
            extra in 1u64..1 << 40,
        ) {
            let theta = compute_theta(t0, t0 + wait, t0 + wait + extra).unwrap();
            prop_assert!((0.0..=1.0).contains(&theta));
        }

        #[test]
        fn theta_shrinks_as_the_run_extends(
            t0 in 0u64..1 << 50,
            wait in 1u64..1 << 30,
            extra in 1u64..1 << 30,
            more in 1u64..1 << 30,
        ) {
            let short = compute_theta(t0, t0 + wait, t0 + wait + extra).unwrap();
            let long = compute_theta(t0, t0 + wait, t0 + wait + extra + more).unwrap();
            prop_assert!(long < short);
        }

        #[test]
        fn theta_is_shift_invariant(
            t0 in 0u64..1 << 40,
            wait in 0u64..1 << 30,
            extra in 1u64..1 << 30,
            shift in 0u64..1 << 40,
        ) {
            let base = compute_theta(t0, t0 + wait, t0 + wait + extra).unwrap();
            let moved =
                compute_theta(t0 + shift, t0 + shift + wait, t0 + shift + wait + extra).unwrap();
            prop_assert!(rel_err(base, moved) < 1e-12);
        }
    }
}
