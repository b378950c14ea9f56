use serde::{Deserialize, Serialize};

use super::{StreamHeader, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub index: i64,
    /// False when the index falls before the first or after the last frame.
    pub in_range: bool,
}

/// Nearest sample index for each host timestamp:
/// `round((t - start) * rate)`.
pub fn align_events_to_samples(times: &[Timestamp], header: &StreamHeader) -> Vec<Alignment> {
    let rate = header.sample_rate.unwrap_or(0.0);
    let start = header.start_ns.unwrap_or_default();
    times
        .iter()
        .map(|&t| {
            let index = ((t - start) as f64 * rate / 1e9).round() as i64;
            let in_range = index >= 0 && header.frame_count.is_none_or(|n| (index as u64) < n);
            Alignment { index, in_range }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header() -> StreamHeader {
        let mut h = StreamHeader::samples("eeg", &["Cz"], 256.0, 5_000_000_000);
        h.frame_count = Some(2560);
        h
    }

    #[test]
    fn origin_and_whole_second() {
        let a = align_events_to_samples(
            &[Timestamp(5_000_000_000), Timestamp(6_000_000_000)],
            &header(),
        );
        assert_eq!(
            a[0],
            Alignment {
                index: 0,
                in_range: true
            }
        );
        assert_eq!(
            a[1],
            Alignment {
                index: 256,
                in_range: true
            }
        );
    }

    #[test]
    fn outside_recording_is_flagged() {
        let a = align_events_to_samples(
            &[Timestamp(4_000_000_000), Timestamp(15_000_000_000)],
            &header(),
        );
        assert!(!a[0].in_range && !a[1].in_range);
        assert_eq!(a[0].index, -256);
    }

    proptest! {
        #[test]
        fn residual_below_half_sample(ns in 0i64..9_000_000_000) {
            let h = header();
            let t = Timestamp(5_000_000_000 + ns);
            let a = align_events_to_samples(&[t], &h)[0];
            let residual = ns as f64 * 1e-9 - a.index as f64 / 256.0;
            prop_assert!(residual.abs() <= 1.0 / 512.0 + 1e-12);
        }
    }
}
