use serde::{Deserialize, Serialize};

use super::{TimelineError, Timestamp};

/// One ping: host send time, remote stamp, host receive time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub t_send: Timestamp,
    pub t_remote: Timestamp,
    pub t_recv: Timestamp,
}

impl RoundTrip {
    pub fn new(t_send: i64, t_remote: i64, t_recv: i64) -> Self {
        Self {
            t_send: Timestamp(t_send),
            t_remote: Timestamp(t_remote),
            t_recv: Timestamp(t_recv),
        }
    }

    pub fn rtt_ns(&self) -> i64 {
        self.t_recv - self.t_send
    }
}

/// remote = host + offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockOffset {
    pub offset_ns: i64,
    pub rtt_ns: i64,
}

impl ClockOffset {
    pub fn seconds(&self) -> f64 {
        self.offset_ns as f64 * 1e-9
    }

    pub fn to_host(&self, remote: Timestamp) -> Timestamp {
        Timestamp(remote.0 - self.offset_ns)
    }
}

/// Midpoint estimate at the round trip with the smallest RTT; ties go to
/// the earliest trip.
pub fn estimate_clock_offset(trips: &[RoundTrip]) -> Result<ClockOffset, TimelineError> {
    if trips.len() < 3 {
        return Err(TimelineError::TooFewRoundTrips(trips.len()));
    }
    let best = trips.iter().min_by_key(|t| t.rtt_ns()).expect("non-empty");
    let mid2 = best.t_send.0 as i128 + best.t_recv.0 as i128;
    let offset = (2 * best.t_remote.0 as i128 - mid2).div_euclid(2);
    Ok(ClockOffset {
        offset_ns: offset as i64,
        rtt_ns: best.rtt_ns(),
    })
}
