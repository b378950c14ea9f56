use serde::{Deserialize, Serialize};

use super::{DspError, EegData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochWindow {
    pub start: f64,
    pub end: f64,
    /// Baseline interval, relative to the event.
    pub baseline: (f64, f64),
}

impl Default for EpochWindow {
    fn default() -> Self {
        Self {
            start: -0.2,
            end: 0.8,
            baseline: (-0.2, 0.0),
        }
    }
}

impl EpochWindow {
    /// Offset of the first sample relative to the event sample.
    pub fn offset(&self, fs: f64) -> i64 {
        (self.start * fs).round() as i64
    }

    pub fn len(&self, fs: f64) -> usize {
        ((self.end - self.start) * fs).round() as usize
    }

    fn baseline_range(&self, fs: f64) -> std::ops::Range<usize> {
        let off = self.offset(fs);
        let lo = ((self.baseline.0 * fs).round() as i64 - off).max(0) as usize;
        let hi = ((self.baseline.1 * fs).round() as i64 - off).max(lo as i64 + 1) as usize;
        lo..hi.min(self.len(fs))
    }
}

/// Baseline-corrected epochs stored epoch-major, then sample, then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSet {
    pub channel_labels: Vec<String>,
    pub sample_rate: f64,
    /// Sample offset of the first epoch sample relative to the event.
    pub offset: i64,
    pub samples: usize,
    pub conditions: Vec<String>,
    /// Event sample index of each kept epoch.
    pub events: Vec<usize>,
    pub data: Vec<f64>,
    pub excluded: usize,
}

impl EpochSet {
    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channel_labels.len()
    }

    pub fn get(&self, epoch: usize, sample: usize, channel: usize) -> f64 {
        self.data[(epoch * self.samples + sample) * self.channels() + channel]
    }

    /// One channel of one epoch.
    pub fn trace(&self, epoch: usize, channel: usize) -> Vec<f64> {
        (0..self.samples)
            .map(|s| self.get(epoch, s, channel))
            .collect()
    }

    pub fn count(&self, condition: &str) -> usize {
        self.conditions.iter().filter(|c| *c == condition).count()
    }

    /// Epoch times in seconds relative to the event.
    pub fn times(&self) -> Vec<f64> {
        (0..self.samples)
            .map(|s| (s as i64 + self.offset) as f64 / self.sample_rate)
            .collect()
    }

    pub fn channel_index(&self, label: &str) -> Result<usize, DspError> {
        self.channel_labels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(label))
            .ok_or_else(|| DspError::UnknownChannel(label.to_owned()))
    }
}

/// Cuts one epoch per event, dropping those that run off either end.
pub fn extract_epochs(
    data: &EegData,
    events: &[(usize, String)],
    window: &EpochWindow,
) -> Result<EpochSet, DspError> {
    let fs = data.sample_rate;
    let offset = window.offset(fs);
    let len = window.len(fs);
    let base = window.baseline_range(fs);
    let nch = data.channels.len();
    let total = data.len() as i64;
    let mut out = EpochSet {
        channel_labels: data.labels.clone(),
        sample_rate: fs,
        offset,
        samples: len,
        conditions: Vec::new(),
        events: Vec::new(),
        data: Vec::new(),
        excluded: 0,
    };
    for (idx, cond) in events {
        let start = *idx as i64 + offset;
        if start < 0 || start + len as i64 > total {
            out.excluded += 1;
            continue;
        }
        let start = start as usize;
        let at = out.data.len();
        out.data.resize(at + len * nch, 0.0);
        for (c, ch) in data.channels.iter().enumerate() {
            let seg = &ch[start..start + len];
            let mean = seg[base.clone()].iter().sum::<f64>() / base.len() as f64;
            for (s, v) in seg.iter().enumerate() {
                out.data[at + s * nch + c] = v - mean;
            }
        }
        out.conditions.push(cond.clone());
        out.events.push(*idx);
    }
    if out.is_empty() {
        return Err(DspError::NoEpochs {
            excluded: out.excluded,
        });
    }
    Ok(out)
}

/// Per-condition mean and standard error, sample-major like [`EpochSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Average {
    pub condition: String,
    pub n: usize,
    pub samples: usize,
    pub channels: usize,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

impl Average {
    pub fn mean_trace(&self, channel: usize) -> Vec<f64> {
        (0..self.samples)
            .map(|s| self.mean[s * self.channels + channel])
            .collect()
    }

    pub fn se_trace(&self, channel: usize) -> Vec<f64> {
        (0..self.samples)
            .map(|s| self.se[s * self.channels + channel])
            .collect()
    }
}

pub fn grand_average(epochs: &EpochSet, condition: &str) -> Result<Average, DspError> {
    let picked: Vec<usize> = (0..epochs.len())
        .filter(|&e| epochs.conditions[e] == condition)
        .collect();
    let n = picked.len();
    if n < 2 {
        return Err(DspError::TooFewEpochs {
            condition: condition.to_owned(),
            got: n,
            needed: 2,
        });
    }
    let width = epochs.samples * epochs.channels();
    let mut mean = vec![0.0; width];
    for &e in &picked {
        for (m, v) in mean
            .iter_mut()
            .zip(&epochs.data[e * width..(e + 1) * width])
        {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut ss = vec![0.0; width];
    for &e in &picked {
        for ((s, v), m) in ss
            .iter_mut()
            .zip(&epochs.data[e * width..(e + 1) * width])
            .zip(&mean)
        {
            *s += (v - m) * (v - m);
        }
    }
    let nf = n as f64;
    let se = ss
        .iter()
        .map(|s| (s / (nf - 1.0)).sqrt() / nf.sqrt())
        .collect();
    Ok(Average {
        condition: condition.to_owned(),
        n,
        samples: epochs.samples,
        channels: epochs.channels(),
        mean,
        se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> EegData {
        EegData::new(
            vec!["A".into(), "B".into()],
            256.0,
            vec![
                (0..n).map(|i| i as f64).collect(),
                (0..n).map(|i| (i as f64).sin()).collect(),
            ],
        )
    }

    #[test]
    fn window_geometry() {
        let w = EpochWindow::default();
        assert_eq!(w.offset(256.0), -51);
        assert_eq!(w.len(256.0), 256);
        assert_eq!(w.baseline_range(256.0), 0..51);
    }

    #[test]
    fn baseline_is_removed() {
        let d = ramp(4096);
        let ev: Vec<_> = [300usize, 1000, 2500]
            .iter()
            .map(|&i| (i, "t".to_string()))
            .collect();
        let ep = extract_epochs(&d, &ev, &EpochWindow::default()).unwrap();
        assert_eq!(ep.len(), 3);
        for e in 0..3 {
            for c in 0..2 {
                let m: f64 = (0..51).map(|s| ep.get(e, s, c)).sum::<f64>() / 51.0;
                assert!(m.abs() <= 1e-9);
            }
        }
        // the ramp keeps its slope
        assert!((ep.get(0, 100, 0) - ep.get(0, 99, 0) - 1.0).abs() < 1e-12);
        assert!((ep.times()[51]).abs() < 1e-12);
    }

    #[test]
    fn edge_epochs_excluded() {
        let d = ramp(1000);
        let ev = vec![(0usize, "t".into()), (500, "t".into()), (990, "t".into())];
        let ep = extract_epochs(&d, &ev, &EpochWindow::default()).unwrap();
        assert_eq!((ep.len(), ep.excluded), (1, 2));
        let err = extract_epochs(&d, &ev[..1], &EpochWindow::default()).unwrap_err();
        assert_eq!(err, DspError::NoEpochs { excluded: 1 });
    }

    #[test]
    fn average_and_standard_error() {
        let fs = 256.0;
        let n = 2048;
        let d = EegData::new(vec!["A".into()], fs, vec![vec![0.0; n]]);
        let mut d2 = d.clone();
        // epoch contents after the baseline: 1, 2, 3 at every sample
        for (k, &ev) in [400usize, 800, 1200].iter().enumerate() {
            for s in ev..ev + 205 {
                d2.channels[0][s] = (k + 1) as f64;
            }
        }
        let ev: Vec<_> = [400usize, 800, 1200]
            .iter()
            .map(|&i| (i, "x".to_string()))
            .collect();
        let ep = extract_epochs(&d2, &ev, &EpochWindow::default()).unwrap();
        let avg = grand_average(&ep, "x").unwrap();
        assert_eq!(avg.n, 3);
        assert!((avg.mean[100] - 2.0).abs() < 1e-12);
        // sd of {1,2,3} is 1
        assert!((avg.se[100] - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            grand_average(&ep, "y"),
            Err(DspError::TooFewEpochs { got: 0, .. })
        ));
        let one = extract_epochs(&d, &ev[..1], &EpochWindow::default()).unwrap();
        assert!(grand_average(&one, "x").is_err());
    }
}
