use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::montage::{spatial_weights, MONTAGE};
use super::SynthError;

/// Seconds after the event over which templates are rendered.
pub const TEMPLATE_SPAN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    P300,
    Errp,
    Visual5hz,
    Blink,
}

impl FromStr for TemplateKind {
    type Err = SynthError;
    fn from_str(s: &str) -> Result<Self, SynthError> {
        match s {
            "p300" => Ok(TemplateKind::P300),
            "errp" => Ok(TemplateKind::Errp),
            "visual_5hz" => Ok(TemplateKind::Visual5hz),
            "blink" => Ok(TemplateKind::Blink),
            other => Err(SynthError::UnknownTemplate(other.to_owned())),
        }
    }
}

/// Signed Gaussian bump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub latency: f64,
    pub amplitude: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErpTemplate {
    pub kind: TemplateKind,
    pub components: Vec<Component>,
    /// Gains over the standard montage order.
    pub spatial_weights: Vec<f64>,
}

impl ErpTemplate {
    /// Waveform at `t` seconds after the event, peak channel gain.
    pub fn value(&self, t: f64) -> f64 {
        if !(0.0..TEMPLATE_SPAN).contains(&t) {
            return 0.0;
        }
        self.components
            .iter()
            .map(|c| c.amplitude * (-(t - c.latency).powi(2) / (2.0 * c.width * c.width)).exp())
            .sum()
    }
}

fn comp(latency: f64, amplitude: f64, width: f64) -> Component {
    Component {
        latency,
        amplitude,
        width,
    }
}

pub fn make_template(kind: TemplateKind) -> ErpTemplate {
    let (components, peaks, falloff): (Vec<Component>, &[&str], f64) = match kind {
        TemplateKind::P300 => (vec![comp(0.380, 5.0, 0.060)], &["Pz"], 0.45),
        TemplateKind::Errp => (
            vec![
                comp(0.287, -4.0, 0.030),
                comp(0.367, 3.0, 0.030),
                comp(0.486, -3.0, 0.050),
            ],
            &["Fz", "Cz"],
            0.4,
        ),
        TemplateKind::Visual5hz => (vec![comp(0.120, 1.5, 0.030)], &["O1", "O2"], 0.3),
        // amplitude is scaled by the configured blink size
        TemplateKind::Blink => (
            vec![comp(0.120, 1.0, 0.040), comp(0.240, -0.3, 0.040)],
            &["Fp1", "Fp2"],
            0.35,
        ),
    };
    ErpTemplate {
        kind,
        components,
        spatial_weights: spatial_weights(&MONTAGE, peaks, falloff),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errp_latencies() {
        let t = make_template("errp".parse().unwrap());
        let lats: Vec<f64> = t.components.iter().map(|c| c.latency).collect();
        assert_eq!(lats, vec![0.287, 0.367, 0.486]);
        let signs: Vec<bool> = t.components.iter().map(|c| c.amplitude > 0.0).collect();
        assert_eq!(signs, vec![false, true, false]);
    }

    #[test]
    fn p300_single_positive_peak() {
        let t = make_template(TemplateKind::P300);
        assert_eq!(t.components.len(), 1);
        assert_eq!(t.components[0].latency, 0.380);
        assert!(t.components[0].amplitude > 0.0);
        // sampled peak location
        let best = (0..256)
            .map(|i| i as f64 / 256.0)
            .max_by(|a, b| t.value(*a).total_cmp(&t.value(*b)))
            .unwrap();
        assert!((best - 0.380).abs() <= 0.5 / 256.0);
        assert_eq!(t.spatial_weights[14], 1.0);
    }

    #[test]
    fn visual_latency_and_unknown_kind() {
        assert_eq!(
            make_template(TemplateKind::Visual5hz).components[0].latency,
            0.120
        );
        assert!(matches!(
            "n170".parse::<TemplateKind>(),
            Err(SynthError::UnknownTemplate(_))
        ));
    }

    #[test]
    fn latencies_in_range_and_support_is_one_second() {
        for k in [
            TemplateKind::P300,
            TemplateKind::Errp,
            TemplateKind::Visual5hz,
        ] {
            let t = make_template(k);
            assert!(t
                .components
                .iter()
                .all(|c| c.latency > 0.0 && c.latency <= 0.8));
            assert_eq!(t.value(-0.001), 0.0);
            assert_eq!(t.value(1.0), 0.0);
            assert!(t.spatial_weights.iter().cloned().fold(0.0, f64::max) == 1.0);
        }
    }
}
