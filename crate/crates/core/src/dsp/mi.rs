use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::spectrum::multitaper;
use super::{DspError, EegData};
use crate::minigames::Side;

/// Feature order: (channel, band) pairs, left hemisphere first.
pub const MI_FEATURES: [(&str, (f64, f64)); 4] =
    [("C3", MU), ("C3", BETA), ("C4", MU), ("C4", BETA)];
const MU: (f64, f64) = (8.0, 12.0);
const BETA: (f64, f64) = (13.0, 30.0);
const MIN_PER_CLASS: usize = 20;
/// Sine tapers for the 1 s band-power estimate.
const TAPERS: usize = 5;
const MIRROR_PAIRS: [(&str, &str); 8] = [
    ("Fp1", "Fp2"),
    ("F7", "F8"),
    ("F3", "F4"),
    ("T3", "T4"),
    ("C3", "C4"),
    ("T5", "T6"),
    ("P3", "P4"),
    ("O1", "O2"),
];

/// Log band power features of a 1 s window.
pub fn band_features(window: &EegData) -> Result<[f64; 4], DspError> {
    let n = window.sample_rate.round() as usize;
    if window.len() != n {
        return Err(DspError::WindowLength {
            expected: n,
            got: window.len(),
        });
    }
    let mut out = [0.0; 4];
    for (o, (ch, (lo, hi))) in out.iter_mut().zip(MI_FEATURES) {
        let psd = multitaper(window.channel(ch)?, window.sample_rate, TAPERS);
        let bins: Vec<f64> = psd
            .freqs
            .iter()
            .zip(&psd.power)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| *p)
            .collect();
        *o = (bins.iter().sum::<f64>() / bins.len() as f64)
            .max(1e-300)
            .ln();
    }
    Ok(out)
}

fn mirror_features(x: &[f64; 4]) -> [f64; 4] {
    [x[2], x[3], x[0], x[1]]
}

/// Swaps homologous left and right channels.
pub fn mirror(window: &EegData) -> EegData {
    let mut out = window.clone();
    for (a, b) in MIRROR_PAIRS {
        if let (Ok(i), Ok(j)) = (window.index(a), window.index(b)) {
            out.channels.swap(i, j);
        }
    }
    out
}

/// Shrinkage LDA on hemispheric band-power differences. Positive scores
/// mean right-hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiModel {
    pub w_mu: f64,
    pub w_beta: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiDecision {
    pub side: Side,
    pub score: f64,
}

impl MiModel {
    pub fn score(&self, x: &[f64; 4]) -> f64 {
        self.w_mu * (x[0] - x[2]) + self.w_beta * (x[1] - x[3]) + self.bias
    }

    pub fn decide(&self, x: &[f64; 4]) -> MiDecision {
        let score = self.score(x);
        MiDecision {
            side: if score > 0.0 { Side::Right } else { Side::Left },
            score,
        }
    }
}

/// Trains on feature vectors. Every example is also added mirrored with the
/// opposite label, which makes the solution left/right antisymmetric.
pub fn mi_train_features(features: &[[f64; 4]], labels: &[Side]) -> Result<MiModel, DspError> {
    for side in [Side::Left, Side::Right] {
        let got = labels.iter().filter(|&&l| l == side).count();
        if got < MIN_PER_CLASS {
            return Err(DspError::TooFewEpochs {
                condition: format!("{side:?}").to_lowercase(),
                got,
                needed: MIN_PER_CLASS,
            });
        }
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (x, l) in features.iter().zip(labels) {
        let (same, other) = match l {
            Side::Left => (&mut left, &mut right),
            Side::Right => (&mut right, &mut left),
        };
        same.push(Vector4::from(*x));
        other.push(Vector4::from(mirror_features(x)));
    }
    let mean = |v: &[Vector4<f64>]| v.iter().sum::<Vector4<f64>>() / v.len() as f64;
    let (ml, mr) = (mean(&left), mean(&right));
    let mut s = Matrix4::zeros();
    for (set, m) in [(&left, ml), (&right, mr)] {
        for x in set.iter() {
            let d = x - m;
            s += d * d.transpose();
        }
    }
    s /= (left.len() + right.len() - 2) as f64;
    let lambda = 1e-3 * s.trace() / 4.0;
    s += Matrix4::identity() * lambda;
    let chol = s.cholesky().ok_or(DspError::SingularCovariance)?;
    let w = chol.solve(&(mr - ml));
    if !w.iter().all(|v| v.is_finite()) {
        return Err(DspError::SingularCovariance);
    }
    Ok(MiModel {
        w_mu: 0.5 * (w[0] - w[2]),
        w_beta: 0.5 * (w[1] - w[3]),
        bias: 0.0,
    })
}

pub fn mi_train(windows: &[EegData], labels: &[Side]) -> Result<MiModel, DspError> {
    let feats = windows
        .iter()
        .map(band_features)
        .collect::<Result<Vec<_>, _>>()?;
    mi_train_features(&feats, labels)
}

pub fn mi_classify(model: &MiModel, window: &EegData) -> Result<MiDecision, DspError> {
    Ok(model.decide(&band_features(window)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn labels() -> Vec<String> {
        ["C3", "Cz", "C4"].map(String::from).to_vec()
    }

    /// 10 Hz rhythm on C3 and C4 with the contralateral side attenuated.
    fn window(rng: &mut ChaCha8Rng, side: Option<Side>) -> EegData {
        let noise = Normal::new(0.0, 1.0).unwrap();
        let (g3, g4) = match side {
            Some(Side::Right) => (0.5, 1.0),
            Some(Side::Left) => (1.0, 0.5),
            None => (1.0, 1.0),
        };
        let ph: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mk = |g: f64, rng: &mut ChaCha8Rng| {
            (0..256)
                .map(|n| {
                    g * 4.0 * (2.0 * std::f64::consts::PI * 10.0 * n as f64 / 256.0 + ph).sin()
                        + noise.sample(rng)
                })
                .collect::<Vec<f64>>()
        };
        let c3 = mk(g3, rng);
        let cz = mk(1.0, rng);
        let c4 = mk(g4, rng);
        EegData::new(labels(), 256.0, vec![c3, cz, c4])
    }

    fn train_set(rng: &mut ChaCha8Rng, n: usize) -> (Vec<EegData>, Vec<Side>) {
        (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { Side::Left } else { Side::Right };
                (window(rng, Some(s)), s)
            })
            .unzip()
    }

    #[test]
    fn separates_lateralized_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (w, l) = train_set(&mut rng, 100);
        let m = mi_train(&w, &l).unwrap();
        assert_eq!(m.bias, 0.0);
        let (tw, tl) = train_set(&mut rng, 200);
        let acc = tw
            .iter()
            .zip(&tl)
            .filter(|(w, l)| mi_classify(&m, w).unwrap().side == **l)
            .count();
        assert!(acc >= 190, "{acc}");
    }

    #[test]
    fn mirrored_windows_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (w, l) = train_set(&mut rng, 60);
        let m = mi_train(&w, &l).unwrap();
        for _ in 0..200 {
            let x = window(&mut rng, None);
            let a = mi_classify(&m, &x).unwrap();
            let b = mi_classify(&m, &mirror(&x)).unwrap();
            assert_eq!(a.score, -b.score);
            if a.score != 0.0 {
                assert_ne!(a.side, b.side);
            }
        }
    }

    #[test]
    fn too_few_epochs_and_wrong_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, l) = train_set(&mut rng, 38);
        assert!(matches!(
            mi_train(&w, &l),
            Err(DspError::TooFewEpochs { got: 19, .. })
        ));
        let (w, l) = train_set(&mut rng, 40);
        let m = mi_train(&w, &l).unwrap();
        let short = w[0].slice(0, 200);
        assert_eq!(
            mi_classify(&m, &short).unwrap_err(),
            DspError::WindowLength {
                expected: 256,
                got: 200
            }
        );
    }

    #[test]
    fn constant_features_are_singular() {
        let f = vec![[1.0; 4]; 40];
        let l: Vec<Side> = (0..40)
            .map(|i| if i < 20 { Side::Left } else { Side::Right })
            .collect();
        assert_eq!(mi_train_features(&f, &l), Err(DspError::SingularCovariance));
    }

    #[test]
    fn identical_class_means_fall_back_to_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = Normal::new(0.0, 1.0).unwrap();
        // symmetric features: mirroring maps each class onto itself
        let f: Vec<[f64; 4]> = (0..40)
            .map(|_| {
                let a: f64 = n.sample(&mut rng);
                let b: f64 = n.sample(&mut rng);
                [a, b, a, b]
            })
            .collect();
        let l: Vec<Side> = (0..40)
            .map(|i| if i % 2 == 0 { Side::Left } else { Side::Right })
            .collect();
        let f = f
            .into_iter()
            .map(|mut x| {
                x[0] += 1e-3;
                x
            })
            .collect::<Vec<_>>();
        let m = mi_train_features(&f, &l).unwrap();
        assert_eq!(m.decide(&[0.0, 0.0, 0.0, 0.0]).side, Side::Left);
    }

    #[test]
    fn mirror_swaps_homologous_pairs() {
        let d = EegData::new(labels(), 256.0, vec![vec![1.0], vec![2.0], vec![3.0]]);
        assert_eq!(mirror(&d).channels, vec![vec![3.0], vec![2.0], vec![1.0]]);
    }
}
