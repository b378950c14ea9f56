use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DspError, EegData};

const FRONTAL: [&str; 2] = ["Fp1", "Fp2"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaConfig {
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    /// Fit on an evenly strided subsample of at most this many frames.
    pub max_samples: usize,
}

impl Default for IcaConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            tol: 1e-6,
            max_iter: 500,
            max_samples: 30_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcaModel {
    pub mean: DVector<f64>,
    /// Components by channels.
    pub unmixing: DMatrix<f64>,
    /// Channels by components.
    pub mixing: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl IcaModel {
    pub fn components(&self) -> usize {
        self.unmixing.nrows()
    }

    pub fn sources(&self, data: &EegData) -> DMatrix<f64> {
        &self.unmixing * centered(data, &self.mean)
    }
}

fn as_matrix(data: &EegData, stride: usize) -> DMatrix<f64> {
    let cols = data.len().div_ceil(stride);
    DMatrix::from_fn(data.channels.len(), cols, |r, c| {
        data.channels[r][c * stride]
    })
}

fn centered(data: &EegData, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut x = as_matrix(data, 1);
    for (r, mut row) in x.row_iter_mut().enumerate() {
        row.add_scalar_mut(-mean[r]);
    }
    x
}

/// W <- (W Wᵀ)^(-1/2) W
fn sym_decorrelate(w: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w * w.transpose());
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.max(1e-300).sqrt()));
    &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * w
}

/// Symmetric FastICA with a tanh contrast on eigen-whitened data.
pub fn fast_ica(data: &EegData, cfg: &IcaConfig) -> Result<IcaModel, DspError> {
    let nch = data.channels.len();
    if data.len() < 2 * nch.max(1) {
        return Err(DspError::TooShort {
            needed: 2 * nch,
            got: data.len(),
        });
    }
    let stride = data.len().div_ceil(cfg.max_samples).max(1);
    let mut x = as_matrix(data, stride);
    let m = x.ncols() as f64;
    let mean = x.column_mean();
    for (r, mut row) in x.row_iter_mut().enumerate() {
        row.add_scalar_mut(-mean[r]);
    }
    let cov = &x * x.transpose() / m;
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..nch)
        .filter(|&i| eig.eigenvalues[i] > top * 1e-12)
        .collect();
    let k = keep.len();
    if k == 0 {
        return Err(DspError::SingularCovariance);
    }
    let e = eig.eigenvectors.select_columns(&keep);
    let d: Vec<f64> = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
    let whiten =
        DMatrix::from_diagonal(&DVector::from_iterator(k, d.iter().map(|v| 1.0 / v.sqrt())))
            * e.transpose();
    let z = &whiten * &x;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
    let mut w = sym_decorrelate(&init);
    let mut converged = false;
    let mut iterations = 0;
    let zt = z.transpose();
    for it in 1..=cfg.max_iter {
        iterations = it;
        let mut g = &w * &z;
        let mut gp = DVector::zeros(k);
        for (r, mut row) in g.row_iter_mut().enumerate() {
            let mut acc = 0.0;
            for v in row.iter_mut() {
                let t = v.tanh();
                acc += 1.0 - t * t;
                *v = t;
            }
            gp[r] = acc / m;
        }
        let w1 = sym_decorrelate(&((g * &zt) / m - DMatrix::from_diagonal(&gp) * &w));
        let lim = (&w1 * w.transpose())
            .diagonal()
            .iter()
            .map(|v| (v.abs() - 1.0).abs())
            .fold(0.0, f64::max);
        w = w1;
        if lim < cfg.tol {
            converged = true;
            break;
        }
    }
    let unmixing = &w * &whiten;
    let mixing = e
        * DMatrix::from_diagonal(&DVector::from_iterator(k, d.iter().map(|v| v.sqrt())))
        * w.transpose();
    Ok(IcaModel {
        mean,
        unmixing,
        mixing,
        converged,
        iterations,
    })
}

#[derive(Debug, Clone)]
pub struct BlinkRemoval {
    pub cleaned: EegData,
    pub component: usize,
    /// Correlation of the removed component with the frontal mean.
    pub correlation: f64,
    /// Set when the unmixing did not converge and the component was chosen by
    /// kurtosis instead.
    pub fallback: bool,
    pub model: IcaModel,
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let (m2, m4) = x.iter().fold((0.0, 0.0), |(a, b), v| {
        let d = (v - m) * (v - m);
        (a + d, b + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 == 0.0 {
        0.0
    } else {
        m4 / (m2 * m2) - 3.0
    }
}

/// Unmixes, picks the component that tracks the mean of Fp1 and Fp2 and
/// projects it out of every channel.
pub fn remove_blink_component(data: &EegData, cfg: &IcaConfig) -> Result<BlinkRemoval, DspError> {
    let frontal_idx = FRONTAL
        .iter()
        .map(|l| data.index(l))
        .collect::<Result<Vec<_>, _>>()?;
    let model = fast_ica(data, cfg)?;
    let sources = model.sources(data);
    let n = data.len();
    let frontal: Vec<f64> = (0..n)
        .map(|i| {
            frontal_idx
                .iter()
                .map(|&c| data.channels[c][i])
                .sum::<f64>()
                / frontal_idx.len() as f64
        })
        .collect();
    let rows: Vec<Vec<f64>> = sources
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    let corrs: Vec<f64> = rows.iter().map(|r| correlation(r, &frontal)).collect();
    let by_corr = (0..rows.len())
        .max_by(|&a, &b| corrs[a].abs().total_cmp(&corrs[b].abs()))
        .unwrap_or(0);
    let (component, fallback) = if model.converged {
        (by_corr, false)
    } else {
        // largest kurtosis among components whose topography peaks frontally
        let frontal_peak = |k: usize| {
            let col = model.mixing.column(k);
            let top = (0..col.len()).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()));
            top.is_some_and(|t| frontal_idx.contains(&t))
        };
        let pool: Vec<usize> = (0..rows.len()).filter(|&k| frontal_peak(k)).collect();
        let pool = if pool.is_empty() {
            (0..rows.len()).collect()
        } else {
            pool
        };
        let pick = pool
            .into_iter()
            .max_by(|&a, &b| excess_kurtosis(&rows[a]).total_cmp(&excess_kurtosis(&rows[b])))
            .unwrap_or(by_corr);
        warn!(
            "ICA did not converge in {} iterations; removing component {pick} by kurtosis",
            model.iterations
        );
        (pick, true)
    };
    let mut cleaned = data.clone();
    let src = &rows[component];
    for (c, ch) in cleaned.channels.iter_mut().enumerate() {
        let a = model.mixing[(c, component)];
        for (v, s) in ch.iter_mut().zip(src) {
            *v -= a * s;
        }
    }
    Ok(BlinkRemoval {
        cleaned,
        component,
        correlation: corrs[component],
        fallback,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
    }

    /// Three Laplacian-ish sources mixed into four channels, Fp1/Fp2 first.
    fn mixture(n: usize, seed: u64) -> (EegData, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blink = vec![0.0; n];
        let mut i = 50;
        while i + 40 < n {
            for (j, b) in blink[i..i + 40].iter_mut().enumerate() {
                *b = 50.0 * (std::f64::consts::PI * j as f64 / 40.0).sin();
            }
            i += 300 + rng.random_range(0..400);
        }
        let s1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * 5.0).collect();
        let s2: Vec<f64> = (0..n).map(|k| 4.0 * (k as f64 * 0.37).sin()).collect();
        let s3: Vec<f64> = (0..n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect::<Vec<f64>>();
        let mix = [
            [1.0, 0.3, 0.1, 0.5],
            [0.9, 0.2, 0.4, 0.3],
            [0.1, 1.0, 0.2, 0.8],
            [0.05, 0.4, 1.0, 0.6],
        ];
        let chans = (0..4)
            .map(|c| {
                (0..n)
                    .map(|k| {
                        mix[c][0] * blink[k]
                            + mix[c][1] * s1[k]
                            + mix[c][2] * s2[k]
                            + mix[c][3] * s3[k]
                    })
                    .collect()
            })
            .collect();
        let labels = ["Fp1", "Fp2", "Cz", "Pz"].map(String::from).to_vec();
        (EegData::new(labels, 256.0, chans), blink)
    }

    #[test]
    fn whitening_and_reconstruction() {
        let (d, _) = mixture(20_000, 1);
        let m = fast_ica(&d, &IcaConfig::default()).unwrap();
        let s = m.sources(&d);
        let cov = &s * s.transpose() / s.ncols() as f64;
        assert!((cov - DMatrix::identity(4, 4)).abs().max() < 1e-6);
        let back = &m.mixing * &s;
        let x = centered(&d, &m.mean);
        assert!((back - x).abs().max() < 1e-8);
    }

    #[test]
    fn blink_component_is_found_and_removed() {
        let (d, blink) = mixture(20_000, 2);
        let r = remove_blink_component(&d, &IcaConfig::default()).unwrap();
        assert!(r.model.converged && !r.fallback);
        assert!(r.correlation.abs() > 0.9);
        let residual: Vec<f64> = r.cleaned.channels[0]
            .iter()
            .zip(&d.channels[0])
            .map(|(c, x)| x - c)
            .collect();
        // what was removed from Fp1 is the blink
        assert!(correlation(&residual, &blink).abs() > 0.99);
        let before = variance(&d.channels[0]);
        let after = variance(&r.cleaned.channels[0]);
        assert!(after < 0.2 * before, "{before} -> {after}");
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (d, _) = mixture(5_000, 3);
        let a = fast_ica(&d, &IcaConfig::default()).unwrap();
        let b = fast_ica(&d, &IcaConfig::default()).unwrap();
        assert_eq!(a.unmixing, b.unmixing);
    }

    #[test]
    fn missing_frontal_channels_is_an_error() {
        let d = EegData::new(vec!["Cz".into()], 256.0, vec![vec![0.0; 100]]);
        assert_eq!(
            remove_blink_component(&d, &IcaConfig::default()).unwrap_err(),
            DspError::UnknownChannel("Fp1".into())
        );
    }

    #[test]
    fn kurtosis_oracle() {
        // two-point distribution ±1 has kurtosis 1
        let x: Vec<f64> = (0..1000)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert!((excess_kurtosis(&x) + 2.0).abs() < 1e-12);
    }
}
