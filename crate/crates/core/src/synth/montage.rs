/// Channel order of the recording.
pub const MONTAGE: [&str; 20] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3", "Pz",
    "P4", "T6", "O1", "O2", "POz",
];

/// Flattened scalp positions: Cz at the origin, nose toward +y, the
/// Fp/T/O ring at radius 1.
const POSITIONS: [(f64, f64); 20] = [
    (-0.31, 0.95),
    (0.31, 0.95),
    (-0.81, 0.59),
    (-0.42, 0.54),
    (0.0, 0.5),
    (0.42, 0.54),
    (0.81, 0.59),
    (-1.0, 0.0),
    (-0.5, 0.0),
    (0.0, 0.0),
    (0.5, 0.0),
    (1.0, 0.0),
    (-0.81, -0.59),
    (-0.42, -0.54),
    (0.0, -0.5),
    (0.42, -0.54),
    (0.81, -0.59),
    (-0.31, -0.95),
    (0.31, -0.95),
    (0.0, -0.75),
];

pub fn channel_index(label: &str) -> Option<usize> {
    MONTAGE.iter().position(|&m| m.eq_ignore_ascii_case(label))
}

pub fn position(label: &str) -> Option<(f64, f64)> {
    channel_index(label).map(|i| POSITIONS[i])
}

/// Gaussian falloff around the mean position of `peaks`, scaled so the
/// peak channels get 1 and clamped so nothing exceeds 1.
pub fn spatial_weights(labels: &[&str], peaks: &[&str], width: f64) -> Vec<f64> {
    let pts: Vec<(f64, f64)> = peaks.iter().filter_map(|p| position(p)).collect();
    let n = pts.len() as f64;
    let center = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let d2 = |p: (f64, f64)| (p.0 - center.0).powi(2) + (p.1 - center.1).powi(2);
    let reference = d2(pts[0]);
    labels
        .iter()
        .map(|l| match position(l) {
            Some(p) => (-(d2(p) - reference) / (2.0 * width * width))
                .exp()
                .min(1.0),
            None => 0.0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peaks_get_unit_weight_and_nothing_exceeds_one() {
        let w = spatial_weights(&MONTAGE, &["Pz"], 0.45);
        assert_eq!(w[14], 1.0);
        assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!(w[9] < 1.0 && w[9] > w[4]);

        let w = spatial_weights(&MONTAGE, &["Fz", "Cz"], 0.4);
        assert!((w[4] - 1.0).abs() < 1e-12 && (w[9] - 1.0).abs() < 1e-12);

        let w = spatial_weights(&MONTAGE, &["O1", "O2"], 0.3);
        assert_eq!((w[17], w[18], w[19]), (1.0, 1.0, 1.0));
    }

    #[test]
    fn lookup_is_case_insensitive() {
        assert_eq!(channel_index("poz"), Some(19));
        assert_eq!(channel_index("Oz"), None);
    }
}
