//! Translation / transition / stabilization boundaries on a smoothed
//! performance series. Used for reporting only.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageBoundaries {
    /// First probed step to the performance peak.
    pub translation: (u64, u64),
    /// Peak to the start of the flat stretch; `None` when empty.
    pub transition: Option<(u64, u64)>,
    /// Flat stretch to the last probed step; `None` if the series never settles.
    pub stabilization: Option<(u64, u64)>,
    pub peak_step: u64,
    /// Largest |slope| between consecutive points, per step.
    pub peak_slope: f64,
    pub slope_threshold: f64,
}

/// The peak is the earliest argmax. Slopes are taken between consecutive
/// probed points; the transition ends at the first point after the peak from
/// which `consecutive` slopes in a row stay below `fraction` of the largest
/// slope magnitude anywhere in the series.
pub fn detect_stages(steps: &[u64], smoothed: &[f64], fraction: f64, consecutive: usize) -> Option<StageBoundaries> {
    if steps.is_empty() || steps.len() != smoothed.len() {
        return None;
    }
    let n = steps.len();
    let mut m = 0;
    for (i, v) in smoothed.iter().enumerate() {
        if *v > smoothed[m] {
            m = i;
        }
    }
    let slopes: Vec<f64> =
        (0..n - 1).map(|i| (smoothed[i + 1] - smoothed[i]) / (steps[i + 1] - steps[i]).max(1) as f64).collect();
    let peak_slope = slopes.iter().fold(0.0f64, |a, s| a.max(s.abs()));
    let threshold = fraction * peak_slope;
    let flat = |s: &f64| s.abs() < threshold || (peak_slope == 0.0 && *s == 0.0);
    let consecutive = consecutive.max(1);
    let last = steps[n - 1];
    let settle = (m..n.saturating_sub(consecutive)).find(|&j| slopes[j..j + consecutive].iter().all(flat));
    let (transition, stabilization) = match settle {
        _ if m == n - 1 => (None, None),
        Some(j) if j == m => (None, Some((steps[m], last))),
        Some(j) => (Some((steps[m], steps[j])), Some((steps[j], last))),
        None => (Some((steps[m], last)), None),
    };
    Some(StageBoundaries {
        translation: (steps[0], steps[m]),
        transition,
        stabilization,
        peak_step: steps[m],
        peak_slope,
        slope_threshold: threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(n: usize) -> Vec<u64> {
        (1..=n as u64).map(|i| i * 100).collect()
    }

    #[test]
    fn rise_then_flat_has_no_transition() {
        let v = [0.1, 0.3, 0.5, 0.6, 0.6, 0.6, 0.6, 0.6];
        let s = detect_stages(&steps(8), &v, 0.1, 3).unwrap();
        assert_eq!(s.translation, (100, 400));
        assert_eq!(s.transition, None);
        assert_eq!(s.stabilization, Some((400, 800)));
    }

    #[test]
    fn rise_decline_settle() {
        let v = [0.1, 0.5, 0.9, 0.7, 0.5, 0.45, 0.44, 0.44, 0.44, 0.44];
        let s = detect_stages(&steps(10), &v, 0.1, 3).unwrap();
        assert_eq!(s.peak_step, 300);
        assert_eq!(s.transition, Some((300, 600)));
        assert_eq!(s.stabilization, Some((600, 1000)));
    }

    #[test]
    fn never_settles_or_peaks_last() {
        let v = [0.1, 0.9, 0.5, 0.8, 0.3, 0.7];
        let s = detect_stages(&steps(6), &v, 0.1, 3).unwrap();
        assert_eq!(s.transition, Some((200, 600)));
        assert_eq!(s.stabilization, None);
        let s = detect_stages(&steps(3), &[0.1, 0.2, 0.3], 0.1, 3).unwrap();
        assert_eq!(s.translation, (100, 300));
        assert_eq!((s.transition, s.stabilization), (None, None));
        assert!(detect_stages(&[], &[], 0.1, 3).is_none());
    }
}
