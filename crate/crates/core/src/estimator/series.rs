use serde::{Deserialize, Serialize};

use super::EstimatorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub step: u64,
    pub score: f64,
}

/// One evaluation score per saved checkpoint, ordered by step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub entries: Vec<ScoreRecord>,
}

impl ScoreSeries {
    pub fn from_pairs(pairs: &[(u64, f64)]) -> Self {
        ScoreSeries { entries: pairs.iter().map(|(step, score)| ScoreRecord { step: *step, score: *score }).collect() }
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        self.entries.iter().map(|e| serde_json::to_string(e).expect("record serializes") + "\n").collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, EstimatorError> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<ScoreRecord>(l).map_err(|e| EstimatorError::Format(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if entries.windows(2).any(|w| w[1].step <= w[0].step) {
            return Err(EstimatorError::Format("steps not increasing".into()));
        }
        if entries.iter().any(|e| !e.score.is_finite()) {
            return Err(EstimatorError::Format("non-finite score".into()));
        }
        Ok(ScoreSeries { entries })
    }
}

/// Centered moving average; near the ends the window is truncated to the
/// entries that exist.
pub fn smooth_scores(series: &ScoreSeries, width: usize) -> Result<ScoreSeries, EstimatorError> {
    if width == 0 || width.is_multiple_of(2) {
        return Err(EstimatorError::BadWidth(width));
    }
    let n = series.len();
    if n < width {
        return Err(EstimatorError::SeriesTooShort { len: n, width });
    }
    let half = width / 2;
    let s = series.scores();
    let entries = series
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let window = &s[lo..=hi];
            ScoreRecord { step: e.step, score: window.iter().sum::<f64>() / window.len() as f64 }
        })
        .collect();
    Ok(ScoreSeries { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: &[f64]) -> ScoreSeries {
        ScoreSeries::from_pairs(&v.iter().enumerate().map(|(i, s)| (i as u64 * 10, *s)).collect::<Vec<_>>())
    }

    #[test]
    fn constant_and_identity() {
        let c = series(&[3.5; 7]);
        assert_eq!(smooth_scores(&c, 5).unwrap(), c);
        let v = series(&[1.0, 9.0, 2.0]);
        assert_eq!(smooth_scores(&v, 1).unwrap(), v);
    }

    #[test]
    fn alternating_center() {
        let s = smooth_scores(&series(&[0.0, 10.0, 0.0, 10.0, 0.0]), 5).unwrap();
        assert_eq!(s.entries[2].score, 4.0);
        // Truncated ends: mean of [0, 10, 0] and [10, 0, 10, 0].
        assert!((s.entries[0].score - 10.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.entries[1].score, 5.0);
    }

    #[test]
    fn errors() {
        assert_eq!(smooth_scores(&series(&[1.0, 2.0]), 2), Err(EstimatorError::BadWidth(2)));
        assert_eq!(smooth_scores(&series(&[1.0, 2.0]), 5), Err(EstimatorError::SeriesTooShort { len: 2, width: 5 }));
    }

    #[test]
    fn stays_within_range() {
        let v = [0.3, 0.9, 0.1, 0.5, 0.7, 0.2, 0.8];
        for e in smooth_scores(&series(&v), 5).unwrap().entries {
            assert!((0.1..=0.9).contains(&e.score));
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let s = series(&[0.25, 0.5]);
        let text = s.to_jsonl();
        assert_eq!(text.lines().next().unwrap(), "{\"step\":0,\"score\":0.25}");
        assert_eq!(ScoreSeries::from_jsonl(&text).unwrap(), s);
    }
}
