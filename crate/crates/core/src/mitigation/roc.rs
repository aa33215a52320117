//! ROC sweeps over detector scores.

use std::io::Write;

use serde::{Deserialize, Serialize};

/// A history is flagged when its score is strictly above `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// Ordered by decreasing threshold, from (0, 0) to (1, 1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl Roc {
    /// Sweeps every cut between distinct scores. `negatives` are normal
    /// samples, `positives` adversarial ones.
    pub fn from_scores(negatives: &[f64], positives: &[f64]) -> Roc {
        let mut all: Vec<(f64, bool)> =
            negatives.iter().map(|&s| (s, false)).chain(positives.iter().map(|&s| (s, true))).collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0));
        let n_neg = negatives.len().max(1) as f64;
        let n_pos = positives.len().max(1) as f64;

        let top = all.first().map_or(0.0, |a| a.0);
        let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: top }];
        let (mut fp, mut tp) = (0usize, 0usize);
        let mut i = 0;
        while i < all.len() {
            let s = all[i].0;
            while i < all.len() && all[i].0 == s {
                if all[i].1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            let threshold = match all.get(i) {
                Some(next) => 0.5 * (s + next.0),
                None => s - 1.0,
            };
            points.push(RocPoint { fpr: fp as f64 / n_neg, tpr: tp as f64 / n_pos, threshold });
        }
        let auc = points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[0].tpr + w[1].tpr)).sum();
        Roc { points, auc }
    }

    /// Point maximizing `tpr − fpr`; the highest threshold wins ties.
    pub fn youden(&self) -> RocPoint {
        let mut best = self.points[0];
        for p in &self.points[1..] {
            if p.tpr - p.fpr > best.tpr - best.fpr {
                best = *p;
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let roc = Roc::from_scores(&[0.0, 0.1, 0.2], &[1.0, 2.0]);
        assert_eq!(roc.auc, 1.0);
        let y = roc.youden();
        assert_eq!((y.fpr, y.tpr), (0.0, 1.0));
        assert!(y.threshold > 0.2 && y.threshold < 1.0);
    }

    #[test]
    fn identical_distributions_are_chance() {
        let s = [0.3, 0.1, 0.7, 0.5];
        assert!((Roc::from_scores(&s, &s).auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inverted_scores() {
        assert_eq!(Roc::from_scores(&[5.0, 6.0], &[1.0]).auc, 0.0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let roc = Roc::from_scores(&[0.0], &[1.0]);
        let mut buf = Vec::new();
        roc.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("fpr,tpr,threshold\n"));
        assert_eq!(text.lines().count(), 1 + roc.points.len());
    }
}
