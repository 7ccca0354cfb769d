use super::LabelMask;
use crate::error::{Error, Result};

/// Pixel confusion counts, `counts[gt * n + pred]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn record(&mut self, gt: usize, pred: usize) {
        self.counts[gt * self.num_classes + pred] += 1;
    }

    /// Adds every pixel of the pair; a pixel that is void in either mask is
    /// skipped.
    pub fn accumulate(&mut self, pred: &LabelMask, gt: &LabelMask) -> Result<()> {
        if pred.width != gt.width || pred.height != gt.height {
            return Err(Error::SizeMismatch(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.width, pred.height, gt.width, gt.height
            )));
        }
        for (&p, &g) in pred.pixels.iter().zip(&gt.pixels) {
            if gt.is_void(g) || pred.is_void(p) {
                continue;
            }
            let (p, g) = (p as usize, g as usize);
            if p >= self.num_classes || g >= self.num_classes {
                return Err(Error::InvalidParam(format!(
                    "class id {} beyond confusion matrix size {}",
                    p.max(g),
                    self.num_classes
                )));
            }
            self.record(g, p);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.num_classes, other.num_classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// IoU of class `c`, or `None` when `c` never occurs in the ground truth.
    pub fn iou(&self, c: usize) -> Option<f64> {
        let n = self.num_classes;
        let tp = self.counts[c * n + c];
        let gt_total: u64 = self.counts[c * n..(c + 1) * n].iter().sum();
        if gt_total == 0 {
            return None;
        }
        let pred_total: u64 = (0..n).map(|g| self.counts[g * n + c]).sum();
        Some(tp as f64 / (gt_total + pred_total - tp) as f64)
    }

    /// Mean IoU over classes present in the ground truth. An empty matrix
    /// scores 1.
    pub fn miou(&self) -> f64 {
        let ious: Vec<f64> = (0..self.num_classes).filter_map(|c| self.iou(c)).collect();
        if ious.is_empty() {
            1.0
        } else {
            ious.iter().sum::<f64>() / ious.len() as f64
        }
    }

    pub fn pixel_accuracy(&self) -> f64 {
        let n = self.num_classes;
        let total: u64 = self.counts.iter().sum();
        let tp: u64 = (0..n).map(|c| self.counts[c * n + c]).sum();
        if total == 0 {
            1.0
        } else {
            tp as f64 / total as f64
        }
    }
}

/// Mean IoU of one mask pair over the classes present in `gt`.
pub fn miou(pred: &LabelMask, gt: &LabelMask) -> Result<f64> {
    let max_id = pred
        .pixels
        .iter()
        .chain(&gt.pixels)
        .copied()
        .max()
        .unwrap_or(0) as usize;
    let mut cm = ConfusionMatrix::new(max_id + 1);
    cm.accumulate(pred, gt)?;
    Ok(cm.miou())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_masks_score_one() {
        let m = LabelMask::new(3, 1, vec![0, 1, 2], None);
        assert_eq!(miou(&m, &m).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_masks_score_zero() {
        let gt = LabelMask::new(4, 1, vec![1, 1, 0, 0], Some(0));
        let pred = LabelMask::new(4, 1, vec![2, 2, 1, 1], None);
        // pixels 2,3 are void in gt; pixels 0,1 predict the wrong class
        assert_eq!(miou(&pred, &gt).unwrap(), 0.0);
    }

    #[test]
    fn half_coverage_scores_half() {
        let gt = LabelMask::new(4, 1, vec![1, 1, 1, 1], None);
        let pred = LabelMask::new(4, 1, vec![1, 1, 0, 0], None);
        assert_eq!(miou(&pred, &gt).unwrap(), 0.5);
    }

    #[test]
    fn size_mismatch_errors() {
        let a = LabelMask::filled(2, 2, 0);
        let b = LabelMask::filled(2, 3, 0);
        assert!(matches!(miou(&a, &b), Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn void_pixels_are_ignored() {
        let gt = LabelMask::new(3, 1, vec![1, 255, 1], Some(255));
        let pred = LabelMask::new(3, 1, vec![1, 0, 1], None);
        assert_eq!(miou(&pred, &gt).unwrap(), 1.0);
    }
}
