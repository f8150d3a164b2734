//! Confusion-matrix based evaluation: pixel mIOU and exact-match accuracy.

use crate::error::{PipelineError, Result};
use crate::roi::SegMask;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    /// counts[gt * k + pred]
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn add(&mut self, pred: usize, gt: usize) {
        debug_assert!(pred < self.k && gt < self.k);
        self.counts[gt * self.k + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(|r| r.to_vec()).collect()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let hits: u64 = (0..self.k).map(|i| self.counts[i * self.k + i]).sum();
        hits as f64 / total as f64
    }

    /// IOU per class; `None` where the class is absent from both prediction
    /// and ground truth (0/0 is skipped, not scored as 0 or 1).
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.k)
            .map(|c| {
                let tp = self.counts[c * self.k + c];
                let gt_total: u64 = (0..self.k).map(|p| self.counts[c * self.k + p]).sum();
                let pred_total: u64 = (0..self.k).map(|g| self.counts[g * self.k + c]).sum();
                let union = gt_total + pred_total - tp;
                if union == 0 {
                    None
                } else {
                    Some(tp as f64 / union as f64)
                }
            })
            .collect()
    }

    /// Mean IOU over the classes present in ground truth or prediction.
    pub fn miou(&self) -> f64 {
        let ious: Vec<f64> = self.per_class_iou().into_iter().flatten().collect();
        if ious.is_empty() {
            return 0.0;
        }
        ious.iter().sum::<f64>() / ious.len() as f64
    }
}

pub fn confusion_from_masks(pred: &SegMask, gt: &SegMask, k: usize) -> Result<ConfusionMatrix> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(PipelineError::Input(format!(
            "mask shapes differ: {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let mut cm = ConfusionMatrix::new(k);
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        cm.add(p as usize, g as usize);
    }
    Ok(cm)
}

pub fn miou(pred: &SegMask, gt: &SegMask, k: usize) -> Result<f64> {
    Ok(confusion_from_masks(pred, gt, k)?.miou())
}

/// Exact-match fraction over paired label sequences.
pub fn accuracy(preds: &[usize], gts: &[usize]) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(PipelineError::Input(format!(
            "{} predictions vs {} labels",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(PipelineError::Input("empty label sequences".into()));
    }
    let hits = preds.iter().zip(gts).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}
