//! The 44-dimensional mask descriptor: an 8-bin label frequency histogram
//! and a 36-bin co-occurrence histogram over unordered 4-connected label
//! pairs (both endpoints valid).

use crate::error::{PipelineError, Result};
use crate::roi::{DiscriminativeMask, TISSUE_CLASSES};

pub const FREQ_DIMS: usize = TISSUE_CLASSES; // 8
pub const COOC_DIMS: usize = TISSUE_CLASSES * (TISSUE_CLASSES + 1) / 2; // 36
pub const FEATURE_DIMS: usize = FREQ_DIMS + COOC_DIMS; // 44

/// Index of the unordered pair {a, b} in the upper-triangular layout:
/// (0,0), (0,1), ..., (0,7), (1,1), ..., (7,7).
pub fn pair_index(a: u8, b: u8) -> usize {
    let (lo, hi) = if a <= b { (a as usize, b as usize) } else { (b as usize, a as usize) };
    lo * TISSUE_CLASSES - lo * (lo.wrapping_sub(1)) / 2 + (hi - lo)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub freq: [f64; FREQ_DIMS],
    pub cooc: [f64; COOC_DIMS],
    /// Set when the mask had no valid adjacent pair; `cooc` is all zero then.
    pub no_pairs: bool,
}

impl FeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_DIMS);
        v.extend_from_slice(&self.freq);
        v.extend_from_slice(&self.cooc);
        v
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != FEATURE_DIMS {
            return Err(PipelineError::Input(format!(
                "feature vector needs {} values, got {}",
                FEATURE_DIMS,
                values.len()
            )));
        }
        let mut freq = [0.0; FREQ_DIMS];
        let mut cooc = [0.0; COOC_DIMS];
        freq.copy_from_slice(&values[..FREQ_DIMS]);
        cooc.copy_from_slice(&values[FREQ_DIMS..]);
        Ok(FeatureVector {
            freq,
            cooc,
            no_pairs: cooc.iter().all(|&c| c == 0.0),
        })
    }
}

/// Normalized label frequencies over valid pixels.
pub fn frequency_hist(mask: &DiscriminativeMask) -> Result<[f64; FREQ_DIMS]> {
    let mut counts = [0u64; FREQ_DIMS];
    let mut total = 0u64;
    for (&label, &valid) in mask.labels.iter().zip(&mask.valid) {
        if valid {
            counts[label as usize] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(PipelineError::Input(
            "no valid pixels; upstream fallback should prevent this".into(),
        ));
    }
    let mut freq = [0.0; FREQ_DIMS];
    for (f, &c) in freq.iter_mut().zip(&counts) {
        *f = c as f64 / total as f64;
    }
    Ok(freq)
}

/// Normalized unordered label-pair counts over 4-connected pixel pairs with
/// both endpoints valid. Returns the all-zero vector (flagged) when no pair
/// qualifies.
pub fn cooccurrence_hist(mask: &DiscriminativeMask) -> Result<([f64; COOC_DIMS], bool)> {
    let (w, h) = (mask.width, mask.height);
    let mut counts = [0u64; COOC_DIMS];
    let mut total = 0u64;
    let at = |x: usize, y: usize| y * w + x;
    for y in 0..h {
        for x in 0..w {
            if !mask.valid[at(x, y)] {
                continue;
            }
            let a = mask.labels[at(x, y)];
            if x + 1 < w && mask.valid[at(x + 1, y)] {
                counts[pair_index(a, mask.labels[at(x + 1, y)])] += 1;
                total += 1;
            }
            if y + 1 < h && mask.valid[at(x, y + 1)] {
                counts[pair_index(a, mask.labels[at(x, y + 1)])] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Ok(([0.0; COOC_DIMS], true));
    }
    let mut cooc = [0.0; COOC_DIMS];
    for (c, &n) in cooc.iter_mut().zip(&counts) {
        *c = n as f64 / total as f64;
    }
    Ok((cooc, false))
}

pub fn extract_features(mask: &DiscriminativeMask) -> Result<FeatureVector> {
    let freq = frequency_hist(mask)?;
    let (cooc, no_pairs) = cooccurrence_hist(mask)?;
    Ok(FeatureVector {
        freq,
        cooc,
        no_pairs,
    })
}
