//! Image-side value types: RGB regions of interest, per-pixel tissue masks,
//! and masks restricted to discriminative coverage.

use crate::error::{PipelineError, Result};

pub const TISSUE_CLASSES: usize = 8;

/// 255 marks pixels outside the discriminative region in mask files.
pub const INVALID_LABEL: u8 = 255;

/// 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl RoiImage {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(PipelineError::Input(format!(
                "rgb buffer holds {} bytes, {}x{} needs {}",
                rgb.len(),
                width,
                height,
                width * height * 3
            )));
        }
        Ok(RoiImage { width, height, rgb })
    }
}

/// Per-pixel tissue labels in `0..TISSUE_CLASSES`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl SegMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(PipelineError::Input(format!(
                "label buffer holds {} values, {}x{} needs {}",
                labels.len(),
                width,
                height,
                width * height
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= TISSUE_CLASSES) {
            return Err(PipelineError::Input(format!(
                "tissue label {} out of range 0..{}",
                bad, TISSUE_CLASSES
            )));
        }
        Ok(SegMask {
            width,
            height,
            labels,
        })
    }

    pub fn label_at(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }
}

/// A tissue mask restricted to pixels covered by discriminative instances.
/// Invalid pixels keep their label in `labels` but are excluded from
/// downstream feature counts via `valid`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscriminativeMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
    pub valid: Vec<bool>,
    /// True when no instance was discriminative and the full mask was used.
    pub fallback: bool,
}

impl DiscriminativeMask {
    pub fn valid_pixel_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Label values with invalid pixels replaced by [`INVALID_LABEL`] (the
    /// on-disk form).
    pub fn to_file_labels(&self) -> Vec<u8> {
        self.labels
            .iter()
            .zip(&self.valid)
            .map(|(&l, &v)| if v { l } else { INVALID_LABEL })
            .collect()
    }

    pub fn from_file_labels(width: usize, height: usize, file_labels: &[u8]) -> Result<Self> {
        if file_labels.len() != width * height {
            return Err(PipelineError::Input(format!(
                "buffer holds {} values, {}x{} needs {}",
                file_labels.len(),
                width,
                height,
                width * height
            )));
        }
        let mut labels = vec![0u8; file_labels.len()];
        let mut valid = vec![false; file_labels.len()];
        for (i, &v) in file_labels.iter().enumerate() {
            if v == INVALID_LABEL {
                continue;
            }
            if v as usize >= TISSUE_CLASSES {
                return Err(PipelineError::Input(format!(
                    "tissue label {} out of range 0..{}",
                    v, TISSUE_CLASSES
                )));
            }
            labels[i] = v;
            valid[i] = true;
        }
        Ok(DiscriminativeMask {
            width,
            height,
            labels,
            valid,
            fallback: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_validate_labels() {
        assert!(SegMask::new(2, 2, vec![0, 7, 3, 1]).is_ok());
        assert!(SegMask::new(2, 2, vec![0, 8, 3, 1]).is_err());
        assert!(SegMask::new(2, 2, vec![0, 1, 2]).is_err());
    }

    #[test]
    fn file_label_round_trip() {
        let dm = DiscriminativeMask {
            width: 2,
            height: 2,
            labels: vec![1, 2, 3, 4],
            valid: vec![true, false, true, false],
            fallback: false,
        };
        let file = dm.to_file_labels();
        assert_eq!(file, vec![1, 255, 3, 255]);
        let back = DiscriminativeMask::from_file_labels(2, 2, &file).unwrap();
        assert_eq!(back.valid, dm.valid);
        assert_eq!(back.labels[0], 1);
        assert_eq!(back.labels[2], 3);
    }
}
