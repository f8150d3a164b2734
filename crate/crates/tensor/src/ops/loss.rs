use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::{BackwardFn, Tensor};

/// How class logits are laid out for the supported ranks.
///
/// `positions` indexes everything that carries an independent distribution:
/// one per row for `[N,C]`, one per pixel for `[C,H,W]` / `[N,C,H,W]`.
struct ClassLayout {
    classes: usize,
    positions: usize,
    /// Flat index of class `c` at position `p`.
    index: fn(meta: &(usize, usize, usize), p: usize, c: usize) -> usize,
    meta: (usize, usize, usize), // (classes, spatial, batch)
}

fn class_layout(shape: &[usize]) -> Result<ClassLayout> {
    let idx_rowmajor = |meta: &(usize, usize, usize), p: usize, c: usize| -> usize {
        // positions enumerate (batch, pixel); channel is the middle axis
        let (classes, spatial, _) = *meta;
        let n = p / spatial;
        let s = p % spatial;
        (n * classes + c) * spatial + s
    };
    match shape.len() {
        1 => Ok(ClassLayout {
            classes: shape[0],
            positions: 1,
            index: idx_rowmajor,
            meta: (shape[0], 1, 1),
        }),
        2 => Ok(ClassLayout {
            classes: shape[1],
            positions: shape[0],
            index: idx_rowmajor,
            meta: (shape[1], 1, shape[0]),
        }),
        3 => Ok(ClassLayout {
            classes: shape[0],
            positions: shape[1] * shape[2],
            index: idx_rowmajor,
            meta: (shape[0], shape[1] * shape[2], 1),
        }),
        4 => Ok(ClassLayout {
            classes: shape[1],
            positions: shape[0] * shape[2] * shape[3],
            index: idx_rowmajor,
            meta: (shape[1], shape[2] * shape[3], shape[0]),
        }),
        _ => Err(TensorError::dim(
            "softmax_cross_entropy",
            format!("unsupported logits rank {}", shape.len()),
        )),
    }
}

struct CrossEntropyBackward {
    targets: Vec<usize>,
    ignore_label: Option<usize>,
    scored: usize,
}

impl<T: Scalar> BackwardFn<T> for CrossEntropyBackward {
    fn apply(&self, grad_out: &[T], parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let logits = parents[0].data();
        let layout = class_layout(parents[0].shape()).expect("validated in forward");
        let g = grad_out[0] / T::from_f64(self.scored as f64);
        let mut grad = vec![T::zero(); logits.len()];
        let mut probs = vec![T::zero(); layout.classes];
        for p in 0..layout.positions {
            let target = self.targets[p];
            if Some(target) == self.ignore_label {
                continue;
            }
            softmax_at(&logits, &layout, p, &mut probs);
            for c in 0..layout.classes {
                let idx = (layout.index)(&layout.meta, p, c);
                let onehot = if c == target { T::one() } else { T::zero() };
                grad[idx] = (probs[c] - onehot) * g;
            }
        }
        vec![Some(grad)]
    }

    fn name(&self) -> &'static str {
        "softmax_cross_entropy"
    }
}

/// Max-subtracted softmax over the class axis at one position.
fn softmax_at<T: Scalar>(logits: &[T], layout: &ClassLayout, p: usize, out: &mut [T]) {
    let mut max = T::neg_infinity();
    for c in 0..layout.classes {
        let v = logits[(layout.index)(&layout.meta, p, c)];
        if v > max {
            max = v;
        }
    }
    let mut denom = T::zero();
    for c in 0..layout.classes {
        let e = (logits[(layout.index)(&layout.meta, p, c)] - max).exp();
        out[c] = e;
        denom = denom + e;
    }
    for v in out.iter_mut() {
        *v = *v / denom;
    }
}

impl<T: Scalar> Tensor<T> {
    /// Softmax over the class axis (axis 0 for `[C]`/`[C,H,W]`, axis 1 for
    /// `[N,C]`/`[N,C,H,W]`), stabilized by max subtraction.
    ///
    /// Inference-side op: the result is detached from the graph.
    pub fn softmax(&self) -> Result<Tensor<T>> {
        let layout = class_layout(self.shape())?;
        let logits = self.data();
        let mut out = vec![T::zero(); logits.len()];
        let mut probs = vec![T::zero(); layout.classes];
        for p in 0..layout.positions {
            softmax_at(&logits, &layout, p, &mut probs);
            for c in 0..layout.classes {
                out[(layout.index)(&layout.meta, p, c)] = probs[c];
            }
        }
        drop(logits);
        Tensor::from_vec(self.shape(), out)
    }

    /// Mean negative log-softmax of the target class over all non-ignored
    /// positions. Targets are row-major over (batch, pixel) positions.
    pub fn softmax_cross_entropy(
        &self,
        targets: &[usize],
        ignore_label: Option<usize>,
    ) -> Result<Tensor<T>> {
        let layout = class_layout(self.shape())?;
        if targets.len() != layout.positions {
            return Err(TensorError::dim(
                "softmax_cross_entropy",
                format!(
                    "{} targets for {} positions",
                    targets.len(),
                    layout.positions
                ),
            ));
        }
        for &t in targets {
            if t >= layout.classes && Some(t) != ignore_label {
                return Err(TensorError::config(
                    "softmax_cross_entropy",
                    format!("label {} out of range for {} classes", t, layout.classes),
                ));
            }
        }

        let logits = self.data();
        let mut scored = 0usize;
        let mut loss = T::zero();
        let mut probs = vec![T::zero(); layout.classes];
        for (p, &target) in targets.iter().enumerate() {
            if Some(target) == ignore_label {
                continue;
            }
            scored += 1;
            // log-softmax at the target class
            let mut max = T::neg_infinity();
            for c in 0..layout.classes {
                let v = logits[(layout.index)(&layout.meta, p, c)];
                if v > max {
                    max = v;
                }
            }
            let mut denom = T::zero();
            for c in 0..layout.classes {
                let e = (logits[(layout.index)(&layout.meta, p, c)] - max).exp();
                probs[c] = e;
                denom = denom + e;
            }
            let target_logit = logits[(layout.index)(&layout.meta, p, target)];
            loss = loss + (denom.ln() - (target_logit - max));
        }
        drop(logits);

        if scored == 0 {
            return Err(TensorError::numeric(
                "softmax_cross_entropy",
                "all positions ignored, loss undefined",
            ));
        }
        let mean = loss / T::from_f64(scored as f64);
        if !mean.is_finite() {
            return Err(TensorError::numeric(
                "softmax_cross_entropy",
                "loss is NaN or Inf",
            ));
        }

        Ok(Tensor::from_op(
            vec![1],
            vec![mean],
            vec![self.clone()],
            Box::new(CrossEntropyBackward {
                targets: targets.to_vec(),
                ignore_label,
                scored,
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Tensor::<f64>::zeros(&[1, 4]);
        let loss = logits.softmax_cross_entropy(&[2], None).unwrap();
        assert!((loss.item().unwrap() - 4.0f64.ln()).abs() < 1e-9);

        let logits8 = Tensor::<f64>::zeros(&[1, 8]);
        let loss8 = logits8.softmax_cross_entropy(&[0], None).unwrap();
        assert!((loss8.item().unwrap() - 8.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn confident_correct_prediction_has_tiny_loss() {
        let logits = Tensor::<f64>::from_vec(&[1, 4], vec![10.0, 0.0, 0.0, 0.0]).unwrap();
        let loss = logits.softmax_cross_entropy(&[0], None).unwrap().item().unwrap();
        // exact value: ln(1 + 3e^-10) ~ 1.36e-4
        let exact = (1.0 + 3.0 * (-10.0f64).exp()).ln();
        assert!((loss - exact).abs() < 1e-12);
        assert!(loss <= 2e-4);
    }

    #[test]
    fn spatial_layout_and_ignore_label() {
        // [C,H,W] with one pixel ignored: loss averages the other three.
        let logits = Tensor::<f64>::zeros(&[4, 2, 2]);
        let targets = [0usize, 1, 2, 255];
        let loss = logits.softmax_cross_entropy(&targets, Some(255)).unwrap();
        assert!((loss.item().unwrap() - 4.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn all_ignored_is_undefined() {
        let logits = Tensor::<f64>::zeros(&[4, 1, 1]);
        assert!(matches!(
            logits.softmax_cross_entropy(&[9], Some(9)),
            Err(TensorError::Numeric { .. })
        ));
    }

    #[test]
    fn out_of_range_label_rejected() {
        let logits = Tensor::<f64>::zeros(&[1, 4]);
        assert!(logits.softmax_cross_entropy(&[4], None).is_err());
    }

    #[test]
    fn softmax_uniform_and_shift_invariance() {
        let z = Tensor::<f64>::zeros(&[4]);
        assert_eq!(z.softmax().unwrap().to_vec(), vec![0.25; 4]);

        let a = Tensor::<f64>::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::<f64>::from_vec(&[4], vec![11.0, 12.0, 13.0, 14.0]).unwrap();
        assert_eq!(a.softmax().unwrap().to_vec(), b.softmax().unwrap().to_vec());
    }

    #[test]
    fn softmax_closed_form() {
        let z = Tensor::<f64>::from_vec(&[2], vec![0.0, 3.0f64.ln()]).unwrap();
        let p = z.softmax().unwrap().to_vec();
        assert!((p[0] - 0.25).abs() < 1e-12);
        assert!((p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn gradient_is_softmax_minus_onehot() {
        let logits = Tensor::<f64>::param(&[1, 3], vec![0.5, -0.2, 0.1]).unwrap();
        let loss = logits.softmax_cross_entropy(&[1], None).unwrap();
        loss.backward().unwrap();
        let p = logits.softmax().unwrap().to_vec();
        let g = logits.grad().unwrap();
        assert!((g[0] - p[0]).abs() < 1e-12);
        assert!((g[1] - (p[1] - 1.0)).abs() < 1e-12);
        assert!((g[2] - p[2]).abs() < 1e-12);
    }
}
