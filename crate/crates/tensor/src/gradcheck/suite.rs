//! Ready-made finite-difference checks for every differentiable op.
//!
//! Shared between the test suites and the CLI's verification command. Input
//! shapes stay small (<= 6 per axis) so the whole battery runs in seconds at
//! f64 precision.

use super::{grad_check, GradCheckReport};
use crate::error::Result;
use crate::ops::conv::Conv2dCfg;
use crate::ops::norm::{BnMode, BnStats};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Deterministic value stream for test inputs.
struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [lo, hi).
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + u * (hi - lo)
    }

    /// Values bounded away from zero, so ReLU kinks stay clear of the
    /// finite-difference step.
    fn offset_uniform(&mut self) -> f64 {
        let v = self.uniform(0.15, 1.0);
        if self.next_u64() & 1 == 0 {
            v
        } else {
            -v
        }
    }
}

fn tensor(rng: &mut SplitMix64, shape: &[usize]) -> Tensor<f64> {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.offset_uniform()).collect();
    Tensor::param(shape, data).expect("shape/data agree")
}

/// Scalarizes a tensor by a fixed random projection; a plain sum can hide
/// sign errors that cancel. Seeding per call keeps the closure pure.
fn project(t: &Tensor<f64>, seed: u64) -> Result<Tensor<f64>> {
    let mut rng = SplitMix64(seed);
    let proj: Vec<f64> = (0..t.len()).map(|_| rng.uniform(0.25, 1.0)).collect();
    let p = Tensor::from_vec(t.shape(), proj)?;
    t.mul(&p)?.sum_all()
}

type Check = (&'static str, f64, Box<dyn Fn(u64) -> Result<GradCheckReport>>);

fn checks() -> Vec<Check> {
    let mut list: Vec<Check> = Vec::new();

    list.push((
        "conv2d 3x3 same",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed);
            let x = tensor(&mut rng, &[2, 5, 5]);
            let w = tensor(&mut rng, &[3, 2, 3, 3]);
            let b = tensor(&mut rng, &[3]);
            let pseed = seed ^ 0xfeed;
            grad_check(
                "conv2d 3x3 same",
                move |ins| {
                    let y = ins[0].conv2d(&ins[1], Some(&ins[2]), Conv2dCfg::strided(1, 1))?;
                    project(&y, pseed)
                },
                &[x, w, b],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "conv2d strided 7x7-style",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(1));
            let x = tensor(&mut rng, &[1, 6, 6]);
            let w = tensor(&mut rng, &[2, 1, 3, 3]);
            let pseed = seed ^ 0xbeef;
            grad_check(
                "conv2d strided",
                move |ins| {
                    let y = ins[0].conv2d(&ins[1], None, Conv2dCfg::strided(2, 1))?;
                    project(&y, pseed)
                },
                &[x, w],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "conv2d dilated grouped",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(2));
            let x = tensor(&mut rng, &[4, 6, 5]);
            let w = tensor(&mut rng, &[4, 2, 3, 3]);
            let cfg = Conv2dCfg {
                stride: 1,
                padding: 2,
                dilation: 2,
                groups: 2,
            };
            let pseed = seed ^ 0xd11a;
            grad_check(
                "conv2d dilated grouped",
                move |ins| {
                    let y = ins[0].conv2d(&ins[1], None, cfg)?;
                    project(&y, pseed)
                },
                &[x, w],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "batch_norm train",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(3));
            let x = tensor(&mut rng, &[3, 4, 4]);
            let gamma = tensor(&mut rng, &[3]);
            let beta = tensor(&mut rng, &[3]);
            let pseed = seed ^ 0xb4;
            grad_check(
                "batch_norm train",
                move |ins| {
                    let stats = BnStats::new(3);
                    let y = ins[0].batch_norm(&ins[1], &ins[2], &stats, BnMode::Train, 1e-5, 0.1)?;
                    project(&y, pseed)
                },
                &[x, gamma, beta],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "batch_norm eval",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(4));
            let x = tensor(&mut rng, &[2, 3, 3]);
            let gamma = tensor(&mut rng, &[2]);
            let beta = tensor(&mut rng, &[2]);
            let pseed = seed ^ 0xe7a1;
            grad_check(
                "batch_norm eval",
                move |ins| {
                    let stats = BnStats::new(2);
                    stats.mean.set_data(&[0.2, -0.1])?;
                    stats.var.set_data(&[1.3, 0.7])?;
                    let y = ins[0].batch_norm(&ins[1], &ins[2], &stats, BnMode::Eval, 1e-5, 0.1)?;
                    project(&y, pseed)
                },
                &[x, gamma, beta],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "bilinear_upsample x2",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(5));
            let x = tensor(&mut rng, &[2, 3, 4]);
            let pseed = seed ^ 0xb111;
            grad_check(
                "bilinear_upsample x2",
                move |ins| {
                    let y = ins[0].bilinear_upsample(2)?;
                    project(&y, pseed)
                },
                &[x],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "resize_bilinear fractional",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(6));
            let x = tensor(&mut rng, &[1, 3, 3]);
            let pseed = seed ^ 0x5e51;
            grad_check(
                "resize_bilinear fractional",
                move |ins| {
                    let y = ins[0].resize_bilinear(5, 4)?;
                    project(&y, pseed)
                },
                &[x],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "adaptive_avg_pool",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(7));
            let x = tensor(&mut rng, &[2, 6, 5]);
            let pseed = seed ^ 0x9001;
            grad_check(
                "adaptive_avg_pool",
                move |ins| {
                    let y = ins[0].adaptive_avg_pool(2, 3)?;
                    project(&y, pseed)
                },
                &[x],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "linear",
        1e-6,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(8));
            let x = tensor(&mut rng, &[2, 5]);
            let w = tensor(&mut rng, &[3, 5]);
            let b = tensor(&mut rng, &[3]);
            let pseed = seed ^ 0x11e;
            grad_check(
                "linear",
                move |ins| {
                    let y = ins[0].linear(&ins[1], Some(&ins[2]))?;
                    project(&y, pseed)
                },
                &[x, w, b],
                DEFAULT_STEP,
                1e-6,
            )
        }),
    ));

    list.push((
        "relu",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(9));
            let x = tensor(&mut rng, &[4, 4]);
            let pseed = seed ^ 0x4e1;
            grad_check(
                "relu",
                move |ins| {
                    let y = ins[0].relu()?;
                    project(&y, pseed)
                },
                &[x],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "add / mul / scale chain",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(10));
            let a = tensor(&mut rng, &[3, 3]);
            let b = tensor(&mut rng, &[3, 3]);
            let pseed = seed ^ 0xadd;
            grad_check(
                "add/mul/scale",
                move |ins| {
                    let y = ins[0].add(&ins[1])?.mul(&ins[0])?.scale(0.5)?;
                    project(&y, pseed)
                },
                &[a, b],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "concat",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(11));
            let a = tensor(&mut rng, &[2, 3, 3]);
            let b = tensor(&mut rng, &[3, 3, 3]);
            let pseed = seed ^ 0xcc;
            grad_check(
                "concat",
                move |ins| {
                    let y = Tensor::concat(&[&ins[0], &ins[1]], 0)?;
                    project(&y, pseed)
                },
                &[a, b],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "softmax_cross_entropy dense",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(12));
            let logits = tensor(&mut rng, &[3, 4]);
            grad_check(
                "softmax_cross_entropy dense",
                |ins| ins[0].softmax_cross_entropy(&[1, 3, 0], None),
                &[logits],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "softmax_cross_entropy spatial+ignore",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(13));
            let logits = tensor(&mut rng, &[4, 2, 3]);
            grad_check(
                "softmax_cross_entropy spatial+ignore",
                |ins| ins[0].softmax_cross_entropy(&[0, 1, 255, 3, 2, 1], Some(255)),
                &[logits],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list.push((
        "reshape + fan-out",
        DEFAULT_TOLERANCE,
        Box::new(|seed| {
            let mut rng = SplitMix64(seed.wrapping_add(14));
            let x = tensor(&mut rng, &[2, 6]);
            let pseed = seed ^ 0xfa;
            grad_check(
                "reshape + fan-out",
                move |ins| {
                    // same tensor used on two branches; gradients must add
                    let a = ins[0].reshape(&[3, 4])?;
                    let b = ins[0].relu()?.reshape(&[3, 4])?;
                    project(&a.add(&b)?, pseed)
                },
                &[x],
                DEFAULT_STEP,
                DEFAULT_TOLERANCE,
            )
        }),
    ));

    list
}

/// Runs the whole battery; one report per op.
pub fn op_suite(seed: u64) -> Result<Vec<GradCheckReport>> {
    checks().into_iter().map(|(_, _, f)| f(seed)).collect()
}

/// A deliberately broken check; used as the negative control for the
/// verification command. Always reports failure.
pub fn corrupted_control(seed: u64) -> Result<GradCheckReport> {
    let mut rng = SplitMix64(seed ^ 0xdead);
    let x = tensor(&mut rng, &[3]);
    let calls = std::cell::Cell::new(0usize);
    grad_check(
        "corrupted-backward control",
        move |ins| {
            // Analytic pass sees scale 2, numeric passes see scale 2.5:
            // emulates an op whose backward disagrees with its forward.
            let n = calls.get();
            calls.set(n + 1);
            let factor = if n == 0 { 2.0 } else { 2.5 };
            ins[0].scale(factor)?.sum_all()
        },
        &[x],
        DEFAULT_STEP,
        DEFAULT_TOLERANCE,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_at_1e4() {
        for report in op_suite(0x5eed).unwrap() {
            assert!(report.passed(), "{}", report);
        }
    }

    #[test]
    fn suite_is_deterministic() {
        let a = op_suite(7).unwrap();
        let b = op_suite(7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.max_rel_err.to_bits(), y.max_rel_err.to_bits());
        }
    }

    #[test]
    fn corrupted_control_fails() {
        let report = corrupted_control(3).unwrap();
        assert!(!report.passed());
    }
}
