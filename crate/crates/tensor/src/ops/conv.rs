use crate::error::{Result, TensorError};
use crate::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::scalar::Scalar;
use crate::tensor::{BackwardFn, Tensor};

/// Structural parameters of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dCfg {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for Conv2dCfg {
    fn default() -> Self {
        Conv2dCfg {
            stride: 1,
            padding: 0,
            dilation: 1,
            groups: 1,
        }
    }
}

impl Conv2dCfg {
    pub fn strided(stride: usize, padding: usize) -> Self {
        Conv2dCfg {
            stride,
            padding,
            ..Default::default()
        }
    }

    pub fn dilated(dilation: usize, padding: usize) -> Self {
        Conv2dCfg {
            dilation,
            padding,
            ..Default::default()
        }
    }

    fn out_extent(&self, input: usize, k: usize) -> Option<usize> {
        let span = self.dilation * (k - 1) + 1;
        let padded = input + 2 * self.padding;
        if padded < span {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }
}

/// Unrolls sliding windows of one `[C, H, W]` sample into a
/// `[C*k*k, out_h*out_w]` column matrix. Out-of-image taps read zero.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    cfg: &Conv2dCfg,
    out_h: usize,
    out_w: usize,
    cols: &mut [T],
) {
    let n_cols = out_h * out_w;
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let out_row = &mut cols[row * n_cols..(row + 1) * n_cols];
                for oy in 0..out_h {
                    let iy = (oy * cfg.stride + ki * cfg.dilation) as isize - cfg.padding as isize;
                    let dst = &mut out_row[oy * out_w..(oy + 1) * out_w];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix =
                            (ox * cfg.stride + kj * cfg.dilation) as isize - cfg.padding as isize;
                        *d = if ix >= 0 && ix < w as isize {
                            src_row[ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Inverse of [`im2col`]: scatters a column matrix back onto the image grid,
/// accumulating where windows overlap. `image` must be pre-zeroed.
#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    cfg: &Conv2dCfg,
    out_h: usize,
    out_w: usize,
    image: &mut [T],
) {
    let n_cols = out_h * out_w;
    for ci in 0..c {
        let plane = &mut image[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src_row = &cols[row * n_cols..(row + 1) * n_cols];
                for oy in 0..out_h {
                    let iy = (oy * cfg.stride + ki * cfg.dilation) as isize - cfg.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &src_row[oy * out_w..(oy + 1) * out_w];
                    for (ox, &s) in src.iter().enumerate() {
                        let ix =
                            (ox * cfg.stride + kj * cfg.dilation) as isize - cfg.padding as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + s;
                        }
                    }
                }
            }
        }
    }
}

struct Conv2dBackward {
    cfg: Conv2dCfg,
    has_bias: bool,
    out_h: usize,
    out_w: usize,
}

impl<T: Scalar> BackwardFn<T> for Conv2dBackward {
    fn apply(&self, grad_out: &[T], parents: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        let input = parents[0].data();
        let weight = parents[1].data();
        let in_shape = parents[0].shape();
        let w_shape = parents[1].shape();
        let (h, w) = (in_shape[1], in_shape[2]);
        let (c_out, cig, k) = (w_shape[0], w_shape[1], w_shape[2]);
        let groups = self.cfg.groups;
        let cog = c_out / groups;
        let n_cols = self.out_h * self.out_w;
        let krows = cig * k * k;

        let need_input_grad = parents[0].requires_grad();
        let mut grad_input = vec![T::zero(); if need_input_grad { input.len() } else { 0 }];
        let mut grad_weight = vec![T::zero(); weight.len()];
        let mut cols = vec![T::zero(); krows * n_cols];
        let mut grad_cols = vec![T::zero(); if need_input_grad { krows * n_cols } else { 0 }];

        for g in 0..groups {
            let in_g = &input[g * cig * h * w..(g + 1) * cig * h * w];
            let w_g = &weight[g * cog * krows..(g + 1) * cog * krows];
            let gout_g = &grad_out[g * cog * n_cols..(g + 1) * cog * n_cols];

            im2col(in_g, cig, h, w, k, &self.cfg, self.out_h, self.out_w, &mut cols);

            // dW = dY · colsᵀ
            let gw_g = &mut grad_weight[g * cog * krows..(g + 1) * cog * krows];
            gemm_nt(cog, n_cols, krows, gout_g, &cols, gw_g);

            if need_input_grad {
                // dCols = Wᵀ · dY, then scatter back onto the input grid.
                grad_cols.fill(T::zero());
                gemm_tn(krows, cog, n_cols, w_g, gout_g, &mut grad_cols);
                let gi_g = &mut grad_input[g * cig * h * w..(g + 1) * cig * h * w];
                col2im(
                    &grad_cols, cig, h, w, k, &self.cfg, self.out_h, self.out_w, gi_g,
                );
            }
        }

        let grad_bias = if self.has_bias {
            let mut gb = vec![T::zero(); c_out];
            for (co, gb_c) in gb.iter_mut().enumerate() {
                *gb_c = grad_out[co * n_cols..(co + 1) * n_cols].iter().copied().sum();
            }
            Some(gb)
        } else {
            None
        };

        let mut out = vec![
            if need_input_grad { Some(grad_input) } else { None },
            Some(grad_weight),
        ];
        if self.has_bias {
            out.push(grad_bias);
        }
        out
    }

    fn name(&self) -> &'static str {
        "conv2d"
    }
}

impl<T: Scalar> Tensor<T> {
    /// 2-D convolution of a `[C_in, H, W]` input with a
    /// `[C_out, C_in/groups, k, k]` kernel.
    ///
    /// Output extent per axis is
    /// `floor((H + 2*padding - dilation*(k-1) - 1) / stride) + 1`.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        cfg: Conv2dCfg,
    ) -> Result<Tensor<T>> {
        if self.rank() != 3 {
            return Err(TensorError::dim(
                "conv2d",
                format!("input must be [C,H,W], got {:?}", self.shape()),
            ));
        }
        if weight.rank() != 4 {
            return Err(TensorError::dim(
                "conv2d",
                format!("weight must be [C_out,C_in/g,k,k], got {:?}", weight.shape()),
            ));
        }
        let (c_in, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (c_out, cig, kh, kw) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        if kh != kw {
            return Err(TensorError::config(
                "conv2d",
                format!("square kernels only, got {}x{}", kh, kw),
            ));
        }
        let k = kh;
        if k % 2 == 0 {
            return Err(TensorError::config("conv2d", format!("kernel size {} must be odd", k)));
        }
        if cfg.stride == 0 || cfg.dilation == 0 || cfg.groups == 0 {
            return Err(TensorError::config(
                "conv2d",
                "stride, dilation and groups must be positive",
            ));
        }
        if c_in % cfg.groups != 0 || c_out % cfg.groups != 0 {
            return Err(TensorError::config(
                "conv2d",
                format!(
                    "groups {} must divide in-channels {} and out-channels {}",
                    cfg.groups, c_in, c_out
                ),
            ));
        }
        if cig != c_in / cfg.groups {
            return Err(TensorError::dim(
                "conv2d",
                format!(
                    "weight expects {} in-channels per group, input provides {}",
                    cig,
                    c_in / cfg.groups
                ),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [c_out] {
                return Err(TensorError::dim(
                    "conv2d",
                    format!("bias shape {:?}, expected [{}]", b.shape(), c_out),
                ));
            }
        }
        let (Some(out_h), Some(out_w)) = (cfg.out_extent(h, k), cfg.out_extent(w, k)) else {
            return Err(TensorError::dim(
                "conv2d",
                format!("kernel span exceeds padded input ({}x{}, k={})", h, w, k),
            ));
        };

        let n_cols = out_h * out_w;
        let krows = cig * k * k;
        let cog = c_out / cfg.groups;
        let input = self.data();
        let wdata = weight.data();
        let mut out = vec![T::zero(); c_out * n_cols];
        let mut cols = vec![T::zero(); krows * n_cols];

        for g in 0..cfg.groups {
            let in_g = &input[g * cig * h * w..(g + 1) * cig * h * w];
            im2col(in_g, cig, h, w, k, &cfg, out_h, out_w, &mut cols);
            let w_g = &wdata[g * cog * krows..(g + 1) * cog * krows];
            let out_g = &mut out[g * cog * n_cols..(g + 1) * cog * n_cols];
            gemm_nn(cog, krows, n_cols, w_g, &cols, out_g);
        }

        if let Some(b) = bias {
            let bd = b.data();
            for co in 0..c_out {
                let bias_c = bd[co];
                for v in &mut out[co * n_cols..(co + 1) * n_cols] {
                    *v = *v + bias_c;
                }
            }
        }

        drop(input);
        drop(wdata);

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Ok(Tensor::from_op(
            vec![c_out, out_h, out_w],
            out,
            parents,
            Box::new(Conv2dBackward {
                cfg,
                has_bias: bias.is_some(),
                out_h,
                out_w,
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct six-loop convolution, the independent reference.
    #[allow(clippy::too_many_arguments)]
    pub fn conv2d_naive(
        input: &[f64],
        c_in: usize,
        h: usize,
        w: usize,
        weight: &[f64],
        c_out: usize,
        k: usize,
        bias: Option<&[f64]>,
        cfg: &Conv2dCfg,
    ) -> Vec<f64> {
        let out_h = cfg.out_extent(h, k).unwrap();
        let out_w = cfg.out_extent(w, k).unwrap();
        let cig = c_in / cfg.groups;
        let cog = c_out / cfg.groups;
        let mut out = vec![0.0; c_out * out_h * out_w];
        for co in 0..c_out {
            let g = co / cog;
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = bias.map_or(0.0, |b| b[co]);
                    for ci_local in 0..cig {
                        let ci = g * cig + ci_local;
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * cfg.stride + ky * cfg.dilation) as isize
                                    - cfg.padding as isize;
                                let ix = (ox * cfg.stride + kx * cfg.dilation) as isize
                                    - cfg.padding as isize;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    let iv = input[(ci * h + iy as usize) * w + ix as usize];
                                    let wv = weight[((co * cig + ci_local) * k + ky) * k + kx];
                                    acc += iv * wv;
                                }
                            }
                        }
                    }
                    out[(co * out_h + oy) * out_w + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_passes_through() {
        let x = Tensor::<f64>::full(&[1, 4, 4], 2.0);
        let w = Tensor::<f64>::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let y = x.conv2d(&w, None, Conv2dCfg::default()).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4]);
        assert!(y.to_vec().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn stride_two_halves_extent() {
        let x = Tensor::<f32>::zeros(&[3, 384, 384]);
        let w = Tensor::<f32>::zeros(&[16, 3, 7, 7]);
        let y = x.conv2d(&w, None, Conv2dCfg::strided(2, 3)).unwrap();
        assert_eq!(y.shape(), &[16, 192, 192]);
    }

    #[test]
    fn matches_naive_loop_oracle() {
        let mut state = 0x2468u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let (c_in, h, w, c_out, k) = (2, 4, 4, 3, 3);
        let input: Vec<f64> = (0..c_in * h * w).map(|_| next()).collect();
        let weight: Vec<f64> = (0..c_out * c_in * k * k).map(|_| next()).collect();
        let cfg = Conv2dCfg {
            stride: 1,
            padding: 1,
            dilation: 1,
            groups: 1,
        };
        let want = conv2d_naive(&input, c_in, h, w, &weight, c_out, k, None, &cfg);

        let x = Tensor::from_vec(&[c_in, h, w], input).unwrap();
        let wt = Tensor::from_vec(&[c_out, c_in, k, k], weight).unwrap();
        let got = x.conv2d(&wt, None, cfg).unwrap();
        for (a, b) in got.to_vec().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn grouped_and_dilated_match_naive() {
        let mut state = 0x1357u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let (c_in, h, w, c_out, k) = (4, 7, 6, 6, 3);
        let cfg = Conv2dCfg {
            stride: 1,
            padding: 2,
            dilation: 2,
            groups: 2,
        };
        let input: Vec<f64> = (0..c_in * h * w).map(|_| next()).collect();
        let weight: Vec<f64> = (0..c_out * (c_in / 2) * k * k).map(|_| next()).collect();
        let bias: Vec<f64> = (0..c_out).map(|_| next()).collect();
        let want = conv2d_naive(&input, c_in, h, w, &weight, c_out, k, Some(&bias), &cfg);

        let x = Tensor::from_vec(&[c_in, h, w], input).unwrap();
        let wt = Tensor::from_vec(&[c_out, c_in / 2, k, k], weight).unwrap();
        let b = Tensor::from_vec(&[c_out], bias).unwrap();
        let got = x.conv2d(&wt, Some(&b), cfg).unwrap();
        for (a, b) in got.to_vec().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn rejects_bad_groups() {
        let x = Tensor::<f32>::zeros(&[3, 8, 8]);
        let w = Tensor::<f32>::zeros(&[4, 1, 3, 3]);
        let cfg = Conv2dCfg {
            groups: 2,
            ..Default::default()
        };
        assert!(matches!(
            x.conv2d(&w, None, cfg),
            Err(TensorError::Config { .. })
        ));
    }

    #[test]
    fn rejects_even_kernel() {
        let x = Tensor::<f32>::zeros(&[1, 8, 8]);
        let w = Tensor::<f32>::zeros(&[1, 1, 2, 2]);
        assert!(x.conv2d(&w, None, Conv2dCfg::default()).is_err());
    }
}
