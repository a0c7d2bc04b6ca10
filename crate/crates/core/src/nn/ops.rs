//! Forward-only transform kernels.
//!
//! All arithmetic is `f32`. Every output element is accumulated in a fixed
//! order (bias, then input channel, kernel row, kernel column) so results do
//! not depend on how callers schedule work.

use crate::error::{invalid, Result};
use crate::tensor::{Param, Tensor};

/// Smallest admissible GDN β.
pub const GDN_BETA_FLOOR: f32 = 1e-6;

/// Output extent of a strided convolution along one axis.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output extent of a transposed convolution along one axis.
pub fn deconv_output_len(
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    let full = (len - 1) * stride + kernel + output_padding;
    full.checked_sub(2 * padding).filter(|&n| n > 0)
}

fn check_kernel(kernel: &Param) -> Result<(usize, usize, usize)> {
    let [a, b, kh, kw] = kernel.shape[..] else {
        return invalid(format!("kernel must be rank 4, got {:?}", kernel.shape));
    };
    if kh != kw || kh == 0 {
        return invalid(format!("kernel must be square, got {kh}x{kw}"));
    }
    if a == 0 || b == 0 {
        return invalid("kernel has an empty channel axis");
    }
    Ok((a, b, kh))
}

/// Index range `[lo, hi)` of output positions `o` for which
/// `o * stride + offset - padding` lands inside `[0, len)`.
fn valid_range(out_len: usize, len: usize, stride: usize, offset: usize, padding: usize) -> (usize, usize) {
    // o*stride + offset >= padding
    let lo = if offset >= padding {
        0
    } else {
        (padding - offset).div_ceil(stride)
    };
    // o*stride + offset - padding <= len - 1
    let hi = if len + padding > offset {
        ((len + padding - offset - 1) / stride + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Strided 2-d cross-correlation with zero padding.
///
/// `kernel` has shape `(out_ch, in_ch, k, k)`.
pub fn conv2d(input: &Tensor, kernel: &Param, bias: &[f32], stride: usize, padding: usize) -> Result<Tensor> {
    let (out_ch, in_ch, k) = check_kernel(kernel)?;
    let (c, h, w) = input.shape();
    if c != in_ch {
        return invalid(format!("conv2d: input has {c} channels, kernel expects {in_ch}"));
    }
    if bias.len() != out_ch {
        return invalid(format!("conv2d: bias length {} != {out_ch}", bias.len()));
    }
    let (Some(oh), Some(ow)) = (
        conv_output_len(h, k, stride, padding),
        conv_output_len(w, k, stride, padding),
    ) else {
        return invalid(format!(
            "conv2d: {h}x{w} input too small for kernel {k} with padding {padding} (or stride 0)"
        ));
    };

    let mut out = vec![0.0f32; out_ch * oh * ow];
    let src = input.data();
    for (oc, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
        plane.fill(bias[oc]);
        for ic in 0..in_ch {
            let in_plane = &src[ic * h * w..(ic + 1) * h * w];
            let kbase = (oc * in_ch + ic) * k * k;
            for ky in 0..k {
                let (y0, y1) = valid_range(oh, h, stride, ky, padding);
                for kx in 0..k {
                    let wgt = kernel.data[kbase + ky * k + kx];
                    let (x0, x1) = valid_range(ow, w, stride, kx, padding);
                    for oy in y0..y1 {
                        let iy = oy * stride + ky - padding;
                        let in_row = &in_plane[iy * w..(iy + 1) * w];
                        let out_row = &mut plane[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let off = x0 + kx - padding;
                            for (o, &v) in out_row[x0..x1].iter_mut().zip(&in_row[off..off + (x1 - x0)]) {
                                *o += wgt * v;
                            }
                        } else {
                            for ox in x0..x1 {
                                out_row[ox] += wgt * in_row[ox * stride + kx - padding];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(out_ch, oh, ow, out)
}

/// Transposed convolution, the adjoint of [`conv2d`] with the same stride
/// and padding.
///
/// `kernel` has shape `(in_ch, out_ch, k, k)`, i.e. the same array a forward
/// convolution from `out_ch` to `in_ch` channels would use. `output_padding`
/// extends the bottom/right edge so stride-2 layers can exactly double sizes.
pub fn deconv2d(
    input: &Tensor,
    kernel: &Param,
    bias: &[f32],
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor> {
    let (in_ch, out_ch, k) = check_kernel(kernel)?;
    let (c, h, w) = input.shape();
    if c != in_ch {
        return invalid(format!("deconv2d: input has {c} channels, kernel expects {in_ch}"));
    }
    if bias.len() != out_ch {
        return invalid(format!("deconv2d: bias length {} != {out_ch}", bias.len()));
    }
    if stride == 0 || output_padding >= stride {
        return invalid(format!("deconv2d: output padding {output_padding} must be below stride {stride}"));
    }
    let (Some(oh), Some(ow)) = (
        deconv_output_len(h, k, stride, padding, output_padding),
        deconv_output_len(w, k, stride, padding, output_padding),
    ) else {
        return invalid(format!("deconv2d: padding {padding} too large for {h}x{w} input"));
    };

    let mut out = vec![0.0f32; out_ch * oh * ow];
    let src = input.data();
    for (oc, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
        plane.fill(bias[oc]);
        for ic in 0..in_ch {
            let in_plane = &src[ic * h * w..(ic + 1) * h * w];
            let kbase = (ic * out_ch + oc) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let wgt = kernel.data[kbase + ky * k + kx];
                    for iy in 0..h {
                        let Some(oy) = (iy * stride + ky).checked_sub(padding).filter(|&v| v < oh) else {
                            continue;
                        };
                        let in_row = &in_plane[iy * w..(iy + 1) * w];
                        let out_row = &mut plane[oy * ow..(oy + 1) * ow];
                        for (ix, &v) in in_row.iter().enumerate() {
                            let ox = ix * stride + kx;
                            if ox >= padding && ox - padding < ow {
                                out_row[ox - padding] += wgt * v;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(out_ch, oh, ow, out)
}

/// Generalized divisive normalization over channels at every position:
/// `y_i = x_i / sqrt(β_i + Σ_j γ_ij x_j²)`, or the inverse (multiply) form.
///
/// `gamma` is `channels × channels`, row `i` holding the weights for output `i`.
pub fn gdn(input: &Tensor, beta: &[f32], gamma: &Param, inverse: bool) -> Result<Tensor> {
    let (c, h, w) = input.shape();
    if beta.len() != c {
        return invalid(format!("gdn: beta length {} != {c} channels", beta.len()));
    }
    if gamma.shape != [c, c] {
        return invalid(format!("gdn: gamma shape {:?} != [{c}, {c}]", gamma.shape));
    }
    if let Some(b) = beta.iter().find(|&&b| !(b >= GDN_BETA_FLOOR)) {
        return invalid(format!("gdn: beta {b} below floor {GDN_BETA_FLOOR}"));
    }
    if let Some(g) = gamma.data.iter().find(|&&g| !(g >= 0.0)) {
        return invalid(format!("gdn: negative gamma {g}"));
    }
    let n = h * w;
    let src = input.data();
    let squares: Vec<f32> = src.iter().map(|v| v * v).collect();
    let mut out = vec![0.0f32; c * n];
    let mut norm = vec![0.0f32; n];
    for i in 0..c {
        norm.fill(beta[i]);
        for j in 0..c {
            let g = gamma.data[i * c + j];
            for (acc, &sq) in norm.iter_mut().zip(&squares[j * n..(j + 1) * n]) {
                *acc += g * sq;
            }
        }
        let x = &src[i * n..(i + 1) * n];
        let y = &mut out[i * n..(i + 1) * n];
        for ((y, &x), &d) in y.iter_mut().zip(x).zip(&norm) {
            *y = if inverse { x * d.sqrt() } else { x / d.sqrt() };
        }
    }
    Tensor::new(c, h, w, out)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f32) -> Tensor {
        Tensor::new(1, 1, 1, vec![v]).unwrap()
    }

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn random_param(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Param {
        let n = shape.iter().product();
        Param::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct evaluation of the cross-correlation definition, independent of
    /// the row-range bookkeeping in `conv2d`.
    fn conv_reference(x: &Tensor, k: &Param, stride: usize, pad: usize) -> Vec<f64> {
        let (oc_n, ic_n, ks) = (k.shape[0], k.shape[1], k.shape[2]);
        let (_, h, w) = x.shape();
        let oh = (h + 2 * pad - ks) / stride + 1;
        let ow = (w + 2 * pad - ks) / stride + 1;
        let mut out = vec![0.0; oc_n * oh * ow];
        for oc in 0..oc_n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = 0.0f64;
                    for ic in 0..ic_n {
                        for ky in 0..ks {
                            for kx in 0..ks {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                s += k.data[((oc * ic_n + ic) * ks + ky) * ks + kx] as f64
                                    * x.get(ic, iy as usize, ix as usize) as f64;
                            }
                        }
                    }
                    out[(oc * oh + oy) * ow + ox] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv_scalar_product() {
        let k = Param::new(vec![1, 1, 1, 1], vec![3.0]).unwrap();
        let y = conv2d(&scalar(2.0), &k, &[0.0], 1, 0).unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn conv_sum_of_ones() {
        let x = Tensor::filled(1, 3, 3, 1.0).unwrap();
        let k = Param::filled(vec![1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k, &[0.0], 1, 0).unwrap();
        assert_eq!(y.shape(), (1, 1, 1));
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn conv_stride_two_shape() {
        let x = Tensor::zeros(1, 8, 8).unwrap();
        let k = Param::zeros(vec![1, 1, 5, 5]);
        let y = conv2d(&x, &k, &[0.0], 2, 2).unwrap();
        assert_eq!((y.height(), y.width()), (4, 4));
    }

    #[test]
    fn conv_matches_direct_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(stride, pad, ks, h, w) in &[(1, 1, 3, 5, 7), (2, 2, 5, 9, 6), (2, 1, 3, 8, 8), (1, 0, 5, 6, 5)] {
            let x = random_tensor(&mut rng, 3, h, w);
            let k = random_param(&mut rng, vec![2, 3, ks, ks]);
            let y = conv2d(&x, &k, &[0.0, 0.0], stride, pad).unwrap();
            let r = conv_reference(&x, &k, stride, pad);
            for (a, b) in y.data().iter().zip(&r) {
                assert!((*a as f64 - b).abs() < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(2, 4, 4).unwrap();
        let k = Param::zeros(vec![1, 3, 3, 3]);
        assert!(conv2d(&x, &k, &[0.0], 1, 1).is_err());
        let k = Param::zeros(vec![1, 2, 3, 3]);
        assert!(conv2d(&x, &k, &[0.0, 0.0], 1, 1).is_err());
    }

    #[test]
    fn deconv_scalar() {
        let k = Param::new(vec![1, 1, 1, 1], vec![4.0]).unwrap();
        let y = deconv2d(&scalar(1.0), &k, &[0.0], 1, 0, 0).unwrap();
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn deconv_shapes() {
        let x = Tensor::zeros(1, 4, 4).unwrap();
        let k = Param::zeros(vec![1, 1, 5, 5]);
        let y = deconv2d(&x, &k, &[0.0], 2, 2, 0).unwrap();
        assert_eq!((y.height(), y.width()), (7, 7));
        let y = deconv2d(&x, &k, &[0.0], 2, 2, 1).unwrap();
        assert_eq!((y.height(), y.width()), (8, 8));
    }

    #[test]
    fn conv_deconv_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let (ks, stride) = if trial % 2 == 0 { (3, 2) } else { (5, 1) };
            let pad = ks / 2;
            let x = random_tensor(&mut rng, 1, 6, 6);
            let k = random_param(&mut rng, vec![2, 1, ks, ks]);
            let cx = conv2d(&x, &k, &[0.0, 0.0], stride, pad).unwrap();
            let y = random_tensor(&mut rng, 2, cx.height(), cx.width());
            let dy = deconv2d(&y, &k, &[0.0], stride, pad, stride - 1).unwrap();
            assert_eq!(dy.shape(), x.shape());
            let lhs = cx.dot(&y).unwrap();
            let rhs = x.dot(&dy).unwrap();
            assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(rhs.abs()).max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn gdn_identity_when_gamma_zero() {
        let x = Tensor::new(2, 1, 2, vec![1.0, -2.0, 3.5, 0.25]).unwrap();
        let y = gdn(&x, &[1.0, 1.0], &Param::zeros(vec![2, 2]), false).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn gdn_self_normalization() {
        let g = Param::new(vec![1, 1], vec![1.0]).unwrap();
        let y = gdn(&scalar(3.0), &[GDN_BETA_FLOOR], &g, false).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gdn_two_channels_by_hand() {
        let x = Tensor::new(2, 1, 1, vec![1.0, 2.0]).unwrap();
        let g = Param::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let y = gdn(&x, &[1.0, 1.0], &g, false).unwrap();
        assert!((y.data()[0] - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!((y.data()[1] - 2.0 / 5f32.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn gdn_rejects_beta_below_floor_and_negative_gamma() {
        let g = Param::new(vec![1, 1], vec![1.0]).unwrap();
        assert!(gdn(&scalar(1.0), &[0.0], &g, false).is_err());
        assert!(gdn(&scalar(1.0), &[f32::NAN], &g, false).is_err());
        let g = Param::new(vec![1, 1], vec![-0.1]).unwrap();
        assert!(gdn(&scalar(1.0), &[1.0], &g, false).is_err());
    }

    #[test]
    fn relu_examples() {
        let x = Tensor::new(1, 1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::filled(2, 2, 2, -0.5).unwrap();
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        assert_eq!(relu(&relu(&x)), relu(&x));
    }
}
