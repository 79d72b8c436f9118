//! Reference kernels: direct loop nests with no reorganization and no skipping.

use super::{LayerKind, LayerSpec, ModelError, Tensor};
use crate::scalar::Scalar;
use num_traits::Zero;

fn check_dims<T: Scalar>(input: &Tensor<T>, filters: &Tensor<T>, layer: &LayerSpec) -> Result<(), ModelError> {
    layer.validate()?;
    if input.dims() != layer.input_dims() {
        return Err(ModelError::Usage(format!(
            "layer {}: input dims {:?} != expected {:?}",
            layer.layer_id,
            input.dims(),
            layer.input_dims()
        )));
    }
    if filters.dims() != layer.filter_dims() {
        return Err(ModelError::Usage(format!(
            "layer {}: filter dims {:?} != expected {:?}",
            layer.layer_id,
            filters.dims(),
            layer.filter_dims()
        )));
    }
    Ok(())
}

/// Zero-inserts `stride - 1` rows/columns between input elements and pads
/// `padding` zeros on every side. Source element `(y, x)` lands at
/// `(padding + stride*y, padding + stride*x)`.
pub fn expand_input<T: Scalar>(input: &Tensor<T>, layer: &LayerSpec) -> Result<Tensor<T>, ModelError> {
    if layer.kind != LayerKind::TConv {
        return Err(ModelError::Usage(format!(
            "layer {}: expand_input needs a tconv layer",
            layer.layer_id
        )));
    }
    let [c, h, w] = match input.dims() {
        &[c, h, w] => [c, h, w],
        d => return Err(ModelError::Usage(format!("expand_input needs a rank-3 tensor, got {d:?}"))),
    };
    let (s, p) = (layer.stride, layer.padding);
    let eh = (h - 1) * s + 1 + 2 * p;
    let ew = (w - 1) * s + 1 + 2 * p;
    let mut out = Tensor::zeros(&[c, eh, ew]);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out.set(&[ch, p + s * y, p + s * x], input.at(&[ch, y, x]));
            }
        }
    }
    Ok(out)
}

/// Direct convolution returning unnarrowed accumulators.
pub fn golden_conv_acc<T: Scalar>(
    input: &Tensor<T>,
    filters: &Tensor<T>,
    layer: &LayerSpec,
) -> Result<Vec<T::Acc>, ModelError> {
    if layer.kind != LayerKind::Conv {
        return Err(ModelError::Usage(format!("layer {}: golden_conv needs a conv layer", layer.layer_id)));
    }
    check_dims(input, filters, layer)?;
    let (oh, ow) = (layer.out_h(), layer.out_w());
    let (s, p) = (layer.stride as isize, layer.padding as isize);
    let mut out = vec![T::Acc::zero(); layer.out_c * oh * ow];
    for o in 0..layer.out_c {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = T::Acc::zero();
                for c in 0..layer.in_c {
                    for ky in 0..layer.k_h {
                        let iy = y as isize * s + ky as isize - p;
                        if iy < 0 || iy >= layer.in_h as isize {
                            continue;
                        }
                        for kx in 0..layer.k_w {
                            let ix = x as isize * s + kx as isize - p;
                            if ix < 0 || ix >= layer.in_w as isize {
                                continue;
                            }
                            acc = T::mul_acc(
                                acc,
                                input.at(&[c, iy as usize, ix as usize]),
                                filters.at(&[o, c, ky, kx]),
                            );
                        }
                    }
                }
                out[(o * oh + y) * ow + x] = acc;
            }
        }
    }
    Ok(out)
}

fn narrow<T: Scalar>(acc: Vec<T::Acc>, dims: [usize; 3]) -> Tensor<T> {
    let data = acc.into_iter().map(T::from_acc).collect();
    Tensor::new(dims.to_vec(), data).expect("dims computed from layer")
}

pub fn golden_conv<T: Scalar>(input: &Tensor<T>, filters: &Tensor<T>, layer: &LayerSpec) -> Result<Tensor<T>, ModelError> {
    let acc = golden_conv_acc(input, filters, layer)?;
    Ok(narrow(acc, layer.output_dims()))
}

/// Transposed convolution defined as a stride-1 convolution over the
/// expanded input.
pub fn golden_tconv<T: Scalar>(input: &Tensor<T>, filters: &Tensor<T>, layer: &LayerSpec) -> Result<Tensor<T>, ModelError> {
    check_dims(input, filters, layer)?;
    let expanded = expand_input(input, layer)?;
    let conv = layer.expanded_conv();
    let acc = golden_conv_acc(&expanded, filters, &conv)?;
    Ok(narrow(acc, layer.output_dims()))
}

/// Dispatches on the layer kind.
pub fn golden_layer<T: Scalar>(input: &Tensor<T>, filters: &Tensor<T>, layer: &LayerSpec) -> Result<Tensor<T>, ModelError> {
    match layer.kind {
        LayerKind::Conv => golden_conv(input, filters, layer),
        LayerKind::TConv => golden_tconv(input, filters, layer),
    }
}
