use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    TConv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    Generative,
    Discriminative,
}

/// Geometry of one convolution or transposed-convolution layer.
///
/// For `TConv` the stride is the zero-insertion factor: `stride - 1` zero
/// rows and columns sit between neighbouring input elements before a
/// stride-1 convolution runs over the padded result.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub layer_id: String,
    pub kind: LayerKind,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub model_role: ModelRole,
}

fn conv_out(input: usize, pad: usize, k: usize, stride: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

// `pad` pads the zero-inserted input; the output is a stride-1 valid
// convolution over that expansion.
fn tconv_out(input: usize, pad: usize, k: usize, stride: usize) -> Option<usize> {
    let expanded = (input - 1) * stride + 1 + 2 * pad;
    if expanded < k {
        return None;
    }
    Some(expanded - k + 1)
}

impl LayerSpec {
    /// Convenience constructor for single-channel, square layers used in tests and examples.
    pub fn square(id: &str, kind: LayerKind, size: usize, k: usize, stride: usize, padding: usize) -> Self {
        LayerSpec {
            layer_id: id.to_string(),
            kind,
            in_h: size,
            in_w: size,
            in_c: 1,
            out_c: 1,
            k_h: k,
            k_w: k,
            stride,
            padding,
            model_role: match kind {
                LayerKind::Conv => ModelRole::Discriminative,
                LayerKind::TConv => ModelRole::Generative,
            },
        }
    }

    pub fn with_channels(mut self, in_c: usize, out_c: usize) -> Self {
        self.in_c = in_c;
        self.out_c = out_c;
        self
    }

    pub fn is_tconv(&self) -> bool {
        self.kind == LayerKind::TConv
    }

    fn dim_err(&self, field: &'static str, message: String) -> ModelError {
        ModelError::Dimension {
            layer: self.layer_id.clone(),
            field,
            message,
        }
    }

    /// Checks every geometric invariant; the error names the offending field.
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("in_h", self.in_h),
            ("in_w", self.in_w),
            ("in_c", self.in_c),
            ("out_c", self.out_c),
            ("k_h", self.k_h),
            ("k_w", self.k_w),
            ("stride", self.stride),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(self.dim_err(name, "must be at least 1".into()));
            }
        }
        self.try_out_h()?;
        self.try_out_w()?;
        Ok(())
    }

    fn out_dim(&self, input: usize, k: usize) -> Option<usize> {
        match self.kind {
            LayerKind::Conv => conv_out(input, self.padding, k, self.stride),
            LayerKind::TConv => tconv_out(input, self.padding, k, self.stride),
        }
    }

    pub fn try_out_h(&self) -> Result<usize, ModelError> {
        self.out_dim(self.in_h, self.k_h).ok_or_else(|| {
            self.dim_err("in_h", format!("output height would be < 1 (k_h={}, padding={})", self.k_h, self.padding))
        })
    }

    pub fn try_out_w(&self) -> Result<usize, ModelError> {
        self.out_dim(self.in_w, self.k_w).ok_or_else(|| {
            self.dim_err("in_w", format!("output width would be < 1 (k_w={}, padding={})", self.k_w, self.padding))
        })
    }

    /// Output height. Panics on an unvalidated spec.
    pub fn out_h(&self) -> usize {
        self.try_out_h().expect("layer spec not validated")
    }

    pub fn out_w(&self) -> usize {
        self.try_out_w().expect("layer spec not validated")
    }

    /// Height of the zero-inserted, zero-padded input of a TConv layer.
    pub fn expanded_h(&self) -> usize {
        (self.in_h - 1) * self.stride + 1 + 2 * self.padding
    }

    pub fn expanded_w(&self) -> usize {
        (self.in_w - 1) * self.stride + 1 + 2 * self.padding
    }

    /// Multiply-adds of a dense execution (over the expanded input for TConv).
    pub fn dense_macs(&self) -> u64 {
        (self.out_h() * self.out_w() * self.k_h * self.k_w * self.in_c * self.out_c) as u64
    }

    /// The stride-1, unpadded convolution that a TConv layer reduces to once
    /// its input has been expanded.
    pub fn expanded_conv(&self) -> LayerSpec {
        LayerSpec {
            layer_id: format!("{}.expanded", self.layer_id),
            kind: LayerKind::Conv,
            in_h: self.expanded_h(),
            in_w: self.expanded_w(),
            stride: 1,
            padding: 0,
            ..self.clone()
        }
    }

    /// Input tensor dims in (channel, height, width) order.
    pub fn input_dims(&self) -> [usize; 3] {
        [self.in_c, self.in_h, self.in_w]
    }

    /// Filter tensor dims in (out channel, in channel, row, column) order.
    pub fn filter_dims(&self) -> [usize; 4] {
        [self.out_c, self.in_c, self.k_h, self.k_w]
    }

    pub fn output_dims(&self) -> [usize; 3] {
        [self.out_c, self.out_h(), self.out_w()]
    }
}
