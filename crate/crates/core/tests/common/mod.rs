#![allow(dead_code)]

pub mod addrgen_ref;
pub mod cycle_oracle;
pub mod programs;

use ganax::model::{LayerKind, LayerSpec, ModelRole, Tensor};
use ganax::Scalar;
use proptest::prelude::*;
use rand::SeedableRng;

/// Random valid layer: inputs up to `max_in` square-ish, up to `max_c`
/// channels, k in {3,4,5}, s in 1..=4, p < k.
pub fn arb_layer(max_in: usize, max_c: usize) -> impl Strategy<Value = LayerSpec> {
    (
        prop_oneof![Just(LayerKind::Conv), Just(LayerKind::TConv)],
        2..=max_in,
        2..=max_in,
        1..=max_c,
        1..=max_c,
        3usize..=5,
        1usize..=4,
        0usize..5,
    )
        .prop_filter_map("invalid geometry", |(kind, h, w, ic, oc, k, s, p)| {
            let l = LayerSpec {
                layer_id: "rand".into(),
                kind,
                in_h: h,
                in_w: w,
                in_c: ic,
                out_c: oc,
                k_h: k,
                k_w: k,
                stride: s,
                padding: p.min(k - 1),
                model_role: ModelRole::Generative,
            };
            l.validate().ok().map(|_| l)
        })
}

pub fn tensors<T: Scalar>(l: &LayerSpec, seed: u64) -> (Tensor<T>, Tensor<T>) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (Tensor::random(&l.input_dims(), &mut rng), Tensor::random(&l.filter_dims(), &mut rng))
}
