use ganax::isa::{AccessOp, AccessUop, AddrReg, ExecOp, GlobalUop, Target, UopProgram, LOCAL_SLOTS, NUM_PVS};
use proptest::prelude::*;

fn exec_op() -> impl Strategy<Value = ExecOp> {
    prop::sample::select(ExecOp::ALL.to_vec())
}

fn target() -> impl Strategy<Value = Target> {
    prop_oneof![(0u8..NUM_PVS as u8).prop_map(Target::Pv), Just(Target::All)]
}

fn access() -> impl Strategy<Value = GlobalUop> {
    let op = prop_oneof![
        (prop::sample::select(AddrReg::ALL.to_vec()), any::<u16>()).prop_map(|(reg, imm)| AccessOp::Cfg { reg, imm }),
        Just(AccessOp::Start),
        Just(AccessOp::Stop),
    ];
    (op, target(), 0u8..3).prop_map(|(op, target, addrgen)| GlobalUop::Access(AccessUop { op, target, addrgen }))
}

/// A valid program: 16 non-empty local images and MIMD indices that resolve.
pub fn program() -> impl Strategy<Value = UopProgram> {
    prop::collection::vec(prop::collection::vec(exec_op(), 1..=LOCAL_SLOTS), NUM_PVS).prop_flat_map(|images| {
        let lens: Vec<usize> = images.iter().map(Vec::len).collect();
        let mimd = lens
            .iter()
            .map(|&n| (0..n as u8).boxed())
            .collect::<Vec<_>>()
            .prop_map(|v| GlobalUop::MimdExe(v.try_into().unwrap()));
        let word = prop_oneof![
            exec_op().prop_map(GlobalUop::Exec),
            access(),
            (target(), any::<u16>()).prop_map(|(target, imm)| GlobalUop::MimdLd { target, imm }),
            mimd,
        ];
        (prop::collection::vec(word, 0..80), Just(images))
            .prop_map(|(global, images)| UopProgram::new(global, images))
    })
}
