use ganax::engines::{AddressGenConfig, AddressGenState};
use proptest::prelude::*;

/// Closed-form emission sequence: element i is offset + (addr + i·step) mod end,
/// and emission stops once the running index has wrapped `repeat` times.
pub fn reference(c: &AddressGenConfig) -> Vec<u16> {
    let (addr, step, end) = (u64::from(c.addr), u64::from(c.step), u64::from(c.end));
    let mut out = Vec::new();
    for i in 0.. {
        if (addr + i * step) / end >= u64::from(c.repeat) {
            break;
        }
        out.push(c.offset + ((addr + i * step) % end) as u16);
    }
    out
}

pub fn drain(g: &mut AddressGenState) -> Vec<u16> {
    std::iter::from_fn(|| g.tick()).collect()
}

pub fn config() -> impl Strategy<Value = AddressGenConfig> {
    (1u16..=64, 0u16..=6)
        .prop_flat_map(|(end, repeat)| (0..end, 1..=end, Just(end), Just(repeat), 0u16..=1000))
        .prop_map(|(addr, step, end, repeat, offset)| AddressGenConfig::new(addr, offset, step, end, repeat))
}
