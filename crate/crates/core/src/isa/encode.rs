//! 65-bit word layout.
//!
//! Bit 64 is the mode bit. Mode 1: bits `4i..4i+3` hold PV `i`'s local index.
//! Mode 0: bits 63..60 select the class (0 exec, 1 access.cfg, 2 access.start,
//! 3 access.stop, 4 mimd.ld). Exec words put the opcode in bits 59..56.
//! Access and `mimd.ld` words put the target in bits 59..55 (0-15 one PV, 16
//! all PVs), the generator in 54..52, the register in 51..49 and the
//! immediate in 15..0. Every other bit must be zero.

use super::{AccessOp, AccessUop, AddrReg, ExecOp, GlobalUop, IsaError, Target, NUM_PVS};

pub const WORD_BITS: u32 = 65;

const MODE_BIT: u128 = 1 << 64;
const CLASS_SHIFT: u32 = 60;
const OPCODE_SHIFT: u32 = 56;
const TARGET_SHIFT: u32 = 55;
const AG_SHIFT: u32 = 52;
const REG_SHIFT: u32 = 49;
const ALL_TARGET: u64 = 16;

const CLASS_EXEC: u64 = 0;
const CLASS_CFG: u64 = 1;
const CLASS_START: u64 = 2;
const CLASS_STOP: u64 = 3;
const CLASS_LD: u64 = 4;

fn target_bits(t: Target) -> Result<u64, IsaError> {
    match t {
        Target::All => Ok(ALL_TARGET),
        Target::Pv(p) if usize::from(p) < NUM_PVS => Ok(u64::from(p)),
        Target::Pv(p) => Err(IsaError::Invalid(format!("pv index {p} out of range"))),
    }
}

pub fn encode(uop: GlobalUop) -> Result<u128, IsaError> {
    let payload = match uop {
        GlobalUop::MimdExe(idx) => {
            let mut p = 0u64;
            for (pv, &i) in idx.iter().enumerate() {
                if i >= 16 {
                    return Err(IsaError::Invalid(format!("local index {i} for pv{pv} out of range")));
                }
                p |= u64::from(i) << (4 * pv);
            }
            return Ok(MODE_BIT | u128::from(p));
        }
        GlobalUop::Exec(op) => (CLASS_EXEC << CLASS_SHIFT) | (u64::from(op.code()) << OPCODE_SHIFT),
        GlobalUop::Access(AccessUop { op, target, addrgen }) => {
            if addrgen >= 8 {
                return Err(IsaError::Invalid(format!("address generator {addrgen} out of range")));
            }
            let (class, reg, imm) = match op {
                AccessOp::Cfg { reg, imm } => (CLASS_CFG, u64::from(reg.code()), u64::from(imm)),
                AccessOp::Start => (CLASS_START, 0, 0),
                AccessOp::Stop => (CLASS_STOP, 0, 0),
            };
            (class << CLASS_SHIFT)
                | (target_bits(target)? << TARGET_SHIFT)
                | (u64::from(addrgen) << AG_SHIFT)
                | (reg << REG_SHIFT)
                | imm
        }
        GlobalUop::MimdLd { target, imm } => (CLASS_LD << CLASS_SHIFT) | (target_bits(target)? << TARGET_SHIFT) | u64::from(imm),
    };
    Ok(u128::from(payload))
}

pub fn decode(word: u128) -> Result<GlobalUop, IsaError> {
    let bad = |reason| IsaError::Malformed { word, reason };
    if word >> WORD_BITS != 0 {
        return Err(bad("bits above the mode bit are set"));
    }
    let payload = word as u64;
    if word & MODE_BIT != 0 {
        let mut idx = [0u8; NUM_PVS];
        for (pv, slot) in idx.iter_mut().enumerate() {
            *slot = ((payload >> (4 * pv)) & 0xF) as u8;
        }
        return Ok(GlobalUop::MimdExe(idx));
    }
    let class = payload >> CLASS_SHIFT;
    let field = |shift: u32, bits: u32| (payload >> shift) & ((1 << bits) - 1);
    let target = || match field(TARGET_SHIFT, 5) {
        t if t < NUM_PVS as u64 => Ok(Target::Pv(t as u8)),
        ALL_TARGET => Ok(Target::All),
        _ => Err(bad("reserved target")),
    };
    let uop = match class {
        CLASS_EXEC => {
            if payload & ((1 << OPCODE_SHIFT) - 1) != 0 {
                return Err(bad("reserved bits set in exec word"));
            }
            let op = ExecOp::from_code(field(OPCODE_SHIFT, 4) as u8).ok_or_else(|| bad("reserved exec opcode"))?;
            GlobalUop::Exec(op)
        }
        CLASS_CFG | CLASS_START | CLASS_STOP => {
            if payload & ((1 << REG_SHIFT) - 1) & !0xFFFF != 0 {
                return Err(bad("reserved bits set in access word"));
            }
            let addrgen = field(AG_SHIFT, 3) as u8;
            let reg = field(REG_SHIFT, 3) as u8;
            let imm = field(0, 16) as u16;
            let op = if class == CLASS_CFG {
                AccessOp::Cfg {
                    reg: AddrReg::from_code(reg).ok_or_else(|| bad("reserved register"))?,
                    imm,
                }
            } else {
                if reg != 0 || imm != 0 {
                    return Err(bad("start/stop carries a register or immediate"));
                }
                if class == CLASS_START {
                    AccessOp::Start
                } else {
                    AccessOp::Stop
                }
            };
            GlobalUop::Access(AccessUop {
                op,
                target: target()?,
                addrgen,
            })
        }
        CLASS_LD => {
            if payload & ((1 << TARGET_SHIFT) - 1) & !0xFFFF != 0 {
                return Err(bad("reserved bits set in mimd.ld word"));
            }
            GlobalUop::MimdLd {
                target: target()?,
                imm: field(0, 16) as u16,
            }
        }
        _ => return Err(bad("reserved op class")),
    };
    Ok(uop)
}
