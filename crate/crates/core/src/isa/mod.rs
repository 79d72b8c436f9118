//! The μop set, its binary and textual forms, and lowering from a dataflow
//! plan to a program.
//!
//! A global word is 64 payload bits plus a mode bit. Mode 0 words are
//! broadcast as-is (exec, access and `mimd.ld` μops); mode 1 words carry one
//! 4-bit local-buffer index per PV (`mimd.exe`).

mod asm;
mod encode;
mod image;
mod lower;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use asm::{assemble, disassemble};
pub use encode::{decode, encode, WORD_BITS};
pub use image::{read_image, write_image, IMAGE_MAGIC};
pub use lower::{
    lower, LayerMapping, LoweredLayer, Mode, Pass, PvLayout, RowLayout, Segment, Tiling, Unit, AG_INPUT, AG_PSUM, AG_WEIGHT,
};

pub const NUM_PVS: usize = 16;
pub const LOCAL_SLOTS: usize = 16;
pub const PAGE_ENTRIES: usize = 32;
/// Generators per access engine: input, weight, partial sum.
pub const NUM_ADDRGENS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecOp {
    Add,
    Mul,
    Mac,
    Pool,
    Act,
    Repeat,
}

impl ExecOp {
    pub const ALL: [ExecOp; 6] = [ExecOp::Add, ExecOp::Mul, ExecOp::Mac, ExecOp::Pool, ExecOp::Act, ExecOp::Repeat];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<ExecOp> {
        ExecOp::ALL.get(usize::from(code)).copied()
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            ExecOp::Add => "add",
            ExecOp::Mul => "mul",
            ExecOp::Mac => "mac",
            ExecOp::Pool => "pool",
            ExecOp::Act => "act",
            ExecOp::Repeat => "repeat",
        }
    }
}

/// Configuration registers of a strided μ-index generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AddrReg {
    Addr,
    Offset,
    Step,
    End,
    Repeat,
}

impl AddrReg {
    pub const ALL: [AddrReg; 5] = [AddrReg::Addr, AddrReg::Offset, AddrReg::Step, AddrReg::End, AddrReg::Repeat];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<AddrReg> {
        AddrReg::ALL.get(usize::from(code)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AddrReg::Addr => "addr",
            AddrReg::Offset => "offset",
            AddrReg::Step => "step",
            AddrReg::End => "end",
            AddrReg::Repeat => "repeat",
        }
    }
}

/// PV selection of an access or `mimd.ld` μop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Pv(u8),
    All,
}

impl Target {
    pub fn includes(self, pv: usize) -> bool {
        match self {
            Target::All => true,
            Target::Pv(p) => usize::from(p) == pv,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Pv(p) => write!(f, "%pv{p}"),
            Target::All => write!(f, "%all"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessOp {
    Cfg { reg: AddrReg, imm: u16 },
    Start,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessUop {
    pub op: AccessOp,
    pub target: Target,
    pub addrgen: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GlobalUop {
    /// Broadcast to every PE, bypassing the local buffers.
    Exec(ExecOp),
    Access(AccessUop),
    /// Loads the repeat register of every PE in the target PVs.
    MimdLd { target: Target, imm: u16 },
    /// PV `i` executes local slot `indices[i]`.
    MimdExe([u8; NUM_PVS]),
}

impl GlobalUop {
    pub fn is_mimd(self) -> bool {
        matches!(self, GlobalUop::MimdExe(_))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UopProgram {
    pub global: Vec<GlobalUop>,
    /// One image per PV; empty images are allowed.
    pub local_images: Vec<Vec<ExecOp>>,
}

impl UopProgram {
    pub fn new(global: Vec<GlobalUop>, local_images: Vec<Vec<ExecOp>>) -> Self {
        UopProgram { global, local_images }
    }

    pub fn pages(&self) -> impl Iterator<Item = &[GlobalUop]> {
        self.global.chunks(PAGE_ENTRIES)
    }

    pub fn local(&self, pv: usize) -> &[ExecOp] {
        self.local_images.get(pv).map_or(&[], Vec::as_slice)
    }

    /// Checks footprint limits and that every MIMD index resolves.
    pub fn validate(&self) -> Result<(), IsaError> {
        if self.local_images.len() > NUM_PVS {
            return Err(IsaError::Program(format!("{} local images for {NUM_PVS} PVs", self.local_images.len())));
        }
        for (pv, img) in self.local_images.iter().enumerate() {
            if img.len() > LOCAL_SLOTS {
                return Err(IsaError::Program(format!("pv{pv}: local image has {} entries", img.len())));
            }
        }
        for (i, w) in self.global.iter().enumerate() {
            match *w {
                GlobalUop::MimdExe(idx) => {
                    for (pv, &slot) in idx.iter().enumerate() {
                        if usize::from(slot) >= self.local(pv).len() {
                            return Err(IsaError::Program(format!(
                                "word {i}: pv{pv} index {slot} has no local μop"
                            )));
                        }
                    }
                }
                GlobalUop::Access(a)
                    if usize::from(a.addrgen) >= NUM_ADDRGENS => {
                        return Err(IsaError::Program(format!("word {i}: no address generator {}", a.addrgen)));
                    }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IsaError {
    #[error("malformed word {word:#x}: {reason}")]
    Malformed { word: u128, reason: &'static str },
    #[error("invalid μop: {0}")]
    Invalid(String),
    #[error("line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("image offset {offset}: {message}")]
    Image { offset: usize, message: String },
    #[error("program: {0}")]
    Program(String),
    #[error("lowering: {0}")]
    Lowering(String),
}
