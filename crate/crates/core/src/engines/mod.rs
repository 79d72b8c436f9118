//! Per-PE access and execute engines.
//!
//! The access engine owns three strided μ-index generators (input, weight,
//! partial sum), each feeding an address FIFO. The execute engine pops μops
//! from its μop FIFO and operands' addresses from the address FIFOs; its μops
//! name no operands. Control entries (generator configuration, start/stop,
//! repeat loads) travel through the same μop FIFO so they take effect in
//! program order.

mod addrgen;
mod fifo;
mod pe;

use thiserror::Error;

pub use addrgen::{AddressGenConfig, AddressGenState};
pub use fifo::BoundedFifo;
pub use pe::{ExecState, Outcome, Pe, PeBuffers, PeEntry, PeEvent};

pub const DEFAULT_ADDR_FIFO: usize = 4;
pub const DEFAULT_UOP_FIFO: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("generator {ag}: configuration fault: {reason}")]
    ConfigFault { ag: usize, reason: &'static str },
    #[error("no address generator {0}")]
    UnknownGenerator(usize),
    #[error("address FIFO {ag} underflow: generator idle and FIFO empty")]
    Underflow { ag: usize },
    #[error("generator {ag}: address {addr} outside its buffer of {len}")]
    OutOfRange { ag: usize, addr: u16, len: usize },
}
