//! Clock-stepped simulator of the PE array.
//!
//! A global sequencer issues at most one word per cycle into the μop FIFOs
//! of the target PEs and stalls while any of them is full. Every PE then
//! retires control entries, lets its generators emit, and executes at most one
//! operation. PVs run the horizontal accumulation chain at the end of each
//! pass and their scratchpads are restaged for the next pass.

mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engines::{EngineError, DEFAULT_ADDR_FIFO, DEFAULT_UOP_FIFO};
use crate::isa::{IsaError, Mode, Tiling, LOCAL_SLOTS, NUM_PVS, PAGE_ENTRIES};
use crate::planner::PlanError;

pub use sim::{run_baseline_dense, run_layer, simulate, SimOutput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub num_pvs: usize,
    pub pes_per_pv: usize,
    pub clock_hz: f64,
    pub global_uop_entries: usize,
    pub local_uop_entries: usize,
    pub addr_fifo: usize,
    pub uop_fifo: usize,
    /// Scratchpad capacities in elements per PE.
    pub input_spad: usize,
    pub weight_spad: usize,
    pub psum_spad: usize,
    pub global_buffer_bytes: usize,
    /// Off-chip bandwidth used to report inter-layer transfer time.
    pub dram_bytes_per_cycle: f64,
    pub deadlock_cycles: u64,
    pub mode: Mode,
    /// Per-cycle trace of one PE as (pv, pe); not part of the file format.
    #[serde(skip)]
    pub trace_pe: Option<(usize, usize)>,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig {
            num_pvs: NUM_PVS,
            pes_per_pv: 16,
            clock_hz: 500e6,
            global_uop_entries: PAGE_ENTRIES,
            local_uop_entries: LOCAL_SLOTS,
            addr_fifo: DEFAULT_ADDR_FIFO,
            uop_fifo: DEFAULT_UOP_FIFO,
            input_spad: 4096,
            weight_spad: 1024,
            psum_spad: 1024,
            global_buffer_bytes: 108 * 1024,
            dram_bytes_per_cycle: 16.0,
            deadlock_cycles: 10_000,
            mode: Mode::Ganax,
            trace_pe: None,
        }
    }
}

impl ArrayConfig {
    /// Parses a TOML table; absent keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: ArrayConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("num_pvs", self.num_pvs),
            ("pes_per_pv", self.pes_per_pv),
            ("addr_fifo", self.addr_fifo),
            ("uop_fifo", self.uop_fifo),
            ("input_spad", self.input_spad),
            ("weight_spad", self.weight_spad),
            ("psum_spad", self.psum_spad),
            ("global_buffer_bytes", self.global_buffer_bytes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(SimError::Config(format!("{name} must be positive")));
            }
        }
        if self.num_pvs > NUM_PVS {
            return Err(SimError::Config(format!("at most {NUM_PVS} PVs are addressable")));
        }
        if self.global_uop_entries != PAGE_ENTRIES || self.local_uop_entries != LOCAL_SLOTS {
            return Err(SimError::Config(format!(
                "μop buffers are fixed at {PAGE_ENTRIES} global and {LOCAL_SLOTS} local entries"
            )));
        }
        if !(self.clock_hz > 0.0 && self.dram_bytes_per_cycle > 0.0) || self.deadlock_cycles == 0 {
            return Err(SimError::Config("clock, bandwidth and deadlock threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn tiling(&self) -> Tiling {
        Tiling {
            num_pvs: self.num_pvs,
            pes_per_pv: self.pes_per_pv,
            input_spad: self.input_spad,
            weight_spad: self.weight_spad,
            psum_spad: self.psum_spad,
        }
    }

    pub fn pe_count(&self) -> usize {
        self.num_pvs * self.pes_per_pv
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("array config: {0}")]
    Config(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Isa(#[from] IsaError),
    #[error("cycle {cycle}, pv{pv} pe{pe}: {source}")]
    Engine {
        cycle: u64,
        pv: usize,
        pe: usize,
        source: EngineError,
    },
    #[error("cycle {cycle}: pv{pv} fetched empty local slot {slot}")]
    EmptySlot { cycle: u64, pv: usize, slot: u8 },
    #[error("cycle {cycle}: PEs of pv{pv} diverged ({detail})")]
    Divergence { cycle: u64, pv: usize, detail: String },
    #[error("deadlock at cycle {cycle}: no progress for {idle} cycles\n{snapshot}")]
    Deadlock { cycle: u64, idle: u64, snapshot: String },
    #[error("program does not match layer: {0}")]
    Mismatch(String),
}
