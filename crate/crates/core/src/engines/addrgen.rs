use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::isa::AddrReg;

/// The five registers of a strided μ-index generator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AddressGenConfig {
    pub addr: u16,
    pub offset: u16,
    pub step: u16,
    pub end: u16,
    pub repeat: u16,
}

impl AddressGenConfig {
    pub fn new(addr: u16, offset: u16, step: u16, end: u16, repeat: u16) -> Self {
        AddressGenConfig {
            addr,
            offset,
            step,
            end,
            repeat,
        }
    }

    pub fn get(&self, reg: AddrReg) -> u16 {
        match reg {
            AddrReg::Addr => self.addr,
            AddrReg::Offset => self.offset,
            AddrReg::Step => self.step,
            AddrReg::End => self.end,
            AddrReg::Repeat => self.repeat,
        }
    }

    pub fn set(&mut self, reg: AddrReg, v: u16) {
        match reg {
            AddrReg::Addr => self.addr = v,
            AddrReg::Offset => self.offset = v,
            AddrReg::Step => self.step = v,
            AddrReg::End => self.end = v,
            AddrReg::Repeat => self.repeat = v,
        }
    }

    /// `step == end` is accepted: it replays the same address `repeat` times.
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.step == 0 {
            return Err("step must be at least 1");
        }
        if self.end == 0 {
            return Err("end must be positive");
        }
        if self.step > self.end {
            return Err("step exceeds end");
        }
        if self.addr >= self.end {
            return Err("addr outside [0, end)");
        }
        if u32::from(self.offset) + u32::from(self.end) > 1 << 16 {
            return Err("offset + end overflows 16 bits");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressGenState {
    pub config: AddressGenConfig,
    pub cur: u16,
    pub remaining: u16,
    pub running: bool,
    pub stopped: bool,
}

impl AddressGenState {
    pub fn new(config: AddressGenConfig) -> Self {
        AddressGenState {
            config,
            cur: config.addr,
            remaining: config.repeat,
            running: false,
            stopped: config.repeat == 0,
        }
    }

    /// Writing `addr` resets the accumulator; writing `repeat` resets the
    /// countdown and rewinds to `addr`, so a reprogrammed generator starts
    /// from its new registers.
    pub fn write(&mut self, reg: AddrReg, v: u16) {
        self.config.set(reg, v);
        match reg {
            AddrReg::Addr => self.cur = v,
            AddrReg::Repeat => {
                self.remaining = v;
                self.cur = self.config.addr;
                if !self.running {
                    self.stopped = v == 0;
                }
            }
            _ => {}
        }
    }

    /// Starts or resumes emission. A generator that ran to completion is
    /// re-armed from `addr` and `repeat`; one halted by `stop` resumes.
    pub fn start(&mut self, ag: usize) -> Result<(), EngineError> {
        let fault = |reason: &'static str| EngineError::ConfigFault { ag, reason };
        self.config.validate().map_err(fault)?;
        if self.remaining == 0 {
            self.cur = self.config.addr;
            self.remaining = self.config.repeat;
        }
        if self.cur >= self.config.end {
            return Err(fault("current index outside [0, end)"));
        }
        self.running = self.remaining > 0;
        self.stopped = !self.running;
        Ok(())
    }

    pub fn stop(&mut self) {
        self.running = false;
        self.stopped = true;
    }

    /// Emits `offset + cur` and advances by `step` modulo `end`, counting one
    /// repeat per wrap.
    pub fn tick(&mut self) -> Option<u16> {
        if !self.running {
            return None;
        }
        let c = &self.config;
        let out = c.offset + self.cur;
        debug_assert!(out >= c.offset && u32::from(out) < u32::from(c.offset) + u32::from(c.end));
        let next = u32::from(self.cur) + u32::from(c.step);
        if next < u32::from(c.end) {
            self.cur = next as u16;
        } else {
            self.cur = (next - u32::from(c.end)) as u16;
            self.remaining -= 1;
            if self.remaining == 0 {
                self.running = false;
                self.stopped = true;
            }
        }
        Some(out)
    }
}
