use num_traits::Zero as _;

use super::{AddressGenState, BoundedFifo, EngineError};
use crate::isa::{AddrReg, ExecOp, AG_INPUT, AG_PSUM, AG_WEIGHT, NUM_ADDRGENS};
use crate::scalar::Scalar;

/// One entry of a PE's μop FIFO.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeEntry {
    Cfg { ag: u8, reg: AddrReg, imm: u16 },
    Start(u8),
    Stop(u8),
    LoadRepeat(u16),
    Exec(ExecOp),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecState {
    pub uop_fifo: BoundedFifo<PeEntry>,
    pub repeat_reg: u16,
    /// Set by `repeat`; the next fetched μop runs `repeat_reg` times.
    pub armed: bool,
    pub current: Option<ExecOp>,
    pub left: u32,
}

impl ExecState {
    pub fn halted(&self) -> bool {
        self.current.is_none() && self.uop_fifo.is_empty()
    }
}

/// Scratchpads of one PE. `input_zero` tags structural zeros of an expanded
/// input row; a MAC reading one is inconsequential.
#[derive(Clone, Debug, PartialEq)]
pub struct PeBuffers<T: Scalar> {
    pub input: Vec<T>,
    pub input_zero: Vec<bool>,
    pub weights: Vec<T>,
    pub psum: Vec<T::Acc>,
}

impl<T: Scalar> Default for PeBuffers<T> {
    fn default() -> Self {
        PeBuffers {
            input: Vec::new(),
            input_zero: Vec::new(),
            weights: Vec::new(),
            psum: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Executed { op: ExecOp, consequential: bool },
    /// One horizontal accumulation hop; the array moves the data.
    Hop,
    /// Work is pending but an operand address or the μop is not ready.
    Waiting,
    Halted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PeEvent {
    Emit { ag: usize, addr: u16 },
    Exec(ExecOp),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pe {
    pub gens: [AddressGenState; NUM_ADDRGENS],
    pub addr_fifos: [BoundedFifo<u16>; NUM_ADDRGENS],
    pub exec: ExecState,
}

fn checked(ag: usize, addr: u16, len: usize) -> Result<usize, EngineError> {
    let a = usize::from(addr);
    if a >= len {
        return Err(EngineError::OutOfRange { ag, addr, len });
    }
    Ok(a)
}

impl Pe {
    pub fn new(addr_fifo: usize, uop_fifo: usize) -> Self {
        Pe {
            gens: Default::default(),
            addr_fifos: std::array::from_fn(|_| BoundedFifo::new(addr_fifo)),
            exec: ExecState {
                uop_fifo: BoundedFifo::new(uop_fifo),
                repeat_reg: 0,
                armed: false,
                current: None,
                left: 0,
            },
        }
    }

    pub fn has_space(&self) -> bool {
        !self.exec.uop_fifo.is_full()
    }

    pub fn deliver(&mut self, e: PeEntry) -> Result<(), PeEntry> {
        self.exec.uop_fifo.push(e)
    }

    /// Nothing queued, running or in flight.
    pub fn is_drained(&self) -> bool {
        self.exec.halted() && self.gens.iter().all(|g| !g.running) && self.addr_fifos.iter().all(BoundedFifo::is_empty)
    }

    fn generator(&mut self, ag: u8) -> Result<&mut AddressGenState, EngineError> {
        self.gens.get_mut(usize::from(ag)).ok_or(EngineError::UnknownGenerator(usize::from(ag)))
    }

    /// Applies control entries at the FIFO head. Configuring or starting a
    /// generator waits until it has finished its current run. Returns the
    /// number of entries retired.
    pub fn control(&mut self) -> Result<usize, EngineError> {
        let mut retired = 0;
        while let Some(&head) = self.exec.uop_fifo.front() {
            match head {
                PeEntry::Cfg { ag, reg, imm } => {
                    let g = self.generator(ag)?;
                    if g.running {
                        break;
                    }
                    g.write(reg, imm);
                }
                PeEntry::Start(ag) => {
                    let g = self.generator(ag)?;
                    if g.running {
                        break;
                    }
                    g.start(usize::from(ag))?;
                }
                PeEntry::Stop(ag) => self.generator(ag)?.stop(),
                PeEntry::LoadRepeat(v) => self.exec.repeat_reg = v,
                PeEntry::Exec(ExecOp::Repeat) => self.exec.armed = true,
                PeEntry::Exec(_) => break,
            }
            self.exec.uop_fifo.pop();
            retired += 1;
        }
        Ok(retired)
    }

    /// Each running generator emits one address if its FIFO has room.
    pub fn access_tick(&mut self, events: &mut Vec<PeEvent>) -> usize {
        let mut emitted = 0;
        for (ag, (g, fifo)) in self.gens.iter_mut().zip(&mut self.addr_fifos).enumerate() {
            if fifo.is_full() {
                continue;
            }
            if let Some(addr) = g.tick() {
                fifo.push(addr).expect("space checked");
                events.push(PeEvent::Emit { ag, addr });
                emitted += 1;
            }
        }
        emitted
    }

    fn operands_ready(&self, ags: &[usize]) -> Result<bool, EngineError> {
        for &ag in ags {
            if self.addr_fifos[ag].is_empty() {
                if !self.gens[ag].running {
                    return Err(EngineError::Underflow { ag });
                }
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Executes at most one operation. `bufs` is `None` for a masked PE,
    /// which consumes addresses in step with its PV but touches no data.
    pub fn exec_tick<T: Scalar>(&mut self, bufs: Option<&mut PeBuffers<T>>) -> Result<Outcome, EngineError> {
        if self.exec.current.is_none() {
            match self.exec.uop_fifo.front() {
                Some(&PeEntry::Exec(op)) if op != ExecOp::Repeat => {
                    self.exec.uop_fifo.pop();
                    let times = if std::mem::take(&mut self.exec.armed) { u32::from(self.exec.repeat_reg) } else { 1 };
                    if times == 0 {
                        return Ok(Outcome::Waiting);
                    }
                    self.exec.current = Some(op);
                    self.exec.left = times;
                }
                Some(_) => return Ok(Outcome::Waiting),
                None => return Ok(Outcome::Halted),
            }
        }
        let op = self.exec.current.expect("set above");
        let needs: &[usize] = match op {
            ExecOp::Mac | ExecOp::Mul => &[AG_INPUT, AG_WEIGHT, AG_PSUM],
            ExecOp::Pool => &[AG_INPUT, AG_PSUM],
            ExecOp::Act => &[AG_PSUM],
            ExecOp::Add | ExecOp::Repeat => &[],
        };
        if !self.operands_ready(needs)? {
            return Ok(Outcome::Waiting);
        }
        let mut addrs = [0u16; NUM_ADDRGENS];
        for &ag in needs {
            addrs[ag] = self.addr_fifos[ag].pop().expect("checked non-empty");
        }
        self.exec.left -= 1;
        if self.exec.left == 0 {
            self.exec.current = None;
        }
        if op == ExecOp::Add {
            return Ok(Outcome::Hop);
        }
        let Some(b) = bufs else {
            return Ok(Outcome::Executed { op, consequential: false });
        };
        let mut consequential = true;
        match op {
            ExecOp::Mac | ExecOp::Mul => {
                let i = checked(AG_INPUT, addrs[AG_INPUT], b.input.len())?;
                let w = checked(AG_WEIGHT, addrs[AG_WEIGHT], b.weights.len())?;
                let p = checked(AG_PSUM, addrs[AG_PSUM], b.psum.len())?;
                consequential = !b.input_zero.get(i).copied().unwrap_or(false);
                let base = if op == ExecOp::Mac { b.psum[p] } else { T::Acc::zero() };
                b.psum[p] = T::mul_acc(base, b.input[i], b.weights[w]);
            }
            ExecOp::Pool => {
                let i = checked(AG_INPUT, addrs[AG_INPUT], b.input.len())?;
                let p = checked(AG_PSUM, addrs[AG_PSUM], b.psum.len())?;
                let v = b.input[i].to_acc();
                if v > b.psum[p] {
                    b.psum[p] = v;
                }
            }
            ExecOp::Act => {
                let p = checked(AG_PSUM, addrs[AG_PSUM], b.psum.len())?;
                if b.psum[p] < T::Acc::zero() {
                    b.psum[p] = T::Acc::zero();
                }
            }
            ExecOp::Add | ExecOp::Repeat => unreachable!(),
        }
        Ok(Outcome::Executed { op, consequential })
    }
}
