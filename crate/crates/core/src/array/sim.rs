use num_traits::Zero;

use super::{ArrayConfig, SimError};
use crate::engines::{Outcome, Pe, PeBuffers, PeEntry, PeEvent};
use crate::isa::{lower, AccessOp, ExecOp, GlobalUop, LayerMapping, LoweredLayer, Mode, RowLayout, UopProgram};
use crate::metrics::{Counters, RunMetrics};
use crate::model::{LayerSpec, Tensor};
use crate::planner::build_plan_with;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput<T: Scalar> {
    pub output: Tensor<T>,
    pub metrics: RunMetrics,
    /// Accumulation hops each output row went through; 0 for rows never scheduled.
    pub row_hops: Vec<usize>,
    pub simd_words: u64,
    pub mimd_words: u64,
    pub trace: Vec<String>,
}

struct Sim<'a, T: Scalar> {
    cfg: &'a ArrayConfig,
    map: &'a LayerMapping,
    prog: &'a UopProgram,
    input: &'a Tensor<T>,
    filters: &'a Tensor<T>,
    pes: Vec<Pe>,
    bufs: Vec<PeBuffers<T>>,
    masked: Vec<bool>,
    pv_pass: Vec<usize>,
    pv_hops: Vec<usize>,
    out_acc: Vec<T::Acc>,
    row_hops: Vec<usize>,
    counters: Counters,
    busy: u64,
    idle: u64,
    stall: u64,
    macs_executed: u64,
    macs_consequential: u64,
    accumulation_hops: u64,
    sequencer_stalls: u64,
    simd_words: u64,
    mimd_words: u64,
    trace: Vec<String>,
    cycle: u64,
}

impl<'a, T: Scalar> Sim<'a, T> {
    fn pe_index(&self, pv: usize, pe: usize) -> usize {
        pv * self.cfg.pes_per_pv + pe
    }

    fn stage_row(&self, c: usize, row: usize, fr: usize, buf: &mut PeBuffers<T>) {
        let l = &self.map.layer;
        let pitch = self.map.input_pitch;
        match self.map.layout {
            RowLayout::Compact => {
                let iy = self.map.source_row(row, fr).expect("compact rows always exist") as usize;
                buf.input.extend_from_slice(self.input.row(c, iy));
                buf.input_zero.extend(std::iter::repeat_n(false, pitch));
            }
            RowLayout::Expanded => {
                let src = |e: usize, n: usize| {
                    let rel = e as isize - l.padding as isize;
                    (rel >= 0 && (rel as usize).is_multiple_of(l.stride) && rel as usize / l.stride < n).then(|| rel as usize / l.stride)
                };
                let iy = src(row + fr, l.in_h);
                for ex in 0..pitch {
                    match (iy, src(ex, l.in_w)) {
                        (Some(y), Some(x)) => {
                            buf.input.push(self.input.at(&[c, y, x]));
                            buf.input_zero.push(false);
                        }
                        _ => {
                            buf.input.push(T::zero());
                            buf.input_zero.push(true);
                        }
                    }
                }
            }
            RowLayout::Padded => {
                buf.input_zero.extend(std::iter::repeat_n(false, pitch));
                match self.map.source_row(row, fr) {
                    None => buf.input.extend(std::iter::repeat_n(T::zero(), pitch)),
                    Some(iy) => {
                        let pad = std::iter::repeat_n(T::zero(), l.padding);
                        buf.input.extend(pad.clone());
                        buf.input.extend_from_slice(self.input.row(c, iy as usize));
                        buf.input.extend(pad);
                    }
                }
            }
        }
    }

    /// Loads every PE of `pv` for pass `p`: input and filter rows of the
    /// unit each PE serves, and a cleared partial-sum row.
    fn stage(&mut self, pv: usize, p: usize) {
        let pass = &self.map.passes[p];
        let lay = &pass.pvs[pv];
        let h = lay.filter_rows.len();
        let out_w = self.map.layer.out_w();
        for pe in 0..self.cfg.pes_per_pv {
            let idx = self.pe_index(pv, pe);
            let mut buf = std::mem::take(&mut self.bufs[idx]);
            buf.input.clear();
            buf.input_zero.clear();
            buf.weights.clear();
            buf.psum.clear();
            let active = pe < lay.active_pes();
            self.masked[idx] = !active;
            if active {
                let unit = lay.units[pe / h];
                let fr = lay.filter_rows[pe % h];
                for c in self.map.chunk_channels(unit.chunk) {
                    self.stage_row(c, unit.row, fr, &mut buf);
                    for kx in 0..self.map.layer.k_w {
                        buf.weights.push(self.filters.at(&[unit.out_c, c, fr, kx]));
                    }
                }
                buf.psum.resize(out_w, T::Acc::zero());
                self.counters.global_buffer += buf.input_zero.iter().filter(|z| !**z).count() as u64;
                self.counters.weight_store += buf.weights.len() as u64;
            }
            self.bufs[idx] = buf;
        }
    }

    fn pv_done(&self, pv: usize) -> bool {
        self.pv_pass[pv] >= self.map.passes.len()
    }

    /// Completes the chain for every unit of `pv` and moves on to its next pass.
    fn finish_pass(&mut self, pv: usize) {
        let p = self.pv_pass[pv];
        let lay = &self.map.passes[p].pvs[pv];
        let h = lay.filter_rows.len();
        let (out_h, out_w) = (self.map.layer.out_h(), self.map.layer.out_w());
        for (ui, unit) in lay.units.iter().enumerate() {
            let base = (unit.out_c * out_h + unit.row) * out_w;
            for x in 0..out_w {
                let mut sum = T::Acc::zero();
                for i in 0..h {
                    sum = T::acc_add(sum, self.bufs[self.pe_index(pv, ui * h + i)].psum[x]);
                }
                self.out_acc[base + x] = T::acc_add(self.out_acc[base + x], sum);
            }
            self.counters.global_buffer += out_w as u64;
            self.row_hops[unit.row] = h;
            self.accumulation_hops += h as u64;
        }
        self.pv_pass[pv] += 1;
        self.pv_hops[pv] = 0;
        if self.pv_done(pv) {
            for pe in 0..self.cfg.pes_per_pv {
                let idx = self.pe_index(pv, pe);
                self.masked[idx] = true;
            }
        } else {
            self.stage(pv, p + 1);
        }
    }

    fn entry_for(&self, word: GlobalUop, pv: usize) -> Result<Option<PeEntry>, SimError> {
        Ok(match word {
            GlobalUop::Exec(op) => Some(PeEntry::Exec(op)),
            GlobalUop::Access(a) => a.target.includes(pv).then_some(match a.op {
                AccessOp::Cfg { reg, imm } => PeEntry::Cfg { ag: a.addrgen, reg, imm },
                AccessOp::Start => PeEntry::Start(a.addrgen),
                AccessOp::Stop => PeEntry::Stop(a.addrgen),
            }),
            GlobalUop::MimdLd { target, imm } => target.includes(pv).then_some(PeEntry::LoadRepeat(imm)),
            GlobalUop::MimdExe(idx) => {
                let slot = idx[pv];
                let op = self.prog.local(pv).get(usize::from(slot)).copied().ok_or(SimError::EmptySlot {
                    cycle: self.cycle,
                    pv,
                    slot,
                })?;
                Some(PeEntry::Exec(op))
            }
        })
    }

    /// Issues the word at `pc` if every target PE has room.
    fn issue(&mut self, pc: usize) -> Result<bool, SimError> {
        let word = self.prog.global[pc];
        let mut entries = Vec::with_capacity(self.cfg.num_pvs);
        for pv in 0..self.cfg.num_pvs {
            let e = self.entry_for(word, pv)?;
            if e.is_some() {
                let first = self.pe_index(pv, 0);
                if !(first..first + self.cfg.pes_per_pv).all(|i| self.pes[i].has_space()) {
                    self.sequencer_stalls += 1;
                    return Ok(false);
                }
            }
            entries.push(e);
        }
        for (pv, e) in entries.into_iter().enumerate() {
            if let Some(e) = e {
                for pe in 0..self.cfg.pes_per_pv {
                    let idx = self.pe_index(pv, pe);
                    self.pes[idx].deliver(e).expect("space checked");
                }
            }
        }
        self.counters.uop_fetch_global += 1;
        if word.is_mimd() {
            self.mimd_words += 1;
            self.counters.uop_fetch_local += self.cfg.num_pvs as u64;
        } else {
            self.simd_words += 1;
        }
        Ok(true)
    }

    fn snapshot(&self) -> String {
        let mut s = String::new();
        for pv in 0..self.cfg.num_pvs {
            let pe = &self.pes[self.pe_index(pv, 0)];
            let gens: Vec<String> = pe
                .gens
                .iter()
                .zip(&pe.addr_fifos)
                .map(|(g, f)| format!("{}{}", if g.running { "R" } else { "-" }, f.len()))
                .collect();
            s.push_str(&format!(
                "pv{pv}: pass {}/{} hops {} fifo {} head {:?} current {:?} gens [{}]\n",
                self.pv_pass[pv],
                self.map.passes.len(),
                self.pv_hops[pv],
                pe.exec.uop_fifo.len(),
                pe.exec.uop_fifo.front(),
                pe.exec.current,
                gens.join(" ")
            ));
        }
        s
    }

    /// Phases B to D for every PE; returns whether anything moved.
    fn step_pes(&mut self, events: &mut Vec<PeEvent>) -> Result<bool, SimError> {
        let mut progress = false;
        let tracing = self.cfg.trace_pe;
        for pv in 0..self.cfg.num_pvs {
            let mut first: Option<Option<ExecOp>> = None;
            let done = self.pv_done(pv);
            for pe in 0..self.cfg.pes_per_pv {
                let idx = self.pe_index(pv, pe);
                let fault = |source| SimError::Engine { cycle: self.cycle, pv, pe, source };
                events.clear();
                let unit = &mut self.pes[idx];
                progress |= unit.control().map_err(fault)? > 0;
                progress |= unit.access_tick(events) > 0;
                let masked = self.masked[idx];
                let outcome = unit.exec_tick(if masked { None } else { Some(&mut self.bufs[idx]) }).map_err(fault)?;
                let kind = match outcome {
                    Outcome::Executed { op, .. } => Some(op),
                    Outcome::Hop => Some(ExecOp::Add),
                    Outcome::Waiting | Outcome::Halted => None,
                };
                match first {
                    None => first = Some(kind),
                    Some(k) if k != kind => {
                        return Err(SimError::Divergence {
                            cycle: self.cycle,
                            pv,
                            detail: format!("pe0 {k:?}, pe{pe} {kind:?}"),
                        })
                    }
                    _ => {}
                }
                progress |= kind.is_some();
                if masked || done {
                    self.idle += 1;
                } else {
                    match outcome {
                        Outcome::Executed { op, consequential } => {
                            self.counters.pe_op += 1;
                            match op {
                                ExecOp::Mac | ExecOp::Mul => {
                                    self.counters.rf_access += 4;
                                    self.macs_executed += 1;
                                    if consequential {
                                        self.macs_consequential += 1;
                                        self.busy += 1;
                                    } else {
                                        self.idle += 1;
                                    }
                                }
                                ExecOp::Pool => {
                                    self.counters.rf_access += 3;
                                    self.busy += 1;
                                }
                                _ => {
                                    self.counters.rf_access += 2;
                                    self.busy += 1;
                                }
                            }
                        }
                        Outcome::Hop => {
                            self.counters.pe_op += 1;
                            self.counters.rf_access += 2;
                            self.stall += 1;
                        }
                        Outcome::Waiting | Outcome::Halted => self.stall += 1,
                    }
                }
                if tracing == Some((pv, pe)) {
                    for ev in events.iter() {
                        if let PeEvent::Emit { ag, addr } = ev {
                            self.trace.push(format!("{} pv{pv} pe{pe} ag{ag} emit {addr}", self.cycle));
                        }
                    }
                    if let Some(op) = kind {
                        let tag = if masked { " masked" } else { "" };
                        self.trace.push(format!("{} pv{pv} pe{pe} exec {}{tag}", self.cycle, op.mnemonic()));
                    }
                }
            }
            if first == Some(Some(ExecOp::Add)) {
                if done {
                    return Err(SimError::Mismatch(format!("pv{pv} accumulates after its last pass")));
                }
                let lay = &self.map.passes[self.pv_pass[pv]].pvs[pv];
                self.counters.local_buffer += (lay.units.len() * self.map.layer.out_w()) as u64;
                self.pv_hops[pv] += 1;
                if self.pv_hops[pv] == lay.hops {
                    self.finish_pass(pv);
                }
            }
        }
        Ok(progress)
    }

    fn run(&mut self) -> Result<(), SimError> {
        for pv in 0..self.cfg.num_pvs {
            if self.map.passes.is_empty() {
                self.masked[pv * self.cfg.pes_per_pv..(pv + 1) * self.cfg.pes_per_pv].fill(true);
            } else {
                self.stage(pv, 0);
            }
        }
        let mut pc = 0;
        let mut last_progress = 0;
        let mut events = Vec::with_capacity(4);
        loop {
            if pc == self.prog.global.len() && self.pes.iter().all(Pe::is_drained) {
                break;
            }
            let mut progress = false;
            if pc < self.prog.global.len() && self.issue(pc)? {
                pc += 1;
                progress = true;
            }
            progress |= self.step_pes(&mut events)?;
            if progress {
                last_progress = self.cycle;
            } else if self.cycle - last_progress >= self.cfg.deadlock_cycles {
                return Err(SimError::Deadlock {
                    cycle: self.cycle,
                    idle: self.cycle - last_progress,
                    snapshot: self.snapshot(),
                });
            }
            self.cycle += 1;
        }
        if let Some(pv) = (0..self.cfg.num_pvs).find(|&pv| !self.pv_done(pv)) {
            return Err(SimError::Mismatch(format!(
                "program ended with pv{pv} in pass {} of {}",
                self.pv_pass[pv],
                self.map.passes.len()
            )));
        }
        Ok(())
    }
}

fn check_inputs<T: Scalar>(
    layer: &LayerSpec,
    input: &Tensor<T>,
    filters: &Tensor<T>,
    lowered: &LoweredLayer,
    config: &ArrayConfig,
) -> Result<(), SimError> {
    config.validate()?;
    layer.validate().map_err(|e| SimError::Mismatch(e.to_string()))?;
    if lowered.mapping.layer != *layer {
        return Err(SimError::Mismatch(format!(
            "program lowered for layer {}, run on {}",
            lowered.mapping.layer.layer_id, layer.layer_id
        )));
    }
    if lowered.mapping.tiling != config.tiling() {
        return Err(SimError::Mismatch("program lowered for a different array shape".into()));
    }
    if input.dims() != layer.input_dims() || filters.dims() != layer.filter_dims() {
        return Err(SimError::Mismatch(format!(
            "tensor dims {:?}/{:?} do not match layer {}",
            input.dims(),
            filters.dims(),
            layer.layer_id
        )));
    }
    lowered.program.validate()?;
    Ok(())
}

/// Runs a lowered program. The mode is the one the program was lowered for.
pub fn run_layer<T: Scalar>(
    layer: &LayerSpec,
    input: &Tensor<T>,
    filters: &Tensor<T>,
    lowered: &LoweredLayer,
    config: &ArrayConfig,
) -> Result<SimOutput<T>, SimError> {
    check_inputs(layer, input, filters, lowered, config)?;
    let map = &lowered.mapping;
    let pe_count = config.pe_count();
    let mut sim = Sim {
        cfg: config,
        map,
        prog: &lowered.program,
        input,
        filters,
        pes: (0..pe_count).map(|_| Pe::new(config.addr_fifo, config.uop_fifo)).collect(),
        bufs: vec![PeBuffers::default(); pe_count],
        masked: vec![false; pe_count],
        pv_pass: vec![0; config.num_pvs],
        pv_hops: vec![0; config.num_pvs],
        out_acc: vec![T::Acc::zero(); layer.out_c * layer.out_h() * layer.out_w()],
        row_hops: vec![0; layer.out_h()],
        counters: Counters::default(),
        busy: 0,
        idle: 0,
        stall: 0,
        macs_executed: 0,
        macs_consequential: 0,
        accumulation_hops: 0,
        sequencer_stalls: 0,
        simd_words: 0,
        mimd_words: 0,
        trace: Vec::new(),
        cycle: 0,
    };
    sim.run()?;

    let elems = (input.len() + filters.len() + sim.out_acc.len()) as u64;
    sim.counters.dram_byte = elems * T::BYTES as u64;
    let data = sim.out_acc.iter().map(|&a| T::from_acc(a)).collect();
    let output = Tensor::new(layer.output_dims().to_vec(), data).expect("dims from layer");
    let cycles = sim.cycle;
    debug_assert_eq!(sim.busy + sim.idle + sim.stall, cycles * pe_count as u64);
    let metrics = RunMetrics {
        layer_id: layer.layer_id.clone(),
        mode: map.mode,
        role: layer.model_role,
        cycles,
        macs_executed: sim.macs_executed,
        macs_consequential: sim.macs_consequential,
        macs_skipped: layer.dense_macs() - sim.macs_executed,
        accumulation_hops: sim.accumulation_hops,
        sequencer_stalls: sim.sequencer_stalls,
        busy_pe_cycles: sim.busy,
        idle_pe_cycles: sim.idle,
        stall_pe_cycles: sim.stall,
        pe_count: pe_count as u64,
        pe_utilization: RunMetrics::utilization(sim.busy, sim.idle, sim.stall),
        counters: sim.counters,
        energy: None,
        wall_time_s: cycles as f64 / config.clock_hz,
    };
    Ok(SimOutput {
        output,
        metrics,
        row_hops: sim.row_hops,
        simd_words: sim.simd_words,
        mimd_words: sim.mimd_words,
        trace: sim.trace,
    })
}

/// Plans, lowers and runs `layer` in `config.mode`.
pub fn simulate<T: Scalar>(
    layer: &LayerSpec,
    input: &Tensor<T>,
    filters: &Tensor<T>,
    config: &ArrayConfig,
) -> Result<SimOutput<T>, SimError> {
    config.validate()?;
    let plan = build_plan_with(layer, config.num_pvs, config.pes_per_pv)?;
    let lowered = lower(&plan, layer, config.mode, &config.tiling())?;
    run_layer(layer, input, filters, &lowered, config)
}

/// Dense row-stationary execution: TConv layers run over the fully expanded
/// input, Conv layers exactly as in Ganax mode.
pub fn run_baseline_dense<T: Scalar>(
    layer: &LayerSpec,
    input: &Tensor<T>,
    filters: &Tensor<T>,
    config: &ArrayConfig,
) -> Result<SimOutput<T>, SimError> {
    simulate(layer, input, filters, &config.clone().with_mode(Mode::Baseline))
}
