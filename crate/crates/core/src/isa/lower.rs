//! Lowering a layer onto the PE array.
//!
//! Work is split into units `(output channel, output row, input-channel
//! chunk)`. A unit occupies one PE per filter row it uses; each PE holds that
//! filter row and the matching input row for every channel of the chunk and
//! produces a partial-sum row. Units of one row pattern fill a PV, PVs fill a
//! pass, and every pass runs the same segment stream: for each (channel,
//! filter column) the three generators are programmed and a single repeated
//! `mac` sweeps the row. A pass ends with the horizontal accumulation hops.

use serde::{Deserialize, Serialize};

use super::{AccessOp, AccessUop, AddrReg, ExecOp, GlobalUop, IsaError, Target, UopProgram, NUM_ADDRGENS, NUM_PVS};
use crate::model::{LayerKind, LayerSpec};
use crate::planner::DataflowPlan;

const SLOT_MAC: u8 = 0;
const SLOT_ADD: u8 = 1;
const SLOT_REPEAT: u8 = 2;
const LOCAL_IMAGE: [ExecOp; 3] = [ExecOp::Mac, ExecOp::Add, ExecOp::Repeat];

pub const AG_INPUT: usize = 0;
pub const AG_WEIGHT: usize = 1;
pub const AG_PSUM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ganax,
    Baseline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Ganax => "ganax",
            Mode::Baseline => "baseline",
        }
    }
}

/// How input rows are staged in a PE's scratchpad.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowLayout {
    /// Original input rows; zero insertion is handled by the generators.
    Compact,
    /// Rows of the zero-inserted, padded input.
    Expanded,
    /// Conv input rows with `padding` zeros on both sides.
    Padded,
}

/// Array shape and scratchpad capacities the lowering must respect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tiling {
    pub num_pvs: usize,
    pub pes_per_pv: usize,
    pub input_spad: usize,
    pub weight_spad: usize,
    pub psum_spad: usize,
}

impl Default for Tiling {
    fn default() -> Self {
        Tiling {
            num_pvs: NUM_PVS,
            pes_per_pv: 16,
            input_spad: 4096,
            weight_spad: 1024,
            psum_spad: 1024,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub out_c: usize,
    pub row: usize,
    pub chunk: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PvLayout {
    pub pattern_id: usize,
    /// Filter rows held by consecutive PEs of each unit.
    pub filter_rows: Vec<usize>,
    pub units: Vec<Unit>,
    /// Accumulation hops this PV performs at the end of the pass.
    pub hops: usize,
}

impl PvLayout {
    pub fn active_pes(&self) -> usize {
        self.units.len() * self.filter_rows.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pass {
    pub chunk: usize,
    /// One layout per PV; PVs without units are masked for the pass.
    pub pvs: Vec<PvLayout>,
    pub hops: usize,
    pub mimd: bool,
}

/// One (channel, filter column) sweep; all addresses are scratchpad-relative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub channel: usize,
    pub kc: usize,
    pub n: usize,
    pub in_offset: usize,
    pub in_step: usize,
    pub weight_offset: usize,
    pub psum_offset: usize,
    pub psum_step: usize,
    /// Segments of one filter column share a single partial-sum run that
    /// replays once per channel; it is started by the first of them.
    pub psum_repeat: usize,
    pub psum_start: bool,
}

impl Segment {
    /// Register values of the three generators, indexed by `AddrReg::code`.
    pub fn registers(&self) -> [[u16; 5]; NUM_ADDRGENS] {
        let n = self.n as u16;
        [
            [0, self.in_offset as u16, self.in_step as u16, n * self.in_step as u16, 1],
            [0, self.weight_offset as u16, 1, 1, n],
            [0, self.psum_offset as u16, self.psum_step as u16, n * self.psum_step as u16, self.psum_repeat as u16],
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMapping {
    pub layer: LayerSpec,
    pub mode: Mode,
    pub layout: RowLayout,
    /// Scratchpad elements per staged input row.
    pub input_pitch: usize,
    pub chunk_size: usize,
    pub num_chunks: usize,
    pub tiling: Tiling,
    /// Segment stream of each chunk.
    pub segments: Vec<Vec<Segment>>,
    pub passes: Vec<Pass>,
}

impl LayerMapping {
    pub fn chunk_channels(&self, chunk: usize) -> std::ops::Range<usize> {
        let lo = chunk * self.chunk_size;
        lo..(lo + self.chunk_size).min(self.layer.in_c)
    }

    /// Source row in the staged layout for output row `row` and filter row `fr`;
    /// `None` when the row lies entirely in padding.
    pub fn source_row(&self, row: usize, fr: usize) -> Option<isize> {
        let l = &self.layer;
        match self.layout {
            RowLayout::Compact => {
                let pos = (row + fr) as isize - l.padding as isize;
                Some(pos / l.stride as isize)
            }
            RowLayout::Expanded => Some((row + fr) as isize),
            RowLayout::Padded => {
                let iy = (row * l.stride + fr) as isize - l.padding as isize;
                (iy >= 0 && iy < l.in_h as isize).then_some(iy)
            }
        }
    }

    /// Multiply-adds one PE performs per pass.
    pub fn macs_per_pe(&self, chunk: usize) -> usize {
        self.segments[chunk].iter().map(|s| s.n).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoweredLayer {
    pub program: UopProgram,
    pub mapping: LayerMapping,
}

fn ganax_segment(layer: &LayerSpec, channel: usize, kc: usize, pitch: usize) -> Option<Segment> {
    let (s, p) = (layer.stride as isize, layer.padding as isize);
    let (in_w, out_w) = (layer.in_w as isize, layer.out_w() as isize);
    // Output column x meets input column j through tap kc when x = s*j + p - kc.
    let lo = (kc as isize - p).max(0);
    let j_lo = (lo + s - 1) / s;
    let top = out_w - 1 + kc as isize - p;
    if top < 0 {
        return None;
    }
    let j_hi = (top / s).min(in_w - 1);
    if j_hi < j_lo {
        return None;
    }
    Some(Segment {
        channel,
        kc,
        n: (j_hi - j_lo + 1) as usize,
        in_offset: channel * pitch + j_lo as usize,
        in_step: 1,
        weight_offset: channel * layer.k_w + kc,
        psum_offset: (s * j_lo + p - kc as isize) as usize,
        psum_step: layer.stride,
        psum_repeat: 1,
        psum_start: true,
    })
}

fn dense_segment(layer: &LayerSpec, channel: usize, kc: usize, pitch: usize, col_step: usize) -> Segment {
    Segment {
        channel,
        kc,
        n: layer.out_w(),
        in_offset: channel * pitch + kc,
        in_step: col_step,
        weight_offset: channel * layer.k_w + kc,
        psum_offset: 0,
        psum_step: 1,
        psum_repeat: 1,
        psum_start: true,
    }
}

struct Emitter {
    words: Vec<GlobalUop>,
    regs: [[Option<u16>; 5]; NUM_ADDRGENS],
    repeat: Option<u16>,
}

impl Emitter {
    fn exec(&mut self, mimd: bool, slots: [u8; NUM_PVS]) {
        if mimd {
            self.words.push(GlobalUop::MimdExe(slots));
        } else {
            self.words.push(GlobalUop::Exec(LOCAL_IMAGE[usize::from(slots[0])]));
        }
    }

    fn segment(&mut self, seg: &Segment, mimd: bool) {
        let regs = seg.registers();
        let gens = if seg.psum_start { NUM_ADDRGENS } else { AG_PSUM };
        for (ag, values) in regs.iter().enumerate().take(gens) {
            for reg in AddrReg::ALL {
                let v = values[usize::from(reg.code())];
                let known = &mut self.regs[ag][usize::from(reg.code())];
                if *known != Some(v) {
                    *known = Some(v);
                    self.words.push(GlobalUop::Access(AccessUop {
                        op: AccessOp::Cfg { reg, imm: v },
                        target: Target::All,
                        addrgen: ag as u8,
                    }));
                }
            }
        }
        for ag in 0..gens {
            self.words.push(GlobalUop::Access(AccessUop {
                op: AccessOp::Start,
                target: Target::All,
                addrgen: ag as u8,
            }));
        }
        let n = seg.n as u16;
        if self.repeat != Some(n) {
            self.repeat = Some(n);
            self.words.push(GlobalUop::MimdLd { target: Target::All, imm: n });
        }
        self.exec(mimd, [SLOT_REPEAT; NUM_PVS]);
        self.exec(mimd, [SLOT_MAC; NUM_PVS]);
    }
}

struct Chunking {
    size: usize,
    count: usize,
    /// All chunks are the same size and their units are packed together.
    mixed: bool,
}

/// Picks the input-channel split with the fewest estimated cycles. Splitting
/// finer shortens every pass and lets a half-empty last pass be filled with
/// units of other chunks, at the price of more accumulation tails.
fn choose_chunking(
    layer: &LayerSpec,
    tiling: &Tiling,
    cap: usize,
    groups: &[(usize, Vec<usize>, Vec<usize>)],
    run_len: impl Fn(usize) -> usize,
) -> Chunking {
    // Per channel: every segment costs its run plus a few control words.
    let per_channel: usize = (0..layer.k_w).map(&run_len).filter(|&n| n > 0).map(|n| n + 3).sum();
    let hops = groups.iter().map(|g| g.1.len()).max().unwrap_or(0);
    let batches = |chunks: usize| -> usize {
        groups
            .iter()
            .map(|(_, fr, rows)| (chunks * layer.out_c * rows.len()).div_ceil(tiling.pes_per_pv / fr.len()))
            .sum()
    };
    let min = layer.in_c.div_ceil(cap);
    let fallback = Chunking { size: cap, count: min, mixed: min == 1 || layer.in_c.is_multiple_of(min) };
    let cost = |c: &Chunking| {
        if c.mixed {
            batches(c.count).div_ceil(tiling.num_pvs) * (c.size * per_channel + hops)
        } else {
            // The last chunk is short; each chunk runs its own passes.
            batches(1).div_ceil(tiling.num_pvs) * (layer.in_c * per_channel + c.count * hops)
        }
    };
    let mut best = if fallback.mixed { Chunking { size: layer.in_c / min, ..fallback } } else { fallback };
    for count in min + 1..=layer.in_c {
        if layer.in_c.is_multiple_of(count) {
            let c = Chunking { size: layer.in_c / count, count, mixed: true };
            if cost(&c) < cost(&best) {
                best = c;
            }
        }
    }
    best
}

fn check_range(what: &str, offset: usize, end: usize) -> Result<(), IsaError> {
    if offset + end > 1 << 16 {
        return Err(IsaError::Lowering(format!("{what} addresses exceed 16 bits")));
    }
    Ok(())
}

/// Lowers `layer` for `mode`. Ganax mode uses the plan's row patterns for
/// TConv layers; Baseline mode runs TConv densely over the expanded input.
/// Conv layers lower identically in both modes.
pub fn lower(plan: &DataflowPlan, layer: &LayerSpec, mode: Mode, tiling: &Tiling) -> Result<LoweredLayer, IsaError> {
    layer.validate().map_err(|e| IsaError::Lowering(e.to_string()))?;
    if plan.layer_id != layer.layer_id || plan.row_assignment.len() != layer.out_h() {
        return Err(IsaError::Lowering(format!("plan {} does not match layer {}", plan.layer_id, layer.layer_id)));
    }
    if tiling.num_pvs == 0 || tiling.num_pvs > NUM_PVS || tiling.pes_per_pv == 0 {
        return Err(IsaError::Lowering(format!("unsupported array shape {}x{}", tiling.num_pvs, tiling.pes_per_pv)));
    }
    if layer.k_h > tiling.pes_per_pv {
        return Err(IsaError::Lowering(format!(
            "layer {}: {} filter rows exceed {} PEs per PV",
            layer.layer_id, layer.k_h, tiling.pes_per_pv
        )));
    }
    let out_w = layer.out_w();
    if out_w > tiling.psum_spad {
        return Err(IsaError::Lowering(format!("layer {}: output row of {out_w} exceeds the psum scratchpad", layer.layer_id)));
    }
    let (layout, pitch) = match (layer.kind, mode) {
        (LayerKind::TConv, Mode::Ganax) => (RowLayout::Compact, layer.in_w),
        (LayerKind::TConv, Mode::Baseline) => (RowLayout::Expanded, layer.expanded_w()),
        (LayerKind::Conv, _) => (RowLayout::Padded, layer.in_w + 2 * layer.padding),
    };
    let cap = (tiling.input_spad / pitch).min(tiling.weight_spad / layer.k_w).min(layer.in_c);
    if cap == 0 {
        return Err(IsaError::Lowering(format!("layer {}: one input row exceeds the scratchpads", layer.layer_id)));
    }

    // Row groups: (pattern id, filter rows, output rows).
    let groups: Vec<(usize, Vec<usize>, Vec<usize>)> = if layout == RowLayout::Compact {
        plan.patterns
            .iter()
            .map(|p| {
                let rows = plan.group_order.iter().copied().filter(|&r| plan.row_assignment[r] == Some(p.pattern_id)).collect();
                (p.pattern_id, p.filter_rows.clone(), rows)
            })
            .collect()
    } else {
        vec![(0, (0..layer.k_h).collect(), (0..layer.out_h()).collect())]
    };
    let segment = |c_local: usize, kc: usize| match layout {
        RowLayout::Compact => ganax_segment(layer, c_local, kc, pitch),
        RowLayout::Expanded => Some(dense_segment(layer, c_local, kc, pitch, 1)),
        RowLayout::Padded => Some(dense_segment(layer, c_local, kc, pitch, layer.stride)),
    };

    let chunking = choose_chunking(layer, tiling, cap, &groups, |kc| segment(0, kc).map_or(0, |s| s.n));
    let (chunk_size, num_chunks) = (chunking.size, chunking.count);

    let mut segments = Vec::with_capacity(num_chunks);
    for chunk in 0..num_chunks {
        let channels = (chunk * chunk_size)..((chunk + 1) * chunk_size).min(layer.in_c);
        let mut columns: Vec<Vec<Segment>> = (0..layer.k_w)
            .map(|kc| channels.clone().enumerate().filter_map(|(c_local, _)| segment(c_local, kc)).collect::<Vec<_>>())
            .filter(|col| !col.is_empty())
            .collect();
        // Columns with equal run lengths are adjacent so the length-dependent
        // registers change as rarely as possible.
        columns.sort_by_key(|col| std::cmp::Reverse(col[0].n));
        let mut segs = Vec::new();
        for mut col in columns {
            let count = col.len();
            for (i, seg) in col.iter_mut().enumerate() {
                seg.psum_repeat = count;
                seg.psum_start = i == 0;
                for (what, regs) in ["input", "weight", "psum"].iter().zip(seg.registers()) {
                    check_range(what, usize::from(regs[1]), usize::from(regs[3]))?;
                }
            }
            segs.extend(col);
        }
        segments.push(segs);
    }

    // Equal chunks share one segment stream, so their units may share a pass.
    let streams: Vec<Vec<usize>> =
        if chunking.mixed { vec![(0..num_chunks).collect()] } else { (0..num_chunks).map(|c| vec![c]).collect() };
    let mut passes = Vec::new();
    for chunks in streams {
        let mut batches = Vec::new();
        for (pattern_id, filter_rows, rows) in &groups {
            let cap = tiling.pes_per_pv / filter_rows.len();
            let units: Vec<Unit> = chunks
                .iter()
                .flat_map(|&chunk| {
                    (0..layer.out_c).flat_map(move |o| rows.iter().map(move |&row| Unit { out_c: o, row, chunk }))
                })
                .collect();
            for group in units.chunks(cap) {
                batches.push(PvLayout {
                    pattern_id: *pattern_id,
                    filter_rows: filter_rows.clone(),
                    units: group.to_vec(),
                    hops: filter_rows.len(),
                });
            }
        }
        for group in batches.chunks(tiling.num_pvs) {
            let hops = group.iter().map(|b| b.hops).max().unwrap_or(0);
            let first = group[0].pattern_id;
            let mimd = group.iter().any(|b| b.pattern_id != first);
            let mut pvs = group.to_vec();
            // Masked PVs still step through the accumulation tail.
            pvs.resize(
                tiling.num_pvs,
                PvLayout {
                    pattern_id: first,
                    filter_rows: Vec::new(),
                    units: Vec::new(),
                    hops,
                },
            );
            passes.push(Pass { chunk: chunks[0], pvs, hops, mimd });
        }
    }

    let mut em = Emitter {
        words: Vec::new(),
        // Generators come out of reset with every register at zero.
        regs: [[Some(0); 5]; NUM_ADDRGENS],
        repeat: None,
    };
    for pass in &passes {
        for seg in &segments[pass.chunk] {
            em.segment(seg, pass.mimd);
        }
        for t in 0..pass.hops {
            let mut slots = [SLOT_ADD; NUM_PVS];
            for (slot, pv) in slots.iter_mut().zip(&pass.pvs) {
                if t >= pv.hops {
                    *slot = SLOT_REPEAT;
                }
            }
            em.exec(pass.mimd || slots.iter().any(|&s| s != SLOT_ADD), slots);
        }
    }
    let program = UopProgram::new(em.words, vec![LOCAL_IMAGE.to_vec(); NUM_PVS]);
    program.validate()?;
    Ok(LoweredLayer {
        program,
        mapping: LayerMapping {
            layer: layer.clone(),
            mode,
            layout,
            input_pitch: pitch,
            chunk_size,
            num_chunks,
            tiling: *tiling,
            segments,
            passes,
        },
    })
}
