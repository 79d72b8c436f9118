//! Output-row and filter-row reorganization for transposed convolutions.
//!
//! Zero insertion means an output row of a TConv layer only meets nonzero
//! input rows through a subset of the filter rows. Rows sharing the same
//! subset form a [`RowPattern`]; interior rows fall into exactly `stride`
//! patterns, rows whose window is truncated by the input boundary form extra
//! patterns of their own. A [`DataflowPlan`] groups rows by pattern and packs
//! only the consequential filter rows onto compute nodes, so no node of an
//! interior row is idle.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LayerKind, LayerSpec, ModelError};

pub const DEFAULT_PES_PER_PV: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("layer {0}: operation requires a transposed convolution")]
    NotTConv(String),
    #[error("layer {layer}: output row {row} out of range (out_h = {out_h})")]
    RowOutOfRange { layer: String, row: usize, out_h: usize },
    #[error("layer {layer}: {rows} filter rows do not fit in a {pes}-PE vector")]
    FilterTooTall { layer: String, rows: usize, pes: usize },
    #[error("num_pvs must be at least 1")]
    NoPvs,
    #[error(transparent)]
    Layer(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowPattern {
    pub pattern_id: usize,
    /// Consequential filter rows, ascending, 0-indexed.
    pub filter_rows: Vec<usize>,
    /// Horizontal accumulation hops, equal to `filter_rows.len()`.
    pub accum_cycles: usize,
    /// False for rows whose window is truncated by the input boundary.
    pub interior: bool,
}

/// Rows of a single pattern mapped onto one PV at a time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PvBatch {
    pub pattern_id: usize,
    pub rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataflowPlan {
    pub layer_id: String,
    pub kind: LayerKind,
    pub patterns: Vec<RowPattern>,
    /// Pattern of each output row; `None` for rows with no contribution.
    pub row_assignment: Vec<Option<usize>>,
    /// Output rows reordered so rows of equal pattern are adjacent.
    pub group_order: Vec<usize>,
    /// Packed filter-row order per pattern.
    pub filter_order: Vec<Vec<usize>>,
    /// Batches per PV in issue order; every batch is pattern-homogeneous.
    pub pv_schedule: Vec<Vec<PvBatch>>,
    /// Column step used by the access engines to skip inserted zeros.
    pub col_stride: usize,
    /// Rows emitted as explicit zeros and never scheduled.
    pub zero_rows: Vec<usize>,
    pub pes_per_pv: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub total_macs: u64,
    pub consequential_macs: u64,
    pub inconsequential_fraction: f64,
}

impl SparsityStats {
    pub fn new(total_macs: u64, consequential_macs: u64) -> Self {
        let inconsequential_fraction = if total_macs == 0 {
            0.0
        } else {
            1.0 - consequential_macs as f64 / total_macs as f64
        };
        SparsityStats {
            total_macs,
            consequential_macs,
            inconsequential_fraction,
        }
    }

    pub fn merge(self, other: SparsityStats) -> SparsityStats {
        SparsityStats::new(self.total_macs + other.total_macs, self.consequential_macs + other.consequential_macs)
    }
}

fn require_tconv(layer: &LayerSpec) -> Result<(), PlanError> {
    layer.validate()?;
    if layer.kind != LayerKind::TConv {
        return Err(PlanError::NotTConv(layer.layer_id.clone()));
    }
    Ok(())
}

/// Filter taps along one axis that meet a nonzero input element, for output
/// coordinate `out` of a TConv layer with input extent `input` and `k` taps.
pub fn consequential_taps(out: usize, k: usize, stride: usize, pad: usize, input: usize) -> Vec<usize> {
    (0..k)
        .filter(|&tap| {
            let pos = (out + tap) as isize - pad as isize;
            pos >= 0 && (pos as usize).is_multiple_of(stride) && (pos as usize / stride) < input
        })
        .collect()
}

/// Same taps ignoring the input boundary.
fn unbounded_taps(out: usize, k: usize, stride: usize, pad: usize) -> Vec<usize> {
    (0..k)
        .filter(|&tap| ((out + tap) as isize - pad as isize).rem_euclid(stride as isize) == 0)
        .collect()
}

pub fn consequential_filter_rows(row: usize, layer: &LayerSpec) -> Result<Vec<usize>, PlanError> {
    require_tconv(layer)?;
    let out_h = layer.out_h();
    if row >= out_h {
        return Err(PlanError::RowOutOfRange {
            layer: layer.layer_id.clone(),
            row,
            out_h,
        });
    }
    Ok(consequential_taps(row, layer.k_h, layer.stride, layer.padding, layer.in_h))
}

/// Column counterpart of [`consequential_filter_rows`].
pub fn consequential_filter_cols(col: usize, layer: &LayerSpec) -> Vec<usize> {
    consequential_taps(col, layer.k_w, layer.stride, layer.padding, layer.in_w)
}

/// Groups output rows by their consequential filter-row set. Patterns are
/// ordered by (first filter row, cardinality).
pub fn classify_patterns(layer: &LayerSpec) -> Result<(Vec<RowPattern>, Vec<Option<usize>>), PlanError> {
    require_tconv(layer)?;
    let out_h = layer.out_h();
    let mut sets: BTreeMap<(usize, usize, Vec<usize>), bool> = BTreeMap::new();
    let mut per_row = Vec::with_capacity(out_h);
    for r in 0..out_h {
        let rows = consequential_taps(r, layer.k_h, layer.stride, layer.padding, layer.in_h);
        if !rows.is_empty() {
            let interior = rows == unbounded_taps(r, layer.k_h, layer.stride, layer.padding);
            sets.insert((rows[0], rows.len(), rows.clone()), interior);
        }
        per_row.push(rows);
    }
    let patterns: Vec<RowPattern> = sets
        .into_iter()
        .enumerate()
        .map(|(id, ((_, n, rows), interior))| RowPattern {
            pattern_id: id,
            filter_rows: rows,
            accum_cycles: n,
            interior,
        })
        .collect();
    let assignment = per_row
        .iter()
        .map(|rows| patterns.iter().find(|p| &p.filter_rows == rows).map(|p| p.pattern_id))
        .collect();
    Ok((patterns, assignment))
}

pub fn build_plan(layer: &LayerSpec, num_pvs: usize) -> Result<DataflowPlan, PlanError> {
    build_plan_with(layer, num_pvs, DEFAULT_PES_PER_PV)
}

/// Builds the reorganized plan. Each PV batch holds as many rows of one
/// pattern as fit when every row occupies `accum_cycles` PEs; batches are
/// dealt round-robin to the PVs in group order.
pub fn build_plan_with(layer: &LayerSpec, num_pvs: usize, pes_per_pv: usize) -> Result<DataflowPlan, PlanError> {
    layer.validate()?;
    if num_pvs == 0 {
        return Err(PlanError::NoPvs);
    }
    let out_h = layer.out_h();
    let (patterns, row_assignment, col_stride) = match layer.kind {
        LayerKind::Conv => {
            let pattern = RowPattern {
                pattern_id: 0,
                filter_rows: (0..layer.k_h).collect(),
                accum_cycles: layer.k_h,
                interior: true,
            };
            (vec![pattern], vec![Some(0); out_h], 1)
        }
        LayerKind::TConv => {
            let (p, a) = classify_patterns(layer)?;
            (p, a, layer.stride)
        }
    };
    if let Some(tall) = patterns.iter().find(|p| p.accum_cycles > pes_per_pv) {
        return Err(PlanError::FilterTooTall {
            layer: layer.layer_id.clone(),
            rows: tall.accum_cycles,
            pes: pes_per_pv,
        });
    }

    let mut group_order = Vec::with_capacity(out_h);
    let mut batches = Vec::new();
    for pattern in &patterns {
        let rows: Vec<usize> = (0..out_h).filter(|&r| row_assignment[r] == Some(pattern.pattern_id)).collect();
        group_order.extend_from_slice(&rows);
        let cap = pes_per_pv / pattern.accum_cycles;
        for chunk in rows.chunks(cap) {
            batches.push(PvBatch {
                pattern_id: pattern.pattern_id,
                rows: chunk.to_vec(),
            });
        }
    }
    let mut pv_schedule = vec![Vec::new(); num_pvs];
    for (i, batch) in batches.into_iter().enumerate() {
        pv_schedule[i % num_pvs].push(batch);
    }
    let zero_rows = (0..out_h).filter(|&r| row_assignment[r].is_none()).collect();
    Ok(DataflowPlan {
        layer_id: layer.layer_id.clone(),
        kind: layer.kind,
        filter_order: patterns.iter().map(|p| p.filter_rows.clone()).collect(),
        patterns,
        row_assignment,
        group_order,
        pv_schedule,
        col_stride,
        zero_rows,
        pes_per_pv,
    })
}

impl DataflowPlan {
    pub fn pattern_of(&self, row: usize) -> Option<&RowPattern> {
        self.row_assignment[row].map(|id| &self.patterns[id])
    }

    pub fn interior_patterns(&self) -> impl Iterator<Item = &RowPattern> {
        self.patterns.iter().filter(|p| p.interior)
    }

    /// Idle fraction of compute nodes when every output row occupies all
    /// `k_h` filter-row nodes, averaged over the interior patterns (one period
    /// of the zero-insertion pattern).
    pub fn naive_interior_idle_fraction(&self, k_h: usize) -> f64 {
        let interior: Vec<_> = self.interior_patterns().collect();
        if interior.is_empty() {
            return 0.0;
        }
        let mean = interior.iter().map(|p| p.accum_cycles as f64).sum::<f64>() / interior.len() as f64;
        (k_h as f64 - mean) / k_h as f64
    }

    /// Idle fraction of the compute nodes the plan actually allocates to
    /// interior rows: a node is idle when its filter row is not consequential
    /// for the row it serves.
    pub fn planned_interior_idle_fraction(&self, layer: &LayerSpec) -> f64 {
        let (mut nodes, mut idle) = (0usize, 0usize);
        for batch in self.pv_schedule.iter().flatten() {
            let pattern = &self.patterns[batch.pattern_id];
            if !pattern.interior {
                continue;
            }
            for &row in &batch.rows {
                let needed = match layer.kind {
                    LayerKind::TConv => consequential_taps(row, layer.k_h, layer.stride, layer.padding, layer.in_h),
                    LayerKind::Conv => (0..layer.k_h).collect(),
                };
                for fr in &self.filter_order[batch.pattern_id] {
                    nodes += 1;
                    if !needed.contains(fr) {
                        idle += 1;
                    }
                }
            }
        }
        if nodes == 0 {
            0.0
        } else {
            idle as f64 / nodes as f64
        }
    }

    /// Human-readable dump. Filter rows are shown 1-indexed.
    pub fn explain(&self, layer: &LayerSpec) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "layer {} ({:?}), {} output rows", self.layer_id, self.kind, self.row_assignment.len());
        let interior = self.interior_patterns().count();
        let _ = writeln!(s, "patterns: {} ({} interior)", self.patterns.len(), interior);
        for p in &self.patterns {
            let rows: Vec<String> = p.filter_rows.iter().map(|r| (r + 1).to_string()).collect();
            let members: Vec<usize> =
                self.group_order.iter().copied().filter(|&r| self.row_assignment[r] == Some(p.pattern_id)).collect();
            let _ = writeln!(
                s,
                "  pattern {}{}: filter rows {{{}}}, accumulation {} cycles, output rows {:?}",
                p.pattern_id,
                if p.interior { "" } else { " (boundary)" },
                rows.join(","),
                p.accum_cycles,
                members
            );
        }
        let _ = writeln!(s, "row order: {:?}", self.group_order);
        if !self.zero_rows.is_empty() {
            let _ = writeln!(s, "zero rows: {:?}", self.zero_rows);
        }
        let _ = writeln!(s, "column step: {}", self.col_stride);
        for (pv, batches) in self.pv_schedule.iter().enumerate() {
            if batches.is_empty() {
                continue;
            }
            let list: Vec<String> = batches.iter().map(|b| format!("p{}:{:?}", b.pattern_id, b.rows)).collect();
            let _ = writeln!(s, "  pv{pv}: {}", list.join(" "));
        }
        if layer.kind == LayerKind::TConv {
            let stats = count_inconsequential_macs(layer).expect("tconv layer");
            let _ = writeln!(
                s,
                "macs: {} dense, {} consequential, inconsequential fraction {:.4}",
                stats.total_macs, stats.consequential_macs, stats.inconsequential_fraction
            );
            let _ = writeln!(
                s,
                "interior compute-node idle fraction: naive {:.4}, planned {:.4}",
                self.naive_interior_idle_fraction(layer.k_h),
                self.planned_interior_idle_fraction(layer)
            );
        }
        let sched: Vec<usize> = accumulation_schedule(self, AccumulationMode::Reorganized, layer.k_h);
        let _ = writeln!(s, "accumulation cycles per row: {sched:?}");
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

fn axis_consequential(out: usize, k: usize, stride: usize, pad: usize, input: usize) -> u64 {
    (0..out).map(|o| consequential_taps(o, k, stride, pad, input).len() as u64).sum()
}

/// Exact MAC counts for a TConv layer. Row and column taps are independent,
/// so the consequential count factors into per-axis sums.
pub fn count_inconsequential_macs(layer: &LayerSpec) -> Result<SparsityStats, PlanError> {
    require_tconv(layer)?;
    let rows = axis_consequential(layer.out_h(), layer.k_h, layer.stride, layer.padding, layer.in_h);
    let cols = axis_consequential(layer.out_w(), layer.k_w, layer.stride, layer.padding, layer.in_w);
    let channels = (layer.in_c * layer.out_c) as u64;
    Ok(SparsityStats::new(layer.dense_macs(), rows * cols * channels))
}

/// Counts restricted to output positions whose row and column windows are
/// not truncated by the input boundary.
pub fn interior_sparsity(layer: &LayerSpec) -> Result<SparsityStats, PlanError> {
    require_tconv(layer)?;
    let axis = |out: usize, k: usize, input: usize| {
        let mut positions = 0u64;
        let mut taps = 0u64;
        for o in 0..out {
            let bounded = consequential_taps(o, k, layer.stride, layer.padding, input);
            if bounded == unbounded_taps(o, k, layer.stride, layer.padding) {
                positions += 1;
                taps += bounded.len() as u64;
            }
        }
        (positions, taps)
    };
    let (rp, rt) = axis(layer.out_h(), layer.k_h, layer.in_h);
    let (cp, ct) = axis(layer.out_w(), layer.k_w, layer.in_w);
    let channels = (layer.in_c * layer.out_c) as u64;
    let total = rp * cp * (layer.k_h * layer.k_w) as u64 * channels;
    Ok(SparsityStats::new(total, rt * ct * channels))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccumulationMode {
    Reorganized,
    Baseline,
}

/// Horizontal accumulation hops per output row.
pub fn accumulation_schedule(plan: &DataflowPlan, mode: AccumulationMode, k_h: usize) -> Vec<usize> {
    plan.row_assignment
        .iter()
        .map(|a| match mode {
            AccumulationMode::Baseline => k_h,
            AccumulationMode::Reorganized => a.map_or(0, |id| plan.patterns[id].accum_cycles),
        })
        .collect()
}
