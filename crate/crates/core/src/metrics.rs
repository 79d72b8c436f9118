//! Event counters, energy accounting and run comparison.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::Mode;
use crate::model::ModelRole;

pub const EVENT_CLASSES: [&str; 8] = [
    "pe_op",
    "rf_access",
    "local_buffer",
    "weight_store",
    "global_buffer",
    "dram_byte",
    "uop_fetch_global",
    "uop_fetch_local",
];

const DEFAULT_TABLE: &str = include_str!("../costs/default.toml");

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("energy table: {0}")]
    Table(String),
    #[error("energy table has no cost for event class `{0}`")]
    MissingClass(String),
    #[error("cannot compare runs: {0}")]
    Mismatch(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub pe_op: u64,
    pub rf_access: u64,
    pub local_buffer: u64,
    pub weight_store: u64,
    pub global_buffer: u64,
    pub dram_byte: u64,
    pub uop_fetch_global: u64,
    pub uop_fetch_local: u64,
}

impl Counters {
    pub fn get(&self, class: &str) -> Option<u64> {
        Some(match class {
            "pe_op" => self.pe_op,
            "rf_access" => self.rf_access,
            "local_buffer" => self.local_buffer,
            "weight_store" => self.weight_store,
            "global_buffer" => self.global_buffer,
            "dram_byte" => self.dram_byte,
            "uop_fetch_global" => self.uop_fetch_global,
            "uop_fetch_local" => self.uop_fetch_local,
            _ => return None,
        })
    }

    pub fn add(&mut self, o: &Counters) {
        self.pe_op += o.pe_op;
        self.rf_access += o.rf_access;
        self.local_buffer += o.local_buffer;
        self.weight_store += o.weight_store;
        self.global_buffer += o.global_buffer;
        self.dram_byte += o.dram_byte;
        self.uop_fetch_global += o.uop_fetch_global;
        self.uop_fetch_local += o.uop_fetch_local;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyCostTable {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub costs: BTreeMap<String, f64>,
}

impl EnergyCostTable {
    pub fn from_toml(text: &str) -> Result<Self, MetricsError> {
        let t: EnergyCostTable = toml::from_str(text).map_err(|e| MetricsError::Table(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        let text = std::fs::read_to_string(path).map_err(|e| MetricsError::Table(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| MetricsError::Table(format!("{}: {e}", path.display())))
    }

    /// The shipped example table.
    pub fn example() -> Self {
        Self::from_toml(DEFAULT_TABLE).expect("bundled table is valid")
    }

    pub fn uniform(cost: f64) -> Self {
        EnergyCostTable {
            version: 1,
            name: "uniform".into(),
            costs: EVENT_CLASSES.iter().map(|c| (c.to_string(), cost)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.version != 1 {
            return Err(MetricsError::Table(format!("unsupported version {}", self.version)));
        }
        for (k, v) in &self.costs {
            if !EVENT_CLASSES.contains(&k.as_str()) {
                return Err(MetricsError::Table(format!("unknown event class `{k}`")));
            }
            if !v.is_finite() || *v < 0.0 {
                return Err(MetricsError::Table(format!("cost of `{k}` must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub per_class: BTreeMap<String, f64>,
}

/// Linear in the counters; the total is the sum of the per-class entries in
/// class order.
pub fn compute_energy(c: &Counters, table: &EnergyCostTable) -> Result<EnergyBreakdown, MetricsError> {
    let mut per_class = BTreeMap::new();
    let mut total = 0.0;
    for class in EVENT_CLASSES {
        let cost = *table.costs.get(class).ok_or_else(|| MetricsError::MissingClass(class.to_string()))?;
        let e = c.get(class).expect("known class") as f64 * cost;
        total += e;
        per_class.insert(class.to_string(), e);
    }
    Ok(EnergyBreakdown { total, per_class })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub layer_id: String,
    pub mode: Mode,
    pub role: ModelRole,
    pub cycles: u64,
    pub macs_executed: u64,
    pub macs_consequential: u64,
    pub macs_skipped: u64,
    pub accumulation_hops: u64,
    pub sequencer_stalls: u64,
    pub busy_pe_cycles: u64,
    pub idle_pe_cycles: u64,
    pub stall_pe_cycles: u64,
    pub pe_count: u64,
    pub pe_utilization: f64,
    pub counters: Counters,
    pub energy: Option<EnergyBreakdown>,
    pub wall_time_s: f64,
}

impl RunMetrics {
    pub fn utilization(busy: u64, idle: u64, stall: u64) -> f64 {
        let total = busy + idle + stall;
        if total == 0 {
            0.0
        } else {
            busy as f64 / total as f64
        }
    }

    pub fn with_energy(mut self, table: &EnergyCostTable) -> Result<Self, MetricsError> {
        self.energy = Some(compute_energy(&self.counters, table)?);
        Ok(self)
    }

    pub fn energy_total(&self) -> f64 {
        self.energy.as_ref().map_or(0.0, |e| e.total)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerComparison {
    pub layer_id: String,
    pub role: ModelRole,
    pub ganax_cycles: u64,
    pub baseline_cycles: u64,
    pub speedup: f64,
    pub energy_reduction: f64,
    pub ganax_utilization: f64,
    pub baseline_utilization: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub ganax_cycles: u64,
    pub baseline_cycles: u64,
    pub ganax_energy: f64,
    pub baseline_energy: f64,
    pub speedup: f64,
    pub energy_reduction: f64,
}

impl Aggregate {
    fn push(&mut self, g: &RunMetrics, b: &RunMetrics) {
        self.ganax_cycles += g.cycles;
        self.baseline_cycles += b.cycles;
        self.ganax_energy += g.energy_total();
        self.baseline_energy += b.energy_total();
        self.speedup = ratio(self.baseline_cycles as f64, self.ganax_cycles as f64);
        self.energy_reduction = ratio(self.baseline_energy, self.ganax_energy);
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub layers: Vec<LayerComparison>,
    pub total: Aggregate,
    pub per_role: BTreeMap<String, Aggregate>,
    pub ganax_utilization: f64,
    pub baseline_utilization: f64,
}

fn role_name(r: ModelRole) -> &'static str {
    match r {
        ModelRole::Generative => "generative",
        ModelRole::Discriminative => "discriminative",
    }
}

/// Pairs per-layer metrics of the two modes, in order.
pub fn compare_runs(ganax: &[RunMetrics], baseline: &[RunMetrics]) -> Result<ComparisonReport, MetricsError> {
    if ganax.len() != baseline.len() {
        return Err(MetricsError::Mismatch(format!("{} vs {} layers", ganax.len(), baseline.len())));
    }
    let mut layers = Vec::new();
    let mut total = Aggregate::default();
    let mut per_role: BTreeMap<String, Aggregate> = BTreeMap::new();
    let (mut gu, mut bu) = ([0u64; 3], [0u64; 3]);
    for (g, b) in ganax.iter().zip(baseline) {
        if g.layer_id != b.layer_id || g.role != b.role {
            return Err(MetricsError::Mismatch(format!("layer {} paired with {}", g.layer_id, b.layer_id)));
        }
        if g.mode != Mode::Ganax || b.mode != Mode::Baseline {
            return Err(MetricsError::Mismatch(format!("layer {}: modes are not ganax/baseline", g.layer_id)));
        }
        layers.push(LayerComparison {
            layer_id: g.layer_id.clone(),
            role: g.role,
            ganax_cycles: g.cycles,
            baseline_cycles: b.cycles,
            speedup: ratio(b.cycles as f64, g.cycles as f64),
            energy_reduction: ratio(b.energy_total(), g.energy_total()),
            ganax_utilization: g.pe_utilization,
            baseline_utilization: b.pe_utilization,
        });
        total.push(g, b);
        per_role.entry(role_name(g.role).to_string()).or_default().push(g, b);
        for (acc, m) in [(&mut gu, g), (&mut bu, b)] {
            acc[0] += m.busy_pe_cycles;
            acc[1] += m.idle_pe_cycles;
            acc[2] += m.stall_pe_cycles;
        }
    }
    Ok(ComparisonReport {
        layers,
        total,
        per_role,
        ganax_utilization: RunMetrics::utilization(gu[0], gu[1], gu[2]),
        baseline_utilization: RunMetrics::utilization(bu[0], bu[1], bu[2]),
    })
}
