//! Whole-workload runs: seeded tensors, simulation in every requested mode,
//! verification against the reference kernels, and report assembly.
//!
//! Layers and modes are simulated in parallel. Everything that reaches the
//! report is a pure function of the spec, so reports are byte-identical for
//! any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{simulate, ArrayConfig, SimError};
use crate::isa::Mode;
use crate::metrics::{compare_runs, ComparisonReport, EnergyCostTable, MetricsError, RunMetrics};
use crate::model::{golden_layer, LayerSpec, ModelError, Tensor, Workload};
use crate::planner::{count_inconsequential_macs, SparsityStats};
use crate::scalar::{ElemKind, Fx16, Scalar};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("layer {layer}, {mode} mode: {source}")]
    Sim { layer: String, mode: &'static str, source: SimError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("run spec: {0}")]
    Spec(String),
}

#[derive(Clone, Debug)]
pub struct RunSpec {
    pub workload: Workload,
    pub modes: Vec<Mode>,
    pub config: ArrayConfig,
    pub energy: EnergyCostTable,
    pub seed: u64,
    pub precision: ElemKind,
}

impl RunSpec {
    pub fn new(workload: Workload, seed: u64) -> Self {
        RunSpec {
            workload,
            modes: vec![Mode::Ganax, Mode::Baseline],
            config: ArrayConfig::default(),
            energy: EnergyCostTable::example(),
            seed,
            precision: ElemKind::Q8_8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRun {
    pub layer_id: String,
    pub mode: Mode,
    pub verified: bool,
    /// Largest element-wise difference from the reference output.
    pub max_abs_error: f64,
    pub metrics: RunMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub workload: String,
    pub seed: u64,
    pub precision: ElemKind,
    pub modes: Vec<Mode>,
    pub energy_table: String,
    /// Share of dense MACs over the transposed-convolution layers that touch
    /// an inserted zero or padding.
    pub tconv_inconsequential_fraction: f64,
    pub all_verified: bool,
    pub runs: Vec<LayerRun>,
    pub comparison: Option<ComparisonReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn run(&self, layer_id: &str, mode: Mode) -> Option<&LayerRun> {
        self.runs.iter().find(|r| r.layer_id == layer_id && r.mode == mode)
    }

    /// Human-readable table for the terminal.
    pub fn summary(&self) -> String {
        let mut s = format!("workload {} (seed {}, {:?})\n", self.workload, self.seed, self.precision);
        s.push_str(&format!(
            "{:<16} {:<9} {:>10} {:>7} {:>12} {}\n",
            "layer", "mode", "cycles", "util", "energy", "verified"
        ));
        for r in &self.runs {
            s.push_str(&format!(
                "{:<16} {:<9} {:>10} {:>7.3} {:>12.4e} {}\n",
                r.layer_id,
                r.mode.name(),
                r.metrics.cycles,
                r.metrics.pe_utilization,
                r.metrics.energy_total(),
                if r.verified { "ok" } else { "MISMATCH" }
            ));
        }
        if let Some(c) = &self.comparison {
            s.push_str(&format!(
                "speedup {:.2}x, energy reduction {:.2}x, utilization {:.3} vs {:.3}\n",
                c.total.speedup, c.total.energy_reduction, c.ganax_utilization, c.baseline_utilization
            ));
        }
        s.push_str(&format!("inconsequential MAC fraction (tconv) {:.3}\n", self.tconv_inconsequential_fraction));
        s
    }
}

/// Input and filter tensors for every layer. Filters come from a stream per
/// layer; a chained workload feeds each layer the previous reference output.
pub fn generate_tensors<T: Scalar>(w: &Workload, seed: u64) -> Result<Vec<(Tensor<T>, Tensor<T>)>, RunError> {
    let mut out: Vec<(Tensor<T>, Tensor<T>)> = Vec::with_capacity(w.layers.len());
    for (i, l) in w.layers.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let fresh = Tensor::random(&l.input_dims(), &mut rng);
        let filters = Tensor::random(&l.filter_dims(), &mut rng);
        let input = match out.last() {
            Some((x, f)) if w.chained => golden_layer(x, f, &w.layers[i - 1])?,
            _ => fresh,
        };
        out.push((input, filters));
    }
    Ok(out)
}

fn tconv_fraction(w: &Workload) -> Result<f64, RunError> {
    let mut total = SparsityStats::new(0, 0);
    for l in w.layers.iter().filter(|l| l.is_tconv()) {
        total = total.merge(count_inconsequential_macs(l).map_err(|e| RunError::Spec(e.to_string()))?);
    }
    Ok(total.inconsequential_fraction)
}

fn run_one<T: Scalar>(
    l: &LayerSpec,
    x: &Tensor<T>,
    w: &Tensor<T>,
    mode: Mode,
    spec: &RunSpec,
) -> Result<LayerRun, RunError> {
    let cfg = spec.config.clone().with_mode(mode);
    let sim = simulate(l, x, w, &cfg).map_err(|source| RunError::Sim {
        layer: l.layer_id.clone(),
        mode: mode.name(),
        source,
    })?;
    let gold = golden_layer(x, w, l)?;
    let mut max_abs_error = 0.0f64;
    let mut verified = true;
    for (a, b) in sim.output.data().iter().zip(gold.data()) {
        let (a, b) = (a.to_f64(), b.to_f64());
        let d = (a - b).abs();
        max_abs_error = max_abs_error.max(d);
        verified &= match T::KIND {
            ElemKind::Q8_8 => d == 0.0,
            _ => d <= 1e-5 * b.abs().max(1.0),
        };
    }
    Ok(LayerRun {
        layer_id: l.layer_id.clone(),
        mode,
        verified,
        max_abs_error,
        metrics: sim.metrics.with_energy(&spec.energy)?,
    })
}

fn run_typed<T: Scalar>(spec: &RunSpec) -> Result<Vec<LayerRun>, RunError> {
    let tensors = generate_tensors::<T>(&spec.workload, spec.seed)?;
    let jobs: Vec<(usize, Mode)> =
        (0..spec.workload.layers.len()).flat_map(|i| spec.modes.iter().map(move |&m| (i, m))).collect();
    jobs.par_iter()
        .map(|&(i, mode)| {
            let (x, w) = &tensors[i];
            run_one(&spec.workload.layers[i], x, w, mode, spec)
        })
        .collect()
}

pub fn run_workload(spec: &RunSpec) -> Result<Report, RunError> {
    spec.workload.validate()?;
    spec.config.validate().map_err(|e| RunError::Spec(e.to_string()))?;
    spec.energy.validate()?;
    if spec.modes.is_empty() {
        return Err(RunError::Spec("no modes requested".into()));
    }
    let modes = spec.modes.clone();
    if modes.iter().enumerate().any(|(i, m)| modes[..i].contains(m)) {
        return Err(RunError::Spec("modes repeat".into()));
    }
    let runs = match spec.precision {
        ElemKind::Q8_8 => run_typed::<Fx16>(spec)?,
        ElemKind::F32 => run_typed::<f32>(spec)?,
        ElemKind::F64 => run_typed::<f64>(spec)?,
    };
    let pick = |m: Mode| runs.iter().filter(|r| r.mode == m).map(|r| r.metrics.clone()).collect::<Vec<_>>();
    let comparison = if modes.contains(&Mode::Ganax) && modes.contains(&Mode::Baseline) {
        Some(compare_runs(&pick(Mode::Ganax), &pick(Mode::Baseline))?)
    } else {
        None
    };
    Ok(Report {
        workload: spec.workload.name.clone(),
        seed: spec.seed,
        precision: spec.precision,
        modes,
        energy_table: spec.energy.name.clone(),
        tconv_inconsequential_fraction: tconv_fraction(&spec.workload)?,
        all_verified: runs.iter().all(|r| r.verified),
        runs,
        comparison,
    })
}
