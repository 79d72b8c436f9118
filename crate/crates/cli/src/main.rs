//! Command-line front end: run workloads, inspect plans and programs, trace a PE.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ganax::array::{simulate, ArrayConfig};
use ganax::isa::{assemble, disassemble, lower, read_image, write_image, Mode};
use ganax::metrics::EnergyCostTable;
use ganax::model::{load_workload, LayerSpec, Workload};
use ganax::planner::{build_plan_with, count_inconsequential_macs};
use ganax::runner::{generate_tensors, run_workload, Report, RunSpec};
use ganax::{ElemKind, Fx16};

/// Directory searched for `array.toml` and `energy.toml` when no explicit
/// file is given.
const CONFIG_DIR_ENV: &str = "GANAX_CONFIG_DIR";

#[derive(Parser)]
#[command(name = "ganax", version, about = "Cycle-level MIMD-SIMD accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    #[value(name = "q8.8")]
    Q8_8,
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every layer in each mode, verify, and report.
    Run {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "ganax,baseline", value_parser = parse_mode)]
        modes: Vec<Mode>,
        #[arg(long)]
        energy_table: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report file; the report goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(long, value_enum, default_value = "q8.8")]
        precision: Precision,
    },
    /// Print the dataflow plan and program layout of one or all layers.
    Explain {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        layer: Option<String>,
        #[arg(long, default_value = "ganax", value_parser = parse_mode)]
        mode: Mode,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also print the lowered program as assembly.
        #[arg(long)]
        program: bool,
    },
    /// Assemble a text program into a binary image.
    Asm {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print a binary image as assembly.
    Disasm { input: PathBuf },
    /// Per-cycle emission and execution trace of one PE.
    Trace {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        layer: String,
        #[arg(long, default_value = "ganax", value_parser = parse_mode)]
        mode: Mode,
        #[arg(long, value_parser = parse_pe)]
        trace_pe: (usize, usize),
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "ganax" => Ok(Mode::Ganax),
        "baseline" => Ok(Mode::Baseline),
        _ => Err(format!("unknown mode `{s}` (expected ganax or baseline)")),
    }
}

fn parse_pe(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected <pv,pe>")?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    Ok((n(a)?, n(b)?))
}

/// Missing or unreadable input files exit with status 2.
#[derive(Debug)]
struct BadPath(PathBuf);

impl std::fmt::Display for BadPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "no such file: {}", self.0.display())
    }
}

impl std::error::Error for BadPath {}

fn existing(p: &Path) -> Result<&Path> {
    if !p.is_file() {
        return Err(BadPath(p.to_path_buf()).into());
    }
    Ok(p)
}

fn default_file(name: &str) -> Option<PathBuf> {
    let dir = std::env::var_os(CONFIG_DIR_ENV)?;
    let p = Path::new(&dir).join(name);
    p.is_file().then_some(p)
}

fn array_config(explicit: Option<&Path>) -> Result<ArrayConfig> {
    match explicit.map(Path::to_path_buf).or_else(|| default_file("array.toml")) {
        Some(p) => Ok(ArrayConfig::load(existing(&p)?)?),
        None => Ok(ArrayConfig::default()),
    }
}

fn energy_table(explicit: Option<&Path>) -> Result<EnergyCostTable> {
    match explicit.map(Path::to_path_buf).or_else(|| default_file("energy.toml")) {
        Some(p) => Ok(EnergyCostTable::load(existing(&p)?)?),
        None => Ok(EnergyCostTable::example()),
    }
}

fn workload(p: &Path) -> Result<Workload> {
    Ok(load_workload(existing(p)?)?)
}

fn find_layer<'a>(w: &'a Workload, id: &str) -> Result<(usize, &'a LayerSpec)> {
    w.layers
        .iter()
        .enumerate()
        .find(|(_, l)| l.layer_id == id)
        .with_context(|| format!("workload {} has no layer `{id}`", w.name))
}

fn csv_report(r: &Report) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "layer_id",
        "role",
        "mode",
        "verified",
        "max_abs_error",
        "cycles",
        "macs_executed",
        "macs_consequential",
        "macs_skipped",
        "accumulation_hops",
        "sequencer_stalls",
        "busy_pe_cycles",
        "idle_pe_cycles",
        "stall_pe_cycles",
        "pe_utilization",
        "energy",
        "wall_time_s",
        "speedup",
        "energy_reduction",
    ])?;
    for run in &r.runs {
        let m = &run.metrics;
        let cmp = r
            .comparison
            .as_ref()
            .and_then(|c| c.layers.iter().find(|l| l.layer_id == run.layer_id))
            .filter(|_| run.mode == Mode::Ganax);
        let role = serde_name(&m.role);
        wtr.write_record([
            run.layer_id.clone(),
            role,
            run.mode.name().to_string(),
            run.verified.to_string(),
            run.max_abs_error.to_string(),
            m.cycles.to_string(),
            m.macs_executed.to_string(),
            m.macs_consequential.to_string(),
            m.macs_skipped.to_string(),
            m.accumulation_hops.to_string(),
            m.sequencer_stalls.to_string(),
            m.busy_pe_cycles.to_string(),
            m.idle_pe_cycles.to_string(),
            m.stall_pe_cycles.to_string(),
            format!("{:.6}", m.pe_utilization),
            format!("{:.6}", m.energy_total()),
            format!("{:e}", m.wall_time_s),
            cmp.map_or(String::new(), |c| format!("{:.6}", c.speedup)),
            cmp.map_or(String::new(), |c| format!("{:.6}", c.energy_reduction)),
        ])?;
    }
    Ok(String::from_utf8(wtr.into_inner()?)?)
}

fn serde_name(role: &ganax::model::ModelRole) -> String {
    match role {
        ganax::model::ModelRole::Generative => "generative".into(),
        ganax::model::ModelRole::Discriminative => "discriminative".into(),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    workload_path: &Path,
    modes: Vec<Mode>,
    energy: Option<&Path>,
    seed: u64,
    config: Option<&Path>,
    out: Option<&Path>,
    format: Format,
    precision: Precision,
) -> Result<bool> {
    let mut spec = RunSpec::new(workload(workload_path)?, seed);
    spec.modes = modes;
    spec.config = array_config(config)?;
    spec.energy = energy_table(energy)?;
    spec.precision = match precision {
        Precision::Q8_8 => ElemKind::Q8_8,
        Precision::F32 => ElemKind::F32,
        Precision::F64 => ElemKind::F64,
    };
    let report = run_workload(&spec)?;
    let text = match format {
        Format::Json => report.to_json(),
        Format::Csv => csv_report(&report)?,
    };
    match out {
        Some(p) => {
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            print!("{}", report.summary());
        }
        None => {
            print!("{text}");
            eprint!("{}", report.summary());
        }
    }
    for r in report.runs.iter().filter(|r| !r.verified) {
        eprintln!(
            "error: layer {} in {} mode differs from the reference (max abs error {})",
            r.layer_id,
            r.mode.name(),
            r.max_abs_error
        );
    }
    Ok(report.all_verified)
}

fn cmd_explain(path: &Path, layer: Option<&str>, mode: Mode, config: Option<&Path>, program: bool) -> Result<()> {
    let w = workload(path)?;
    let cfg = array_config(config)?;
    let layers: Vec<&LayerSpec> = match layer {
        Some(id) => vec![find_layer(&w, id)?.1],
        None => w.layers.iter().collect(),
    };
    for l in layers {
        let plan = build_plan_with(l, cfg.num_pvs, cfg.pes_per_pv)?;
        println!("== {} ({:?}, {}x{}x{} -> {}x{}x{})", l.layer_id, l.kind, l.in_c, l.in_h, l.in_w, l.out_c, l.out_h(), l.out_w());
        if l.is_tconv() {
            print!("{}", plan.explain(l));
            let s = count_inconsequential_macs(l)?;
            println!("inconsequential MACs: {:.4} of {}", s.inconsequential_fraction, s.total_macs);
        }
        let low = lower(&plan, l, mode, &cfg.tiling())?;
        let m = &low.mapping;
        let mimd = low.program.global.iter().filter(|w| w.is_mimd()).count();
        println!(
            "{} mode: layout {:?}, {} chunk(s) of {} channel(s), {} pass(es), {} global words ({} MIMD), {} pages",
            mode.name(),
            m.layout,
            m.num_chunks,
            m.chunk_size,
            m.passes.len(),
            low.program.global.len(),
            mimd,
            low.program.pages().count()
        );
        if program {
            print!("{}", disassemble(&low.program));
        }
    }
    Ok(())
}

fn cmd_asm(input: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(existing(input)?)?;
    let prog = assemble(&text).map_err(|e| anyhow::anyhow!("{}: {e}", input.display()))?;
    let bytes = write_image(&prog)?;
    std::fs::write(out, &bytes).with_context(|| format!("writing {}", out.display()))?;
    println!("{} words, {} bytes", prog.global.len(), bytes.len());
    Ok(())
}

fn cmd_disasm(input: &Path) -> Result<()> {
    let bytes = std::fs::read(existing(input)?)?;
    let prog = read_image(&bytes).map_err(|e| anyhow::anyhow!("{}: {e}", input.display()))?;
    print!("{}", disassemble(&prog));
    Ok(())
}

fn cmd_trace(path: &Path, layer: &str, mode: Mode, pe: (usize, usize), seed: u64, config: Option<&Path>) -> Result<()> {
    let w = workload(path)?;
    let (idx, l) = find_layer(&w, layer)?;
    let mut cfg = array_config(config)?.with_mode(mode);
    if pe.0 >= cfg.num_pvs || pe.1 >= cfg.pes_per_pv {
        bail!("PE {},{} is outside the {}x{} array", pe.0, pe.1, cfg.num_pvs, cfg.pes_per_pv);
    }
    cfg.trace_pe = Some(pe);
    let tensors = generate_tensors::<Fx16>(&w, seed)?;
    let (x, f) = &tensors[idx];
    let out = simulate(l, x, f, &cfg)?;
    for line in &out.trace {
        println!("{line}");
    }
    eprintln!("{} cycles, utilization {:.3}", out.metrics.cycles, out.metrics.pe_utilization);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { workload, modes, energy_table, seed, config, out, format, precision } => cmd_run(
            &workload,
            modes,
            energy_table.as_deref(),
            seed,
            config.as_deref(),
            out.as_deref(),
            format,
            precision,
        ),
        Command::Explain { workload, layer, mode, config, program } => {
            cmd_explain(&workload, layer.as_deref(), mode, config.as_deref(), program).map(|_| true)
        }
        Command::Asm { input, out } => cmd_asm(&input, &out).map(|_| true),
        Command::Disasm { input } => cmd_disasm(&input).map(|_| true),
        Command::Trace { workload, layer, mode, trace_pe, seed, config } => {
            cmd_trace(&workload, &layer, mode, trace_pe, seed, config.as_deref()).map(|_| true)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<BadPath>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
