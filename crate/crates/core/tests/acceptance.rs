//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::addrgen_ref::{self, reference};
use common::cycle_oracle::oracle_cycles;
use common::programs::program;
use common::{arb_layer, tensors};
use ganax::array::{run_layer, simulate, ArrayConfig, SimOutput};
use ganax::engines::AddressGenState;
use ganax::isa::{
    assemble, decode, disassemble, encode, lower, read_image, write_image, Mode, LOCAL_SLOTS, PAGE_ENTRIES,
};
use ganax::metrics::RunMetrics;
use ganax::model::{expand_input, golden_layer, load_workload, LayerKind, LayerSpec, ModelRole, Tensor, Workload};
use ganax::planner::{accumulation_schedule, build_plan, count_inconsequential_macs, interior_sparsity, AccumulationMode, SparsityStats};
use ganax::runner::{run_workload, RunSpec};
use ganax::{Fx16, Scalar};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn sample<S: Strategy>(s: S, n: usize) -> Vec<S::Value> {
    let mut r = runner(n as u32);
    (0..n).map(|_| s.new_tree(&mut r).unwrap().current()).collect()
}

fn workload(name: &str) -> Workload {
    load_workload(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("workloads").join(name)).unwrap()
}

fn sim(l: &LayerSpec, mode: Mode, seed: u64) -> SimOutput<Fx16> {
    let (x, w) = tensors::<Fx16>(l, seed);
    simulate(l, &x, &w, &ArrayConfig::default().with_mode(mode)).unwrap()
}

fn tconv(h: usize, k: usize, s: usize, p: usize, c: usize) -> LayerSpec {
    LayerSpec::square(&format!("h{h}k{k}s{s}p{p}c{c}"), LayerKind::TConv, h, k, s, p).with_channels(c, c)
}

fn functional_exactness() -> Outcome {
    let t = Instant::now();
    let layers = sample(arb_layer(32, 8), 200);
    let bad: Vec<String> = layers
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, l)| {
            let (x, w) = tensors::<Fx16>(l, i as u64);
            let gold = golden_layer(&x, &w, l).unwrap();
            [Mode::Ganax, Mode::Baseline].into_iter().filter_map(move |mode| {
                match simulate(l, &x, &w, &ArrayConfig::default().with_mode(mode)) {
                    Ok(out) if out.output == gold => None,
                    Ok(out) => Some(format!("{mode:?} {l:?}: first mismatch {:?}", out.output.first_mismatch(&gold))),
                    Err(e) => Some(format!("{mode:?} {l:?}: {e}")),
                }
            })
        })
        .collect();
    let elapsed = t.elapsed();
    let tconvs = layers.iter().filter(|l| l.is_tconv()).count();
    ensure(bad.is_empty(), || format!("{} mismatches, first: {}", bad.len(), bad[0]))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "200 layers ({} conv, {tconvs} tconv), both modes bit-exact in Q8.8, {elapsed:.1?}",
        200 - tconvs
    ))
}

fn worked_example() -> Outcome {
    let l = LayerSpec::square("worked", LayerKind::TConv, 4, 5, 2, 2);
    let ones = Tensor::<Fx16>::from_fn(&[1, 4, 4], |_| Fx16::from_f64(1.0));
    let e = expand_input(&ones, &l).unwrap();
    ensure(e.dims() == [1, 11, 11], || format!("expanded {:?}", e.dims()))?;
    let plan = build_plan(&l, 16).unwrap();
    let mut sets: Vec<Vec<usize>> =
        plan.interior_patterns().map(|p| p.filter_rows.iter().map(|r| r + 1).collect()).collect();
    sets.sort();
    ensure(sets == vec![vec![1, 3, 5], vec![2, 4]], || format!("interior patterns {sets:?}"))?;
    let naive = plan.naive_interior_idle_fraction(l.k_h);
    let planned = plan.planned_interior_idle_fraction(&l);
    ensure(naive == 0.5 && planned == 0.0, || format!("idle naive {naive}, planned {planned}"))?;
    let g = sim(&l, Mode::Ganax, 1);
    let b = sim(&l, Mode::Baseline, 1);
    ensure(g.row_hops == accumulation_schedule(&plan, AccumulationMode::Reorganized, 5), || "ganax hops".into())?;
    let mut seen = BTreeMap::new();
    for (row, p) in plan.row_assignment.iter().enumerate() {
        let Some(p) = p.map(|id| &plan.patterns[id]) else { continue };
        if p.interior {
            let parity = if p.filter_rows[0] % 2 == 0 { "odd" } else { "even" };
            seen.insert(parity, (b.row_hops[row], g.row_hops[row]));
        }
    }
    let want = BTreeMap::from([("even", (5, 2)), ("odd", (5, 3))]);
    ensure(seen == want, || format!("accumulation {seen:?}"))?;
    Ok(format!(
        "expanded 11x11, patterns {{2,4}} {{1,3,5}}, idle 50% -> 0%, accumulation 5->2 (even) 5->3 (odd), {} vs {} cycles",
        g.metrics.cycles, b.metrics.cycles
    ))
}

/// Interior output positions of one axis: windows that hold every lattice
/// point they would hold on an unbounded input.
fn interior_positions(out: usize, k: usize, s: usize, p: usize, input: usize) -> Vec<usize> {
    (0..out).filter(|&y| y as isize > p as isize - s as isize && y + k - 1 < p + input * s).collect()
}

fn brute_force_interior(l: &LayerSpec, whole_periods: bool) -> (u64, u64) {
    let ones = Tensor::<Fx16>::from_fn(&[1, l.in_h, l.in_w], |_| Fx16::from_f64(1.0));
    let e = expand_input(&ones, l).unwrap();
    let mut rows = interior_positions(l.out_h(), l.k_h, l.stride, l.padding, l.in_h);
    let mut cols = interior_positions(l.out_w(), l.k_w, l.stride, l.padding, l.in_w);
    if whole_periods {
        rows.truncate(rows.len() - rows.len() % l.stride);
        cols.truncate(cols.len() - cols.len() % l.stride);
    }
    let (mut total, mut hits) = (0u64, 0u64);
    for &y in &rows {
        for &x in &cols {
            for ky in 0..l.k_h {
                for kx in 0..l.k_w {
                    total += 1;
                    hits += u64::from(e.at(&[0, y + ky, x + kx]) != Fx16::from_f64(0.0));
                }
            }
        }
    }
    (total, hits)
}

fn inconsequential_fractions() -> Outcome {
    let mut checked = 0;
    for k in 3..=5 {
        for h in 3..=12 {
            for p in 0..k {
                let l = tconv(h, k, 2, p, 1);
                if l.validate().is_err() {
                    continue;
                }
                let (total, hits) = brute_force_interior(&l, false);
                if total == 0 {
                    continue;
                }
                let analytic = interior_sparsity(&l).unwrap();
                ensure(analytic.total_macs == total && analytic.consequential_macs == hits, || {
                    format!("{}: analytic {analytic:?} vs brute force {total}/{hits}", l.layer_id)
                })?;
                let (total, hits) = brute_force_interior(&l, true);
                if total == 0 {
                    // Fewer interior rows or columns than one period.
                    continue;
                }
                ensure(4 * hits == total, || format!("{}: {hits}/{total} consequential", l.layer_id))?;
                checked += 1;
            }
        }
    }
    let mut bands = Vec::new();
    for name in ["3dgan.json", "dcgan.json", "magan.json"] {
        let w = workload(name);
        let f = w
            .layers
            .iter()
            .filter(|l| l.is_tconv())
            .map(|l| count_inconsequential_macs(l).unwrap())
            .fold(SparsityStats::new(0, 0), SparsityStats::merge)
            .inconsequential_fraction;
        ensure((0.60..=0.85).contains(&f), || format!("{}: fraction {f:.3}", w.name))?;
        bands.push(format!("{} {f:.3}", w.name));
    }
    Ok(format!(
        "{checked} s=2 layers: interior fraction exactly 0.75, analytic equals brute force; workloads {}",
        bands.join(", ")
    ))
}

fn within_one_percent(g: u64, b: u64) -> bool {
    (g as f64 - b as f64).abs() <= 0.01 * b as f64
}

fn conv_parity() -> Outcome {
    let r = run_workload(&RunSpec::new(workload("conv_only.json"), 7)).map_err(|e| e.to_string())?;
    ensure(r.all_verified, || "outputs differ from reference".into())?;
    let c = r.comparison.as_ref().unwrap();
    for l in &c.layers {
        ensure(within_one_percent(l.ganax_cycles, l.baseline_cycles), || {
            format!("{}: {} vs {} cycles", l.layer_id, l.ganax_cycles, l.baseline_cycles)
        })?;
    }
    ensure(within_one_percent(c.total.ganax_cycles, c.total.baseline_cycles), || "total".into())?;
    Ok(format!(
        "conv-only workload: {} vs {} cycles over {} layers",
        c.total.ganax_cycles,
        c.total.baseline_cycles,
        c.layers.len()
    ))
}

/// Simulated s=2 TConv layers with inputs of at least 16 rows: a k/p sweep at
/// 8 and 16 channels plus the shipped workload layers of that shape.
fn s2_layers() -> &'static Vec<(LayerSpec, RunMetrics, RunMetrics)> {
    static RUNS: OnceLock<Vec<(LayerSpec, RunMetrics, RunMetrics)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut layers = Vec::new();
        for h in [16, 32] {
            for k in 3..=5 {
                for p in 0..k {
                    for c in [8, 16] {
                        layers.push(tconv(h, k, 2, p, c));
                    }
                }
            }
        }
        for name in ["3dgan.json", "dcgan.json", "magan.json"] {
            for mut l in workload(name).layers {
                if l.is_tconv() && l.stride == 2 && l.in_h >= 16 {
                    l.layer_id = format!("{name}:{}", l.layer_id);
                    layers.push(l);
                }
            }
        }
        layers
            .into_par_iter()
            .map(|l| {
                let g = sim(&l, Mode::Ganax, 2).metrics;
                let b = sim(&l, Mode::Baseline, 2).metrics;
                (l, g, b)
            })
            .collect()
    })
}

fn interior_dominated(l: &LayerSpec) -> bool {
    let plan = build_plan(l, 16).unwrap();
    let interior = plan.row_assignment.iter().filter(|a| a.is_some_and(|id| plan.patterns[id].interior)).count();
    interior as f64 >= 0.9 * l.out_h() as f64 && l.in_c >= 16
}

fn speedup_trend() -> Outcome {
    let mut speedups: Vec<(f64, &str)> = s2_layers()
        .iter()
        .filter(|(l, ..)| l.model_role == ModelRole::Generative && interior_dominated(l))
        .map(|(l, g, b)| (b.cycles as f64 / g.cycles as f64, l.layer_id.as_str()))
        .collect();
    speedups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let outside: Vec<String> =
        speedups.iter().filter(|(s, _)| !(2.5..=4.0).contains(s)).map(|(s, id)| format!("{id} {s:.2}")).collect();
    let (lo, hi) = (speedups[0].0, speedups[speedups.len() - 1].0);
    let mut models = Vec::new();
    for name in ["3dgan.json", "dcgan.json", "magan.json"] {
        let r = run_workload(&RunSpec::new(workload(name), 7)).map_err(|e| e.to_string())?;
        models.push((r.tconv_inconsequential_fraction, r.comparison.unwrap().total.speedup, r.workload));
    }
    let by_fraction = {
        let mut m = models.clone();
        m.sort_by(|a, b| b.0.total_cmp(&a.0));
        m
    };
    let mut by_speedup = models.clone();
    by_speedup.sort_by(|a, b| b.1.total_cmp(&a.1));
    let order = by_speedup.iter().map(|m| format!("{} {:.2}x", m.2, m.1)).collect::<Vec<_>>().join(" > ");
    let ordered = by_speedup[0].2 == by_fraction[0].2 && by_speedup[2].2 == by_fraction[2].2;
    ensure(ordered, || format!("(b) ordering {order} does not follow the zero fractions"))?;
    ensure(outside.is_empty(), || {
        format!(
            "(a) {} of {} interior-dominated layers outside [2.5, 4.0] (range {lo:.2}..{hi:.2}): {}; (b) {order}",
            outside.len(),
            speedups.len(),
            outside.join(", ")
        )
    })?;
    Ok(format!("(a) {} layers, speedup {lo:.2}..{hi:.2}; (b) {order}", speedups.len()))
}

fn utilization() -> Outcome {
    let runs = s2_layers();
    let low: Vec<String> = runs
        .iter()
        .filter(|(_, g, _)| g.pe_utilization < 0.85)
        .map(|(l, g, _)| format!("{} {:.3}", l.layer_id, g.pe_utilization))
        .collect();
    let high: Vec<String> = runs
        .iter()
        .filter(|(_, _, b)| b.pe_utilization > 0.5)
        .map(|(l, _, b)| format!("{} {:.3}", l.layer_id, b.pe_utilization))
        .collect();
    let gmin = runs.iter().map(|r| r.1.pe_utilization).fold(1.0, f64::min);
    let bmax = runs.iter().map(|r| r.2.pe_utilization).fold(0.0, f64::max);
    ensure(low.is_empty(), || format!("ganax below 0.85 on {} of {} layers: {}", low.len(), runs.len(), low.join(", ")))?;
    ensure(high.is_empty(), || format!("baseline above 0.5 on {}", high.join(", ")))?;
    Ok(format!("{} layers: ganax utilization >= {gmin:.4}, baseline consequential utilization <= {bmax:.3}", runs.len()))
}

fn address_generator() -> Outcome {
    let mut wraps = 0;
    let mut stops = 0;
    let mut r = runner(1000);
    let strategy = (addrgen_ref::config(), proptest::sample::select(vec![None, Some(0.25), Some(0.5), Some(0.9)]));
    let result = r.run(&strategy, |(c, cut)| {
        let want = reference(&c);
        let mut g = AddressGenState::new(c);
        g.start(0).unwrap();
        let mut got = Vec::new();
        if let Some(f) = cut {
            let n = (want.len() as f64 * f) as usize;
            got.extend(std::iter::from_fn(|| g.tick()).take(n));
            if n < want.len() {
                g.stop();
                proptest::prop_assert_eq!(g.tick(), None);
                g.start(0).unwrap();
            }
        }
        got.extend(addrgen_ref::drain(&mut g));
        proptest::prop_assert_eq!(got, want);
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    for (c, cut) in sample(strategy, 1000) {
        wraps += usize::from(c.repeat > 1 && c.step < c.end);
        stops += usize::from(cut.is_some());
    }
    let mut g = AddressGenState::new(ganax::engines::AddressGenConfig::new(0, 0, 3, 8, 2));
    g.start(0).unwrap();
    let seq = addrgen_ref::drain(&mut g);
    ensure(seq == [0, 3, 6, 1, 4, 7], || format!("step 3, end 8, repeat 2 gave {seq:?}"))?;
    Ok(format!("1000 configs match the reference ({wraps} with wraps, {stops} with stop/resume); 0,3,6,1,4,7"))
}

fn isa_roundtrips() -> Outcome {
    let mut words = 0;
    let result = runner(1000).run(&program(), |p| {
        for &w in &p.global {
            proptest::prop_assert_eq!(decode(encode(w).unwrap()).unwrap(), w);
        }
        let text = disassemble(&p);
        let back = assemble(&text).unwrap();
        proptest::prop_assert_eq!(&back, &p);
        proptest::prop_assert_eq!(disassemble(&back), text);
        proptest::prop_assert_eq!(read_image(&write_image(&p).unwrap()).unwrap(), p);
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    for p in sample(program(), 1000) {
        words += p.global.len();
    }
    let mut layers = sample(arb_layer(32, 8), 300);
    for name in ["3dgan.json", "dcgan.json", "magan.json", "conv_only.json", "worked_example.json"] {
        layers.extend(workload(name).layers);
    }
    let cfg = ArrayConfig::default();
    let (mut max_local, mut max_page) = (0, 0);
    for l in &layers {
        let plan = build_plan(l, cfg.num_pvs).unwrap();
        for mode in [Mode::Ganax, Mode::Baseline] {
            let low = lower(&plan, l, mode, &cfg.tiling()).map_err(|e| format!("{}: {e}", l.layer_id))?;
            max_local = low.program.local_images.iter().map(Vec::len).max().unwrap_or(0).max(max_local);
            max_page = low.program.pages().map(|p| p.len()).max().unwrap_or(0).max(max_page);
        }
    }
    ensure(max_local <= LOCAL_SLOTS && max_page <= PAGE_ENTRIES, || {
        format!("footprint local {max_local}, page {max_page}")
    })?;
    Ok(format!(
        "1000 programs ({words} words) round-trip; {} lowered layers x 2 modes: local <= {max_local}, pages <= {max_page}",
        layers.len()
    ))
}

fn determinism() -> Outcome {
    let mut spec = RunSpec::new(workload("dcgan.json"), 11);
    spec.config.addr_fifo = 4;
    let report = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_workload(&spec).map(|r| r.to_json()))
    };
    let runs: Vec<String> = [1, 4, 1, 4].into_iter().map(report).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    ensure(runs.iter().all(|r| r == &runs[0]), || "reports differ between runs".into())?;
    Ok(format!("4 runs on 1 and 4 threads, {} identical bytes", runs[0].len()))
}

fn cycle_oracle() -> Outcome {
    let mut layers = Vec::new();
    for kind in [LayerKind::Conv, LayerKind::TConv] {
        for h in 2..=8 {
            for w in 2..=8 {
                for k in 3..=5 {
                    for s in 1..=4 {
                        for p in 0..k {
                            let mut l = LayerSpec::square("o", kind, h, k, s, p).with_channels(1 + (h + k) % 2, 1 + (w + s) % 3);
                            l.in_w = w;
                            if l.validate().is_ok() {
                                layers.push(l);
                            }
                        }
                    }
                }
            }
        }
    }
    let bad: Vec<String> = layers
        .par_iter()
        .flat_map_iter(|l| {
            [Mode::Ganax, Mode::Baseline].into_iter().filter_map(move |mode| {
                let cfg = ArrayConfig::default().with_mode(mode);
                let plan = build_plan(l, cfg.num_pvs).unwrap();
                let low = lower(&plan, l, mode, &cfg.tiling()).unwrap();
                let (x, w) = tensors::<Fx16>(l, 3);
                let sim = run_layer(l, &x, &w, &low, &cfg).map(|o| o.metrics.cycles);
                let want = oracle_cycles(&low.program, cfg.num_pvs, cfg.uop_fifo, cfg.addr_fifo);
                (sim.as_ref().ok() != Some(&want)).then(|| format!("{mode:?} {l:?}: sim {sim:?}, oracle {want}"))
            })
        })
        .collect();
    ensure(bad.is_empty(), || format!("{} disagreements, first: {}", bad.len(), bad[0]))?;
    Ok(format!("{} layers x 2 modes, identical cycle counts", layers.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("functional exactness", functional_exactness),
        ("worked example", worked_example),
        ("inconsequential MAC fractions", inconsequential_fractions),
        ("conv parity", conv_parity),
        ("speedup trend", speedup_trend),
        ("PE utilization", utilization),
        ("address-generator oracle", address_generator),
        ("ISA round trips and footprint", isa_roundtrips),
        ("determinism", determinism),
        ("cycle-count oracle", cycle_oracle),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail} [{:.1?}]", i + 1, t.elapsed());
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
