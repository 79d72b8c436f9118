//! Event-list scheduling oracle for total cycle counts.
//!
//! Every event (word issue, FIFO entry removal, address emission, operation
//! execution) happens at the earliest cycle allowed by its predecessors, so
//! the schedule is the least solution of a system of `t >= u + c` constraints.
//! The constraints are built from the program alone and solved by iterating
//! from all-zero until nothing moves. PEs of one PV see identical streams, so
//! one timeline per PV suffices.

use ganax::engines::AddressGenConfig;
use ganax::isa::{AccessOp, ExecOp, GlobalUop, UopProgram, AG_INPUT, AG_PSUM, AG_WEIGHT, NUM_ADDRGENS};

#[derive(Clone, Debug)]
enum Kind {
    /// Retires in the control phase; `gate` waits for that generator's current run.
    Ctrl { gate: Option<usize>, starts: Option<(usize, usize)> },
    /// Popped in the execute phase; `first` indexes its first execution.
    Exec { first: usize, times: usize },
}

#[derive(Clone, Debug)]
struct Entry {
    word: usize,
    kind: Kind,
}

#[derive(Default)]
struct Timeline {
    entries: Vec<Entry>,
    /// Per execution: generators whose next address it consumes.
    exec_needs: Vec<Vec<usize>>,
    /// Per generator: (starting entry, length) of each run.
    runs: [Vec<(usize, usize)>; NUM_ADDRGENS],
    /// Per generator: execution consuming its e-th address.
    consumer: [Vec<usize>; NUM_ADDRGENS],
    /// Per generator: run of its e-th address.
    run_of: [Vec<usize>; NUM_ADDRGENS],
}

fn run_length(c: &AddressGenConfig) -> usize {
    let (addr, step, end) = (usize::from(c.addr), usize::from(c.step), usize::from(c.end));
    (0..).take_while(|i| (addr + i * step) / end < usize::from(c.repeat)).count()
}

fn needs(op: ExecOp) -> Vec<usize> {
    match op {
        ExecOp::Mac | ExecOp::Mul => vec![AG_INPUT, AG_WEIGHT, AG_PSUM],
        ExecOp::Pool => vec![AG_INPUT, AG_PSUM],
        ExecOp::Act => vec![AG_PSUM],
        ExecOp::Add | ExecOp::Repeat => vec![],
    }
}

fn build(prog: &UopProgram, pv: usize) -> Timeline {
    let mut tl = Timeline::default();
    let mut cfg = [AddressGenConfig::default(); NUM_ADDRGENS];
    let (mut repeat_reg, mut armed) = (0usize, false);
    for (w, word) in prog.global.iter().enumerate() {
        let op = match *word {
            GlobalUop::Exec(op) => Some(op),
            GlobalUop::MimdExe(idx) => Some(prog.local(pv)[usize::from(idx[pv])]),
            GlobalUop::MimdLd { target, imm } => {
                if target.includes(pv) {
                    repeat_reg = usize::from(imm);
                    tl.entries.push(Entry { word: w, kind: Kind::Ctrl { gate: None, starts: None } });
                }
                None
            }
            GlobalUop::Access(a) => {
                if a.target.includes(pv) {
                    let ag = usize::from(a.addrgen);
                    let starts = match a.op {
                        AccessOp::Cfg { reg, imm } => {
                            cfg[ag].set(reg, imm);
                            None
                        }
                        AccessOp::Start => {
                            let len = run_length(&cfg[ag]);
                            let r = tl.runs[ag].len();
                            tl.runs[ag].push((tl.entries.len(), len));
                            tl.run_of[ag].extend(std::iter::repeat_n(r, len));
                            Some((ag, r))
                        }
                        AccessOp::Stop => panic!("oracle does not model stop"),
                    };
                    tl.entries.push(Entry { word: w, kind: Kind::Ctrl { gate: Some(ag), starts } });
                }
                None
            }
        };
        match op {
            Some(ExecOp::Repeat) => {
                armed = true;
                tl.entries.push(Entry { word: w, kind: Kind::Ctrl { gate: None, starts: None } });
            }
            Some(op) => {
                let times = if std::mem::take(&mut armed) { repeat_reg } else { 1 };
                assert!(times > 0, "zero-length repeat");
                let first = tl.exec_needs.len();
                for _ in 0..times {
                    let x = tl.exec_needs.len();
                    let n = needs(op);
                    for &ag in &n {
                        tl.consumer[ag].push(x);
                    }
                    tl.exec_needs.push(n);
                }
                tl.entries.push(Entry { word: w, kind: Kind::Exec { first, times } });
            }
            None => {}
        }
    }
    for ag in 0..NUM_ADDRGENS {
        assert_eq!(tl.consumer[ag].len(), tl.run_of[ag].len(), "generator {ag}: addresses not consumed exactly");
    }
    tl
}

struct Times {
    removed: Vec<u64>,
    exec: Vec<u64>,
    emit: [Vec<u64>; NUM_ADDRGENS],
    start: [Vec<u64>; NUM_ADDRGENS],
}

/// Total cycles the array needs for `prog`.
pub fn oracle_cycles(prog: &UopProgram, num_pvs: usize, uop_fifo: usize, addr_fifo: usize) -> u64 {
    if prog.global.is_empty() {
        return 0;
    }
    let tls: Vec<Timeline> = (0..num_pvs).map(|pv| build(prog, pv)).collect();
    let mut times: Vec<Times> = tls
        .iter()
        .map(|tl| Times {
            removed: vec![0; tl.entries.len()],
            exec: vec![0; tl.exec_needs.len()],
            emit: std::array::from_fn(|ag| vec![0; tl.run_of[ag].len()]),
            start: std::array::from_fn(|ag| vec![0; tl.runs[ag].len()]),
        })
        .collect();
    // Entries of each word per PV, for the issue constraint.
    let mut word_entries: Vec<Vec<(usize, usize)>> = vec![Vec::new(); prog.global.len()];
    for (pv, tl) in tls.iter().enumerate() {
        for (j, e) in tl.entries.iter().enumerate() {
            word_entries[e.word].push((pv, j));
        }
    }
    let mut issue = vec![0u64; prog.global.len()];
    for sweep in 0.. {
        assert!(sweep < 1_000_000, "oracle did not converge");
        let mut changed = false;
        let mut bump = |slot: &mut u64, v: u64| {
            if v > *slot {
                *slot = v;
                changed = true;
            }
        };
        for w in 0..issue.len() {
            let mut t = if w == 0 { 0 } else { issue[w - 1] + 1 };
            for &(pv, j) in &word_entries[w] {
                if j >= uop_fifo {
                    t = t.max(times[pv].removed[j - uop_fifo] + 1);
                }
            }
            bump(&mut issue[w], t);
        }
        for (tl, tm) in tls.iter().zip(times.iter_mut()) {
            // Emission e of `ag`: after its run starts, after emission e-1,
            // and once the FIFO slot freed by consumption e-cap is available.
            let emit_time = |tm: &Times, ag: usize, e: usize| {
                let mut t = tm.start[ag][tl.run_of[ag][e]];
                if e > 0 {
                    t = t.max(tm.emit[ag][e - 1] + 1);
                }
                if e >= addr_fifo {
                    t = t.max(tm.exec[tl.consumer[ag][e - addr_fifo]] + 1);
                }
                t
            };
            for ag in 0..NUM_ADDRGENS {
                for e in 0..tl.run_of[ag].len() {
                    let t = emit_time(tm, ag, e);
                    bump(&mut tm.emit[ag][e], t);
                }
            }
            let mut consumed = [0usize; NUM_ADDRGENS];
            let mut run_idx = [0usize; NUM_ADDRGENS];
            let mut last_exec: Option<u64> = None;
            for (j, e) in tl.entries.iter().enumerate() {
                let mut t = issue[e.word];
                if j > 0 {
                    let prev_exec = matches!(tl.entries[j - 1].kind, Kind::Exec { .. });
                    t = t.max(tm.removed[j - 1] + u64::from(prev_exec));
                }
                match &e.kind {
                    Kind::Ctrl { gate, starts } => {
                        if let Some(ag) = *gate {
                            // The generator's previous run must have emitted its last address.
                            let started = run_idx[ag];
                            if started > 0 {
                                let done: usize = tl.runs[ag][..started].iter().map(|r| r.1).sum();
                                if tl.runs[ag][started - 1].1 > 0 {
                                    t = t.max(tm.emit[ag][done - 1] + 1);
                                }
                            }
                        }
                        bump(&mut tm.removed[j], t);
                        if let Some((ag, r)) = *starts {
                            bump(&mut tm.start[ag][r], tm.removed[j]);
                            run_idx[ag] = r + 1;
                        }
                    }
                    Kind::Exec { first, times } => {
                        if let Some(f) = last_exec {
                            t = t.max(f + 1);
                        }
                        bump(&mut tm.removed[j], t);
                        let mut prev = tm.removed[j];
                        for x in *first..*first + *times {
                            let mut tx = if x == *first { prev } else { prev + 1 };
                            for &ag in &tl.exec_needs[x] {
                                tx = tx.max(tm.emit[ag][consumed[ag]]);
                                consumed[ag] += 1;
                            }
                            bump(&mut tm.exec[x], tx);
                            prev = tm.exec[x];
                        }
                        last_exec = Some(prev);
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let last = times
        .iter()
        .flat_map(|tm| {
            tm.removed.iter().chain(&tm.exec).chain(tm.emit.iter().flatten())
        })
        .chain(&issue)
        .copied()
        .max()
        .unwrap_or(0);
    last + 1
}
