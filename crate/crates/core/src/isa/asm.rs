//! Textual form: one μop per line, `%`-prefixed operands, `#` comments.
//!
//! ```text
//! .local %pv0 mac add repeat
//! access.cfg %all, %ag1, %step, 2
//! access.start %pv3, %ag0
//! mimd.ld %all, %repeat, 16
//! mac
//! mimd.exe 0,0,0,0,0,0,0,0,1,1,1,1,1,1,1,1
//! ```

use std::fmt::Write as _;

use super::{AccessOp, AccessUop, AddrReg, ExecOp, GlobalUop, IsaError, Target, UopProgram, LOCAL_SLOTS, NUM_PVS};

struct Line<'a> {
    no: usize,
    text: &'a str,
}

impl<'a> Line<'a> {
    fn err(&self, piece: &str, message: impl Into<String>) -> IsaError {
        // `piece` is always a subslice of `text`.
        let col = piece.as_ptr() as usize - self.text.as_ptr() as usize + 1;
        IsaError::Syntax {
            line: self.no,
            col,
            message: message.into(),
        }
    }
}

fn exec_op(word: &str) -> Option<ExecOp> {
    ExecOp::ALL.into_iter().find(|op| op.mnemonic() == word)
}

fn parse_int(line: &Line, s: &str, max: u64) -> Result<u64, IsaError> {
    let v = if let Some(hex) = s.strip_prefix("0x") {
        u64::from_str_radix(hex, 16)
    } else {
        s.parse::<u64>()
    }
    .map_err(|_| line.err(s, format!("expected an integer, found `{s}`")))?;
    if v > max {
        return Err(line.err(s, format!("immediate {v} exceeds {max}")));
    }
    Ok(v)
}

fn parse_target(line: &Line, s: &str) -> Result<Target, IsaError> {
    if s == "%all" {
        return Ok(Target::All);
    }
    let n = s.strip_prefix("%pv").ok_or_else(|| line.err(s, format!("expected %pvN or %all, found `{s}`")))?;
    let idx = parse_int(line, n, u64::MAX).map_err(|_| line.err(s, format!("bad PV operand `{s}`")))?;
    if idx >= NUM_PVS as u64 {
        return Err(line.err(s, format!("PV index {idx} out of range")));
    }
    Ok(Target::Pv(idx as u8))
}

fn parse_addrgen(line: &Line, s: &str) -> Result<u8, IsaError> {
    let n = s.strip_prefix("%ag").ok_or_else(|| line.err(s, format!("expected %agN, found `{s}`")))?;
    Ok(parse_int(line, n, 7)? as u8)
}

fn parse_reg(line: &Line, s: &str) -> Result<AddrReg, IsaError> {
    AddrReg::ALL
        .into_iter()
        .find(|r| s.strip_prefix('%') == Some(r.name()))
        .ok_or_else(|| line.err(s, format!("unknown register `{s}`")))
}

fn expect_operands(line: &Line, at: &str, ops: &[&str], n: usize) -> Result<(), IsaError> {
    if ops.len() != n {
        return Err(line.err(at, format!("expected {n} operands, found {}", ops.len())));
    }
    Ok(())
}

pub fn assemble(text: &str) -> Result<UopProgram, IsaError> {
    let mut global = Vec::new();
    let mut local_images = vec![Vec::new(); NUM_PVS];
    let mut seen_local = [false; NUM_PVS];
    for (i, raw) in text.lines().enumerate() {
        let line = Line { no: i + 1, text: raw };
        let code = raw.split('#').next().unwrap_or("");
        let body = code.trim();
        if body.is_empty() {
            continue;
        }
        let (mnemonic, rest) = match body.find(char::is_whitespace) {
            Some(pos) => (&body[..pos], body[pos..].trim()),
            None => (body, ""),
        };
        if mnemonic == ".local" {
            let mut words = rest.split_whitespace();
            let t = words.next().ok_or_else(|| line.err(mnemonic, ".local needs a PV operand"))?;
            let pv = match parse_target(&line, t)? {
                Target::Pv(p) => usize::from(p),
                Target::All => return Err(line.err(t, ".local needs a single PV")),
            };
            if seen_local[pv] {
                return Err(line.err(t, format!("duplicate .local for pv{pv}")));
            }
            seen_local[pv] = true;
            for w in words {
                let op = exec_op(w).ok_or_else(|| line.err(w, format!("unknown exec μop `{w}`")))?;
                local_images[pv].push(op);
            }
            if local_images[pv].len() > LOCAL_SLOTS {
                return Err(line.err(t, format!("local image exceeds {LOCAL_SLOTS} entries")));
            }
            continue;
        }
        let ops: Vec<&str> = if rest.is_empty() { Vec::new() } else { rest.split(',').map(str::trim).collect() };
        let uop = if let Some(op) = exec_op(mnemonic) {
            expect_operands(&line, mnemonic, &ops, 0)?;
            GlobalUop::Exec(op)
        } else {
            match mnemonic {
                "access.cfg" => {
                    expect_operands(&line, mnemonic, &ops, 4)?;
                    GlobalUop::Access(AccessUop {
                        target: parse_target(&line, ops[0])?,
                        addrgen: parse_addrgen(&line, ops[1])?,
                        op: AccessOp::Cfg {
                            reg: parse_reg(&line, ops[2])?,
                            imm: parse_int(&line, ops[3], u64::from(u16::MAX))? as u16,
                        },
                    })
                }
                "access.start" | "access.stop" => {
                    expect_operands(&line, mnemonic, &ops, 2)?;
                    GlobalUop::Access(AccessUop {
                        target: parse_target(&line, ops[0])?,
                        addrgen: parse_addrgen(&line, ops[1])?,
                        op: if mnemonic == "access.start" { AccessOp::Start } else { AccessOp::Stop },
                    })
                }
                "mimd.ld" => {
                    expect_operands(&line, mnemonic, &ops, 3)?;
                    if ops[1] != "%repeat" {
                        return Err(line.err(ops[1], "mimd.ld can only load %repeat"));
                    }
                    GlobalUop::MimdLd {
                        target: parse_target(&line, ops[0])?,
                        imm: parse_int(&line, ops[2], u64::from(u16::MAX))? as u16,
                    }
                }
                "mimd.exe" => {
                    expect_operands(&line, mnemonic, &ops, NUM_PVS)?;
                    let mut idx = [0u8; NUM_PVS];
                    for (slot, s) in idx.iter_mut().zip(&ops) {
                        let v = parse_int(&line, s, u64::MAX)?;
                        if v >= LOCAL_SLOTS as u64 {
                            return Err(line.err(s, format!("local index {v} out of range")));
                        }
                        *slot = v as u8;
                    }
                    GlobalUop::MimdExe(idx)
                }
                _ => return Err(line.err(mnemonic, format!("unknown mnemonic `{mnemonic}`"))),
            }
        };
        global.push(uop);
    }
    Ok(UopProgram { global, local_images })
}

pub fn disassemble(program: &UopProgram) -> String {
    let mut s = String::new();
    for (pv, img) in program.local_images.iter().enumerate() {
        if img.is_empty() {
            continue;
        }
        let ops: Vec<&str> = img.iter().map(|o| o.mnemonic()).collect();
        let _ = writeln!(s, ".local %pv{pv} {}", ops.join(" "));
    }
    for uop in &program.global {
        let _ = match *uop {
            GlobalUop::Exec(op) => writeln!(s, "{}", op.mnemonic()),
            GlobalUop::Access(AccessUop { op, target, addrgen }) => match op {
                AccessOp::Cfg { reg, imm } => writeln!(s, "access.cfg {target}, %ag{addrgen}, %{}, {imm}", reg.name()),
                AccessOp::Start => writeln!(s, "access.start {target}, %ag{addrgen}"),
                AccessOp::Stop => writeln!(s, "access.stop {target}, %ag{addrgen}"),
            },
            GlobalUop::MimdLd { target, imm } => writeln!(s, "mimd.ld {target}, %repeat, {imm}"),
            GlobalUop::MimdExe(idx) => {
                let list: Vec<String> = idx.iter().map(u8::to_string).collect();
                writeln!(s, "mimd.exe {}", list.join(","))
            }
        };
    }
    s
}
