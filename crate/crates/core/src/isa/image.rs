//! Binary program image.
//!
//! Header: magic, version (u16), reserved (u16), global word count (u32).
//! Global pages follow, each 32 entries of 9 bytes: a mode byte (0, 1, or
//! 0xFF for an unused slot in the final page) and the 64-bit payload, little
//! endian. Then 16 local tables of 16 one-byte slots, 0xFF marking empty.

use super::{decode, encode, ExecOp, IsaError, UopProgram, LOCAL_SLOTS, NUM_PVS, PAGE_ENTRIES};

pub const IMAGE_MAGIC: &[u8; 4] = b"GNXU";
const VERSION: u16 = 1;
const HEADER: usize = 12;
const ENTRY: usize = 9;
const EMPTY: u8 = 0xFF;

pub fn write_image(program: &UopProgram) -> Result<Vec<u8>, IsaError> {
    program.validate()?;
    let pages = program.global.len().div_ceil(PAGE_ENTRIES);
    let mut out = Vec::with_capacity(HEADER + pages * PAGE_ENTRIES * ENTRY + NUM_PVS * LOCAL_SLOTS);
    out.extend_from_slice(IMAGE_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(program.global.len() as u32).to_le_bytes());
    for i in 0..pages * PAGE_ENTRIES {
        match program.global.get(i) {
            Some(&uop) => {
                let w = encode(uop)?;
                out.push((w >> 64) as u8);
                out.extend_from_slice(&(w as u64).to_le_bytes());
            }
            None => {
                out.push(EMPTY);
                out.extend_from_slice(&[0; 8]);
            }
        }
    }
    for pv in 0..NUM_PVS {
        let img = program.local(pv);
        for slot in 0..LOCAL_SLOTS {
            out.push(img.get(slot).map_or(EMPTY, |op| op.code()));
        }
    }
    Ok(out)
}

pub fn read_image(bytes: &[u8]) -> Result<UopProgram, IsaError> {
    let bad = |offset: usize, message: &str| IsaError::Image {
        offset,
        message: message.to_string(),
    };
    if bytes.len() < HEADER || &bytes[..4] != IMAGE_MAGIC {
        return Err(bad(0, "missing program magic"));
    }
    if u16::from_le_bytes([bytes[4], bytes[5]]) != VERSION {
        return Err(bad(4, "unsupported image version"));
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(bad(6, "reserved header bytes set"));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let pages = count.div_ceil(PAGE_ENTRIES);
    let expected = HEADER + pages * PAGE_ENTRIES * ENTRY + NUM_PVS * LOCAL_SLOTS;
    if bytes.len() != expected {
        return Err(bad(bytes.len().min(expected), "image length does not match the word count"));
    }
    let mut global = Vec::with_capacity(count);
    for i in 0..pages * PAGE_ENTRIES {
        let at = HEADER + i * ENTRY;
        let mode = bytes[at];
        let payload = u64::from_le_bytes(bytes[at + 1..at + ENTRY].try_into().unwrap());
        if i >= count {
            if mode != EMPTY || payload != 0 {
                return Err(bad(at, "padding slot is not empty"));
            }
            continue;
        }
        if mode > 1 {
            return Err(bad(at, "invalid mode byte"));
        }
        let word = (u128::from(mode) << 64) | u128::from(payload);
        global.push(decode(word).map_err(|e| bad(at, &e.to_string()))?);
    }
    let mut local_images = Vec::with_capacity(NUM_PVS);
    let base = HEADER + pages * PAGE_ENTRIES * ENTRY;
    for pv in 0..NUM_PVS {
        let mut img = Vec::new();
        let mut ended = false;
        for slot in 0..LOCAL_SLOTS {
            let at = base + pv * LOCAL_SLOTS + slot;
            match bytes[at] {
                EMPTY => ended = true,
                _ if ended => return Err(bad(at, "local μop after an empty slot")),
                code => img.push(ExecOp::from_code(code).ok_or_else(|| bad(at, "reserved local opcode"))?),
            }
        }
        local_images.push(img);
    }
    let program = UopProgram { global, local_images };
    program.validate().map_err(|e| bad(base, &e.to_string()))?;
    Ok(program)
}
