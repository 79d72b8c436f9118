//! Element types the simulator and the reference kernels are generic over.
//!
//! Every kernel computes products into an accumulator type and narrows back to
//! the element type exactly once per output element. For the fixed-point type
//! the accumulator uses wrapping 32-bit integer addition, which is associative,
//! so any reordering of the multiply-adds yields a bit-identical result.

use std::fmt::{Debug, Display};
use std::ops::Add;

use num_traits::{Float, Zero};
use serde::{Deserialize, Serialize};

/// Tag used in tensor dumps and reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElemKind {
    Q8_8,
    F32,
    F64,
}

impl ElemKind {
    pub fn code(self) -> u8 {
        match self {
            ElemKind::Q8_8 => 1,
            ElemKind::F32 => 2,
            ElemKind::F64 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ElemKind::Q8_8),
            2 => Some(ElemKind::F32),
            3 => Some(ElemKind::F64),
            _ => None,
        }
    }
}

pub trait Scalar:
    Copy + Debug + Display + PartialEq + PartialOrd + Zero + Send + Sync + 'static
{
    type Acc: Copy + Debug + PartialEq + PartialOrd + Zero + Send + Sync + 'static;

    const KIND: ElemKind;
    /// Bytes per element in little-endian dumps.
    const BYTES: usize;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    fn mul_acc(acc: Self::Acc, a: Self, b: Self) -> Self::Acc;
    fn acc_add(a: Self::Acc, b: Self::Acc) -> Self::Acc;
    /// Narrow an accumulator to an element (saturating for fixed point).
    fn from_acc(acc: Self::Acc) -> Self;
    fn to_acc(self) -> Self::Acc;
    fn acc_to_f64(acc: Self::Acc) -> f64;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    fn relu(self) -> Self {
        if self > Self::zero() {
            self
        } else {
            Self::zero()
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

/// Signed Q8.8 fixed point stored in 16 bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fx16(pub i16);

impl Fx16 {
    pub const FRAC_BITS: u32 = 8;

    pub fn raw(self) -> i16 {
        self.0
    }
}

impl Add for Fx16 {
    type Output = Fx16;
    fn add(self, rhs: Fx16) -> Fx16 {
        Fx16(self.0.saturating_add(rhs.0))
    }
}

impl Zero for Fx16 {
    fn zero() -> Self {
        Fx16(0)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0
    }
}

impl Display for Fx16 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl Scalar for Fx16 {
    // Q16.16 products summed with wrapping adds.
    type Acc = i32;

    const KIND: ElemKind = ElemKind::Q8_8;
    const BYTES: usize = 2;

    fn from_f64(v: f64) -> Self {
        let scaled = (v * f64::from(1u32 << Self::FRAC_BITS)).round();
        Fx16(scaled.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16)
    }

    fn to_f64(self) -> f64 {
        f64::from(self.0) / f64::from(1u32 << Self::FRAC_BITS)
    }

    #[inline]
    fn mul_acc(acc: i32, a: Self, b: Self) -> i32 {
        acc.wrapping_add(i32::from(a.0) * i32::from(b.0))
    }

    #[inline]
    fn acc_add(a: i32, b: i32) -> i32 {
        a.wrapping_add(b)
    }

    #[inline]
    fn from_acc(acc: i32) -> Self {
        let shifted = acc >> Self::FRAC_BITS;
        Fx16(shifted.clamp(i32::from(i16::MIN), i32::from(i16::MAX)) as i16)
    }

    #[inline]
    fn to_acc(self) -> i32 {
        i32::from(self.0) << Self::FRAC_BITS
    }

    fn acc_to_f64(acc: i32) -> f64 {
        f64::from(acc) / f64::from(1u32 << (2 * Self::FRAC_BITS))
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        Fx16(i16::from_le_bytes([bytes[0], bytes[1]]))
    }
}

macro_rules! float_scalar {
    ($t:ty, $kind:expr, $bytes:expr) => {
        impl Scalar for $t {
            type Acc = $t;

            const KIND: ElemKind = $kind;
            const BYTES: usize = $bytes;

            fn from_f64(v: f64) -> Self {
                v as $t
            }

            fn to_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn mul_acc(acc: $t, a: $t, b: $t) -> $t {
                Float::mul_add(a, b, acc)
            }

            #[inline]
            fn acc_add(a: $t, b: $t) -> $t {
                a + b
            }

            #[inline]
            fn from_acc(acc: $t) -> Self {
                acc
            }

            #[inline]
            fn to_acc(self) -> $t {
                self
            }

            fn acc_to_f64(acc: $t) -> f64 {
                acc as f64
            }

            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            fn read_le(bytes: &[u8]) -> Self {
                let mut buf = [0u8; $bytes];
                buf.copy_from_slice(&bytes[..$bytes]);
                <$t>::from_le_bytes(buf)
            }
        }
    };
}

float_scalar!(f32, ElemKind::F32, 4);
float_scalar!(f64, ElemKind::F64, 8);
