use std::fmt;

use serde::{Deserialize, Serialize};

/// Scalar types of the loop language. Integers are fixed-width two's complement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ty {
    I8,
    I16,
    I32,
    I64,
    U8,
    U16,
    U32,
    U64,
    Bool,
}

impl Ty {
    pub const ALL: [Ty; 9] = [
        Ty::I8,
        Ty::I16,
        Ty::I32,
        Ty::I64,
        Ty::U8,
        Ty::U16,
        Ty::U32,
        Ty::U64,
        Ty::Bool,
    ];

    pub fn from_keyword(s: &str) -> Option<Ty> {
        Some(match s {
            "i8" => Ty::I8,
            "i16" => Ty::I16,
            "i32" => Ty::I32,
            "i64" => Ty::I64,
            "u8" => Ty::U8,
            "u16" => Ty::U16,
            "u32" => Ty::U32,
            "u64" => Ty::U64,
            "bool" => Ty::Bool,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Ty::I8 => "i8",
            Ty::I16 => "i16",
            Ty::I32 => "i32",
            Ty::I64 => "i64",
            Ty::U8 => "u8",
            Ty::U16 => "u16",
            Ty::U32 => "u32",
            Ty::U64 => "u64",
            Ty::Bool => "bool",
        }
    }

    /// Bit width; `bool` counts as one bit.
    pub fn width(self) -> u32 {
        match self {
            Ty::I8 | Ty::U8 => 8,
            Ty::I16 | Ty::U16 => 16,
            Ty::I32 | Ty::U32 => 32,
            Ty::I64 | Ty::U64 => 64,
            Ty::Bool => 1,
        }
    }

    pub fn is_signed(self) -> bool {
        matches!(self, Ty::I8 | Ty::I16 | Ty::I32 | Ty::I64)
    }

    pub fn is_int(self) -> bool {
        self != Ty::Bool
    }

    pub fn min(self) -> i128 {
        if self.is_signed() {
            -(1i128 << (self.width() - 1))
        } else {
            0
        }
    }

    pub fn max(self) -> i128 {
        if self.is_signed() {
            (1i128 << (self.width() - 1)) - 1
        } else {
            (1i128 << self.width()) - 1
        }
    }

    /// Size of the value space, `2^width`.
    pub fn modulus(self) -> i128 {
        1i128 << self.width()
    }

    /// Reduce an arbitrary integer into this type's range (wraparound).
    /// `bool` keeps only "zero or not".
    pub fn wrap(self, v: i128) -> i128 {
        if self == Ty::Bool {
            return (v != 0) as i128;
        }
        let m = self.modulus();
        let r = v.rem_euclid(m);
        if self.is_signed() && r > self.max() {
            r - m
        } else {
            r
        }
    }

    /// Usual arithmetic conversion for two integer operand types: the wider
    /// type wins, and at equal width unsigned wins.
    pub fn join(a: Ty, b: Ty) -> Ty {
        if a.width() != b.width() {
            if a.width() > b.width() {
                a
            } else {
                b
            }
        } else if !a.is_signed() {
            a
        } else {
            b
        }
    }
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_matches_native_casts() {
        for v in [-300i128, -129, -128, -1, 0, 1, 127, 128, 255, 256, 70000] {
            assert_eq!(Ty::I8.wrap(v), v as i8 as i128);
            assert_eq!(Ty::U8.wrap(v), v as u8 as i128);
            assert_eq!(Ty::I16.wrap(v), v as i16 as i128);
            assert_eq!(Ty::U16.wrap(v), v as u16 as i128);
            assert_eq!(Ty::U64.wrap(v), v as u64 as i128);
            assert_eq!(Ty::I64.wrap(v), v as i64 as i128);
        }
    }

    #[test]
    fn join_rules() {
        assert_eq!(Ty::join(Ty::I32, Ty::U8), Ty::I32);
        assert_eq!(Ty::join(Ty::I32, Ty::U32), Ty::U32);
        assert_eq!(Ty::join(Ty::I64, Ty::I64), Ty::I64);
    }
}
