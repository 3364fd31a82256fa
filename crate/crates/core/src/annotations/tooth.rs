//! Tooth identity and the conversions between numbering systems.
//!
//! A tooth is identified by its quadrant (1..=4) and its position inside the
//! quadrant (1..=8, central incisor to third molar). Three other encodings are
//! derived from that pair:
//!
//! * the global enumeration id, `(quadrant - 1) * 8 + position`, in 1..=32;
//! * the two-digit FDI string, e.g. `"48"` for the lower-right third molar;
//! * a zero-based FDI string, digits shifted down by one, e.g. `"37"` for
//!   the same tooth.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether ids at an I/O boundary start at 0 or at 1.
///
/// Everything inside the crate is 1-based; this only matters when reading or
/// writing documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexBase {
    ZeroBased,
    #[default]
    OneBased,
}

impl IndexBase {
    /// Offset subtracted from a 1-based id when writing.
    pub fn offset(self) -> u32 {
        match self {
            IndexBase::ZeroBased => 1,
            IndexBase::OneBased => 0,
        }
    }

    /// Converts an external id into the internal 1-based form.
    pub fn to_internal(self, raw: i64) -> i64 {
        raw + i64::from(self.offset())
    }

    /// Converts an internal 1-based id into the external form.
    pub fn to_external(self, id: u32) -> u32 {
        id - self.offset()
    }
}

impl FromStr for IndexBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_based" | "zero-based" | "0" => Ok(IndexBase::ZeroBased),
            "one_based" | "one-based" | "1" => Ok(IndexBase::OneBased),
            other => Err(Error::Config(format!("unknown index base `{other}`"))),
        }
    }
}

/// One tooth, as quadrant plus position within the quadrant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ToothId {
    quadrant: u8,
    in_quadrant: u8,
}

impl ToothId {
    pub fn new(quadrant: u8, in_quadrant: u8) -> Result<Self> {
        if !(1..=4).contains(&quadrant) {
            return Err(Error::Range(format!("quadrant {quadrant} outside 1..=4")));
        }
        if !(1..=8).contains(&in_quadrant) {
            return Err(Error::Range(format!(
                "in-quadrant position {in_quadrant} outside 1..=8"
            )));
        }
        Ok(ToothId {
            quadrant,
            in_quadrant,
        })
    }

    pub fn quadrant(self) -> u8 {
        self.quadrant
    }

    pub fn in_quadrant(self) -> u8 {
        self.in_quadrant
    }

    /// Global enumeration id in 1..=32.
    pub fn to_global(self) -> u8 {
        (self.quadrant - 1) * 8 + self.in_quadrant
    }

    pub fn from_global(global: u8) -> Result<Self> {
        if !(1..=32).contains(&global) {
            return Err(Error::Range(format!(
                "global tooth id {global} outside 1..=32"
            )));
        }
        let zero = global - 1;
        Ok(ToothId {
            quadrant: zero / 8 + 1,
            in_quadrant: zero % 8 + 1,
        })
    }

    /// Two-digit FDI code under the given index base.
    pub fn to_fdi(self, base: IndexBase) -> String {
        let off = base.offset() as u8;
        format!("{}{}", self.quadrant - off, self.in_quadrant - off)
    }

    /// Inverse of [`ToothId::to_fdi`].
    pub fn parse_fdi(code: &str, base: IndexBase) -> Result<Self> {
        let bytes = code.as_bytes();
        if bytes.len() != 2 || !bytes.iter().all(u8::is_ascii_digit) {
            return Err(Error::Range(format!(
                "`{code}` is not a two-digit FDI code"
            )));
        }
        let off = base.offset() as u8;
        ToothId::new(bytes[0] - b'0' + off, bytes[1] - b'0' + off)
            .map_err(|e| Error::Range(format!("FDI code `{code}`: {e}")))
    }

    /// Every tooth in global id order.
    pub fn all() -> impl Iterator<Item = ToothId> {
        (1..=32).map(|g| ToothId::from_global(g).expect("1..=32 is valid"))
    }
}

impl fmt::Display for ToothId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_fdi(IndexBase::OneBased))
    }
}
