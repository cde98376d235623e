use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::hash::{scramble_index, unscramble_index};

const PREFIX: &str = "user";
const DIGITS: usize = 20;

/// Ordinal of a record, rendered as `user` followed by the zero-padded decimal
/// of a bijective hash of the ordinal.
///
/// Ordering follows the rendered string, which is the order drivers scan in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RecordKey(u64);

impl RecordKey {
    pub fn new(index: u64) -> Self {
        RecordKey(index)
    }

    pub fn index(self) -> u64 {
        self.0
    }

    fn hashed(self) -> u64 {
        scramble_index(self.0)
    }

    pub fn render(self) -> String {
        format!("{PREFIX}{:0width$}", self.hashed(), width = DIGITS)
    }
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{PREFIX}{:0width$}", self.hashed(), width = DIGITS)
    }
}

impl Ord for RecordKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.hashed().cmp(&other.hashed())
    }
}

impl PartialOrd for RecordKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FromStr for RecordKey {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || crate::Error::InvalidArgument(format!("not a record key: {s:?}"));
        let digits = s.strip_prefix(PREFIX).ok_or_else(bad)?;
        if digits.len() != DIGITS || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let hashed: u64 = digits.parse().map_err(|_| bad())?;
        Ok(RecordKey(unscramble_index(hashed)))
    }
}
