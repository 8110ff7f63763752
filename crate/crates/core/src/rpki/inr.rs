//! Internet number resources: IP prefixes and AS number ranges.

use std::fmt;
use std::net::{Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InrError {
    #[error("cannot parse prefix {0:?}")]
    Parse(String),
    #[error("prefix {0} has host bits set")]
    HostBits(String),
    #[error("prefix length {len} too long for the address family")]
    Length { len: u8 },
    #[error("AS range {lo}-{hi} is inverted")]
    Range { lo: u32, hi: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IpPrefix {
    V4 { addr: u32, len: u8 },
    V6 { addr: u128, len: u8 },
}

impl IpPrefix {
    pub fn v4(addr: Ipv4Addr, len: u8) -> Result<Self, InrError> {
        if len > 32 {
            return Err(InrError::Length { len });
        }
        let p = IpPrefix::V4 {
            addr: u32::from(addr),
            len,
        };
        p.check_host_bits()
    }

    pub fn v6(addr: Ipv6Addr, len: u8) -> Result<Self, InrError> {
        if len > 128 {
            return Err(InrError::Length { len });
        }
        let p = IpPrefix::V6 {
            addr: u128::from(addr),
            len,
        };
        p.check_host_bits()
    }

    fn check_host_bits(self) -> Result<Self, InrError> {
        let (lo, _) = self.bounds();
        if lo != self.addr_bits() {
            return Err(InrError::HostBits(self.to_string()));
        }
        Ok(self)
    }

    fn addr_bits(&self) -> u128 {
        match *self {
            IpPrefix::V4 { addr, .. } => u128::from(addr),
            IpPrefix::V6 { addr, .. } => addr,
        }
    }

    pub fn prefix_len(&self) -> u8 {
        match *self {
            IpPrefix::V4 { len, .. } | IpPrefix::V6 { len, .. } => len,
        }
    }

    pub fn is_v4(&self) -> bool {
        matches!(self, IpPrefix::V4 { .. })
    }

    /// First and last address covered.
    pub fn bounds(&self) -> (u128, u128) {
        let width: u32 = if self.is_v4() { 32 } else { 128 };
        let host = width - u32::from(self.prefix_len());
        let host_mask = if host == 128 { u128::MAX } else { (1u128 << host) - 1 };
        let lo = self.addr_bits() & !host_mask;
        (lo, lo | host_mask)
    }
}

impl fmt::Display for IpPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            IpPrefix::V4 { addr, len } => write!(f, "{}/{}", Ipv4Addr::from(addr), len),
            IpPrefix::V6 { addr, len } => write!(f, "{}/{}", Ipv6Addr::from(addr), len),
        }
    }
}

impl FromStr for IpPrefix {
    type Err = InrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InrError::Parse(s.to_owned());
        let (addr, len) = s.split_once('/').ok_or_else(bad)?;
        let len: u8 = len.parse().map_err(|_| bad())?;
        if let Ok(a) = addr.parse::<Ipv4Addr>() {
            IpPrefix::v4(a, len)
        } else if let Ok(a) = addr.parse::<Ipv6Addr>() {
            IpPrefix::v6(a, len)
        } else {
            Err(bad())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AsRange {
    pub lo: u32,
    pub hi: u32,
}

impl AsRange {
    pub fn new(lo: u32, hi: u32) -> Result<Self, InrError> {
        if lo > hi {
            return Err(InrError::Range { lo, hi });
        }
        Ok(AsRange { lo, hi })
    }

    pub fn single(asn: u32) -> Self {
        AsRange { lo: asn, hi: asn }
    }
}

impl FromStr for AsRange {
    type Err = InrError;

    /// `64500` or `64500-64511`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InrError::Parse(s.to_owned());
        let s = s.trim_start_matches("AS");
        match s.split_once('-') {
            Some((lo, hi)) => AsRange::new(lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?),
            None => Ok(AsRange::single(s.parse().map_err(|_| bad())?)),
        }
    }
}

/// A canonical resource set: prefixes sorted and deduplicated, AS ranges
/// sorted with overlapping or adjacent ranges merged.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct InrSet {
    prefixes: Vec<IpPrefix>,
    as_ranges: Vec<AsRange>,
}

fn merge(mut v: Vec<(u128, u128)>) -> Vec<(u128, u128)> {
    v.sort_unstable();
    let mut out: Vec<(u128, u128)> = Vec::with_capacity(v.len());
    for (lo, hi) in v {
        match out.last_mut() {
            Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

fn covered(outer: &[(u128, u128)], inner: &[(u128, u128)]) -> bool {
    inner
        .iter()
        .all(|&(lo, hi)| outer.iter().any(|&(a, b)| a <= lo && hi <= b))
}

impl InrSet {
    pub fn new(mut prefixes: Vec<IpPrefix>, as_ranges: Vec<AsRange>) -> Self {
        prefixes.sort_unstable();
        prefixes.dedup();
        let as_ranges = merge(
            as_ranges
                .iter()
                .map(|r| (u128::from(r.lo), u128::from(r.hi)))
                .collect(),
        )
        .into_iter()
        .map(|(lo, hi)| AsRange {
            lo: lo as u32,
            hi: hi as u32,
        })
        .collect();
        InrSet {
            prefixes,
            as_ranges,
        }
    }

    /// Everything: `0.0.0.0/0`, `::/0` and `AS0-AS4294967295`.
    pub fn all() -> Self {
        InrSet::new(
            vec![
                IpPrefix::V4 { addr: 0, len: 0 },
                IpPrefix::V6 { addr: 0, len: 0 },
            ],
            vec![AsRange {
                lo: 0,
                hi: u32::MAX,
            }],
        )
    }

    pub fn prefixes(&self) -> &[IpPrefix] {
        &self.prefixes
    }

    pub fn as_ranges(&self) -> &[AsRange] {
        &self.as_ranges
    }

    fn intervals(&self, v4: bool) -> Vec<(u128, u128)> {
        merge(
            self.prefixes
                .iter()
                .filter(|p| p.is_v4() == v4)
                .map(IpPrefix::bounds)
                .collect(),
        )
    }

    /// `other` is a subset of `self`.
    pub fn contains(&self, other: &InrSet) -> bool {
        let as_self: Vec<_> = self
            .as_ranges
            .iter()
            .map(|r| (u128::from(r.lo), u128::from(r.hi)))
            .collect();
        let as_other: Vec<_> = other
            .as_ranges
            .iter()
            .map(|r| (u128::from(r.lo), u128::from(r.hi)))
            .collect();
        covered(&self.intervals(true), &other.intervals(true))
            && covered(&self.intervals(false), &other.intervals(false))
            && covered(&as_self, &as_other)
    }
}

impl fmt::Display for InrSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.prefixes.iter().map(ToString::to_string).collect();
        parts.extend(self.as_ranges.iter().map(|r| {
            if r.lo == r.hi {
                format!("AS{}", r.lo)
            } else {
                format!("AS{}-{}", r.lo, r.hi)
            }
        }));
        f.write_str(&parts.join(", "))
    }
}
