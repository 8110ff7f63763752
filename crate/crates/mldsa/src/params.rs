//! ML-DSA parameter sets.

use std::fmt;

/// Ring modulus q.
pub(crate) const Q: i32 = 8_380_417;
/// Dropped bits from t.
pub(crate) const D: u32 = 13;
/// Polynomial degree.
pub(crate) const N: usize = 256;

/// One of the three FIPS 204 security levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    MlDsa44,
    MlDsa65,
    MlDsa87,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Params {
    pub k: usize,
    pub l: usize,
    pub eta: i32,
    pub tau: usize,
    pub beta: i32,
    pub gamma1: i32,
    pub gamma2: i32,
    pub omega: usize,
    /// Length of the commitment hash c~ in bytes (lambda / 4).
    pub ctilde_len: usize,
}

const P44: Params = Params {
    k: 4,
    l: 4,
    eta: 2,
    tau: 39,
    beta: 78,
    gamma1: 1 << 17,
    gamma2: (Q - 1) / 88,
    omega: 80,
    ctilde_len: 32,
};

const P65: Params = Params {
    k: 6,
    l: 5,
    eta: 4,
    tau: 49,
    beta: 196,
    gamma1: 1 << 19,
    gamma2: (Q - 1) / 32,
    omega: 55,
    ctilde_len: 48,
};

const P87: Params = Params {
    k: 8,
    l: 7,
    eta: 2,
    tau: 60,
    beta: 120,
    gamma1: 1 << 19,
    gamma2: (Q - 1) / 32,
    omega: 75,
    ctilde_len: 64,
};

impl Level {
    pub const ALL: [Level; 3] = [Level::MlDsa44, Level::MlDsa65, Level::MlDsa87];

    pub(crate) const fn params(self) -> &'static Params {
        match self {
            Level::MlDsa44 => &P44,
            Level::MlDsa65 => &P65,
            Level::MlDsa87 => &P87,
        }
    }

    /// Rows of the public matrix A.
    pub const fn k(self) -> usize {
        self.params().k
    }

    /// Columns of the public matrix A.
    pub const fn l(self) -> usize {
        self.params().l
    }

    pub const fn pk_len(self) -> usize {
        32 + 32 * self.k() * 10
    }

    pub const fn sk_len(self) -> usize {
        let p = self.params();
        let eta_bits = if p.eta == 2 { 3 } else { 4 };
        32 + 32 + 64 + 32 * ((p.k + p.l) * eta_bits + D as usize * p.k)
    }

    pub const fn sig_len(self) -> usize {
        let p = self.params();
        let z_bits = if p.gamma1 == 1 << 17 { 18 } else { 20 };
        p.ctilde_len + p.l * 32 * z_bits + p.omega + p.k
    }

    /// Length of the packed t1 vector (the public key minus rho).
    pub const fn t1_len(self) -> usize {
        self.pk_len() - 32
    }

    /// The parameter-set number: 44, 65 or 87.
    pub const fn number(self) -> u8 {
        match self {
            Level::MlDsa44 => 44,
            Level::MlDsa65 => 65,
            Level::MlDsa87 => 87,
        }
    }

    /// Compact one-byte code used in binary headers (2, 3 or 5).
    pub const fn code(self) -> u8 {
        match self {
            Level::MlDsa44 => 2,
            Level::MlDsa65 => 3,
            Level::MlDsa87 => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Level> {
        Level::ALL.into_iter().find(|l| l.code() == code)
    }

    pub fn from_number(n: u32) -> Option<Level> {
        Level::ALL.into_iter().find(|l| u32::from(l.number()) == n)
    }

    pub fn from_pk_len(len: usize) -> Option<Level> {
        Level::ALL.into_iter().find(|l| l.pk_len() == len)
    }

    pub fn from_sk_len(len: usize) -> Option<Level> {
        Level::ALL.into_iter().find(|l| l.sk_len() == len)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ML-DSA-{}", self.number())
    }
}
