//! Systematic Reed–Solomon erasure codes over GF(2^8).
//!
//! The field uses the primitive polynomial `x^8 + x^4 + x^3 + x^2 + 1`
//! (0x11D). An `(n, k)` codeword is the evaluation at the points `0..n` of
//! the unique polynomial of degree below `k` taking the data values at
//! `0..k`, so the first `k` shares are the data itself.

#![allow(clippy::suspicious_arithmetic_impl, clippy::suspicious_op_assign_impl)]

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Sub};
use std::sync::OnceLock;

use thiserror::Error;

const POLY: u16 = 0x11D;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut exp = [0u8; 512];
        let mut log = [0u8; 256];
        let mut x: u16 = 1;
        for (e, slot) in exp.iter_mut().take(255).enumerate() {
            *slot = x as u8;
            log[x as usize] = e as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= POLY;
            }
        }
        for e in 255..512 {
            exp[e] = exp[e - 255];
        }
        Tables { exp, log }
    })
}

/// One byte read as an element of GF(2^8).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldElement(pub u8);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inverse(self) -> Option<FieldElement> {
        if self.is_zero() {
            return None;
        }
        let t = tables();
        Some(FieldElement(t.exp[255 - t.log[self.0 as usize] as usize]))
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl From<u8> for FieldElement {
    fn from(b: u8) -> Self {
        FieldElement(b)
    }
}

impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: FieldElement) -> FieldElement {
        FieldElement(self.0 ^ rhs.0)
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: FieldElement) {
        self.0 ^= rhs.0;
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: FieldElement) -> FieldElement {
        FieldElement(self.0 ^ rhs.0)
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: FieldElement) -> FieldElement {
        if self.is_zero() || rhs.is_zero() {
            return FieldElement::ZERO;
        }
        let t = tables();
        FieldElement(t.exp[t.log[self.0 as usize] as usize + t.log[rhs.0 as usize] as usize])
    }
}

impl Div for FieldElement {
    type Output = FieldElement;
    /// Panics when dividing by zero.
    fn div(self, rhs: FieldElement) -> FieldElement {
        self * rhs.inverse().expect("division by zero in GF(2^8)")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ErasureError {
    #[error("invalid code parameters (n = {n}, k = {k}); need 1 <= k <= n <= 255")]
    InvalidSpec { n: usize, k: usize },
    #[error("expected {expected} data symbols, got {got}")]
    DataLength { expected: usize, got: usize },
    #[error("need at least {needed} shares, got {got}")]
    TooFewShares { needed: usize, got: usize },
    #[error("share position {0} appears twice")]
    DuplicatePosition(usize),
    #[error("share position {position} outside 0..{n}")]
    PositionOutOfRange { position: usize, n: usize },
    #[error("share vectors differ in length ({expected} vs {got})")]
    ShareLength { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MdsCodeSpec {
    n: usize,
    k: usize,
}

impl MdsCodeSpec {
    pub fn new(n: usize, k: usize) -> Result<Self, ErasureError> {
        if k == 0 || k > n || n > 255 {
            return Err(ErasureError::InvalidSpec { n, k });
        }
        Ok(MdsCodeSpec { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

fn point(position: usize) -> FieldElement {
    FieldElement(position as u8)
}

/// Weights `w` with `p(target) = sum w[m] * p(known[m])` for every
/// polynomial of degree below `known.len()`.
fn lagrange_weights(known: &[usize], target: usize) -> Vec<FieldElement> {
    let x = point(target);
    known
        .iter()
        .map(|&m| {
            let xm = point(m);
            let (mut num, mut den) = (FieldElement::ONE, FieldElement::ONE);
            for &l in known.iter().filter(|&&l| l != m) {
                num = num * (x - point(l));
                den = den * (xm - point(l));
            }
            num / den
        })
        .collect()
}

/// Interpolation weights for each of `targets`, from `known` positions.
fn weight_matrix(known: &[usize], targets: impl Iterator<Item = usize>) -> Vec<Vec<FieldElement>> {
    targets.map(|t| lagrange_weights(known, t)).collect()
}

fn combine(weights: &[FieldElement], values: &[FieldElement]) -> FieldElement {
    weights
        .iter()
        .zip(values)
        .fold(FieldElement::ZERO, |acc, (w, v)| acc + *w * *v)
}

pub fn rs_encode(spec: &MdsCodeSpec, data: &[FieldElement]) -> Result<Vec<FieldElement>, ErasureError> {
    if data.len() != spec.k {
        return Err(ErasureError::DataLength {
            expected: spec.k,
            got: data.len(),
        });
    }
    let known: Vec<usize> = (0..spec.k).collect();
    let mut out = data.to_vec();
    for w in weight_matrix(&known, spec.k..spec.n) {
        out.push(combine(&w, data));
    }
    Ok(out)
}

/// Checks positions and picks the `k` shares used for reconstruction.
fn select_shares<T>(spec: &MdsCodeSpec, shares: &[(usize, T)]) -> Result<Vec<usize>, ErasureError> {
    let mut seen = BTreeSet::new();
    for (position, _) in shares {
        if *position >= spec.n {
            return Err(ErasureError::PositionOutOfRange {
                position: *position,
                n: spec.n,
            });
        }
        if !seen.insert(*position) {
            return Err(ErasureError::DuplicatePosition(*position));
        }
    }
    if shares.len() < spec.k {
        return Err(ErasureError::TooFewShares {
            needed: spec.k,
            got: shares.len(),
        });
    }
    Ok((0..spec.k).collect())
}

pub fn rs_decode(spec: &MdsCodeSpec, shares: &[(usize, FieldElement)]) -> Result<Vec<FieldElement>, ErasureError> {
    let used = select_shares(spec, shares)?;
    let known: Vec<usize> = used.iter().map(|&s| shares[s].0).collect();
    let values: Vec<FieldElement> = used.iter().map(|&s| shares[s].1).collect();
    Ok(weight_matrix(&known, 0..spec.k)
        .iter()
        .map(|w| combine(w, &values))
        .collect())
}

fn common_length<'a>(vectors: impl Iterator<Item = &'a [u8]>) -> Result<usize, ErasureError> {
    let mut len = None;
    for v in vectors {
        match len {
            None => len = Some(v.len()),
            Some(l) if l != v.len() => {
                return Err(ErasureError::ShareLength {
                    expected: l,
                    got: v.len(),
                })
            }
            _ => {}
        }
    }
    Ok(len.unwrap_or(0))
}

/// Symbol-wise encoding of `k` equal-length byte vectors into `n`.
pub fn encode_vectors(spec: &MdsCodeSpec, data: &[Vec<u8>]) -> Result<Vec<Vec<u8>>, ErasureError> {
    if data.len() != spec.k {
        return Err(ErasureError::DataLength {
            expected: spec.k,
            got: data.len(),
        });
    }
    let len = common_length(data.iter().map(Vec::as_slice))?;
    let known: Vec<usize> = (0..spec.k).collect();
    let mut out = data.to_vec();
    for w in weight_matrix(&known, spec.k..spec.n) {
        out.push(
            (0..len)
                .map(|s| {
                    let column: Vec<FieldElement> = data.iter().map(|d| FieldElement(d[s])).collect();
                    combine(&w, &column).0
                })
                .collect(),
        );
    }
    Ok(out)
}

/// Symbol-wise inverse of [`encode_vectors`].
pub fn decode_vectors(spec: &MdsCodeSpec, shares: &[(usize, Vec<u8>)]) -> Result<Vec<Vec<u8>>, ErasureError> {
    let used = select_shares(spec, shares)?;
    let len = common_length(used.iter().map(|&s| shares[s].1.as_slice()))?;
    let known: Vec<usize> = used.iter().map(|&s| shares[s].0).collect();
    Ok(weight_matrix(&known, 0..spec.k)
        .iter()
        .map(|w| {
            (0..len)
                .map(|s| {
                    let column: Vec<FieldElement> = used.iter().map(|&u| FieldElement(shares[u].1[s])).collect();
                    combine(w, &column).0
                })
                .collect()
        })
        .collect())
}
