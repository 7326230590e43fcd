//! Binomials and the pairwise exchange rates between message levels.
//!
//! Level `i` rate converts into level `j` rate at ratio `phi(K, i, j)`:
//!
//! * up (`i < j`):   `C(j-1, j-i) / C(K-i, j-i)`
//! * down (`i > j`): `C(K-j, i-j) / C(i, i-j)`
//! * `phi(K, i, i) = 1`

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::exactmath::Rational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExchangeError {
    #[error("user count must be at least 1")]
    ZeroUsers,
    #[error("level {level} is outside 1..={k}")]
    LevelOutOfRange { level: usize, k: usize },
}

/// `C(n, k)`, zero when `k < 0` or `k > n`.
pub fn binomial(n: u64, k: i64) -> BigUint {
    if k < 0 || k as u64 > n {
        return BigUint::zero();
    }
    let k = (k as u64).min(n - k as u64);
    let mut acc = BigUint::one();
    for t in 0..k {
        acc = acc * BigUint::from(n - t) / BigUint::from(t + 1);
    }
    acc
}

pub(crate) fn binom_rational(n: usize, k: isize) -> Rational {
    Rational::from_integer(BigInt::from(binomial(n as u64, k as i64)))
}

/// Small-argument binomial as a machine integer, for the simulator's
/// symbol bookkeeping.
pub(crate) fn binom_usize(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, t| acc * (n - t) / (t + 1))
}

fn check_level(k: usize, level: usize) -> Result<(), ExchangeError> {
    if level == 0 || level > k {
        return Err(ExchangeError::LevelOutOfRange { level, k });
    }
    Ok(())
}

/// Exchange rate from level `i` to level `j` among `k` users.
pub fn phi(k: usize, i: usize, j: usize) -> Result<Rational, ExchangeError> {
    if k == 0 {
        return Err(ExchangeError::ZeroUsers);
    }
    check_level(k, i)?;
    check_level(k, j)?;
    Ok(phi_unchecked(k, i, j))
}

pub(crate) fn phi_unchecked(k: usize, i: usize, j: usize) -> Rational {
    use std::cmp::Ordering::*;
    let (ii, jj, kk) = (i as isize, j as isize, k);
    match i.cmp(&j) {
        Equal => Rational::one(),
        Less => &binom_rational(j - 1, jj - ii) / &binom_rational(kk - i, jj - ii),
        Greater => &binom_rational(kk - j, ii - jj) / &binom_rational(i, ii - jj),
    }
}

/// Full `K x K` matrix of exchange rates; entry `[i-1][j-1]` is `phi(K, i, j)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExchangeTable {
    k: usize,
    entries: Vec<Vec<Rational>>,
}

impl ExchangeTable {
    pub fn new(k: usize) -> Result<Self, ExchangeError> {
        if k == 0 {
            return Err(ExchangeError::ZeroUsers);
        }
        let entries = (1..=k)
            .map(|i| (1..=k).map(|j| phi_unchecked(k, i, j)).collect())
            .collect();
        Ok(ExchangeTable { k, entries })
    }

    pub fn users(&self) -> usize {
        self.k
    }

    /// 1-based lookup.
    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.entries[i - 1][j - 1]
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.entries
    }
}

pub fn phi_table(k: usize) -> Result<ExchangeTable, ExchangeError> {
    ExchangeTable::new(k)
}

/// Algebraic identities satisfied by the exchange rates, checked exhaustively
/// over all admissible level triples for a given user count.
pub mod identities {
    use super::*;

    #[derive(Clone, Debug, PartialEq, Eq, Serialize)]
    pub struct Violation {
        pub identity: &'static str,
        pub k: usize,
        pub levels: Vec<usize>,
    }

    /// Names of every identity checked by [`check_all`], in order.
    pub const NAMES: [&str; 7] = [
        "up_chain",
        "down_chain",
        "round_trip",
        "two_step",
        "consecutive_down",
        "alternative_up",
        "up_form_consistency",
    ];

    fn v(identity: &'static str, k: usize, levels: &[usize]) -> Violation {
        Violation {
            identity,
            k,
            levels: levels.to_vec(),
        }
    }

    /// `phi(i,j) * phi(j,l) == phi(i,l)` for `i < j < l`.
    pub fn up_chain(t: &ExchangeTable) -> Vec<Violation> {
        let k = t.users();
        let mut out = Vec::new();
        for i in 1..=k {
            for j in i + 1..=k {
                for l in j + 1..=k {
                    if t.get(i, j) * t.get(j, l) != *t.get(i, l) {
                        out.push(v("up_chain", k, &[i, j, l]));
                    }
                }
            }
        }
        out
    }

    /// `phi(l,j) * phi(j,i) == phi(l,i)` for `i < j < l`.
    pub fn down_chain(t: &ExchangeTable) -> Vec<Violation> {
        let k = t.users();
        let mut out = Vec::new();
        for i in 1..=k {
            for j in i + 1..=k {
                for l in j + 1..=k {
                    if t.get(l, j) * t.get(j, i) != *t.get(l, i) {
                        out.push(v("down_chain", k, &[i, j, l]));
                    }
                }
            }
        }
        out
    }

    /// `phi(i,j) * phi(j,i) == i/j < 1` for `i < j`.
    pub fn round_trip(t: &ExchangeTable) -> Vec<Violation> {
        let k = t.users();
        let mut out = Vec::new();
        for i in 1..=k {
            for j in i + 1..=k {
                let prod = t.get(i, j) * t.get(j, i);
                let ratio = Rational::new(i as i64, j as i64).expect("j >= 2");
                if prod != ratio || prod >= Rational::one() {
                    out.push(v("round_trip", k, &[i, j]));
                }
            }
        }
        out
    }

    /// `phi(i,l) >= phi(i,j) * phi(j,l)` for every triple, with equality
    /// exactly when `(i, j, l)` is monotone (non-strictly).
    pub fn two_step(t: &ExchangeTable) -> Vec<Violation> {
        let k = t.users();
        let mut out = Vec::new();
        for i in 1..=k {
            for j in 1..=k {
                for l in 1..=k {
                    let direct = t.get(i, l);
                    let via = t.get(i, j) * t.get(j, l);
                    let monotone = (i <= j && j <= l) || (i >= j && j >= l);
                    let ok = if monotone {
                        *direct == via
                    } else {
                        *direct > via
                    };
                    if !ok {
                        out.push(v("two_step", k, &[i, j, l]));
                    }
                }
            }
        }
        out
    }

    /// `(m+1) C(K-1, m-1) phi(m+1, j) == m C(K-1, m) phi(m, j)` for
    /// `j < m < K`.
    pub fn consecutive_down(t: &ExchangeTable) -> Vec<Violation> {
        let k = t.users();
        let mut out = Vec::new();
        for m in 1..k {
            for j in 1..m {
                let lhs = &(&Rational::from(m + 1) * &binom_rational(k - 1, m as isize - 1))
                    * t.get(m + 1, j);
                let rhs = &(&Rational::from(m) * &binom_rational(k - 1, m as isize)) * t.get(m, j);
                if lhs != rhs {
                    out.push(v("consecutive_down", k, &[m, j]));
                }
            }
        }
        out
    }

    /// `C(K-1, i-1) / C(K-1, j-1) == phi(i,j)` for `i < j`.
    pub fn alternative_up(t: &ExchangeTable) -> Vec<Violation> {
        let k = t.users();
        let mut out = Vec::new();
        for i in 1..=k {
            for j in i + 1..=k {
                let alt = &binom_rational(k - 1, i as isize - 1)
                    / &binom_rational(k - 1, j as isize - 1);
                if alt != *t.get(i, j) {
                    out.push(v("alternative_up", k, &[i, j]));
                }
            }
        }
        out
    }

    /// The up rate written with `C(j-1, i-1)` (one MDS code per target set)
    /// agrees with the `C(j-1, j-i)` form.
    pub fn up_form_consistency(t: &ExchangeTable) -> Vec<Violation> {
        let k = t.users();
        let mut out = Vec::new();
        for i in 1..=k {
            for j in i + 1..=k {
                let coded = &binom_rational(j - 1, i as isize - 1)
                    / &binom_rational(k - i, (j - i) as isize);
                if binomial(j as u64 - 1, (j - i) as i64) != binomial(j as u64 - 1, i as i64 - 1)
                    || coded != *t.get(i, j)
                {
                    out.push(v("up_form_consistency", k, &[i, j]));
                }
            }
        }
        out
    }

    /// Runs every identity for one user count.
    pub fn check_all(t: &ExchangeTable) -> Vec<Violation> {
        let mut out = up_chain(t);
        out.extend(down_chain(t));
        out.extend(round_trip(t));
        out.extend(two_step(t));
        out.extend(consecutive_down(t));
        out.extend(alternative_up(t));
        out.extend(up_form_consistency(t));
        out
    }

    /// Runs every identity for every user count in `1..=max_k`.
    pub fn check_up_to(max_k: usize) -> Vec<Violation> {
        (1..=max_k)
            .flat_map(|k| check_all(&ExchangeTable::new(k).expect("k >= 1")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Rational {
        s.parse().unwrap()
    }

    /// Pascal-triangle oracle, independent of the multiplicative formula.
    fn pascal(n: usize) -> Vec<Vec<BigUint>> {
        let mut rows: Vec<Vec<BigUint>> = vec![vec![BigUint::one()]];
        for r in 1..=n {
            let prev = &rows[r - 1];
            let mut row = vec![BigUint::one(); r + 1];
            for c in 1..r {
                row[c] = &prev[c - 1] + &prev[c];
            }
            rows.push(row);
        }
        rows
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(binomial(3, 2), BigUint::from(3u32));
        assert_eq!(binomial(8, 4), BigUint::from(70u32));
        for n in 0..10 {
            assert_eq!(binomial(n, 0), BigUint::one());
        }
        assert_eq!(binomial(3, -1), BigUint::zero());
        assert_eq!(binomial(3, 4), BigUint::zero());
        assert_eq!(binomial(0, 0), BigUint::one());
    }

    #[test]
    fn binomial_matches_pascal() {
        let tri = pascal(40);
        for n in 0..=40usize {
            for k in 0..=n {
                assert_eq!(binomial(n as u64, k as i64), tri[n][k], "C({n},{k})");
                assert_eq!(BigUint::from(binom_usize(n.min(20), k.min(n.min(20)))),
                           tri[n.min(20)][k.min(n.min(20))]);
            }
        }
    }

    #[test]
    fn two_user_rates() {
        assert_eq!(phi(2, 1, 2).unwrap(), q("1"));
        assert_eq!(phi(2, 2, 1).unwrap(), q("1/2"));
    }

    #[test]
    fn three_user_rates() {
        let expect = [
            (1, 2, "1/2"),
            (1, 3, "1"),
            (2, 3, "2"),
            (2, 1, "1"),
            (3, 1, "1/3"),
            (3, 2, "1/3"),
        ];
        for (i, j, v) in expect {
            assert_eq!(phi(3, i, j).unwrap(), q(v), "phi(3,{i},{j})");
        }
    }

    #[test]
    fn diagonal_is_one() {
        for k in 1..=12 {
            for i in 1..=k {
                assert_eq!(phi(k, i, i).unwrap(), Rational::one());
            }
        }
    }

    #[test]
    fn out_of_range_levels() {
        assert_eq!(phi(3, 0, 1), Err(ExchangeError::LevelOutOfRange { level: 0, k: 3 }));
        assert_eq!(phi(3, 1, 4), Err(ExchangeError::LevelOutOfRange { level: 4, k: 3 }));
        assert_eq!(phi(0, 1, 1), Err(ExchangeError::ZeroUsers));
        assert_eq!(phi_table(0), Err(ExchangeError::ZeroUsers));
    }

    #[test]
    fn tables() {
        assert_eq!(phi_table(1).unwrap().rows(), &[vec![q("1")]]);
        assert_eq!(
            phi_table(2).unwrap().rows(),
            &[vec![q("1"), q("1")], vec![q("1/2"), q("1")]]
        );
        let t3 = phi_table(3).unwrap();
        assert_eq!(
            t3.rows(),
            &[
                vec![q("1"), q("1/2"), q("1")],
                vec![q("1"), q("1"), q("2")],
                vec![q("1/3"), q("1/3"), q("1")],
            ]
        );
    }

    #[test]
    fn table_entries_positive_and_consistent() {
        for k in 1..=8 {
            let t = phi_table(k).unwrap();
            for i in 1..=k {
                for j in 1..=k {
                    assert!(t.get(i, j).is_positive());
                    assert_eq!(*t.get(i, j), phi(k, i, j).unwrap());
                }
            }
        }
    }

    #[test]
    fn identities_hold_small_k() {
        assert!(identities::check_up_to(6).is_empty());
    }

    #[test]
    fn identity_checker_detects_corruption() {
        let mut t = phi_table(4).unwrap();
        t.entries[0][2] = q("7");
        let bad = identities::check_all(&t);
        assert!(bad.iter().any(|v| v.identity == "up_chain"));
        assert!(bad.iter().any(|v| v.identity == "alternative_up"));
    }
}
