//! The latent capacity region `C*(R*)` in parametric form.
//!
//! A rate vector `R` lies in the region when some non-negative transfer
//! allocation `r[i][j]` (rate taken from level `i`, spent on level `j`)
//! satisfies
//!
//! ```text
//! sum_j r[i][j] <= R*_i                  for every source level i
//! 0 <= R_j <= sum_i phi(i,j) r[i][j]     for every target level j
//! ```
//!
//! Membership and the support function are answered by exact linear
//! programs over the allocation. The support function has a second,
//! independent route through consecutive level partitions, used to
//! cross-check the LP.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exactmath::{LinearProgram, LpError, LpOutcome, Rational};
use crate::exchange::{ExchangeError, ExchangeTable};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegionError {
    #[error("user count must be at least 1")]
    ZeroUsers,
    #[error("{what} has {got} entries, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} entry {index} is negative ({value})")]
    Negative {
        what: &'static str,
        index: usize,
        value: Rational,
    },
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

fn validate(what: &'static str, values: &[Rational]) -> Result<(), RegionError> {
    match values.iter().position(Rational::is_negative) {
        Some(index) => Err(RegionError::Negative {
            what,
            index,
            value: values[index].clone(),
        }),
        None => Ok(()),
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), RegionError> {
    if expected == 0 {
        return Err(RegionError::ZeroUsers);
    }
    if expected != got {
        return Err(RegionError::Length {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-message rate at each level: entry `i-1` is the rate of every message
/// intended for exactly `i` receivers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct RateVector(Vec<Rational>);

impl RateVector {
    pub fn new(values: Vec<Rational>) -> Result<Self, RegionError> {
        validate("rate vector", &values)?;
        Ok(RateVector(values))
    }

    pub fn zeros(k: usize) -> Self {
        RateVector(vec![Rational::zero(); k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Rational] {
        &self.0
    }

    /// 1-based level access.
    pub fn level(&self, i: usize) -> &Rational {
        &self.0[i - 1]
    }

    /// Multiplies every entry by `factor`, which must be non-negative.
    pub fn scale(&self, factor: &Rational) -> Result<Self, RegionError> {
        RateVector::new(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn into_inner(self) -> Vec<Rational> {
        self.0
    }
}

/// Non-negative weights `A_1..A_K` of a bounding direction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct DirectionVector(Vec<Rational>);

impl DirectionVector {
    pub fn new(values: Vec<Rational>) -> Result<Self, RegionError> {
        validate("direction", &values)?;
        Ok(DirectionVector(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Rational] {
        &self.0
    }

    pub fn level(&self, i: usize) -> &Rational {
        &self.0[i - 1]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Rational::is_zero)
    }

    pub fn score(&self, rates: &RateVector) -> Rational {
        dot(&self.0, rates.as_slice())
    }
}

/// Transfer matrix: entry `[i-1][j-1]` is the rate taken from level `i` and
/// spent on level `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Allocation(Vec<Vec<Rational>>);

impl Allocation {
    pub fn new(entries: Vec<Vec<Rational>>) -> Result<Self, RegionError> {
        let k = entries.len();
        for row in &entries {
            check_len("allocation row", k, row.len())?;
            validate("allocation", row)?;
        }
        Ok(Allocation(entries))
    }

    pub fn zeros(k: usize) -> Self {
        Allocation(vec![vec![Rational::zero(); k]; k])
    }

    /// Every level keeps its own rate.
    pub fn diagonal(rstar: &RateVector) -> Self {
        let mut a = Self::zeros(rstar.len());
        for (i, v) in rstar.as_slice().iter().enumerate() {
            a.0[i][i] = v.clone();
        }
        a
    }

    pub fn users(&self) -> usize {
        self.0.len()
    }

    /// 1-based access.
    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.0[i - 1][j - 1]
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.0
    }

    fn from_flat(k: usize, flat: &[Rational]) -> Self {
        Allocation(flat.chunks(k).map(<[Rational]>::to_vec).collect())
    }

    /// Rate consumed from each source level.
    pub fn spent(&self) -> Vec<Rational> {
        self.0.iter().map(|row| row.iter().sum()).collect()
    }

    /// Rate delivered to each target level, `sum_i phi(i,j) r[i][j]`.
    pub fn delivered(&self, table: &ExchangeTable) -> RateVector {
        let k = self.users();
        RateVector(
            (1..=k)
                .map(|j| (1..=k).map(|i| table.get(i, j) * self.get(i, j)).sum())
                .collect(),
        )
    }

    /// Whether this allocation certifies `rates` as a member of the region
    /// generated by `rstar`.
    pub fn certifies(&self, table: &ExchangeTable, rstar: &RateVector, rates: &RateVector) -> bool {
        let k = self.users();
        if rstar.len() != k || rates.len() != k || table.users() != k {
            return false;
        }
        let budget_ok = self
            .spent()
            .iter()
            .zip(rstar.as_slice())
            .all(|(s, b)| s <= b);
        let delivered = self.delivered(table);
        let rates_ok = rates
            .as_slice()
            .iter()
            .zip(delivered.as_slice())
            .all(|(r, d)| !r.is_negative() && r <= d);
        budget_ok && rates_ok
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Inside {
        witness: Allocation,
    },
    /// `separator·R > support_value`, the region's support in that direction.
    Outside {
        separator: DirectionVector,
        support_value: Rational,
        score: Rational,
    },
}

impl Verdict {
    pub fn is_inside(&self) -> bool {
        matches!(self, Verdict::Inside { .. })
    }
}

fn transfer_index(k: usize, i: usize, j: usize) -> usize {
    (i - 1) * k + (j - 1)
}

/// Budget rows `sum_j r[i][j] <= R*_i` over the `K^2` transfer variables.
fn budget_rows(k: usize, rstar: &RateVector) -> (Vec<Vec<Rational>>, Vec<Rational>) {
    let mut rows = Vec::with_capacity(k);
    for i in 1..=k {
        let mut row = vec![Rational::zero(); k * k];
        for j in 1..=k {
            row[transfer_index(k, i, j)] = Rational::one();
        }
        rows.push(row);
    }
    (rows, rstar.as_slice().to_vec())
}

/// Decides whether `rates` lies in `C*(rstar)`.
///
/// Inside verdicts carry a witness allocation; outside verdicts carry a
/// direction read off the LP's Farkas certificate, reduced to a primitive
/// integer vector supported where `rates` is positive.
pub fn member(k: usize, rstar: &RateVector, rates: &RateVector) -> Result<Verdict, RegionError> {
    check_len("R*", k, rstar.len())?;
    check_len("R", k, rates.len())?;
    let table = ExchangeTable::new(k)?;
    let (mut rows, mut rhs) = budget_rows(k, rstar);
    for j in 1..=k {
        let mut row = vec![Rational::zero(); k * k];
        for i in 1..=k {
            row[transfer_index(k, i, j)] = -table.get(i, j);
        }
        rows.push(row);
        rhs.push(-rates.level(j));
    }
    let lp = LinearProgram::nonnegative(vec![Rational::zero(); k * k], rows, rhs)?;
    match lp.optimize()? {
        LpOutcome::Optimal { point, .. } => Ok(Verdict::Inside {
            witness: Allocation::from_flat(k, &point),
        }),
        LpOutcome::Infeasible { certificate } => {
            let raw = &certificate[k..];
            let separator = refine_separator(k, rstar, rates, raw)?;
            let support_value = support_lp(k, rstar, &separator)?.value;
            let score = separator.score(rates);
            Ok(Verdict::Outside {
                separator,
                support_value,
                score,
            })
        }
        LpOutcome::Unbounded { .. } => unreachable!("feasibility program has zero objective"),
    }
}

fn refine_separator(
    k: usize,
    rstar: &RateVector,
    rates: &RateVector,
    raw: &[Rational],
) -> Result<DirectionVector, RegionError> {
    // Zeroing weights where R_j = 0 leaves A·R unchanged and cannot raise the
    // support value, so the refined direction still separates.
    let masked: Vec<Rational> = raw
        .iter()
        .zip(rates.as_slice())
        .map(|(a, r)| if r.is_zero() { Rational::zero() } else { a.clone() })
        .collect();
    let candidate = DirectionVector::new(crate::exactmath::primitive_scaling(&masked))?;
    if is_separator(k, rstar, &candidate, rates)? {
        return Ok(candidate);
    }
    DirectionVector::new(crate::exactmath::primitive_scaling(raw))
}

/// True when `direction·rates` exceeds the support of `C*(rstar)` in that
/// direction, i.e. the direction proves `rates` is outside.
pub fn is_separator(
    k: usize,
    rstar: &RateVector,
    direction: &DirectionVector,
    rates: &RateVector,
) -> Result<bool, RegionError> {
    check_len("R", k, rates.len())?;
    let support = support_lp(k, rstar, direction)?;
    Ok(direction.score(rates) > support.value)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Support {
    pub value: Rational,
    pub allocation: Allocation,
}

impl Support {
    /// The rate vector attaining the support value, `R_j = sum_i phi(i,j) r[i][j]`.
    pub fn point(&self) -> RateVector {
        let k = self.allocation.users();
        let table = ExchangeTable::new(k).expect("allocation has at least one level");
        self.allocation.delivered(&table)
    }
}

/// `max A·R` over `C*(rstar)`, by LP over the allocation with each `R_j`
/// held at its upper bound `sum_i phi(i,j) r[i][j]`.
pub fn support_lp(
    k: usize,
    rstar: &RateVector,
    direction: &DirectionVector,
) -> Result<Support, RegionError> {
    check_len("R*", k, rstar.len())?;
    check_len("direction", k, direction.len())?;
    if direction.is_zero() {
        return Ok(Support {
            value: Rational::zero(),
            allocation: Allocation::diagonal(rstar),
        });
    }
    let table = ExchangeTable::new(k)?;
    let mut objective = vec![Rational::zero(); k * k];
    for i in 1..=k {
        for j in 1..=k {
            objective[transfer_index(k, i, j)] = direction.level(j) * table.get(i, j);
        }
    }
    let (rows, rhs) = budget_rows(k, rstar);
    let lp = LinearProgram::nonnegative(objective, rows, rhs)?;
    match lp.optimize()? {
        LpOutcome::Optimal { value, point, .. } => Ok(Support {
            value,
            allocation: Allocation::from_flat(k, &point),
        }),
        other => unreachable!("bounded feasible program returned {other:?}"),
    }
}

/// Consecutive segments `S_1..S_m` of the levels `1..=K`, each with a
/// representative level `e_i` inside it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ConsecutivePartition {
    /// Inclusive `(lower, upper)` bounds of each segment, ascending.
    segments: Vec<(usize, usize)>,
    representatives: Vec<usize>,
}

impl ConsecutivePartition {
    pub fn new(
        k: usize,
        segments: Vec<(usize, usize)>,
        representatives: Vec<usize>,
    ) -> Result<Self, RegionError> {
        if k == 0 {
            return Err(RegionError::ZeroUsers);
        }
        check_len("representatives", segments.len(), representatives.len())?;
        let mut next = 1;
        for (&(lo, hi), &e) in segments.iter().zip(&representatives) {
            if lo != next || hi < lo || e < lo || e > hi {
                return Err(RegionError::Length {
                    what: "partition segment",
                    expected: next,
                    got: lo,
                });
            }
            next = hi + 1;
        }
        if next != k + 1 {
            return Err(RegionError::Length {
                what: "partition cover",
                expected: k,
                got: next - 1,
            });
        }
        Ok(ConsecutivePartition {
            segments,
            representatives,
        })
    }

    pub fn segments(&self) -> &[(usize, usize)] {
        &self.segments
    }

    pub fn representatives(&self) -> &[usize] {
        &self.representatives
    }

    /// The effective rate set: every level that receives rate.
    pub fn effective_levels(&self) -> &[usize] {
        &self.representatives
    }

    pub fn users(&self) -> usize {
        self.segments.last().map_or(0, |s| s.1)
    }

    /// Ordering key: segment upper bounds, then representatives.
    fn key(&self) -> (Vec<usize>, &[usize]) {
        (
            self.segments.iter().map(|s| s.1).collect(),
            &self.representatives,
        )
    }

    /// `sum_i A_{e_i} sum_{j in S_i} phi(j, e_i) R*_j`.
    pub fn value(&self, table: &ExchangeTable, rstar: &RateVector, direction: &DirectionVector) -> Rational {
        self.segments
            .iter()
            .zip(&self.representatives)
            .map(|(&(lo, hi), &e)| {
                let moved: Rational = (lo..=hi).map(|j| table.get(j, e) * rstar.level(j)).sum();
                direction.level(e) * &moved
            })
            .sum()
    }

    /// The extremal allocation this partition describes: every level in
    /// `S_i` sends all of its rate to `e_i`.
    pub fn allocation(&self, rstar: &RateVector) -> Allocation {
        let mut a = Allocation::zeros(rstar.len());
        for (&(lo, hi), &e) in self.segments.iter().zip(&self.representatives) {
            for j in lo..=hi {
                a.0[j - 1][e - 1] = rstar.level(j).clone();
            }
        }
        a
    }

    /// Levels `j in S_i` breaking `A_j <= A_{e_i} phi(j, e_i)`.
    pub fn optimality_violations(&self, table: &ExchangeTable, direction: &DirectionVector) -> Vec<usize> {
        let mut out = Vec::new();
        for (&(lo, hi), &e) in self.segments.iter().zip(&self.representatives) {
            for j in lo..=hi {
                if *direction.level(j) > direction.level(e) * table.get(j, e) {
                    out.push(j);
                }
            }
        }
        out
    }
}

/// Every consecutive partition of `1..=K` with every representative choice,
/// ordered by segment upper bounds then representatives.
pub fn enumerate_partitions(k: usize) -> Result<Vec<ConsecutivePartition>, RegionError> {
    if k == 0 {
        return Err(RegionError::ZeroUsers);
    }
    let mut compositions: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut stack = Vec::new();
    compose_segments(1, k, &mut stack, &mut compositions);
    let mut out = Vec::new();
    for segments in compositions {
        let mut reps: Vec<usize> = segments.iter().map(|s| s.0).collect();
        loop {
            out.push(ConsecutivePartition {
                segments: segments.clone(),
                representatives: reps.clone(),
            });
            // Odometer over representative choices, last segment fastest.
            let mut idx = segments.len();
            let advanced = loop {
                if idx == 0 {
                    break false;
                }
                idx -= 1;
                if reps[idx] < segments[idx].1 {
                    reps[idx] += 1;
                    for t in idx + 1..segments.len() {
                        reps[t] = segments[t].0;
                    }
                    break true;
                }
            };
            if !advanced {
                break;
            }
        }
    }
    debug_assert!(out.windows(2).all(|w| w[0].key() < w[1].key()));
    Ok(out)
}

fn compose_segments(
    start: usize,
    k: usize,
    stack: &mut Vec<(usize, usize)>,
    out: &mut Vec<Vec<(usize, usize)>>,
) {
    if start > k {
        out.push(stack.clone());
        return;
    }
    for end in start..=k {
        stack.push((start, end));
        compose_segments(end + 1, k, stack, out);
        stack.pop();
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartitionSupport {
    pub value: Rational,
    pub partition: ConsecutivePartition,
}

/// Support value by exhaustive search over consecutive partitions; ties go
/// to the first partition in enumeration order.
pub fn support_partition(
    k: usize,
    rstar: &RateVector,
    direction: &DirectionVector,
) -> Result<PartitionSupport, RegionError> {
    check_len("R*", k, rstar.len())?;
    check_len("direction", k, direction.len())?;
    let table = ExchangeTable::new(k)?;
    let mut best: Option<PartitionSupport> = None;
    for p in enumerate_partitions(k)? {
        let value = p.value(&table, rstar, direction);
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(PartitionSupport {
                value,
                partition: p,
            });
        }
    }
    Ok(best.expect("at least one partition exists"))
}

/// Seeded random rate vector with entries in `[0, bound]`, each a multiple of
/// `bound / d` for a random `d <= 12`.
pub fn sample_rates(k: usize, bound: &Rational, seed: u64) -> Result<RateVector, RegionError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_rates_with(&mut rng, k, bound)
}

pub fn sample_rates_with<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    bound: &Rational,
) -> Result<RateVector, RegionError> {
    validate("bound", std::slice::from_ref(bound))?;
    let values = (0..k)
        .map(|_| {
            let d: i64 = rng.gen_range(1..=12);
            let n: i64 = rng.gen_range(0..=d);
            bound * &Rational::frac(n, d)
        })
        .collect();
    RateVector::new(values)
}
