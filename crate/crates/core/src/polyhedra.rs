//! Half-space description of `C*(R*)` by Fourier–Motzkin elimination.
//!
//! The region's defining system over `R`, (optionally symbolic) `R*` and the
//! transfer variables `r[i][j]` is projected onto the rate coordinates by
//! eliminating every transfer variable, pruning redundant rows with exact
//! LPs after each step.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::exactmath::{primitive_scaling, LinearProgram, LpError, LpOutcome, Rational, VarSign};
use crate::exchange::{ExchangeError, ExchangeTable};
use crate::region::{RateVector, RegionError};

/// Default largest user count accepted by [`latent_facets`].
pub const DEFAULT_MAX_USERS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("a concrete R* is required unless the system is symbolic")]
    MissingRstar,
    #[error("R* has {got} entries, expected {expected}")]
    RstarLength { expected: usize, got: usize },
    #[error("variable {0} is not declared in the system")]
    UnknownVariable(Variable),
    #[error("elimination for K = {k} exceeds the configured limit of {limit}")]
    SizeLimit { k: usize, limit: usize },
    #[error("system is not over R_1, R_2, R_3 only (found {0})")]
    NotThreeDimensional(Variable),
    #[error("system is unbounded along {0}")]
    Unbounded(Variable),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Variables are ordered rates first, then budgets, then transfers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variable {
    /// `R_j`
    Rate(usize),
    /// `R*_i`, present only in symbolic systems.
    Budget(usize),
    /// `r[i][j]`
    Transfer(usize, usize),
}

impl Variable {
    pub fn is_transfer(&self) -> bool {
        matches!(self, Variable::Transfer(..))
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variable::Rate(j) => write!(f, "R_{j}"),
            Variable::Budget(i) => write!(f, "R*_{i}"),
            Variable::Transfer(i, j) => write!(f, "r_{i}_{j}"),
        }
    }
}

impl Serialize for Variable {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// `sum coef * var <= constant`, stored scaled to primitive integers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AffineInequality {
    coefficients: BTreeMap<Variable, Rational>,
    constant: Rational,
}

impl AffineInequality {
    /// Builds and normalizes: zero coefficients are dropped and the row is
    /// multiplied by the positive factor that makes all entries coprime
    /// integers.
    pub fn new(coefficients: impl IntoIterator<Item = (Variable, Rational)>, constant: Rational) -> Self {
        let mut merged: BTreeMap<Variable, Rational> = BTreeMap::new();
        for (v, c) in coefficients {
            *merged.entry(v).or_insert_with(Rational::zero) += c;
        }
        merged.retain(|_, c| !c.is_zero());
        AffineInequality {
            coefficients: merged,
            constant,
        }
        .normalized()
    }

    pub fn normalized(&self) -> Self {
        let mut values: Vec<Rational> = self.coefficients.values().cloned().collect();
        values.push(self.constant.clone());
        let scaled = primitive_scaling(&values);
        let (constant, coefs) = scaled.split_last().expect("constant present");
        AffineInequality {
            coefficients: self
                .coefficients
                .keys()
                .copied()
                .zip(coefs.iter().cloned())
                .collect(),
            constant: constant.clone(),
        }
    }

    pub fn coefficients(&self) -> &BTreeMap<Variable, Rational> {
        &self.coefficients
    }

    pub fn coefficient(&self, v: Variable) -> Rational {
        self.coefficients.get(&v).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn constant(&self) -> &Rational {
        &self.constant
    }

    /// `0 <= c` with `c >= 0`.
    pub fn is_tautology(&self) -> bool {
        self.coefficients.is_empty() && !self.constant.is_negative()
    }

    /// `0 <= c` with `c < 0`.
    pub fn is_contradiction(&self) -> bool {
        self.coefficients.is_empty() && self.constant.is_negative()
    }

    /// Left-hand side value. Variables missing from `point` count as zero.
    pub fn lhs(&self, point: &BTreeMap<Variable, Rational>) -> Rational {
        self.coefficients
            .iter()
            .map(|(v, c)| point.get(v).map_or_else(Rational::zero, |x| c * x))
            .sum()
    }

    pub fn slack(&self, point: &BTreeMap<Variable, Rational>) -> Rational {
        &self.constant - &self.lhs(point)
    }

    pub fn is_satisfied_by(&self, point: &BTreeMap<Variable, Rational>) -> bool {
        !self.slack(point).is_negative()
    }

    /// Replaces the listed variables by values, folding them into the constant.
    pub fn substitute(&self, values: &BTreeMap<Variable, Rational>) -> Self {
        let mut constant = self.constant.clone();
        let mut rest = Vec::new();
        for (v, c) in &self.coefficients {
            match values.get(v) {
                Some(x) => constant -= &(c * x),
                None => rest.push((*v, c.clone())),
            }
        }
        AffineInequality::new(rest, constant)
    }
}

impl fmt::Display for AffineInequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coefficients.is_empty() {
            return write!(f, "0 <= {}", self.constant);
        }
        for (n, (v, c)) in self.coefficients.iter().enumerate() {
            let mag = c.abs();
            let sign = if c.is_negative() { "-" } else { "+" };
            match (n, c.is_negative()) {
                (0, false) => {}
                (0, true) => write!(f, "-")?,
                _ => write!(f, " {sign} ")?,
            }
            if mag == Rational::one() {
                write!(f, "{v}")?;
            } else {
                write!(f, "{mag}{v}")?;
            }
        }
        write!(f, " <= {}", self.constant)
    }
}

impl Serialize for AffineInequality {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let coefficients: BTreeMap<String, &Rational> =
            self.coefficients.iter().map(|(v, c)| (v.to_string(), c)).collect();
        let mut st = serializer.serialize_struct("AffineInequality", 3)?;
        st.serialize_field("coefficients", &coefficients)?;
        st.serialize_field("constant", &self.constant)?;
        st.serialize_field("text", &self.to_string())?;
        st.end()
    }
}

/// Distinct normalized inequalities over a declared variable set, kept in
/// canonical order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InequalitySystem {
    variables: BTreeSet<Variable>,
    rows: BTreeSet<AffineInequality>,
}

impl InequalitySystem {
    /// Tautologies are dropped; every variable used by a row is declared.
    pub fn new(
        variables: impl IntoIterator<Item = Variable>,
        rows: impl IntoIterator<Item = AffineInequality>,
    ) -> Self {
        let mut variables: BTreeSet<Variable> = variables.into_iter().collect();
        let rows: BTreeSet<AffineInequality> = rows.into_iter().filter(|r| !r.is_tautology()).collect();
        for r in &rows {
            variables.extend(r.coefficients.keys().copied());
        }
        InequalitySystem { variables, rows }
    }

    pub fn variables(&self) -> &BTreeSet<Variable> {
        &self.variables
    }

    pub fn rows(&self) -> impl Iterator<Item = &AffineInequality> {
        self.rows.iter()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, row: &AffineInequality) -> bool {
        self.rows.contains(row)
    }

    pub fn is_satisfied_by(&self, point: &BTreeMap<Variable, Rational>) -> bool {
        self.rows.iter().all(|r| r.is_satisfied_by(point))
    }

    /// Substitutes values for some variables and drops them from the
    /// declared set.
    pub fn substitute(&self, values: &BTreeMap<Variable, Rational>) -> Self {
        InequalitySystem::new(
            self.variables.iter().copied().filter(|v| !values.contains_key(v)),
            self.rows.iter().map(|r| r.substitute(values)),
        )
    }

    /// Rows other than those whose only variables are `R_j` with a negative
    /// coefficient and a zero constant (plain sign constraints).
    pub fn non_sign_rows(&self) -> Vec<&AffineInequality> {
        self.rows.iter().filter(|r| !is_sign_row(r)).collect()
    }

    fn without(&self, row: &AffineInequality) -> Vec<&AffineInequality> {
        self.rows.iter().filter(|r| *r != row).collect()
    }
}

fn is_sign_row(r: &AffineInequality) -> bool {
    r.constant.is_zero()
        && r.coefficients.len() == 1
        && r.coefficients.values().all(Rational::is_negative)
}

/// Variable assignment for a rate vector (and optional budgets).
pub fn rate_point(rates: &RateVector, budgets: Option<&RateVector>) -> BTreeMap<Variable, Rational> {
    let mut point: BTreeMap<Variable, Rational> = rates
        .as_slice()
        .iter()
        .enumerate()
        .map(|(j, v)| (Variable::Rate(j + 1), v.clone()))
        .collect();
    if let Some(b) = budgets {
        point.extend(
            b.as_slice()
                .iter()
                .enumerate()
                .map(|(i, v)| (Variable::Budget(i + 1), v.clone())),
        );
    }
    point
}

/// The region's defining system over `R`, the transfers `r[i][j]` and, when
/// `symbolic`, the budgets `R*_i` as free variables.
pub fn build_region_system(
    k: usize,
    symbolic: bool,
    rstar: Option<&RateVector>,
) -> Result<InequalitySystem, PolyError> {
    let table = ExchangeTable::new(k)?;
    if !symbolic {
        let r = rstar.ok_or(PolyError::MissingRstar)?;
        if r.len() != k {
            return Err(PolyError::RstarLength {
                expected: k,
                got: r.len(),
            });
        }
    }
    let one = Rational::one;
    let mut vars = BTreeSet::new();
    let mut rows = Vec::new();
    for i in 1..=k {
        for j in 1..=k {
            vars.insert(Variable::Transfer(i, j));
            rows.push(AffineInequality::new([(Variable::Transfer(i, j), -one())], Rational::zero()));
        }
    }
    for i in 1..=k {
        let mut coefs: Vec<(Variable, Rational)> = (1..=k).map(|j| (Variable::Transfer(i, j), one())).collect();
        let constant = if symbolic {
            vars.insert(Variable::Budget(i));
            coefs.push((Variable::Budget(i), -one()));
            Rational::zero()
        } else {
            rstar.expect("checked above").level(i).clone()
        };
        rows.push(AffineInequality::new(coefs, constant));
    }
    for j in 1..=k {
        vars.insert(Variable::Rate(j));
        let mut coefs = vec![(Variable::Rate(j), one())];
        coefs.extend((1..=k).map(|i| (Variable::Transfer(i, j), -table.get(i, j))));
        rows.push(AffineInequality::new(coefs, Rational::zero()));
        rows.push(AffineInequality::new([(Variable::Rate(j), -one())], Rational::zero()));
    }
    Ok(InequalitySystem::new(vars, rows))
}

/// Number of rows a Fourier–Motzkin step on `var` would produce.
pub fn elimination_cost(system: &InequalitySystem, var: Variable) -> usize {
    let (mut pos, mut neg) = (0, 0);
    for r in &system.rows {
        let c = r.coefficient(var);
        if c.is_positive() {
            pos += 1;
        } else if c.is_negative() {
            neg += 1;
        }
    }
    pos * neg
}

/// Exact projection of `system` along `var`.
pub fn fm_eliminate(system: &InequalitySystem, var: Variable) -> Result<InequalitySystem, PolyError> {
    if !system.variables.contains(&var) {
        return Err(PolyError::UnknownVariable(var));
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut rows = Vec::new();
    for r in &system.rows {
        let c = r.coefficient(var);
        if c.is_positive() {
            pos.push((r, c));
        } else if c.is_negative() {
            neg.push((r, c));
        } else {
            rows.push(r.clone());
        }
    }
    for (p, pc) in &pos {
        for (n, nc) in &neg {
            let scale_p = nc.abs();
            let mut coefs: Vec<(Variable, Rational)> = Vec::new();
            for (v, c) in &p.coefficients {
                coefs.push((*v, c * &scale_p));
            }
            for (v, c) in &n.coefficients {
                coefs.push((*v, c * pc));
            }
            let constant = &(&p.constant * &scale_p) + &(&n.constant * pc);
            let combined = AffineInequality::new(coefs, constant);
            debug_assert!(combined.coefficient(var).is_zero());
            rows.push(combined);
        }
    }
    Ok(InequalitySystem::new(
        system.variables.iter().copied().filter(|v| *v != var),
        rows,
    ))
}

/// Maximizes a row's left side over the remaining rows. `None` when the
/// remaining rows leave it unbounded.
fn max_lhs(
    vars: &[Variable],
    target: &AffineInequality,
    others: &[&AffineInequality],
) -> Result<Option<Result<Rational, ()>>, PolyError> {
    let index: BTreeMap<Variable, usize> = vars.iter().enumerate().map(|(n, v)| (*v, n)).collect();
    let dense = |r: &AffineInequality| {
        let mut row = vec![Rational::zero(); vars.len()];
        for (v, c) in &r.coefficients {
            row[index[v]] = c.clone();
        }
        row
    };
    let lp = LinearProgram::new(
        dense(target),
        others.iter().map(|r| dense(r)).collect(),
        others.iter().map(|r| r.constant.clone()).collect(),
        vec![VarSign::Free; vars.len()],
    )?;
    Ok(match lp.optimize()? {
        LpOutcome::Optimal { value, .. } => Some(Ok(value)),
        LpOutcome::Infeasible { .. } => Some(Err(())),
        LpOutcome::Unbounded { .. } => None,
    })
}

/// Drops every row implied by the rows kept so far, testing rows in
/// canonical order.
pub fn remove_redundant(system: &InequalitySystem) -> Result<InequalitySystem, PolyError> {
    let vars: Vec<Variable> = system.variables.iter().copied().collect();
    let mut kept = system.clone();
    for row in system.rows.iter() {
        let others = kept.without(row);
        let redundant = match max_lhs(&vars, row, &others)? {
            None => false,
            Some(Ok(value)) => value <= row.constant,
            // The other rows are already empty; anything is implied.
            Some(Err(())) => true,
        };
        if redundant {
            kept.rows.remove(row);
        }
    }
    Ok(kept)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FacetOptions {
    pub max_users: usize,
}

impl Default for FacetOptions {
    fn default() -> Self {
        FacetOptions {
            max_users: DEFAULT_MAX_USERS,
        }
    }
}

/// Eliminates every transfer variable, cheapest first (fewest generated
/// rows, ties by variable order), pruning redundancy after each step.
pub fn project_transfers(system: &InequalitySystem) -> Result<InequalitySystem, PolyError> {
    let mut current = remove_redundant(system)?;
    loop {
        let next = current
            .variables
            .iter()
            .copied()
            .filter(Variable::is_transfer)
            .min_by_key(|v| (elimination_cost(&current, *v), *v));
        let Some(var) = next else {
            return Ok(current);
        };
        current = remove_redundant(&fm_eliminate(&current, var)?)?;
    }
}

/// Irredundant half-space description of `C*(R*)` over the rates (and the
/// budgets, when symbolic).
pub fn latent_facets(
    k: usize,
    symbolic: bool,
    rstar: Option<&RateVector>,
    options: FacetOptions,
) -> Result<InequalitySystem, PolyError> {
    if k > options.max_users {
        return Err(PolyError::SizeLimit {
            k,
            limit: options.max_users,
        });
    }
    project_transfers(&build_region_system(k, symbolic, rstar)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Vertex3 {
    pub point: [Rational; 3],
    /// Indices (in canonical row order) of the rows tight at this vertex.
    pub tight: Vec<usize>,
}

fn solve3(rows: [&AffineInequality; 3]) -> Option<[Rational; 3]> {
    let vars = [Variable::Rate(1), Variable::Rate(2), Variable::Rate(3)];
    let m: Vec<Vec<Rational>> = rows
        .iter()
        .map(|r| vars.iter().map(|v| r.coefficient(*v)).collect())
        .collect();
    let b: Vec<Rational> = rows.iter().map(|r| r.constant.clone()).collect();
    let det3 = |m: &Vec<Vec<Rational>>| {
        &(&(&m[0][0] * &(&(&m[1][1] * &m[2][2]) - &(&m[1][2] * &m[2][1])))
            - &(&m[0][1] * &(&(&m[1][0] * &m[2][2]) - &(&m[1][2] * &m[2][0]))))
            + &(&m[0][2] * &(&(&m[1][0] * &m[2][1]) - &(&m[1][1] * &m[2][0])))
    };
    let d = det3(&m);
    if d.is_zero() {
        return None;
    }
    let solve_col = |col: usize| {
        let mut mc = m.clone();
        for (r, row) in mc.iter_mut().enumerate() {
            row[col] = b[r].clone();
        }
        &det3(&mc) / &d
    };
    Some([solve_col(0), solve_col(1), solve_col(2)])
}

/// All vertices of a bounded system over `R_1, R_2, R_3`.
pub fn vertices3(system: &InequalitySystem) -> Result<Vec<Vertex3>, PolyError> {
    let dims = [Variable::Rate(1), Variable::Rate(2), Variable::Rate(3)];
    if let Some(v) = system.variables.iter().find(|v| !dims.contains(v)) {
        return Err(PolyError::NotThreeDimensional(*v));
    }
    let rows: Vec<&AffineInequality> = system.rows.iter().collect();
    for v in dims {
        for sign in [Rational::one(), -Rational::one()] {
            let probe = AffineInequality {
                coefficients: [(v, sign)].into_iter().collect(),
                constant: Rational::zero(),
            };
            match max_lhs(&dims, &probe, &rows)? {
                None => return Err(PolyError::Unbounded(v)),
                Some(Err(())) => return Ok(Vec::new()),
                Some(Ok(_)) => {}
            }
        }
    }
    let mut points: BTreeSet<[Rational; 3]> = BTreeSet::new();
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            for c in b + 1..rows.len() {
                if let Some(p) = solve3([rows[a], rows[b], rows[c]]) {
                    let assignment: BTreeMap<Variable, Rational> =
                        dims.iter().copied().zip(p.iter().cloned()).collect();
                    if system.is_satisfied_by(&assignment) {
                        points.insert(p);
                    }
                }
            }
        }
    }
    Ok(points
        .into_iter()
        .map(|p| {
            let assignment: BTreeMap<Variable, Rational> =
                dims.iter().copied().zip(p.iter().cloned()).collect();
            let tight = rows
                .iter()
                .enumerate()
                .filter(|(_, r)| r.slack(&assignment).is_zero())
                .map(|(n, _)| n)
                .collect();
            Vertex3 { point: p, tight }
        })
        .collect())
}
