//! Dense two-phase primal simplex over exact rationals.
//!
//! Programs are `maximize c·x  subject to  A x <= b`, each variable either
//! non-negative or free. Entering and leaving variables follow Bland's
//! smallest-index rule, so the method cannot cycle.

use serde::Serialize;
use thiserror::Error;

use super::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarSign {
    NonNegative,
    Free,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LpError {
    #[error("constraint row {row} has width {width}, expected {expected}")]
    RowWidth {
        row: usize,
        width: usize,
        expected: usize,
    },
    #[error("{rows} constraint rows but {rhs} right-hand side entries")]
    RhsLength { rows: usize, rhs: usize },
    #[error("{signs} sign flags for {vars} variables")]
    SignLength { signs: usize, vars: usize },
    #[error("solver result failed exact verification: {0}")]
    Verification(&'static str),
}

/// `maximize objective·x  s.t.  rows·x <= rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearProgram {
    objective: Vec<Rational>,
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    signs: Vec<VarSign>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LpOutcome {
    /// `duals` has one non-negative multiplier per constraint row, with
    /// `duals·rhs == value`.
    Optimal {
        value: Rational,
        point: Vec<Rational>,
        duals: Vec<Rational>,
    },
    /// Non-negative row multipliers `y` with `y·A >= 0` on non-negative
    /// variables, `y·A == 0` on free ones and `y·b < 0`.
    Infeasible { certificate: Vec<Rational> },
    /// A feasible `point` and a `ray` along which the objective grows without
    /// bound while staying feasible.
    Unbounded {
        point: Vec<Rational>,
        ray: Vec<Rational>,
    },
}

impl LpOutcome {
    pub fn optimal_value(&self) -> Option<&Rational> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(value),
            _ => None,
        }
    }
}

impl LinearProgram {
    pub fn new(
        objective: Vec<Rational>,
        rows: Vec<Vec<Rational>>,
        rhs: Vec<Rational>,
        signs: Vec<VarSign>,
    ) -> Result<Self, LpError> {
        let n = objective.len();
        if signs.len() != n {
            return Err(LpError::SignLength {
                signs: signs.len(),
                vars: n,
            });
        }
        if rows.len() != rhs.len() {
            return Err(LpError::RhsLength {
                rows: rows.len(),
                rhs: rhs.len(),
            });
        }
        if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(LpError::RowWidth {
                row,
                width: r.len(),
                expected: n,
            });
        }
        Ok(LinearProgram {
            objective,
            rows,
            rhs,
            signs,
        })
    }

    /// All variables non-negative.
    pub fn nonnegative(
        objective: Vec<Rational>,
        rows: Vec<Vec<Rational>>,
        rhs: Vec<Rational>,
    ) -> Result<Self, LpError> {
        let signs = vec![VarSign::NonNegative; objective.len()];
        Self::new(objective, rows, rhs, signs)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[Rational] {
        &self.objective
    }

    pub fn rows(&self) -> &[Vec<Rational>] {
        &self.rows
    }

    pub fn rhs(&self) -> &[Rational] {
        &self.rhs
    }

    pub fn signs(&self) -> &[VarSign] {
        &self.signs
    }

    pub fn objective_at(&self, x: &[Rational]) -> Rational {
        dot(&self.objective, x)
    }

    /// Exact check of every row and sign constraint.
    pub fn is_feasible_point(&self, x: &[Rational]) -> bool {
        x.len() == self.num_vars()
            && self
                .signs
                .iter()
                .zip(x)
                .all(|(s, v)| *s == VarSign::Free || !v.is_negative())
            && self.rows.iter().zip(&self.rhs).all(|(r, b)| dot(r, x) <= *b)
    }

    /// Checks a Farkas certificate: returns the (negative) constant `c` of the
    /// derived contradiction `0 <= c`, or `None` if the multipliers are not a
    /// valid certificate.
    pub fn certificate_contradiction(&self, y: &[Rational]) -> Option<Rational> {
        if y.len() != self.num_rows() || y.iter().any(Rational::is_negative) {
            return None;
        }
        for (j, sign) in self.signs.iter().enumerate() {
            let combined: Rational = self.rows.iter().zip(y).map(|(r, w)| &r[j] * w).sum();
            let ok = match sign {
                VarSign::NonNegative => !combined.is_negative(),
                VarSign::Free => combined.is_zero(),
            };
            if !ok {
                return None;
            }
        }
        let c = dot(y, &self.rhs);
        c.is_negative().then_some(c)
    }

    pub fn optimize(&self) -> Result<LpOutcome, LpError> {
        let outcome = Tableau::build(self).solve();
        self.verify(&outcome)?;
        Ok(outcome)
    }

    fn verify(&self, outcome: &LpOutcome) -> Result<(), LpError> {
        match outcome {
            LpOutcome::Optimal {
                value,
                point,
                duals,
            } => {
                if !self.is_feasible_point(point) {
                    return Err(LpError::Verification("optimal point violates a constraint"));
                }
                if self.objective_at(point) != *value {
                    return Err(LpError::Verification("objective mismatch at optimal point"));
                }
                if duals.iter().any(Rational::is_negative) {
                    return Err(LpError::Verification("negative dual multiplier"));
                }
                for (j, sign) in self.signs.iter().enumerate() {
                    let reduced: Rational =
                        self.rows.iter().zip(duals).map(|(r, y)| &r[j] * y).sum::<Rational>()
                            - &self.objective[j];
                    let ok = match sign {
                        VarSign::NonNegative => !reduced.is_negative(),
                        VarSign::Free => reduced.is_zero(),
                    };
                    if !ok {
                        return Err(LpError::Verification("dual infeasible"));
                    }
                }
                if dot(duals, &self.rhs) != *value {
                    return Err(LpError::Verification("duality gap"));
                }
            }
            LpOutcome::Infeasible { certificate } => {
                if self.certificate_contradiction(certificate).is_none() {
                    return Err(LpError::Verification("invalid Farkas certificate"));
                }
            }
            LpOutcome::Unbounded { point, ray } => {
                if !self.is_feasible_point(point) {
                    return Err(LpError::Verification("unbounded witness point infeasible"));
                }
                let ray_ok = self
                    .signs
                    .iter()
                    .zip(ray)
                    .all(|(s, v)| *s == VarSign::Free || !v.is_negative())
                    && self.rows.iter().all(|r| !dot(r, ray).is_positive())
                    && self.objective_at(ray).is_positive();
                if !ray_ok {
                    return Err(LpError::Verification("invalid improving ray"));
                }
            }
        }
        Ok(())
    }
}

/// Convenience wrapper around [`LinearProgram::optimize`].
pub fn lp_optimize(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.optimize()
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Column {
    /// Original variable, with +1 or -1 orientation for split free variables.
    Structural { var: usize, negated: bool },
    Slack,
    Artificial,
}

struct Tableau {
    num_vars: usize,
    columns: Vec<Column>,
    /// `slack_col[r]` is the slack column of constraint row `r`.
    slack_col: Vec<usize>,
    /// `m` rows of `columns.len() + 1` entries; the last entry is the rhs.
    t: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    /// Reduced costs `z_j - c_j`, with the current objective value last.
    obj: Vec<Rational>,
    structural_cost: Vec<Rational>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.num_rows();
        let mut columns = Vec::new();
        let mut structural_cost = Vec::new();
        for (var, sign) in lp.signs.iter().enumerate() {
            columns.push(Column::Structural {
                var,
                negated: false,
            });
            structural_cost.push(lp.objective[var].clone());
            if *sign == VarSign::Free {
                columns.push(Column::Structural { var, negated: true });
                structural_cost.push(-&lp.objective[var]);
            }
        }
        let first_slack = columns.len();
        columns.extend(std::iter::repeat_n(Column::Slack, m));
        let slack_col: Vec<usize> = (first_slack..first_slack + m).collect();
        let flipped: Vec<bool> = lp.rhs.iter().map(Rational::is_negative).collect();
        let mut art_col = vec![usize::MAX; m];
        for r in 0..m {
            if flipped[r] {
                art_col[r] = columns.len();
                columns.push(Column::Artificial);
            }
        }
        let width = columns.len();
        let mut t = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        for r in 0..m {
            let sigma = if flipped[r] { -Rational::one() } else { Rational::one() };
            let mut row = vec![Rational::zero(); width + 1];
            for (c, col) in columns.iter().enumerate() {
                if let Column::Structural { var, negated } = col {
                    let a = &lp.rows[r][*var];
                    row[c] = if *negated { -a } else { a.clone() };
                    row[c] *= &sigma;
                }
            }
            row[slack_col[r]] = sigma.clone();
            row[width] = &lp.rhs[r] * &sigma;
            if flipped[r] {
                row[art_col[r]] = Rational::one();
                basis.push(art_col[r]);
            } else {
                basis.push(slack_col[r]);
            }
            t.push(row);
        }
        structural_cost.extend(std::iter::repeat_n(Rational::zero(), width - first_slack));
        Tableau {
            num_vars: lp.num_vars(),
            columns,
            slack_col,
            t,
            basis,
            obj: vec![Rational::zero(); width + 1],
            structural_cost,
        }
    }

    fn width(&self) -> usize {
        self.columns.len()
    }

    fn price(&mut self, costs: &[Rational]) {
        let w = self.width();
        let mut obj = vec![Rational::zero(); w + 1];
        for (r, row) in self.t.iter().enumerate() {
            let cb = &costs[self.basis[r]];
            if cb.is_zero() {
                continue;
            }
            for (o, v) in obj.iter_mut().zip(row) {
                if !v.is_zero() {
                    *o += &(cb * v);
                }
            }
        }
        for j in 0..w {
            obj[j] -= &costs[j];
        }
        self.obj = obj;
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let piv = self.t[pr][pc].clone();
        let prow: Vec<Rational> = self.t[pr].iter().map(|v| v / &piv).collect();
        for (r, row) in self.t.iter_mut().enumerate() {
            if r == pr {
                continue;
            }
            let f = row[pc].clone();
            if f.is_zero() {
                continue;
            }
            for (v, p) in row.iter_mut().zip(&prow) {
                if !p.is_zero() {
                    *v -= &(&f * p);
                }
            }
        }
        let f = self.obj[pc].clone();
        if !f.is_zero() {
            for (v, p) in self.obj.iter_mut().zip(&prow) {
                if !p.is_zero() {
                    *v -= &(&f * p);
                }
            }
        }
        self.t[pr] = prow;
        self.basis[pr] = pc;
    }

    /// Runs Bland's-rule iterations. Returns the entering column that proved
    /// unboundedness, if any.
    fn iterate(&mut self, allow_artificial: bool) -> Option<usize> {
        let w = self.width();
        loop {
            let entering = (0..w).find(|&j| {
                (allow_artificial || self.columns[j] != Column::Artificial)
                    && self.obj[j].is_negative()
            });
            let j = entering?;
            let mut best: Option<(usize, Rational)> = None;
            for (r, row) in self.t.iter().enumerate() {
                if !row[j].is_positive() {
                    continue;
                }
                let ratio = &row[w] / &row[j];
                let better = match &best {
                    None => true,
                    Some((br, bv)) => {
                        ratio < *bv || (ratio == *bv && self.basis[r] < self.basis[*br])
                    }
                };
                if better {
                    best = Some((r, ratio));
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, j),
                None => return Some(j),
            }
        }
    }

    fn column_values(&self) -> Vec<Rational> {
        let w = self.width();
        let mut vals = vec![Rational::zero(); w];
        for (r, &b) in self.basis.iter().enumerate() {
            vals[b] = self.t[r][w].clone();
        }
        vals
    }

    fn to_original(&self, colvals: &[Rational]) -> Vec<Rational> {
        let mut x = vec![Rational::zero(); self.num_vars];
        for (c, col) in self.columns.iter().enumerate() {
            if let Column::Structural { var, negated } = col {
                if *negated {
                    x[*var] -= &colvals[c];
                } else {
                    x[*var] += &colvals[c];
                }
            }
        }
        x
    }

    fn slack_prices(&self) -> Vec<Rational> {
        self.slack_col.iter().map(|&c| self.obj[c].clone()).collect()
    }

    fn solve(mut self) -> LpOutcome {
        let w = self.width();
        let has_artificial = self.columns.contains(&Column::Artificial);
        if has_artificial {
            let phase1: Vec<Rational> = self
                .columns
                .iter()
                .map(|c| {
                    if *c == Column::Artificial {
                        -Rational::one()
                    } else {
                        Rational::zero()
                    }
                })
                .collect();
            self.price(&phase1);
            // Phase one is bounded above by zero.
            let _ = self.iterate(true);
            if self.obj[w].is_negative() {
                return LpOutcome::Infeasible {
                    certificate: self.slack_prices(),
                };
            }
            for r in 0..self.t.len() {
                if self.columns[self.basis[r]] != Column::Artificial {
                    continue;
                }
                let replacement = (0..w)
                    .find(|&j| self.columns[j] != Column::Artificial && !self.t[r][j].is_zero());
                if let Some(j) = replacement {
                    self.pivot(r, j);
                }
            }
        }
        let costs = self.structural_cost.clone();
        self.price(&costs);
        if let Some(j) = self.iterate(false) {
            let point = self.to_original(&self.column_values());
            let mut dir = vec![Rational::zero(); w];
            dir[j] = Rational::one();
            for (r, &b) in self.basis.iter().enumerate() {
                dir[b] = -&self.t[r][j];
            }
            let ray = self.to_original(&dir);
            return LpOutcome::Unbounded { point, ray };
        }
        let point = self.to_original(&self.column_values());
        LpOutcome::Optimal {
            value: self.obj[w].clone(),
            point,
            duals: self.slack_prices(),
        }
    }
}
