//! Continuous relaxation of a problem over its variable box.
//!
//! Linear problems are solved exactly by a two-phase simplex over rationals
//! with Bland's rule. Nonlinear problems get a multi-level grid search that
//! only ever reports a lower bound on the relaxed optimum.

use std::cmp::Ordering;

use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ratio, rational, to_f64, Linearity, ModelError, Problem, Rational, Sense};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelaxationError {
    #[error("the simplex relaxation needs a linear problem")]
    Nonlinear,
    #[error("expected {expected} bound overrides, got {got}")]
    BoundCount { expected: usize, got: usize },
    #[error("grid search supports at most {max} variables, problem has {got}")]
    TooManyDimensions { max: usize, got: usize },
    #[error("grid level would evaluate {points} points, cap is {cap}")]
    GridTooLarge { points: u128, cap: u128 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Closed rational interval for one variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: Rational,
    pub hi: Rational,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Self {
        Self { lo, hi }
    }

    pub fn integer(lo: i64, hi: i64) -> Self {
        Self::new(rational(lo), rational(hi))
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }
}

/// The box spanned by the declared integer domains.
pub fn domain_box(p: &Problem) -> Vec<Interval> {
    p.variables()
        .iter()
        .map(|v| Interval::integer(v.domain.lo, v.domain.hi))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Present when `status` is optimal.
    pub value: Option<Rational>,
    pub point: Option<Vec<Rational>>,
}

impl LpSolution {
    fn without_point(status: LpStatus) -> Self {
        Self {
            status,
            value: None,
            point: None,
        }
    }
}

/// Dense simplex tableau over rationals.
///
/// Every row reads `Σ rows[i][j] * v_j = rows[i][rhs]` with `basis[i]` the
/// basic column of row `i`. `obj` holds reduced costs; its last entry is the
/// negated objective value.
struct Tableau {
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    obj: Vec<Rational>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.ncols
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v /= &p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v -= &f * pv;
            }
        }
        if !self.obj[c].is_zero() {
            let f = self.obj[c].clone();
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= &f * pv;
            }
        }
        self.basis[r] = c;
    }

    /// Loads `cost` (one entry per column) as the objective, expressed in
    /// terms of the current non-basic columns.
    fn set_objective(&mut self, cost: &[Rational]) {
        let mut obj: Vec<Rational> = cost.to_vec();
        obj.push(Rational::zero());
        for (i, &b) in self.basis.iter().enumerate() {
            if cost[b].is_zero() {
                continue;
            }
            let f = cost[b].clone();
            for (v, rv) in obj.iter_mut().zip(&self.rows[i]) {
                *v -= &f * rv;
            }
        }
        self.obj = obj;
    }

    /// Maximizes the loaded objective. Columns with `allowed[j] == false`
    /// never enter. Returns `false` when unbounded.
    fn optimize(&mut self, allowed: &[bool]) -> bool {
        let rhs = self.rhs();
        loop {
            // Bland: lowest-index improving column, then lowest-index basic
            // variable among tied ratios.
            let Some(c) = (0..self.ncols).find(|&j| allowed[j] && self.obj[j].is_positive())
            else {
                return true;
            };
            let mut leave: Option<(usize, Rational)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if !row[c].is_positive() {
                    continue;
                }
                let ratio = &row[rhs] / &row[c];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => match ratio.cmp(lr) {
                        Ordering::Less => true,
                        Ordering::Equal => self.basis[i] < self.basis[*li],
                        Ordering::Greater => false,
                    },
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }
}

/// Exact optimum of the linear relaxation over `bounds` (or the domain box
/// when `bounds` is empty), intersected with the problem's constraints.
pub fn solve_lp_relaxation(p: &Problem, bounds: &[Interval]) -> Result<LpSolution, RelaxationError> {
    if p.classify() != Linearity::Linear {
        return Err(RelaxationError::Nonlinear);
    }
    let n = p.num_variables();
    let domain = domain_box(p);
    if !bounds.is_empty() && bounds.len() != n {
        return Err(RelaxationError::BoundCount {
            expected: n,
            got: bounds.len(),
        });
    }
    let bounds: Vec<Interval> = if bounds.is_empty() {
        domain
    } else {
        domain
            .into_iter()
            .zip(bounds)
            .map(|(d, b)| Interval::new(d.lo.max(b.lo.clone()), d.hi.min(b.hi.clone())))
            .collect()
    };
    if bounds.iter().any(Interval::is_empty) {
        return Ok(LpSolution::without_point(LpStatus::Infeasible));
    }

    // Shift to y = x - lo so that 0 <= y <= hi - lo, then write every row as
    // g.y <= h.
    let mut rows: Vec<(Vec<Rational>, Rational)> = Vec::new();
    for c in p.constraints() {
        let a = c.lhs.linear_coefficients(n).expect("linear");
        let shift: Rational = a.iter().zip(&bounds).map(|(ai, b)| ai * &b.lo).sum();
        let h = &c.rhs - c.lhs.constant_term() - shift;
        match c.sense {
            Sense::Le => rows.push((a, h)),
            Sense::Ge => rows.push((a.iter().map(|v| -v).collect(), -h)),
        }
    }
    for (j, b) in bounds.iter().enumerate() {
        let mut g = vec![Rational::zero(); n];
        g[j] = rational(1);
        rows.push((g, &b.hi - &b.lo));
    }

    let m = rows.len();
    let artificial_rows: Vec<usize> = (0..m).filter(|&i| rows[i].1.is_negative()).collect();
    let ncols = n + m + artificial_rows.len();
    let mut tableau = Tableau {
        rows: Vec::with_capacity(m),
        basis: Vec::with_capacity(m),
        obj: Vec::new(),
        ncols,
    };
    let mut next_art = n + m;
    for (i, (g, h)) in rows.into_iter().enumerate() {
        let mut row = vec![Rational::zero(); ncols + 1];
        if h.is_negative() {
            // -g.y - s = -h > 0, with an artificial basic column
            for (j, gj) in g.iter().enumerate() {
                row[j] = -gj;
            }
            row[n + i] = rational(-1);
            row[next_art] = rational(1);
            row[ncols] = -h;
            tableau.basis.push(next_art);
            next_art += 1;
        } else {
            row[..n].clone_from_slice(&g);
            row[n + i] = rational(1);
            row[ncols] = h;
            tableau.basis.push(n + i);
        }
        tableau.rows.push(row);
    }

    if !artificial_rows.is_empty() {
        let mut phase1 = vec![Rational::zero(); ncols];
        for c in phase1.iter_mut().skip(n + m) {
            *c = rational(-1);
        }
        tableau.set_objective(&phase1);
        tableau.optimize(&vec![true; ncols]);
        if !tableau.obj[ncols].is_zero() {
            return Ok(LpSolution::without_point(LpStatus::Infeasible));
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tableau.rows.len() {
            if tableau.basis[i] >= n + m {
                match (0..n + m).find(|&j| !tableau.rows[i][j].is_zero()) {
                    Some(j) => tableau.pivot(i, j),
                    None => {
                        tableau.rows.remove(i);
                        tableau.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let cost = p.cost().linear_coefficients(n).expect("linear");
    let mut phase2 = vec![Rational::zero(); ncols];
    phase2[..n].clone_from_slice(&cost);
    tableau.set_objective(&phase2);
    let allowed: Vec<bool> = (0..ncols).map(|j| j < n + m).collect();
    if !tableau.optimize(&allowed) {
        return Ok(LpSolution::without_point(LpStatus::Unbounded));
    }

    let mut point: Vec<Rational> = bounds.iter().map(|b| b.lo.clone()).collect();
    for (i, &b) in tableau.basis.iter().enumerate() {
        if b < n {
            point[b] += &tableau.rows[i][ncols];
        }
    }
    let value = p.cost().evaluate_rational(&point)?;
    Ok(LpSolution {
        status: LpStatus::Optimal,
        value: Some(value),
        point: Some(point),
    })
}

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub initial_step: Rational,
    /// Number of local refinements after the initial full-box pass.
    pub levels: usize,
    /// Step shrink factor per refinement; each refinement spans
    /// `±factor` fine steps around the incumbent.
    pub factor: u32,
    pub max_dimensions: usize,
    pub max_points_per_level: u128,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            initial_step: ratio(1, 10),
            levels: 3,
            factor: 10,
            max_dimensions: 6,
            max_points_per_level: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GridResult {
    /// Best grid point found. `value` is a lower bound on the relaxed optimum.
    Feasible {
        value: Rational,
        point: Vec<Rational>,
        final_step: Rational,
    },
    InfeasibleAtResolution,
}

impl GridResult {
    pub fn value(&self) -> Option<&Rational> {
        match self {
            GridResult::Feasible { value, .. } => Some(value),
            GridResult::InfeasibleAtResolution => None,
        }
    }
}

struct Axis {
    exact: Vec<Rational>,
    approx: Vec<f64>,
}

impl Axis {
    fn new(exact: Vec<Rational>) -> Self {
        let approx = exact.iter().map(to_f64).collect();
        Self { exact, approx }
    }
}

fn lex_cmp(a: &[Rational], b: &[Rational]) -> Ordering {
    a.iter().cmp(b.iter())
}

/// Picks the best feasible point of a tensor grid: highest exact cost, ties
/// broken by the lexicographically smallest point. Floating point is used
/// only to discard clearly infeasible or clearly inferior points.
fn best_on_grid(p: &Problem, axes: &[Axis]) -> Result<Option<(Rational, Vec<Rational>)>, ModelError> {
    const SLACK: f64 = 1e-9;
    let dims: Vec<usize> = axes.iter().map(|a| a.exact.len()).collect();
    let total: usize = dims.iter().product();
    let decode = |mut k: usize| -> Vec<usize> {
        let mut idx = vec![0; dims.len()];
        for j in (0..dims.len()).rev() {
            idx[j] = k % dims[j];
            k /= dims[j];
        }
        idx
    };
    let exact_point = |idx: &[usize]| -> Vec<Rational> {
        idx.iter().zip(axes).map(|(&i, a)| a.exact[i].clone()).collect()
    };
    let exact_feasible = |x: &[Rational]| -> Result<bool, ModelError> {
        for c in p.constraints() {
            if !c.check_rational(x)? {
                return Ok(false);
            }
        }
        Ok(true)
    };

    // Screening pass: f64 cost of every point that is not clearly infeasible.
    let screened: Vec<(usize, f64)> = (0..total)
        .into_par_iter()
        .filter_map(|k| {
            let idx = decode(k);
            let x: Vec<f64> = idx.iter().zip(axes).map(|(&i, a)| a.approx[i]).collect();
            let clearly_infeasible = p.constraints().iter().any(|c| {
                let lhs = c.lhs.evaluate_f64(&x);
                let rhs = to_f64(&c.rhs);
                let tol = SLACK * (1.0 + lhs.abs().max(rhs.abs()));
                match c.sense {
                    Sense::Le => lhs > rhs + tol,
                    Sense::Ge => lhs < rhs - tol,
                }
            });
            (!clearly_infeasible).then(|| (k, p.cost().evaluate_f64(&x)))
        })
        .collect();

    let mut candidates = screened;
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut best: Option<(Rational, Vec<Rational>)> = None;
    for (k, approx) in candidates {
        if let Some((bv, _)) = &best {
            let bf = to_f64(bv);
            if approx < bf - SLACK * (1.0 + bf.abs()) {
                break;
            }
        }
        let x = exact_point(&decode(k));
        if !exact_feasible(&x)? {
            continue;
        }
        let v = p.cost().evaluate_rational(&x)?;
        let better = match &best {
            None => true,
            Some((bv, bx)) => v > *bv || (v == *bv && lex_cmp(&x, bx) == Ordering::Less),
        };
        if better {
            best = Some((v, x));
        }
    }
    Ok(best)
}

/// Multi-level grid search for the relaxed optimum. Works for nonlinear
/// problems; the result is a feasible point, hence a lower bound.
pub fn solve_relaxation_grid(p: &Problem, config: &GridConfig) -> Result<GridResult, RelaxationError> {
    let n = p.num_variables();
    if n > config.max_dimensions {
        return Err(RelaxationError::TooManyDimensions {
            max: config.max_dimensions,
            got: n,
        });
    }
    let domain = domain_box(p);
    let check_size = |axes: &[Axis]| -> Result<(), RelaxationError> {
        let points = axes
            .iter()
            .try_fold(1u128, |acc, a| acc.checked_mul(a.exact.len() as u128))
            .unwrap_or(u128::MAX);
        if points > config.max_points_per_level {
            return Err(RelaxationError::GridTooLarge {
                points,
                cap: config.max_points_per_level,
            });
        }
        Ok(())
    };

    let mut step = config.initial_step.clone();
    let axes: Vec<Axis> = domain
        .iter()
        .map(|d| {
            let mut values = Vec::new();
            let mut v = d.lo.clone();
            while v <= d.hi {
                values.push(v.clone());
                v += &step;
            }
            if values.last() != Some(&d.hi) {
                values.push(d.hi.clone());
            }
            Axis::new(values)
        })
        .collect();
    check_size(&axes)?;
    let Some((mut best_value, mut best_point)) = best_on_grid(p, &axes)? else {
        return Ok(GridResult::InfeasibleAtResolution);
    };

    let factor = rational(i64::from(config.factor));
    for _ in 0..config.levels {
        step /= &factor;
        let reach = i64::from(config.factor);
        let axes: Vec<Axis> = best_point
            .iter()
            .zip(&domain)
            .map(|(c, d)| {
                Axis::new(
                    (-reach..=reach)
                        .map(|k| c + &step * rational(k))
                        .filter(|v| *v >= d.lo && *v <= d.hi)
                        .collect(),
                )
            })
            .collect();
        check_size(&axes)?;
        // The incumbent lies on this grid, so a result always exists.
        if let Some((v, x)) = best_on_grid(p, &axes)? {
            if v > best_value || (v == best_value && lex_cmp(&x, &best_point) == Ordering::Less) {
                best_value = v;
                best_point = x;
            }
        }
    }
    Ok(GridResult::Feasible {
        value: best_value,
        point: best_point,
        final_step: step,
    })
}

/// Relaxed optimum for the hardness metric: exact simplex for linear
/// problems, grid lower bound otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RelaxedValue {
    Exact(Rational),
    GridLowerBound(Rational),
    Infeasible,
}

pub fn relaxed_value(p: &Problem, grid: &GridConfig) -> Result<RelaxedValue, RelaxationError> {
    match p.classify() {
        Linearity::Linear => {
            let lp = solve_lp_relaxation(p, &[])?;
            Ok(match lp.value {
                Some(v) => RelaxedValue::Exact(v),
                None => RelaxedValue::Infeasible,
            })
        }
        Linearity::Nonlinear => Ok(match solve_relaxation_grid(p, grid)? {
            GridResult::Feasible { value, .. } => RelaxedValue::GridLowerBound(value),
            GridResult::InfeasibleAtResolution => RelaxedValue::Infeasible,
        }),
    }
}
