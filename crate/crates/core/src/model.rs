//! Integer programming instances: polynomials with exact rational
//! coefficients, inequality constraints, integer box domains, the
//! brute-force oracle and instance-hardness metrics.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational number used for every coefficient and bound.
pub type Rational = BigRational;

/// Default cap on the number of assignments the brute-force oracle enumerates.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

pub fn rational(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// `"7"` for integers, `"13/2"` otherwise.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Serializes rationals as strings in [`format_rational`] form.
pub mod rational_serde {
    use serde::ser::{SerializeSeq, Serializer};

    use super::{format_rational, Rational};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn option<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_some(&format_rational(r)),
            None => s.serialize_none(),
        }
    }

    pub fn option_vec<S: Serializer>(v: &Option<Vec<Rational>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => {
                let mut seq = s.serialize_seq(Some(v.len()))?;
                for r in v {
                    seq.serialize_element(&format_rational(r))?;
                }
                seq.end()
            }
            None => s.serialize_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("variable index {0} has no assigned value")]
    Unassigned(usize),
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("variable `{name}` has an empty domain {lo}..{hi}")]
    EmptyDomain { name: String, lo: i64, hi: i64 },
    #[error("reference to undeclared variable index {0}")]
    UndeclaredVariable(usize),
    #[error("constraint `{0}` has no variable terms")]
    EmptyConstraint(String),
    #[error("search space of {size} assignments exceeds the cap of {cap}")]
    CapExceeded { size: u128, cap: u128 },
}

/// A single product term `coefficient * x_a * x_b * ...`.
///
/// Factor indices may repeat to express powers; they are kept sorted so that
/// two monomials over the same multiset compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial {
    pub coefficient: Rational,
    factors: Vec<usize>,
}

impl Monomial {
    pub fn new(coefficient: Rational, mut factors: Vec<usize>) -> Self {
        factors.sort_unstable();
        Self {
            coefficient,
            factors,
        }
    }

    pub fn constant(coefficient: Rational) -> Self {
        Self::new(coefficient, Vec::new())
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn degree(&self) -> usize {
        self.factors.len()
    }

    pub fn is_constant(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn evaluate(&self, x: &[i64]) -> Result<Rational, ModelError> {
        let mut product = BigInt::one();
        for &f in &self.factors {
            let v = *x.get(f).ok_or(ModelError::Unassigned(f))?;
            product *= v;
        }
        Ok(&self.coefficient * Rational::from_integer(product))
    }

    pub fn evaluate_rational(&self, x: &[Rational]) -> Result<Rational, ModelError> {
        let mut acc = self.coefficient.clone();
        for &f in &self.factors {
            acc *= x.get(f).ok_or(ModelError::Unassigned(f))?;
        }
        Ok(acc)
    }
}

/// Sum of monomials in canonical form: like terms merged, zero terms dropped,
/// terms ordered by their sorted factor lists (constants first).
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct Polynomial {
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(terms: impl IntoIterator<Item = Monomial>) -> Self {
        let mut terms: Vec<Monomial> = terms.into_iter().collect();
        terms.sort_by(|a, b| a.factors.cmp(&b.factors));
        let mut merged: Vec<Monomial> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if last.factors == t.factors => last.coefficient += t.coefficient,
                _ => merged.push(t),
            }
        }
        merged.retain(|m| !m.coefficient.is_zero());
        Self { terms: merged }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Linear polynomial `Σ coefficients[i] * x_i`.
    pub fn linear(coefficients: &[i64]) -> Self {
        Self::new(
            coefficients
                .iter()
                .enumerate()
                .map(|(i, &c)| Monomial::new(rational(c), vec![i])),
        )
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn is_linear(&self) -> bool {
        self.degree() <= 1
    }

    pub fn variables(&self) -> BTreeSet<usize> {
        self.terms
            .iter()
            .flat_map(|t| t.factors.iter().copied())
            .collect()
    }

    pub fn constant_term(&self) -> Rational {
        self.terms
            .iter()
            .find(|t| t.is_constant())
            .map(|t| t.coefficient.clone())
            .unwrap_or_else(Rational::zero)
    }

    /// Dense coefficient vector of the degree-one part, or `None` when the
    /// polynomial has a term of degree two or more.
    pub fn linear_coefficients(&self, n: usize) -> Option<Vec<Rational>> {
        let mut out = vec![Rational::zero(); n];
        for t in &self.terms {
            match t.factors.as_slice() {
                [] => {}
                [i] => out[*i] += &t.coefficient,
                _ => return None,
            }
        }
        Some(out)
    }

    pub fn scale(&self, k: &Rational) -> Self {
        Self::new(self.terms.iter().map(|t| Monomial {
            coefficient: &t.coefficient * k,
            factors: t.factors.clone(),
        }))
    }

    pub fn evaluate(&self, x: &[i64]) -> Result<Rational, ModelError> {
        self.terms
            .iter()
            .try_fold(Rational::zero(), |acc, t| Ok(acc + t.evaluate(x)?))
    }

    pub fn evaluate_rational(&self, x: &[Rational]) -> Result<Rational, ModelError> {
        self.terms
            .iter()
            .try_fold(Rational::zero(), |acc, t| Ok(acc + t.evaluate_rational(x)?))
    }

    /// Floating-point evaluation for screening only; exact checks use
    /// [`Polynomial::evaluate_rational`].
    pub fn evaluate_f64(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| to_f64(&t.coefficient) * t.factors.iter().map(|&f| x[f]).product::<f64>())
            .sum()
    }

    fn max_index(&self) -> Option<usize> {
        self.terms.iter().flat_map(|t| t.factors.last()).max().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl Sense {
    pub fn holds(self, lhs: &Rational, rhs: &Rational) -> bool {
        match self {
            Sense::Le => lhs <= rhs,
            Sense::Ge => lhs >= rhs,
        }
    }
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub name: String,
    pub lhs: Polynomial,
    pub sense: Sense,
    pub rhs: Rational,
}

impl Constraint {
    pub fn new(name: impl Into<String>, lhs: Polynomial, sense: Sense, rhs: Rational) -> Self {
        Self {
            name: name.into(),
            lhs,
            sense,
            rhs,
        }
    }

    pub fn check(&self, x: &[i64]) -> Result<bool, ModelError> {
        Ok(self.sense.holds(&self.lhs.evaluate(x)?, &self.rhs))
    }

    pub fn check_rational(&self, x: &[Rational]) -> Result<bool, ModelError> {
        Ok(self.sense.holds(&self.lhs.evaluate_rational(x)?, &self.rhs))
    }

    pub fn variables(&self) -> BTreeSet<usize> {
        self.lhs.variables()
    }
}

/// Inclusive integer range `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Domain {
    pub lo: i64,
    pub hi: i64,
}

impl Domain {
    pub fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    pub fn size(&self) -> usize {
        (self.hi - self.lo + 1).max(0) as usize
    }

    pub fn contains(&self, v: i64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }

    pub fn values(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    pub fn is_binary(&self) -> bool {
        self.lo == 0 && self.hi == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Linearity {
    Linear,
    Nonlinear,
}

/// A maximization problem over integer variables with box domains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    variables: Vec<Variable>,
    cost: Polynomial,
    constraints: Vec<Constraint>,
}

impl Problem {
    pub fn new(
        variables: Vec<Variable>,
        cost: Polynomial,
        constraints: Vec<Constraint>,
    ) -> Result<Self, ModelError> {
        let mut seen = HashSet::new();
        for v in &variables {
            if !seen.insert(v.name.as_str()) {
                return Err(ModelError::DuplicateVariable(v.name.clone()));
            }
            if v.domain.lo > v.domain.hi {
                return Err(ModelError::EmptyDomain {
                    name: v.name.clone(),
                    lo: v.domain.lo,
                    hi: v.domain.hi,
                });
            }
        }
        let n = variables.len();
        for poly in std::iter::once(&cost).chain(constraints.iter().map(|c| &c.lhs)) {
            if let Some(i) = poly.max_index().filter(|&i| i >= n) {
                return Err(ModelError::UndeclaredVariable(i));
            }
        }
        if let Some(c) = constraints.iter().find(|c| c.lhs.variables().is_empty()) {
            return Err(ModelError::EmptyConstraint(c.name.clone()));
        }
        Ok(Self {
            variables,
            cost,
            constraints,
        })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn domains(&self) -> Vec<Domain> {
        self.variables.iter().map(|v| v.domain).collect()
    }

    pub fn cost(&self) -> &Polynomial {
        &self.cost
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn constraint_index(&self, name: &str) -> Option<usize> {
        self.constraints.iter().position(|c| c.name == name)
    }

    /// Same problem with the cost multiplied by `k`.
    pub fn with_scaled_cost(&self, k: &Rational) -> Self {
        Self {
            cost: self.cost.scale(k),
            ..self.clone()
        }
    }

    pub fn evaluate_cost(&self, x: &[i64]) -> Result<Rational, ModelError> {
        self.cost.evaluate(x)
    }

    pub fn is_feasible(&self, x: &[i64]) -> Result<bool, ModelError> {
        for c in &self.constraints {
            if !c.check(x)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Number of points in the integer box, saturating at `u128::MAX`.
    pub fn search_space_size(&self) -> u128 {
        self.variables
            .iter()
            .try_fold(1u128, |acc, v| acc.checked_mul(v.domain.size() as u128))
            .unwrap_or(u128::MAX)
    }

    /// Iterates the integer box in lexicographic order.
    pub fn assignments(&self) -> Assignments {
        Assignments::new(self.domains())
    }

    pub fn classify(&self) -> Linearity {
        let linear = self.cost.is_linear() && self.constraints.iter().all(|c| c.lhs.is_linear());
        if linear {
            Linearity::Linear
        } else {
            Linearity::Nonlinear
        }
    }
}

/// Odometer over the integer box, last variable fastest.
pub struct Assignments {
    domains: Vec<Domain>,
    next: Option<Vec<i64>>,
}

impl Assignments {
    fn new(domains: Vec<Domain>) -> Self {
        let next = Some(domains.iter().map(|d| d.lo).collect());
        Self { domains, next }
    }
}

impl Iterator for Assignments {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for i in (0..succ.len()).rev() {
            if succ[i] < self.domains[i].hi {
                succ[i] += 1;
                self.next = Some(succ);
                return Some(current);
            }
            succ[i] = self.domains[i].lo;
        }
        Some(current)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BruteForce {
    Optimal {
        value: Rational,
        argmax: Vec<Vec<i64>>,
    },
    Infeasible,
}

impl BruteForce {
    pub fn value(&self) -> Option<&Rational> {
        match self {
            BruteForce::Optimal { value, .. } => Some(value),
            BruteForce::Infeasible => None,
        }
    }
}

/// Exhaustive search for the maximum of the cost over all feasible points.
/// Every maximizing assignment is returned, in lexicographic order.
pub fn brute_force_optimum(p: &Problem, cap: u128) -> Result<BruteForce, ModelError> {
    let size = p.search_space_size();
    if size > cap {
        return Err(ModelError::CapExceeded { size, cap });
    }
    let mut best: Option<(Rational, Vec<Vec<i64>>)> = None;
    for x in p.assignments() {
        if !p.is_feasible(&x)? {
            continue;
        }
        let v = p.evaluate_cost(&x)?;
        match &mut best {
            Some((bv, args)) if *bv == v => args.push(x),
            Some((bv, _)) if *bv > v => {}
            _ => best = Some((v, vec![x])),
        }
    }
    Ok(match best {
        Some((value, argmax)) => BruteForce::Optimal { value, argmax },
        None => BruteForce::Infeasible,
    })
}

/// Relative continuous relaxation gap, in percent.
pub fn metric_b1(v_int: &Rational, v_cont: &Rational) -> f64 {
    let denom = std::cmp::max(v_int.abs(), ratio(1, 1000));
    to_f64(&((v_int - v_cont).abs() / denom * rational(100)))
}

/// Variables appearing in a monomial of total degree >= 2, in cost or any
/// constraint. Each variable counts once.
pub fn nonlinear_variables(p: &Problem) -> BTreeSet<usize> {
    std::iter::once(p.cost())
        .chain(p.constraints().iter().map(|c| &c.lhs))
        .flat_map(|poly| poly.terms())
        .filter(|t| t.degree() >= 2)
        .flat_map(|t| t.factors().iter().copied())
        .collect()
}

/// Degree of non-linearity, in percent.
pub fn metric_b2(p: &Problem) -> f64 {
    if p.num_variables() == 0 {
        return 0.0;
    }
    nonlinear_variables(p).len() as f64 / p.num_variables() as f64 * 100.0
}

/// Discrete density, in percent. Every variable here is integer, so this is
/// 100 for any non-empty problem; the split into binary and general integer
/// counts is still reported.
pub fn metric_b3(p: &Problem) -> f64 {
    let counts = VariableCounts::of(p);
    if counts.n_tot == 0 {
        return 0.0;
    }
    (counts.n_int + counts.n_bin) as f64 / counts.n_tot as f64 * 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VariableCounts {
    pub n_tot: usize,
    /// General (non-binary) integer variables.
    pub n_int: usize,
    /// Variables with domain exactly {0, 1}.
    pub n_bin: usize,
}

impl VariableCounts {
    pub fn of(p: &Problem) -> Self {
        let n_bin = p.variables().iter().filter(|v| v.domain.is_binary()).count();
        Self {
            n_tot: p.num_variables(),
            n_int: p.num_variables() - n_bin,
            n_bin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub v_int: Rational,
    pub v_cont: Rational,
    pub counts: VariableCounts,
}

impl Metrics {
    pub fn compute(p: &Problem, v_int: Rational, v_cont: Rational) -> Self {
        Self {
            b1: metric_b1(&v_int, &v_cont),
            b2: metric_b2(p),
            b3: metric_b3(p),
            counts: VariableCounts::of(p),
            v_int,
            v_cont,
        }
    }
}
