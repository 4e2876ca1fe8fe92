//! Maps variables to manifolds of levels and constraints to coupling
//! templates.
//!
//! Each variable owns one manifold with one level per domain value. Each
//! constraint gets a template listing which level pairs it couples: internal
//! slots join levels of one manifold, external slots join two manifolds.
//! Levels whose value cannot satisfy the constraint under any completion of
//! the other variables are left out of that constraint's template.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Constraint, Domain, ModelError, Problem, Rational, Sense};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("variable {variable} does not appear in constraint `{constraint}`")]
    NotInConstraint { variable: usize, constraint: String },
    #[error("constraint `{constraint}`: every value of variable {variable} is infeasible")]
    Unsatisfiable { constraint: String, variable: usize },
    #[error("enumerating {size} completions exceeds the cap of {cap}")]
    CapExceeded { size: u128, cap: u128 },
    #[error("invalid explicit coupling for constraint {constraint}: {reason}")]
    InvalidCoupling { constraint: usize, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Default cap on completions enumerated for nonlinear constraints.
pub const DEFAULT_COMPLETION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifold {
    pub variable: usize,
    /// Value encoded by level 0; level `k` encodes `lo + k`.
    pub lo: i64,
    pub levels: usize,
    /// Global index of level 0.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelScheme {
    manifolds: Vec<Manifold>,
    dimension: usize,
}

impl LevelScheme {
    pub fn manifolds(&self) -> &[Manifold] {
        &self.manifolds
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn global_index(&self, manifold: usize, level: usize) -> usize {
        self.manifolds[manifold].offset + level
    }

    /// `(manifold, level)` of a global index.
    pub fn locate(&self, global: usize) -> (usize, usize) {
        let m = self
            .manifolds
            .partition_point(|mf| mf.offset + mf.levels <= global);
        (m, global - self.manifolds[m].offset)
    }

    pub fn value(&self, manifold: usize, level: usize) -> i64 {
        self.manifolds[manifold].lo + level as i64
    }

    pub fn level_of(&self, manifold: usize, value: i64) -> Option<usize> {
        let mf = &self.manifolds[manifold];
        let k = value.checked_sub(mf.lo)?;
        (0..mf.levels as i64).contains(&k).then_some(k as usize)
    }
}

pub fn build_level_scheme(p: &Problem) -> LevelScheme {
    let mut offset = 0;
    let manifolds = p
        .variables()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let m = Manifold {
                variable: i,
                lo: v.domain.lo,
                levels: v.domain.size(),
                offset,
            };
            offset += m.levels;
            m
        })
        .collect();
    LevelScheme {
        manifolds,
        dimension: offset,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CouplingSlot {
    /// Levels `i` and `j` of one manifold.
    Internal { manifold: usize, i: usize, j: usize },
    /// Level `level` of `manifold` and level `partner_level` of `partner`.
    External {
        manifold: usize,
        level: usize,
        partner: usize,
        partner_level: usize,
    },
}

impl CouplingSlot {
    /// Global indices of the two coupled levels.
    pub fn endpoints(&self, scheme: &LevelScheme) -> (usize, usize) {
        match *self {
            CouplingSlot::Internal { manifold, i, j } => {
                (scheme.global_index(manifold, i), scheme.global_index(manifold, j))
            }
            CouplingSlot::External {
                manifold,
                level,
                partner,
                partner_level,
            } => (
                scheme.global_index(manifold, level),
                scheme.global_index(partner, partner_level),
            ),
        }
    }

    fn touches(&self) -> [(usize, usize); 2] {
        match *self {
            CouplingSlot::Internal { manifold, i, j } => [(manifold, i), (manifold, j)],
            CouplingSlot::External {
                manifold,
                level,
                partner,
                partner_level,
            } => [(manifold, level), (partner, partner_level)],
        }
    }

    /// Same coupling regardless of endpoint order.
    fn canonical(&self) -> Self {
        match *self {
            CouplingSlot::Internal { manifold, i, j } => CouplingSlot::Internal {
                manifold,
                i: i.min(j),
                j: i.max(j),
            },
            CouplingSlot::External {
                manifold,
                level,
                partner,
                partner_level,
            } if (partner, partner_level) < (manifold, level) => CouplingSlot::External {
                manifold: partner,
                level: partner_level,
                partner: manifold,
                partner_level: level,
            },
            ext => ext,
        }
    }
}

impl fmt::Display for CouplingSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based manifolds, 0-based levels, as in the usual notation.
        match *self {
            CouplingSlot::Internal { manifold, i, j } => write!(f, "Ω^{}_{}{}", manifold + 1, i, j),
            CouplingSlot::External {
                manifold,
                level,
                partner,
                partner_level,
            } => write!(f, "Ω̃({},{};{},{})", manifold + 1, level, partner + 1, partner_level),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HamiltonianTemplate {
    pub constraint: usize,
    pub slots: Vec<CouplingSlot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InternalTopology {
    /// Lowest allowed level coupled to every other allowed level.
    #[default]
    Star,
    /// Consecutive allowed levels coupled pairwise.
    Chain,
}

/// External coupling given by variable index and level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExplicitCoupling {
    pub constraint: usize,
    pub from: (usize, usize),
    pub to: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExternalRule {
    /// Consecutive constraint variables `a -> b` (sorted by index) are joined
    /// at level `min(index, top)` of each manifold, where `index` is the
    /// 0-based variable index and `top` the highest allowed level.
    #[default]
    DiagonalChain,
    Explicit(Vec<ExplicitCoupling>),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CouplingPolicy {
    pub internal: InternalTopology,
    pub external: ExternalRule,
}

fn all_values<'a>(domains: &'a [Domain], vars: &'a [usize]) -> impl Iterator<Item = Vec<i64>> + 'a {
    let mut current: Option<Vec<i64>> = Some(vars.iter().map(|&v| domains[v].lo).collect());
    std::iter::from_fn(move || {
        let out = current.take()?;
        let mut succ = out.clone();
        for i in (0..succ.len()).rev() {
            if succ[i] < domains[vars[i]].hi {
                succ[i] += 1;
                current = Some(succ);
                break;
            }
            succ[i] = domains[vars[i]].lo;
        }
        Some(out)
    })
}

/// Values of `variable` for which no completion of the constraint's other
/// variables (within their domains) satisfies `c`.
pub fn singly_infeasible_values(
    c: &Constraint,
    variable: usize,
    domains: &[Domain],
    cap: u128,
) -> Result<BTreeSet<i64>, EncodingError> {
    let vars: Vec<usize> = c.variables().into_iter().collect();
    if !vars.contains(&variable) {
        return Err(EncodingError::NotInConstraint {
            variable,
            constraint: c.name.clone(),
        });
    }
    let domain = domains[variable];
    let mut out = BTreeSet::new();

    if let Some(coeffs) = c.lhs.linear_coefficients(domains.len()) {
        // Extremal completion: each other term at its own min (or max).
        let constant = c.lhs.constant_term();
        let mut rest_min = constant.clone();
        let mut rest_max = constant;
        for &j in vars.iter().filter(|&&j| j != variable) {
            let a = &coeffs[j];
            let lo = a * Rational::from_integer(domains[j].lo.into());
            let hi = a * Rational::from_integer(domains[j].hi.into());
            if lo <= hi {
                rest_min += lo;
                rest_max += hi;
            } else {
                rest_min += hi;
                rest_max += lo;
            }
        }
        for w in domain.values() {
            let own = &coeffs[variable] * Rational::from_integer(w.into());
            let infeasible = match c.sense {
                Sense::Le => own + &rest_min > c.rhs,
                Sense::Ge => own + &rest_max < c.rhs,
            };
            if infeasible {
                out.insert(w);
            }
        }
        return Ok(out);
    }

    let others: Vec<usize> = vars.iter().copied().filter(|&j| j != variable).collect();
    let size = others
        .iter()
        .try_fold(1u128, |acc, &j| acc.checked_mul(domains[j].size() as u128))
        .unwrap_or(u128::MAX);
    if size > cap {
        return Err(EncodingError::CapExceeded { size, cap });
    }
    let mut x = vec![0i64; domains.len()];
    for w in domain.values() {
        x[variable] = w;
        let mut satisfiable = false;
        for completion in all_values(domains, &others) {
            for (&j, &v) in others.iter().zip(&completion) {
                x[j] = v;
            }
            if c.check(&x)? {
                satisfiable = true;
                break;
            }
        }
        if !satisfiable {
            out.insert(w);
        }
    }
    Ok(out)
}

/// Levels of `variable` that remain coupled in `c`'s template.
pub fn allowed_levels(
    c: &Constraint,
    variable: usize,
    scheme: &LevelScheme,
    domains: &[Domain],
    cap: u128,
) -> Result<Vec<usize>, EncodingError> {
    let excluded = singly_infeasible_values(c, variable, domains, cap)?;
    let mf = &scheme.manifolds()[variable];
    Ok((0..mf.levels)
        .filter(|&k| !excluded.contains(&scheme.value(variable, k)))
        .collect())
}

/// Largest allowed level not above `target`, else the lowest allowed level.
fn nearest_allowed(allowed: &[usize], target: usize) -> usize {
    allowed
        .iter()
        .rev()
        .find(|&&k| k <= target)
        .copied()
        .unwrap_or(allowed[0])
}

pub fn build_constraint_template(
    p: &Problem,
    constraint: usize,
    scheme: &LevelScheme,
    policy: &CouplingPolicy,
    cap: u128,
) -> Result<HamiltonianTemplate, EncodingError> {
    let c = &p.constraints()[constraint];
    let domains = p.domains();
    let vars: Vec<usize> = c.variables().into_iter().collect();
    let mut allowed = Vec::with_capacity(vars.len());
    for &v in &vars {
        let levels = allowed_levels(c, v, scheme, &domains, cap)?;
        if levels.is_empty() {
            return Err(EncodingError::Unsatisfiable {
                constraint: c.name.clone(),
                variable: v,
            });
        }
        allowed.push(levels);
    }

    let mut slots = Vec::new();
    match &policy.external {
        ExternalRule::DiagonalChain => {
            for w in 0..vars.len().saturating_sub(1) {
                let (a, b) = (vars[w], vars[w + 1]);
                let pick = |v: usize, levels: &[usize]| {
                    let top = *levels.last().expect("non-empty");
                    nearest_allowed(levels, v.min(top))
                };
                slots.push(CouplingSlot::External {
                    manifold: a,
                    level: pick(a, &allowed[w]),
                    partner: b,
                    partner_level: pick(b, &allowed[w + 1]),
                });
            }
        }
        ExternalRule::Explicit(list) => {
            for e in list.iter().filter(|e| e.constraint == constraint) {
                let invalid = |reason: String| EncodingError::InvalidCoupling { constraint, reason };
                let (ma, la) = e.from;
                let (mb, lb) = e.to;
                if ma == mb {
                    return Err(invalid("endpoints lie in the same manifold".into()));
                }
                for (m, l) in [(ma, la), (mb, lb)] {
                    let Some(pos) = vars.iter().position(|&v| v == m) else {
                        return Err(invalid(format!("variable {m} is not in the constraint")));
                    };
                    if !allowed[pos].contains(&l) {
                        return Err(invalid(format!("level {l} of variable {m} is excluded or missing")));
                    }
                }
                slots.push(CouplingSlot::External {
                    manifold: ma,
                    level: la,
                    partner: mb,
                    partner_level: lb,
                });
            }
        }
    }
    for (&v, levels) in vars.iter().zip(&allowed) {
        match policy.internal {
            InternalTopology::Star => {
                for &k in &levels[1..] {
                    slots.push(CouplingSlot::Internal {
                        manifold: v,
                        i: levels[0],
                        j: k,
                    });
                }
            }
            InternalTopology::Chain => {
                for pair in levels.windows(2) {
                    slots.push(CouplingSlot::Internal {
                        manifold: v,
                        i: pair[0],
                        j: pair[1],
                    });
                }
            }
        }
    }

    let mut seen = HashSet::new();
    for s in &slots {
        if !seen.insert(s.canonical()) {
            return Err(EncodingError::InvalidCoupling {
                constraint,
                reason: format!("duplicate slot {s}"),
            });
        }
    }
    Ok(HamiltonianTemplate { constraint, slots })
}

pub fn build_templates(
    p: &Problem,
    scheme: &LevelScheme,
    policy: &CouplingPolicy,
) -> Result<Vec<HamiltonianTemplate>, EncodingError> {
    (0..p.constraints().len())
        .map(|i| build_constraint_template(p, i, scheme, policy, DEFAULT_COMPLETION_CAP))
        .collect()
}

/// Every `(manifold, level)` touched by some slot of `template`.
pub fn touched_levels(template: &HamiltonianTemplate) -> BTreeSet<(usize, usize)> {
    template.slots.iter().flat_map(|s| s.touches()).collect()
}

/// Whether `template` avoids every level excluded for its constraint.
pub fn respects_exclusions(p: &Problem, template: &HamiltonianTemplate) -> Result<bool, EncodingError> {
    let c = &p.constraints()[template.constraint];
    let domains = p.domains();
    for (m, l) in touched_levels(template) {
        if !c.variables().contains(&m) {
            continue;
        }
        let excluded = singly_infeasible_values(c, m, &domains, DEFAULT_COMPLETION_CAP)?;
        if excluded.contains(&(domains[m].lo + l as i64)) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::parser::parse_problem;

    fn internal(m: usize, i: usize, j: usize) -> CouplingSlot {
        CouplingSlot::Internal { manifold: m - 1, i, j }
    }

    fn external(m: usize, l: usize, r: usize, k: usize) -> CouplingSlot {
        CouplingSlot::External {
            manifold: m - 1,
            level: l,
            partner: r - 1,
            partner_level: k,
        }
    }

    #[test]
    fn level_schemes() {
        let s = build_level_scheme(&instances::p1());
        assert_eq!(s.manifolds().len(), 3);
        assert_eq!(s.dimension(), 9);
        assert_eq!(build_level_scheme(&instances::p3()).dimension(), 24);
        let single = parse_problem("var x in 0..1\nmaximize x").unwrap();
        assert_eq!(build_level_scheme(&single).dimension(), 2);
    }

    #[test]
    fn level_values_round_trip() {
        let p = parse_problem("var a in -1..1\nvar b in 3..6\nmaximize a + b").unwrap();
        let s = build_level_scheme(&p);
        for g in 0..s.dimension() {
            let (m, k) = s.locate(g);
            assert_eq!(s.global_index(m, k), g);
            assert_eq!(s.level_of(m, s.value(m, k)), Some(k));
        }
        assert_eq!(s.level_of(1, 7), None);
    }

    #[test]
    fn singly_infeasible_p1_c1() {
        let p1 = instances::p1();
        let c1 = &p1.constraints()[0];
        let d = p1.domains();
        assert_eq!(singly_infeasible_values(c1, 0, &d, 100).unwrap(), BTreeSet::from([2]));
        assert!(singly_infeasible_values(c1, 1, &d, 100).unwrap().is_empty());
        assert!(matches!(
            singly_infeasible_values(c1, 2, &d, 100),
            Err(EncodingError::NotInConstraint { .. })
        ));
    }

    #[test]
    fn singly_infeasible_ge_constraint() {
        let p3 = instances::p3();
        let c2 = &p3.constraints()[1];
        assert_eq!(singly_infeasible_values(c2, 7, &p3.domains(), 100).unwrap(), BTreeSet::from([0]));
        assert!(singly_infeasible_values(c2, 3, &p3.domains(), 100).unwrap().is_empty());
    }

    #[test]
    fn singly_infeasible_nonlinear() {
        let p2 = instances::p2();
        let c1 = &p2.constraints()[0];
        assert_eq!(singly_infeasible_values(c1, 2, &p2.domains(), 100).unwrap(), BTreeSet::from([2]));
        assert!(matches!(
            singly_infeasible_values(c1, 2, &p2.domains(), 2),
            Err(EncodingError::CapExceeded { .. })
        ));
    }

    #[test]
    fn p1_templates_match_the_worked_example() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let t = build_templates(&p1, &s, &CouplingPolicy::default()).unwrap();
        let set = |v: &[CouplingSlot]| v.iter().copied().collect::<HashSet<_>>();
        assert_eq!(
            set(&t[0].slots),
            set(&[internal(1, 0, 1), internal(2, 0, 1), internal(2, 0, 2), external(1, 0, 2, 1)])
        );
        assert_eq!(t[0].slots.len(), 4);
        assert_eq!(
            set(&t[1].slots),
            set(&[
                internal(2, 0, 1),
                internal(2, 0, 2),
                internal(3, 0, 1),
                internal(3, 0, 2),
                external(2, 1, 3, 2)
            ])
        );
        assert_eq!(t[1].slots.len(), 5);
    }

    #[test]
    fn single_variable_constraint_has_no_external_slot() {
        let p = parse_problem("var x1 in 0..2\nmaximize x1\nsubject c: x1 <= 1").unwrap();
        let s = build_level_scheme(&p);
        let t = build_constraint_template(&p, 0, &s, &CouplingPolicy::default(), 100).unwrap();
        assert_eq!(t.slots, vec![internal(1, 0, 1)]);
    }

    #[test]
    fn excluded_lowest_level_moves_the_star_hub() {
        let p3 = instances::p3();
        let s = build_level_scheme(&p3);
        let t = build_constraint_template(&p3, 1, &s, &CouplingPolicy::default(), 100).unwrap();
        assert!(t.slots.contains(&internal(8, 1, 2)));
        assert!(respects_exclusions(&p3, &t).unwrap());
    }

    #[test]
    fn chain_topology_and_long_constraints() {
        let p3 = instances::p3();
        let s = build_level_scheme(&p3);
        let policy = CouplingPolicy {
            internal: InternalTopology::Chain,
            ..Default::default()
        };
        let t = build_constraint_template(&p3, 2, &s, &policy, 100).unwrap();
        let externals = t.slots.iter().filter(|s| matches!(s, CouplingSlot::External { .. })).count();
        assert_eq!(externals, 2);
        for tpl in build_templates(&p3, &s, &policy).unwrap() {
            assert!(respects_exclusions(&p3, &tpl).unwrap());
        }
    }

    #[test]
    fn unsatisfiable_constraint() {
        let p = parse_problem("var x in 0..2\nvar y in 0..2\nmaximize x\nsubject c: x + y >= 9").unwrap();
        let s = build_level_scheme(&p);
        assert!(matches!(
            build_constraint_template(&p, 0, &s, &CouplingPolicy::default(), 100),
            Err(EncodingError::Unsatisfiable { .. })
        ));
    }

    #[test]
    fn explicit_external_couplings() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let policy = CouplingPolicy {
            internal: InternalTopology::Star,
            external: ExternalRule::Explicit(vec![ExplicitCoupling {
                constraint: 0,
                from: (0, 1),
                to: (1, 2),
            }]),
        };
        let t = build_templates(&p1, &s, &policy).unwrap();
        assert!(t[0].slots.contains(&external(1, 1, 2, 2)));
        assert!(!t[1].slots.iter().any(|s| matches!(s, CouplingSlot::External { .. })));

        let bad = CouplingPolicy {
            internal: InternalTopology::Star,
            external: ExternalRule::Explicit(vec![ExplicitCoupling {
                constraint: 0,
                from: (0, 2),
                to: (1, 0),
            }]),
        };
        assert!(matches!(
            build_templates(&p1, &s, &bad),
            Err(EncodingError::InvalidCoupling { .. })
        ));
    }
}
