//! LP-relaxation branch & bound for linear problems.
//!
//! Every node solves the relaxation with tightened integer bounds. Nodes are
//! counted when their LP is solved, the root included. The variable with the
//! largest fractional part is split into `x <= floor(v)` and
//! `x >= floor(v) + 1`, in that creation order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{rational_serde, Linearity, Problem, Rational};
use crate::relaxation::{solve_lp_relaxation, Interval, LpSolution, LpStatus, RelaxationError};

#[derive(Debug, Error)]
pub enum BnbError {
    #[error("branch and bound needs a linear problem")]
    Nonlinear,
    #[error(transparent)]
    Relaxation(#[from] RelaxationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchOrder {
    /// Highest parent bound first; ties go to the lower node id.
    #[default]
    BestFirst,
    /// Most recently created node first, the `<=` child before the `>=` one.
    DepthFirst,
}

#[derive(Debug, Clone, Default)]
pub struct BnbConfig {
    pub order: SearchOrder,
    pub max_nodes: Option<usize>,
    pub max_time: Option<Duration>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Disposition {
    Branched,
    IntegerLeaf,
    InfeasibleLeaf,
    Pruned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Branching {
    pub variable: usize,
    /// `floor(v)`; children get `x <= floor` and `x >= floor + 1`.
    pub floor: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BnbNode {
    pub id: usize,
    pub parent: Option<usize>,
    /// Per-variable integer bounds `(lo, hi)` at this node.
    pub bounds: Vec<(i64, i64)>,
    pub lp_status: LpStatus,
    #[serde(serialize_with = "rational_serde::option")]
    pub lp_value: Option<Rational>,
    #[serde(serialize_with = "rational_serde::option_vec")]
    pub lp_point: Option<Vec<Rational>>,
    pub disposition: Disposition,
    pub branching: Option<Branching>,
    /// Incumbent value after processing this node.
    #[serde(serialize_with = "rational_serde::option")]
    pub incumbent: Option<Rational>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    NodeLimit,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct BnbResult {
    pub status: BnbStatus,
    pub value: Option<Rational>,
    pub assignment: Option<Vec<i64>>,
    pub node_count: usize,
    /// Nodes in the order their LPs were solved.
    pub trace: Vec<BnbNode>,
}

struct Pending {
    id: usize,
    parent: Option<usize>,
    parent_bound: Option<Rational>,
    bounds: Vec<(i64, i64)>,
}

/// Max-heap order: larger parent bound first, then smaller id.
struct BestFirst(Pending);

impl PartialEq for BestFirst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for BestFirst {}
impl PartialOrd for BestFirst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for BestFirst {
    fn cmp(&self, other: &Self) -> Ordering {
        // `None` (the root) ranks above every finite bound.
        let bound = match (&self.0.parent_bound, &other.0.parent_bound) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Greater,
            (Some(_), None) => Ordering::Less,
            (Some(a), Some(b)) => a.cmp(b),
        };
        bound.then_with(|| other.0.id.cmp(&self.0.id))
    }
}

enum Frontier {
    Best(BinaryHeap<BestFirst>),
    Depth(Vec<Pending>),
}

impl Frontier {
    fn push(&mut self, p: Pending) {
        match self {
            Frontier::Best(h) => h.push(BestFirst(p)),
            Frontier::Depth(s) => s.push(p),
        }
    }

    fn pop(&mut self) -> Option<Pending> {
        match self {
            Frontier::Best(h) => h.pop().map(|b| b.0),
            Frontier::Depth(s) => s.pop(),
        }
    }
}

/// Fractional part `v - floor(v)`, always in `[0, 1)`.
fn fractional_part(v: &Rational) -> Rational {
    v - v.floor()
}

pub fn solve_bnb(p: &Problem, config: &BnbConfig) -> Result<BnbResult, BnbError> {
    if p.classify() != Linearity::Linear {
        return Err(BnbError::Nonlinear);
    }
    let start = Instant::now();
    let root_bounds: Vec<(i64, i64)> = p.variables().iter().map(|v| (v.domain.lo, v.domain.hi)).collect();
    let mut frontier = match config.order {
        SearchOrder::BestFirst => Frontier::Best(BinaryHeap::new()),
        SearchOrder::DepthFirst => Frontier::Depth(Vec::new()),
    };
    frontier.push(Pending {
        id: 0,
        parent: None,
        parent_bound: None,
        bounds: root_bounds,
    });
    let mut next_id = 1;
    let mut incumbent: Option<(Rational, Vec<i64>)> = None;
    let mut trace = Vec::new();
    let mut status = BnbStatus::Optimal;

    while let Some(node) = frontier.pop() {
        if config.max_nodes.is_some_and(|m| trace.len() >= m) {
            status = BnbStatus::NodeLimit;
            break;
        }
        if config.max_time.is_some_and(|t| start.elapsed() >= t) {
            status = BnbStatus::TimeLimit;
            break;
        }
        let intervals: Vec<Interval> = node.bounds.iter().map(|&(lo, hi)| Interval::integer(lo, hi)).collect();
        let lp: LpSolution = solve_lp_relaxation(p, &intervals)?;
        let mut branching = None;
        let disposition = match (&lp.status, &lp.value, &lp.point) {
            (LpStatus::Optimal, Some(value), Some(point)) => {
                if point.iter().all(Rational::is_integer) {
                    if incumbent.as_ref().map_or(true, |(best, _)| value > best) {
                        let x = point.iter().map(|v| v.to_integer().to_i64().expect("bounded")).collect();
                        incumbent = Some((value.clone(), x));
                    }
                    Disposition::IntegerLeaf
                } else if incumbent.as_ref().is_some_and(|(best, _)| value <= best) {
                    Disposition::Pruned
                } else {
                    // Largest fractional part, lowest index on ties.
                    let mut pick: Option<(usize, Rational)> = None;
                    for (j, v) in point.iter().enumerate() {
                        let f = fractional_part(v);
                        if pick.as_ref().map_or(true, |(_, best)| f > *best) {
                            pick = Some((j, f));
                        }
                    }
                    let (j, _) = pick.expect("non-integral point has a fractional coordinate");
                    let floor = point[j].floor().to_integer().to_i64().expect("bounded");
                    let mut down = node.bounds.clone();
                    down[j].1 = floor;
                    let mut up = node.bounds.clone();
                    up[j].0 = floor + 1;
                    let children = [(next_id, down), (next_id + 1, up)];
                    next_id += 2;
                    let ordered: Vec<_> = match config.order {
                        SearchOrder::BestFirst => children.into_iter().collect(),
                        SearchOrder::DepthFirst => children.into_iter().rev().collect(),
                    };
                    for (id, bounds) in ordered {
                        frontier.push(Pending {
                            id,
                            parent: Some(node.id),
                            parent_bound: Some(value.clone()),
                            bounds,
                        });
                    }
                    branching = Some(Branching { variable: j, floor });
                    Disposition::Branched
                }
            }
            _ => Disposition::InfeasibleLeaf,
        };
        trace.push(BnbNode {
            id: node.id,
            parent: node.parent,
            bounds: node.bounds,
            lp_status: lp.status,
            lp_value: lp.value,
            lp_point: lp.point,
            disposition,
            branching,
            incumbent: incumbent.as_ref().map(|(v, _)| v.clone()),
        });
    }

    if status == BnbStatus::Optimal && incumbent.is_none() {
        status = BnbStatus::Infeasible;
    }
    let node_count = trace.len();
    let (value, assignment) = match incumbent {
        Some((v, x)) => (Some(v), Some(x)),
        None => (None, None),
    };
    Ok(BnbResult {
        status,
        value,
        assignment,
        node_count,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::model::rational;
    use crate::parser::parse_problem;

    #[test]
    fn p1_converges_in_three_nodes() {
        let res = solve_bnb(&instances::p1(), &BnbConfig::default()).unwrap();
        assert_eq!(res.status, BnbStatus::Optimal);
        assert_eq!(res.value, Some(rational(6)));
        assert_eq!(res.node_count, 3);
        let dispositions: Vec<_> = res.trace.iter().map(|n| n.disposition).collect();
        assert_eq!(
            dispositions,
            [Disposition::Branched, Disposition::IntegerLeaf, Disposition::InfeasibleLeaf]
        );
    }

    #[test]
    fn p4_takes_eleven_nodes() {
        let res = solve_bnb(&instances::p4(), &BnbConfig::default()).unwrap();
        assert_eq!(res.value, Some(rational(8)));
        assert_eq!(res.assignment, Some(vec![1, 0, 0]));
        assert_eq!(res.node_count, 11);
    }

    #[test]
    fn depth_first_finds_the_same_optimum() {
        let cfg = BnbConfig {
            order: SearchOrder::DepthFirst,
            ..Default::default()
        };
        let res = solve_bnb(&instances::p4(), &cfg).unwrap();
        assert_eq!(res.value, Some(rational(8)));
    }

    #[test]
    fn integral_root_is_one_node() {
        let p = parse_problem("var x in 0..3\nvar y in 0..3\nmaximize x + y\nsubject c: x + y <= 2").unwrap();
        let res = solve_bnb(&p, &BnbConfig::default()).unwrap();
        assert_eq!(res.node_count, 1);
        assert_eq!(res.value, Some(rational(2)));
    }

    #[test]
    fn infeasible_root_and_nonlinear() {
        let p = parse_problem("var x in 0..3\nmaximize x\nsubject c: x >= 4").unwrap();
        let res = solve_bnb(&p, &BnbConfig::default()).unwrap();
        assert_eq!(res.status, BnbStatus::Infeasible);
        assert_eq!(res.node_count, 1);
        assert!(matches!(solve_bnb(&instances::p2(), &BnbConfig::default()), Err(BnbError::Nonlinear)));
    }

    #[test]
    fn node_limit() {
        let cfg = BnbConfig {
            max_nodes: Some(2),
            ..Default::default()
        };
        let res = solve_bnb(&instances::p4(), &cfg).unwrap();
        assert_eq!(res.status, BnbStatus::NodeLimit);
        assert_eq!(res.node_count, 2);
    }

    #[test]
    fn children_never_exceed_parent_bound() {
        let res = solve_bnb(&instances::p4(), &BnbConfig::default()).unwrap();
        for node in &res.trace {
            let (Some(parent), Some(v)) = (node.parent, &node.lp_value) else { continue };
            let pv = res.trace.iter().find(|n| n.id == parent).unwrap().lp_value.clone().unwrap();
            assert!(*v <= pv);
        }
        let incumbents: Vec<_> = res.trace.iter().filter_map(|n| n.incumbent.clone()).collect();
        assert!(incumbents.windows(2).all(|w| w[0] <= w[1]));
    }
}
