//! Decoding populations into assignments and scoring trajectories.
//!
//! `O = (1 - N_τ/N_T) + (1 - Σ_{S_τ} C_f / Σ_all C_f)`, where `S_τ` holds the
//! samples whose decoded assignment satisfies every constraint.

use std::cmp::Ordering;

use num_traits::ToPrimitive;
use serde::Serialize;

use crate::encoding::LevelScheme;
use crate::model::{rational_serde, to_f64, Constraint, ModelError, Problem, Rational};

/// Populations closer than this count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Total cost at or below this makes the cost term 1.
pub const COST_FLOOR: f64 = 1e-12;
/// Largest search space stored as a dense lookup table.
pub const DENSE_TABLE_LIMIT: u128 = 1 << 20;

/// Argmax level of each manifold; ties go to the lowest level.
pub fn decode_levels(populations: &[f64], scheme: &LevelScheme, out: &mut [usize]) {
    for (slot, m) in out.iter_mut().zip(scheme.manifolds()) {
        let block = &populations[m.offset..m.offset + m.levels];
        let mut best = 0;
        for (k, &p) in block.iter().enumerate().skip(1) {
            if p > block[best] + TIE_TOLERANCE {
                best = k;
            }
        }
        *slot = best;
    }
}

pub fn decode(populations: &[f64], scheme: &LevelScheme) -> Vec<i64> {
    let mut levels = vec![0; scheme.manifolds().len()];
    decode_levels(populations, scheme, &mut levels);
    levels
        .iter()
        .enumerate()
        .map(|(m, &k)| scheme.value(m, k))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodedSample {
    pub time_us: f64,
    pub assignment: Vec<i64>,
    pub feasible: bool,
    #[serde(serialize_with = "rational_serde::serialize")]
    pub cost: Rational,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DecodedSeries {
    pub samples: Vec<DecodedSample>,
}

impl DecodedSeries {
    pub fn push(&mut self, p: &Problem, time_us: f64, assignment: Vec<i64>) -> Result<(), ModelError> {
        let feasible = p.is_feasible(&assignment)?;
        let cost = p.evaluate_cost(&assignment)?;
        self.samples.push(DecodedSample {
            time_us,
            assignment,
            feasible,
            cost,
        });
        Ok(())
    }

    /// Decodes every `stride`-th population row.
    pub fn from_populations(
        p: &Problem,
        scheme: &LevelScheme,
        times: &[f64],
        populations: &[Vec<f64>],
        stride: usize,
    ) -> Result<Self, ModelError> {
        let mut s = DecodedSeries::default();
        for (t, pops) in times.iter().zip(populations).step_by(stride.max(1)) {
            s.push(p, *t, decode(pops, scheme))?;
        }
        Ok(s)
    }
}

pub fn feasible_set(series: &DecodedSeries, constraints: &[Constraint]) -> Result<Vec<usize>, ModelError> {
    let mut out = Vec::new();
    for (k, s) in series.samples.iter().enumerate() {
        let mut ok = true;
        for c in constraints {
            if !c.check(&s.assignment)? {
                ok = false;
                break;
            }
        }
        if ok {
            out.push(k);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestFeasible {
    #[serde(serialize_with = "rational_serde::serialize")]
    pub cost: Rational,
    pub assignment: Vec<i64>,
    /// Earliest sample reaching this cost.
    pub time_us: f64,
    pub sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveReport {
    pub o: f64,
    pub n_tau: usize,
    pub n_t: usize,
    pub feasible_set: Vec<usize>,
    pub best_feasible: Option<BestFeasible>,
}

/// `O` from sample counts and cost sums.
pub fn objective_from_sums(n_t: usize, n_tau: usize, feasible_cost: f64, total_cost: f64) -> f64 {
    if n_t == 0 {
        return 2.0;
    }
    let time_term = 1.0 - n_tau as f64 / n_t as f64;
    let cost_term = if n_tau == n_t {
        0.0
    } else if total_cost <= COST_FLOOR {
        1.0
    } else {
        (1.0 - feasible_cost / total_cost).clamp(0.0, 1.0)
    };
    time_term + cost_term
}

pub fn objective_value(series: &DecodedSeries, p: &Problem) -> Result<ObjectiveReport, ModelError> {
    let set = feasible_set(series, p.constraints())?;
    let total: f64 = series.samples.iter().map(|s| to_f64(&s.cost)).sum();
    let feasible: f64 = set.iter().map(|&k| to_f64(&series.samples[k].cost)).sum();
    let mut best: Option<BestFeasible> = None;
    for &k in &set {
        let s = &series.samples[k];
        if best.as_ref().map_or(true, |b| s.cost > b.cost) {
            best = Some(BestFeasible {
                cost: s.cost.clone(),
                assignment: s.assignment.clone(),
                time_us: s.time_us,
                sample: k,
            });
        }
    }
    Ok(ObjectiveReport {
        o: objective_from_sums(series.samples.len(), set.len(), feasible, total),
        n_tau: set.len(),
        n_t: series.samples.len(),
        feasible_set: set,
        best_feasible: best,
    })
}

struct DenseTable {
    feasible: Vec<bool>,
    cost: Vec<f64>,
    /// Dense rank of each exact cost, for exact comparisons.
    rank: Vec<u32>,
}

/// Feasibility and cost of decoded assignments, keyed by level indices.
pub struct CostTable {
    problem: Problem,
    los: Vec<i64>,
    radices: Vec<usize>,
    dense: Option<DenseTable>,
}

impl CostTable {
    pub fn new(p: &Problem) -> Result<Self, ModelError> {
        let domains = p.domains();
        let radices: Vec<usize> = domains.iter().map(|d| d.size()).collect();
        let los = domains.iter().map(|d| d.lo).collect();
        let dense = if p.search_space_size() <= DENSE_TABLE_LIMIT {
            let mut feasible = Vec::new();
            let mut exact = Vec::new();
            // Odometer order with the last variable fastest, matching `index`.
            for x in p.assignments() {
                feasible.push(p.is_feasible(&x)?);
                exact.push(p.evaluate_cost(&x)?);
            }
            let mut order: Vec<usize> = (0..exact.len()).collect();
            order.sort_by(|&a, &b| exact[a].cmp(&exact[b]));
            let mut rank = vec![0u32; exact.len()];
            let mut r = 0;
            for w in 0..order.len() {
                if w > 0 && exact[order[w]] != exact[order[w - 1]] {
                    r += 1;
                }
                rank[order[w]] = r;
            }
            let cost = exact.iter().map(to_f64).collect();
            Some(DenseTable { feasible, cost, rank })
        } else {
            None
        };
        Ok(CostTable {
            problem: p.clone(),
            los,
            radices,
            dense,
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    fn index(&self, levels: &[usize]) -> usize {
        levels.iter().zip(&self.radices).fold(0, |acc, (&l, &r)| acc * r + l)
    }

    pub fn assignment(&self, levels: &[usize]) -> Vec<i64> {
        levels.iter().zip(&self.los).map(|(&l, &lo)| lo + l as i64).collect()
    }

    /// `(feasible, cost)` of the assignment given by `levels`.
    pub fn lookup(&self, levels: &[usize]) -> Result<(bool, f64), ModelError> {
        match &self.dense {
            Some(t) => {
                let i = self.index(levels);
                Ok((t.feasible[i], t.cost[i]))
            }
            None => {
                let x = self.assignment(levels);
                Ok((self.problem.is_feasible(&x)?, to_f64(&self.problem.evaluate_cost(&x)?)))
            }
        }
    }

    pub fn exact_cost(&self, levels: &[usize]) -> Result<Rational, ModelError> {
        self.problem.evaluate_cost(&self.assignment(levels))
    }

    /// Exact comparison of the costs at two level vectors.
    pub fn compare(&self, a: &[usize], b: &[usize]) -> Result<Ordering, ModelError> {
        match &self.dense {
            Some(t) => Ok(t.rank[self.index(a)].cmp(&t.rank[self.index(b)])),
            None => Ok(self.exact_cost(a)?.cmp(&self.exact_cost(b)?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct AccumulatorConfig {
    /// Only every `stride`-th sample counts; 0 and 1 both mean all of them.
    pub stride: usize,
    /// Best-feasible tracking ignores samples after this time.
    pub readout_horizon_us: Option<f64>,
}

/// Streaming form of `objective_value` over trajectory samples.
pub struct ObjectiveAccumulator<'a> {
    table: &'a CostTable,
    scheme: &'a LevelScheme,
    config: AccumulatorConfig,
    levels: Vec<usize>,
    last: Option<(Vec<usize>, bool, f64)>,
    n_t: usize,
    feasible_cost: f64,
    total_cost: f64,
    feasible: Vec<usize>,
    best: Option<(Vec<usize>, f64, f64, usize)>,
    error: Option<ModelError>,
}

impl<'a> ObjectiveAccumulator<'a> {
    pub fn new(table: &'a CostTable, scheme: &'a LevelScheme, config: AccumulatorConfig) -> Self {
        ObjectiveAccumulator {
            table,
            scheme,
            config,
            levels: vec![0; scheme.manifolds().len()],
            last: None,
            n_t: 0,
            feasible_cost: 0.0,
            total_cost: 0.0,
            feasible: Vec::new(),
            best: None,
            error: None,
        }
    }

    fn better(&self, levels: &[usize], cost: f64) -> bool {
        let Some((best_levels, best_cost, ..)) = &self.best else {
            return true;
        };
        if levels == best_levels.as_slice() {
            return false;
        }
        if !self.table.is_dense() && (cost - best_cost).abs() > 1e-9 * best_cost.abs().max(1.0) {
            return cost > *best_cost;
        }
        self.table.compare(levels, best_levels).is_ok_and(|o| o == Ordering::Greater)
    }

    /// Feeds sample `k` at time `t`; returns the decoded levels and
    /// `(feasible, cost)` when the sample counts.
    pub fn push(&mut self, k: usize, t: f64, populations: &[f64]) -> Option<(&[usize], bool, f64)> {
        if self.config.stride > 1 && k % self.config.stride != 0 {
            return None;
        }
        decode_levels(populations, self.scheme, &mut self.levels);
        let (feasible, cost) = match &self.last {
            Some((l, f, c)) if *l == self.levels => (*f, *c),
            _ => match self.table.lookup(&self.levels) {
                Ok((f, c)) => {
                    self.last = Some((self.levels.clone(), f, c));
                    (f, c)
                }
                Err(e) => {
                    self.error.get_or_insert(e);
                    (false, 0.0)
                }
            },
        };
        let index = self.n_t;
        self.n_t += 1;
        self.total_cost += cost;
        if feasible {
            self.feasible_cost += cost;
            self.feasible.push(index);
            let in_horizon = self.config.readout_horizon_us.map_or(true, |h| t <= h + 1e-9);
            if in_horizon && self.better(&self.levels, cost) {
                self.best = Some((self.levels.clone(), cost, t, index));
            }
        }
        Some((&self.levels, feasible, cost))
    }

    pub fn objective(&self) -> f64 {
        objective_from_sums(self.n_t, self.feasible.len(), self.feasible_cost, self.total_cost)
    }

    pub fn finish(self) -> Result<ObjectiveReport, ModelError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let o = self.objective();
        let best_feasible = match self.best {
            Some((levels, _, time_us, sample)) => {
                let assignment = self.table.assignment(&levels);
                // Exact re-check before reporting.
                if self.table.problem().is_feasible(&assignment)? {
                    Some(BestFeasible {
                        cost: self.table.exact_cost(&levels)?,
                        assignment,
                        time_us,
                        sample,
                    })
                } else {
                    None
                }
            }
            None => None,
        };
        Ok(ObjectiveReport {
            o,
            n_tau: self.feasible.len(),
            n_t: self.n_t,
            feasible_set: self.feasible,
            best_feasible,
        })
    }
}

/// Stride on the `dt` grid that lands on multiples of `report_dt`.
pub fn report_stride(dt: f64, report_dt: f64) -> usize {
    (report_dt / dt).round().to_usize().unwrap_or(1).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::build_level_scheme;
    use crate::instances;
    use crate::model::rational;

    fn one_hot(scheme: &LevelScheme, values: &[i64]) -> Vec<f64> {
        let mut p = vec![0.0; scheme.dimension()];
        for (m, &v) in values.iter().enumerate() {
            p[scheme.global_index(m, scheme.level_of(m, v).unwrap())] = 1.0;
        }
        p
    }

    fn series(p: &Problem, rows: &[&[i64]]) -> DecodedSeries {
        let mut s = DecodedSeries::default();
        for (k, r) in rows.iter().enumerate() {
            s.push(p, k as f64, r.to_vec()).unwrap();
        }
        s
    }

    #[test]
    fn decoding_rules() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let mut pops = vec![0.0; 9];
        pops[1] = 1.0;
        pops[8] = 1.0;
        let x = decode(&pops, &s);
        assert_eq!((x[0], x[2]), (1, 2));
        assert_eq!(x[1], 0);
        assert_eq!(decode(&[0.0; 9], &s), vec![0, 0, 0]);
        for v in 0..3 {
            assert_eq!(decode(&one_hot(&s, &[v, v, v]), &s), vec![v, v, v]);
        }
        let mut near = vec![0.0; 9];
        near[0] = 0.4;
        near[1] = 0.4 + 1e-13;
        assert_eq!(decode(&near, &s)[0], 0);
    }

    #[test]
    fn feasible_sets() {
        let p1 = instances::p1();
        let all = series(&p1, &[&[1, 1, 1], &[1, 1, 1]]);
        assert_eq!(feasible_set(&all, p1.constraints()).unwrap(), vec![0, 1]);
        let none = series(&p1, &[&[0, 2, 2], &[2, 2, 2]]);
        assert!(feasible_set(&none, p1.constraints()).unwrap().is_empty());
        let one = series(&p1, &[&[2, 2, 2], &[2, 2, 2], &[2, 2, 2], &[0, 0, 0]]);
        assert_eq!(feasible_set(&one, p1.constraints()).unwrap(), vec![3]);
    }

    #[test]
    fn objective_hand_cases() {
        let p1 = instances::p1();
        let half = series(&p1, &[&[2, 0, 0], &[1, 1, 1]]);
        let r = objective_value(&half, &p1).unwrap();
        assert_eq!(r.o, 1.0);
        assert_eq!(r.best_feasible.unwrap().cost, rational(6));
        assert_eq!(objective_value(&series(&p1, &[&[1, 1, 1], &[0, 2, 0]]), &p1).unwrap().o, 0.0);
        assert_eq!(objective_value(&series(&p1, &[&[2, 2, 2], &[0, 2, 2]]), &p1).unwrap().o, 2.0);
        assert_eq!(objective_value(&series(&p1, &[&[0, 0, 0]]), &p1).unwrap().o, 0.0);
        assert_eq!(objective_from_sums(2, 1, 0.0, 0.0), 1.5);
    }

    #[test]
    fn accumulator_matches_batch_evaluation() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let table = CostTable::new(&p1).unwrap();
        assert!(table.is_dense());
        let rows: [&[i64]; 5] = [&[0, 0, 0], &[2, 0, 0], &[1, 1, 1], &[0, 2, 0], &[2, 2, 2]];
        let mut acc = ObjectiveAccumulator::new(&table, &s, AccumulatorConfig::default());
        for (k, r) in rows.iter().enumerate() {
            acc.push(k, k as f64, &one_hot(&s, r));
        }
        let streamed = acc.finish().unwrap();
        let batch = objective_value(&series(&p1, &rows), &p1).unwrap();
        assert_eq!(streamed, batch);
        assert_eq!(streamed.best_feasible.as_ref().unwrap().sample, 2);
    }

    #[test]
    fn horizon_and_stride() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let table = CostTable::new(&p1).unwrap();
        let config = AccumulatorConfig {
            stride: 2,
            readout_horizon_us: Some(2.5),
        };
        let rows: [&[i64]; 5] = [&[0, 0, 0], &[1, 1, 1], &[1, 0, 0], &[2, 2, 2], &[1, 1, 1]];
        let mut acc = ObjectiveAccumulator::new(&table, &s, config);
        for (k, r) in rows.iter().enumerate() {
            acc.push(k, k as f64, &one_hot(&s, r));
        }
        let r = acc.finish().unwrap();
        assert_eq!(r.n_t, 3);
        assert_eq!(r.n_tau, 3);
        assert_eq!(r.best_feasible.unwrap().cost, rational(3));
        assert_eq!(report_stride(0.01, 1.0), 100);
    }
}
