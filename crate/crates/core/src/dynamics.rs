//! Exact piecewise-constant evolution of the level system.
//!
//! Units: ħ = 1, time in µs, amplitudes in rad/µs. Each segment applies one
//! constraint Hamiltonian; its propagator is built from an eigendecomposition
//! of the block spanned by the levels the template touches, so every other
//! level is left exactly as it was.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::{CouplingSlot, HamiltonianTemplate, LevelScheme};

pub type C64 = Complex<f64>;

/// Samples between exact re-evaluations of the phase factors.
const PHASE_REANCHOR: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("template has {slots} slots but {amplitudes} amplitudes were given")]
    AmplitudeCount { slots: usize, amplitudes: usize },
    #[error("expected {expected} {what}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    OutOfBounds {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("time step and duration must be positive")]
    InvalidStep,
    #[error("state norm squared is {0}, expected 1")]
    NotNormalized(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: DVector<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self, DynamicsError> {
        let s = StateVector {
            amplitudes: DVector::from_vec(amplitudes),
        };
        if s.amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(DynamicsError::NonFinite("state"));
        }
        let n = s.norm_sqr();
        if (n - 1.0).abs() > 1e-9 {
            return Err(DynamicsError::NotNormalized(n));
        }
        Ok(s)
    }

    /// All amplitude on one level.
    pub fn basis(dimension: usize, index: usize) -> Self {
        let mut amplitudes = DVector::zeros(dimension);
        amplitudes[index] = C64::new(1.0, 0.0);
        StateVector { amplitudes }
    }

    /// Equal real superposition of the given levels.
    pub fn uniform(dimension: usize, indices: &[usize]) -> Self {
        let mut amplitudes = DVector::zeros(dimension);
        let a = 1.0 / (indices.len() as f64).sqrt();
        for &i in indices {
            amplitudes[i] = C64::new(a, 0.0);
        }
        StateVector { amplitudes }
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn dimension(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledHamiltonian {
    matrix: DMatrix<C64>,
}

impl AssembledHamiltonian {
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self, DynamicsError> {
        if !matrix.is_square() {
            return Err(DynamicsError::DimensionMismatch {
                what: "columns",
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        if matrix.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(DynamicsError::NonFinite("hamiltonian"));
        }
        Ok(AssembledHamiltonian { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    /// `<s|H|s>`.
    pub fn expectation(&self, s: &StateVector) -> f64 {
        s.amplitudes.dotc(&(&self.matrix * &s.amplitudes)).re
    }

    /// Levels with at least one nonzero entry in their row.
    fn active_levels(&self) -> Vec<usize> {
        (0..self.dimension())
            .filter(|&r| self.matrix.row(r).iter().any(|a| *a != C64::new(0.0, 0.0)))
            .collect()
    }
}

pub fn assemble(
    scheme: &LevelScheme,
    template: &HamiltonianTemplate,
    amplitudes: &[f64],
) -> Result<AssembledHamiltonian, DynamicsError> {
    if amplitudes.len() != template.slots.len() {
        return Err(DynamicsError::AmplitudeCount {
            slots: template.slots.len(),
            amplitudes: amplitudes.len(),
        });
    }
    if amplitudes.iter().any(|a| !a.is_finite()) {
        return Err(DynamicsError::NonFinite("amplitudes"));
    }
    let d = scheme.dimension();
    let mut matrix = DMatrix::zeros(d, d);
    for (slot, &a) in template.slots.iter().zip(amplitudes) {
        let (r, c) = slot.endpoints(scheme);
        matrix[(r, c)] = C64::new(a, 0.0);
        matrix[(c, r)] = C64::new(a, 0.0);
    }
    Ok(AssembledHamiltonian { matrix })
}

/// Spectral form of `exp(-iHt)` on the active block.
struct Evolution {
    active: Vec<usize>,
    vectors: DMatrix<C64>,
    values: Vec<f64>,
}

impl Evolution {
    fn new(h: &AssembledHamiltonian) -> Self {
        let active = h.active_levels();
        if active.is_empty() {
            return Evolution {
                active,
                vectors: DMatrix::zeros(0, 0),
                values: Vec::new(),
            };
        }
        let block = DMatrix::from_fn(active.len(), active.len(), |i, j| h.matrix[(active[i], active[j])]);
        let eig = SymmetricEigen::new(block);
        Evolution {
            active,
            vectors: eig.eigenvectors,
            values: eig.eigenvalues.iter().copied().collect(),
        }
    }

    /// Eigenbasis coefficients of the active part of `state`.
    fn coefficients(&self, state: &DVector<C64>) -> DVector<C64> {
        let local = DVector::from_iterator(self.active.len(), self.active.iter().map(|&i| state[i]));
        self.vectors.ad_mul(&local)
    }

    fn phases(&self, t: f64) -> DVector<C64> {
        DVector::from_iterator(
            self.values.len(),
            self.values.iter().map(|&l| {
                let (s, c) = (-l * t).sin_cos();
                C64::new(c, s)
            }),
        )
    }

    /// Maps phased eigen-coefficients back onto the active entries of `out`.
    fn write(&self, phased: &DVector<C64>, out: &mut DVector<C64>) {
        let local = &self.vectors * phased;
        for (k, &i) in self.active.iter().enumerate() {
            out[i] = local[k];
        }
    }
}

fn check_step(tau: f64, dt: f64) -> Result<(), DynamicsError> {
    if !tau.is_finite() || !dt.is_finite() {
        return Err(DynamicsError::NonFinite("time"));
    }
    if tau <= 0.0 || dt <= 0.0 {
        return Err(DynamicsError::InvalidStep);
    }
    Ok(())
}

/// Samples `exp(-iHt)·state` at `t = dt, 2dt, …` up to `tau`.
pub fn propagate(
    state: &StateVector,
    h: &AssembledHamiltonian,
    tau: f64,
    dt: f64,
) -> Result<Vec<(f64, StateVector)>, DynamicsError> {
    check_step(tau, dt)?;
    if h.dimension() != state.dimension() {
        return Err(DynamicsError::DimensionMismatch {
            what: "levels",
            expected: h.dimension(),
            got: state.dimension(),
        });
    }
    let evo = Evolution::new(h);
    let coeffs = evo.coefficients(&state.amplitudes);
    let n = (tau / dt + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let t = k as f64 * dt;
        let mut amplitudes = state.amplitudes.clone();
        evo.write(&coeffs.component_mul(&evo.phases(t)), &mut amplitudes);
        out.push((t, StateVector { amplitudes }));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterBounds {
    pub tau_us: (f64, f64),
    pub amplitude: (f64, f64),
}

impl Default for ParameterBounds {
    fn default() -> Self {
        ParameterBounds {
            tau_us: (0.1, 10.0),
            amplitude: (0.0, 20.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub tau_us: f64,
    pub amplitudes: Vec<f64>,
}

/// `layers[l][i]` drives constraint `i` during layer `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub layers: Vec<Vec<SegmentParams>>,
}

impl ProtocolParams {
    pub fn total_time(&self) -> f64 {
        self.layers.iter().flatten().map(|s| s.tau_us).sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().flatten().map(|s| 1 + s.amplitudes.len()).sum()
    }

    pub fn validate(&self, templates: &[HamiltonianTemplate], bounds: &ParameterBounds) -> Result<(), DynamicsError> {
        for layer in &self.layers {
            if layer.len() != templates.len() {
                return Err(DynamicsError::DimensionMismatch {
                    what: "segments per layer",
                    expected: templates.len(),
                    got: layer.len(),
                });
            }
            for (seg, tpl) in layer.iter().zip(templates) {
                if seg.amplitudes.len() != tpl.slots.len() {
                    return Err(DynamicsError::AmplitudeCount {
                        slots: tpl.slots.len(),
                        amplitudes: seg.amplitudes.len(),
                    });
                }
                in_bounds("tau", seg.tau_us, bounds.tau_us)?;
                for &a in &seg.amplitudes {
                    in_bounds("amplitude", a, bounds.amplitude)?;
                }
            }
        }
        Ok(())
    }
}

fn in_bounds(what: &'static str, value: f64, (lo, hi): (f64, f64)) -> Result<(), DynamicsError> {
    if !value.is_finite() {
        return Err(DynamicsError::NonFinite(what));
    }
    if value < lo || value > hi {
        return Err(DynamicsError::OutOfBounds { what, value, lo, hi });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// `Ground` when every coupled manifold is reachable from the first
    /// manifold through external slots, `ComponentSeeded` otherwise.
    #[default]
    Auto,
    /// All population on level 0 of the first manifold.
    Ground,
    /// Equal superposition over the lowest coupled level of each connected
    /// group of manifolds.
    ComponentSeeded,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

pub fn initial_state(scheme: &LevelScheme, templates: &[HamiltonianTemplate], choice: InitialState) -> StateVector {
    let d = scheme.dimension();
    let m = scheme.manifolds().len();
    let mut parent: Vec<usize> = (0..m).collect();
    let mut touched = vec![false; d];
    for slot in templates.iter().flat_map(|t| &t.slots) {
        let (a, b) = slot.endpoints(scheme);
        touched[a] = true;
        touched[b] = true;
        if let CouplingSlot::External { manifold, partner, .. } = *slot {
            let (ra, rb) = (find(&mut parent, manifold), find(&mut parent, partner));
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut seeds: Vec<Option<usize>> = vec![None; m];
    for g in (0..d).filter(|&g| touched[g]) {
        let root = find(&mut parent, scheme.locate(g).0);
        seeds[root].get_or_insert(g);
    }
    let seeds: Vec<usize> = seeds.into_iter().flatten().collect();
    let connected = seeds.is_empty() || (seeds.len() == 1 && find(&mut parent, 0) == find(&mut parent, scheme.locate(seeds[0]).0));
    let ground = match choice {
        InitialState::Ground => true,
        InitialState::Auto => connected,
        InitialState::ComponentSeeded => seeds.is_empty(),
    };
    if ground {
        StateVector::basis(d, 0)
    } else {
        StateVector::uniform(d, &seeds)
    }
}

/// Sample count after `t = 0` on the grid `t_k = k·dt` for a protocol of
/// length `total`.
pub fn sample_count(total: f64, dt: f64) -> usize {
    (total / dt + 1e-9).floor() as usize
}

#[derive(Debug, Clone)]
pub struct ProtocolSummary {
    pub total_time: f64,
    /// Index of the last sample; samples run from 0 to `last_sample`.
    pub last_sample: usize,
    pub final_state: StateVector,
}

/// Runs every layer and constraint segment in order, calling
/// `visit(k, t_k, populations)` once per sample of the grid `t_k = k·dt`,
/// `t_0 = 0` included.
pub fn run_protocol_with<F>(
    scheme: &LevelScheme,
    templates: &[HamiltonianTemplate],
    params: &ProtocolParams,
    bounds: &ParameterBounds,
    dt: f64,
    initial: &StateVector,
    mut visit: F,
) -> Result<ProtocolSummary, DynamicsError>
where
    F: FnMut(usize, f64, &[f64]),
{
    if !dt.is_finite() || dt <= 0.0 {
        return Err(DynamicsError::InvalidStep);
    }
    if initial.dimension() != scheme.dimension() {
        return Err(DynamicsError::DimensionMismatch {
            what: "levels",
            expected: scheme.dimension(),
            got: initial.dimension(),
        });
    }
    params.validate(templates, bounds)?;
    let total = params.total_time();
    let last_sample = sample_count(total, dt);
    let segments: Vec<(&HamiltonianTemplate, &SegmentParams)> = params
        .layers
        .iter()
        .flat_map(|layer| templates.iter().zip(layer))
        .collect();

    let mut state = initial.amplitudes.clone();
    let mut pops: Vec<f64> = state.iter().map(|a| a.norm_sqr()).collect();
    let mut buffer = state.clone();
    let mut k = 0usize;
    let mut start = 0.0;
    if segments.is_empty() {
        visit(0, 0.0, &pops);
    }
    for (j, (tpl, seg)) in segments.iter().enumerate() {
        let h = assemble(scheme, tpl, &seg.amplitudes)?;
        let evo = Evolution::new(&h);
        let coeffs = evo.coefficients(&state);
        let steps: Vec<C64> = evo
            .values
            .iter()
            .map(|&l| {
                let (s, c) = (-l * dt).sin_cos();
                C64::new(c, s)
            })
            .collect();
        let end = start + seg.tau_us;
        let last = j + 1 == segments.len();
        let mut phases = DVector::zeros(0);
        let mut in_segment = 0usize;
        while k <= last_sample {
            let t = k as f64 * dt;
            if !last && t >= end {
                break;
            }
            if in_segment % PHASE_REANCHOR == 0 {
                phases = evo.phases(t - start);
            } else {
                for (p, s) in phases.iter_mut().zip(&steps) {
                    *p *= s;
                }
            }
            evo.write(&coeffs.component_mul(&phases), &mut buffer);
            for &i in &evo.active {
                pops[i] = buffer[i].norm_sqr();
            }
            visit(k, t, &pops);
            k += 1;
            in_segment += 1;
        }
        evo.write(&coeffs.component_mul(&evo.phases(seg.tau_us)), &mut state);
        for &i in &evo.active {
            pops[i] = state[i].norm_sqr();
            buffer[i] = state[i];
        }
        start = end;
    }
    Ok(ProtocolSummary {
        total_time: total,
        last_sample,
        final_state: StateVector { amplitudes: state },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub dt: f64,
    pub total_time: f64,
    pub times: Vec<f64>,
    pub populations: Vec<Vec<f64>>,
}

pub fn run_protocol(
    scheme: &LevelScheme,
    templates: &[HamiltonianTemplate],
    params: &ProtocolParams,
    bounds: &ParameterBounds,
    dt: f64,
    initial: &StateVector,
) -> Result<Trajectory, DynamicsError> {
    let mut times = Vec::new();
    let mut populations = Vec::new();
    let summary = run_protocol_with(scheme, templates, params, bounds, dt, initial, |_, t, p| {
        times.push(t);
        populations.push(p.to_vec());
    })?;
    Ok(Trajectory {
        dt,
        total_time: summary.total_time,
        times,
        populations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{build_level_scheme, build_templates, CouplingPolicy};
    use crate::instances;
    use crate::parser::parse_problem;

    fn two_level(omega: f64) -> (LevelScheme, HamiltonianTemplate, AssembledHamiltonian) {
        let p = parse_problem("var x in 0..1\nmaximize x\nsubject c: x <= 1").unwrap();
        let s = build_level_scheme(&p);
        let t = build_templates(&p, &s, &CouplingPolicy::default()).unwrap().remove(0);
        let h = assemble(&s, &t, &[omega]).unwrap();
        (s, t, h)
    }

    #[test]
    fn rabi_transfer_matches_sin_squared() {
        let omega = 1.7;
        let (_, _, h) = two_level(omega);
        let tau = std::f64::consts::PI / (2.0 * omega);
        let samples = propagate(&StateVector::basis(2, 0), &h, tau, tau / 200.0).unwrap();
        for (t, s) in &samples {
            assert!((s.populations()[1] - (omega * t).sin().powi(2)).abs() <= 1e-9);
        }
        assert!((samples.last().unwrap().1.populations()[1] - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let (_, _, h) = two_level(0.0);
        let s = StateVector::uniform(2, &[0, 1]);
        for (_, x) in propagate(&s, &h, 1.0, 0.1).unwrap() {
            assert!((x.amplitudes() - s.amplitudes()).norm() < 1e-15);
        }
    }

    #[test]
    fn p1_c1_has_eight_nonzero_entries() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let t = build_templates(&p1, &s, &CouplingPolicy::default()).unwrap();
        let h = assemble(&s, &t[0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let nonzero = h.matrix().iter().filter(|a| a.norm() > 0.0).count();
        assert_eq!(nonzero, 8);
        assert!((h.matrix() - h.matrix().adjoint()).norm() == 0.0);
        assert!(matches!(assemble(&s, &t[0], &[1.0]), Err(DynamicsError::AmplitudeCount { .. })));
        let zero = assemble(&s, &t[0], &[0.0; 4]).unwrap();
        assert!(zero.matrix().iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn composition_and_energy_conservation() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let t = build_templates(&p1, &s, &CouplingPolicy::default()).unwrap();
        let h = assemble(&s, &t[1], &[1.3, 0.4, 2.2, 0.9, 1.1]).unwrap();
        let s0 = StateVector::uniform(9, &[2, 3, 6]);
        let whole = propagate(&s0, &h, 3.0, 0.5).unwrap();
        let half = propagate(&s0, &h, 1.5, 0.5).unwrap();
        let rest = propagate(&half.last().unwrap().1, &h, 1.5, 0.5).unwrap();
        let diff = whole.last().unwrap().1.amplitudes() - rest.last().unwrap().1.amplitudes();
        assert!(diff.norm() <= 1e-9);
        let e0 = h.expectation(&s0);
        for (_, x) in &whole {
            assert!((h.expectation(x) - e0).abs() <= 1e-8);
            assert!((x.norm_sqr() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn untouched_levels_keep_their_population() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let t = build_templates(&p1, &s, &CouplingPolicy::default()).unwrap();
        let h = assemble(&s, &t[0], &[3.0, 1.0, 2.0, 5.0]).unwrap();
        let s0 = StateVector::uniform(9, &[0, 5, 6, 8]);
        let p0 = s0.populations();
        for (_, x) in propagate(&s0, &h, 5.0, 0.01).unwrap() {
            let p = x.populations();
            for i in [2, 6, 7, 8] {
                assert!((p[i] - p0[i]).abs() <= 1e-12);
            }
        }
    }

    fn p1_params(layers: usize, tau: f64, amp: f64) -> ProtocolParams {
        let seg = |n: usize| SegmentParams {
            tau_us: tau,
            amplitudes: vec![amp; n],
        };
        ProtocolParams {
            layers: (0..layers).map(|_| vec![seg(4), seg(5)]).collect(),
        }
    }

    #[test]
    fn protocol_grid_and_normalization() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let t = build_templates(&p1, &s, &CouplingPolicy::default()).unwrap();
        let params = p1_params(3, 40.0 / 6.0, 2.5);
        let bounds = ParameterBounds::default();
        let traj = run_protocol(&s, &t, &params, &bounds, 0.01, &StateVector::basis(9, 0)).unwrap();
        assert!((traj.total_time - 40.0).abs() < 1e-9);
        assert_eq!(traj.times.len(), 4001);
        for p in &traj.populations {
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        let mut last = 0;
        let summary = run_protocol_with(&s, &t, &params, &bounds, 0.01, &StateVector::basis(9, 0), |k, _, _| last = k).unwrap();
        assert_eq!(last, summary.last_sample);
        assert!((summary.final_state.norm_sqr() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn segmented_run_matches_direct_propagation() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let t = build_templates(&p1, &s, &CouplingPolicy::default()).unwrap();
        let params = p1_params(1, 1.25, 1.5);
        let s0 = StateVector::basis(9, 0);
        let traj = run_protocol(&s, &t, &params, &ParameterBounds::default(), 0.05, &s0).unwrap();
        let h1 = assemble(&s, &t[0], &params.layers[0][0].amplitudes).unwrap();
        let h2 = assemble(&s, &t[1], &params.layers[0][1].amplitudes).unwrap();
        let mid = propagate(&s0, &h1, 1.25, 1.25).unwrap().pop().unwrap().1;
        let end = propagate(&mid, &h2, 1.25, 1.25).unwrap().pop().unwrap().1;
        let last = traj.populations.last().unwrap();
        for (a, b) in last.iter().zip(end.populations()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn zero_amplitudes_freeze_populations() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let t = build_templates(&p1, &s, &CouplingPolicy::default()).unwrap();
        let traj = run_protocol(&s, &t, &p1_params(2, 1.0, 0.0), &ParameterBounds::default(), 0.1, &StateVector::basis(9, 0)).unwrap();
        assert!(traj.populations.iter().all(|p| p[0] == 1.0));
    }

    #[test]
    fn bounds_and_shapes_are_checked() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let t = build_templates(&p1, &s, &CouplingPolicy::default()).unwrap();
        let run = |p: &ProtocolParams| run_protocol(&s, &t, p, &ParameterBounds::default(), 0.1, &StateVector::basis(9, 0));
        assert!(matches!(run(&p1_params(1, 11.0, 1.0)), Err(DynamicsError::OutOfBounds { .. })));
        assert!(matches!(run(&p1_params(1, 1.0, 25.0)), Err(DynamicsError::OutOfBounds { .. })));
        let mut short = p1_params(1, 1.0, 1.0);
        short.layers[0].pop();
        assert!(matches!(run(&short), Err(DynamicsError::DimensionMismatch { .. })));
    }

    #[test]
    fn initial_state_choices() {
        let p1 = instances::p1();
        let s = build_level_scheme(&p1);
        let t = build_templates(&p1, &s, &CouplingPolicy::default()).unwrap();
        assert_eq!(initial_state(&s, &t, InitialState::Auto), StateVector::basis(9, 0));

        let p3 = instances::p3();
        let s3 = build_level_scheme(&p3);
        let t3 = build_templates(&p3, &s3, &CouplingPolicy::default()).unwrap();
        assert_eq!(initial_state(&s3, &t3, InitialState::Ground), StateVector::basis(24, 0));
        // x4 and x8 form a separate group seeded at level 0 of x4.
        let seeded = initial_state(&s3, &t3, InitialState::Auto);
        let p = seeded.populations();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[s3.global_index(3, 0)] - 0.5).abs() < 1e-15);
    }
}
