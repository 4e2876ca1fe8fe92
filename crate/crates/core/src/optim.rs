//! Box-constrained local minimizers: Nelder–Mead and BFGS with central
//! finite-difference gradients. Both clamp every trial point into the box
//! and stop when their evaluation budget runs out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("objective returned a non-finite value at {x:?}")]
    NonFinite { x: Vec<f64> },
    #[error("start point has {got} coordinates, bounds have {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("start point is not finite")]
    InvalidStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    Budget,
    /// Gradient norm below tolerance at the current point.
    Stationary,
    LineSearchFailed,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub x: Vec<f64>,
    /// `None` only when no evaluation was allowed.
    pub f: Option<f64>,
    pub evals: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadConfig {
    /// Initial edge length as a fraction of each coordinate's range.
    pub initial_step: f64,
    /// Stop once every vertex lies within this range-relative distance of
    /// the best one.
    pub tolerance: f64,
    pub max_evals: usize,
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            initial_step: 0.2,
            tolerance: 1e-8,
            max_evals: 10_000,
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfgsConfig {
    /// Difference step as a fraction of each coordinate's range.
    pub fd_step: f64,
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub max_evals: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig {
            fd_step: 1e-3,
            gradient_tolerance: 1e-8,
            max_iterations: 200,
            max_evals: 10_000,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
        }
    }
}

fn clamp(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn check_start(x0: &[f64], bounds: &[(f64, f64)]) -> Result<Vec<f64>, OptimError> {
    if x0.len() != bounds.len() {
        return Err(OptimError::DimensionMismatch {
            expected: bounds.len(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::InvalidStart);
    }
    let mut x = x0.to_vec();
    clamp(&mut x, bounds);
    Ok(x)
}

/// Budgeted objective; `Ok(None)` once the budget is spent.
struct Counted<F> {
    f: F,
    evals: usize,
    max: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> Result<Option<f64>, OptimError> {
        if self.evals >= self.max {
            return Ok(None);
        }
        self.evals += 1;
        let v = (self.f)(x);
        if !v.is_finite() {
            return Err(OptimError::NonFinite { x: x.to_vec() });
        }
        Ok(Some(v))
    }
}

pub fn nelder_mead<F>(f: F, x0: &[f64], bounds: &[(f64, f64)], config: &NelderMeadConfig) -> Result<Outcome, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    let start = check_start(x0, bounds)?;
    let n = start.len();
    let mut obj = Counted {
        f,
        evals: 0,
        max: config.max_evals,
    };
    let Some(f0) = obj.eval(&start)? else {
        return Ok(Outcome {
            x: start,
            f: None,
            evals: 0,
            termination: Termination::Budget,
        });
    };
    let ranges: Vec<f64> = bounds.iter().map(|&(lo, hi)| (hi - lo).max(f64::MIN_POSITIVE)).collect();
    let mut simplex = vec![(start.clone(), f0)];
    let finish = |simplex: &mut Vec<(Vec<f64>, f64)>, evals, termination| {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, f) = simplex.swap_remove(0);
        Ok(Outcome {
            x,
            f: Some(f),
            evals,
            termination,
        })
    };
    for i in 0..n {
        let mut v = start.clone();
        let step = config.initial_step * ranges[i];
        v[i] = if v[i] + step <= bounds[i].1 { v[i] + step } else { v[i] - step };
        clamp(&mut v, bounds);
        match obj.eval(&v)? {
            Some(fv) => simplex.push((v, fv)),
            None => return finish(&mut simplex, obj.evals, Termination::Budget),
        }
    }
    if n == 0 {
        return finish(&mut simplex, obj.evals, Termination::Converged);
    }

    let along = |from: &[f64], to: &[f64], t: f64| -> Vec<f64> {
        let mut v: Vec<f64> = from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect();
        clamp(&mut v, bounds);
        v
    };
    loop {
        // Stable sort keeps earlier vertices first among equal values.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(best).zip(&ranges).map(|((a, b), r)| (a - b).abs() / r))
            .fold(0.0, f64::max);
        if diameter < config.tolerance {
            return finish(&mut simplex, obj.evals, Termination::Converged);
        }
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let (worst, f_worst) = simplex[n].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[n - 1].1;

        let xr = along(&centroid, &worst, -config.reflection);
        let Some(fr) = obj.eval(&xr)? else {
            return finish(&mut simplex, obj.evals, Termination::Budget);
        };
        if fr < f_best {
            let xe = along(&centroid, &xr, config.expansion);
            let Some(fe) = obj.eval(&xe)? else {
                simplex[n] = (xr, fr);
                return finish(&mut simplex, obj.evals, Termination::Budget);
            };
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, outside) = if fr < f_worst {
            (along(&centroid, &xr, config.contraction), true)
        } else {
            (along(&centroid, &worst, config.contraction), false)
        };
        let Some(fc) = obj.eval(&xc)? else {
            if fr < f_worst {
                simplex[n] = (xr, fr);
            }
            return finish(&mut simplex, obj.evals, Termination::Budget);
        };
        if (outside && fc <= fr) || (!outside && fc < f_worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for i in 1..=n {
            let v = along(&anchor, &simplex[i].0, config.shrink);
            match obj.eval(&v)? {
                Some(fv) => simplex[i] = (v, fv),
                None => return finish(&mut simplex, obj.evals, Termination::Budget),
            }
        }
    }
}

/// Central differences, one-sided where the box cuts the stencil.
fn fd_gradient<F: FnMut(&[f64]) -> f64>(
    obj: &mut Counted<F>,
    x: &[f64],
    bounds: &[(f64, f64)],
    step: f64,
) -> Result<Option<Vec<f64>>, OptimError> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let (lo, hi) = bounds[i];
        let h = step * (hi - lo);
        if h <= 0.0 {
            continue;
        }
        let plus = (x[i] + h).min(hi);
        let minus = (x[i] - h).max(lo);
        probe[i] = plus;
        let Some(fp) = obj.eval(&probe)? else { return Ok(None) };
        probe[i] = minus;
        let Some(fm) = obj.eval(&probe)? else { return Ok(None) };
        probe[i] = x[i];
        g[i] = (fp - fm) / (plus - minus);
    }
    Ok(Some(g))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn bfgs_fd<F>(f: F, x0: &[f64], bounds: &[(f64, f64)], config: &BfgsConfig) -> Result<Outcome, OptimError>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = check_start(x0, bounds)?;
    let n = x.len();
    let mut obj = Counted {
        f,
        evals: 0,
        max: config.max_evals,
    };
    let Some(mut fx) = obj.eval(&x)? else {
        return Ok(Outcome {
            x,
            f: None,
            evals: 0,
            termination: Termination::Budget,
        });
    };
    let done = |x: Vec<f64>, fx: f64, evals: usize, termination| {
        Ok(Outcome {
            x,
            f: Some(fx),
            evals,
            termination,
        })
    };
    let Some(mut g) = fd_gradient(&mut obj, &x, bounds, config.fd_step)? else {
        return done(x, fx, obj.evals, Termination::Budget);
    };
    let identity = |n: usize| {
        let mut h = vec![vec![0.0; n]; n];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        h
    };
    let mut hinv = identity(n);
    for _ in 0..config.max_iterations {
        if dot(&g, &g).sqrt() < config.gradient_tolerance {
            return done(x, fx, obj.evals, Termination::Stationary);
        }
        let mut p: Vec<f64> = hinv.iter().map(|row| -dot(row, &g)).collect();
        if dot(&p, &g) >= 0.0 {
            hinv = identity(n);
            p = g.iter().map(|v| -v).collect();
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let mut trial: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            clamp(&mut trial, bounds);
            let step: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let Some(ft) = obj.eval(&trial)? else {
                return done(x, fx, obj.evals, Termination::Budget);
            };
            if ft <= fx + config.armijo * dot(&g, &step) && ft <= fx {
                accepted = Some((trial, ft, step));
                break;
            }
            alpha *= config.backtrack;
        }
        let Some((x_new, f_new, s)) = accepted else {
            return done(x, fx, obj.evals, Termination::LineSearchFailed);
        };
        let Some(g_new) = fd_gradient(&mut obj, &x_new, bounds, config.fd_step)? else {
            return done(x_new, f_new, obj.evals, Termination::Budget);
        };
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            let hy: Vec<f64> = hinv.iter().map(|row| dot(row, &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        } else {
            hinv = identity(n);
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    done(x, fx, obj.evals, Termination::MaxIterations)
}
