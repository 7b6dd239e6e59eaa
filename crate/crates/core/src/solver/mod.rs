//! Damped inexact Newton for the Dirichlet problem `-Δξ = W e^ξ` in `B_r`, `ξ = g` on `∂B_r`.

pub mod green;
pub mod krylov;
pub mod lattice;
pub mod least_mass;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calculus::{density, residual, sup_norm, NodeSet};
use crate::error::{Error, Result};
use crate::field::{ClosedForm, ScalarField};
use crate::grid::{DiskGrid, Point};
use crate::weight::WeightSpec;

use krylov::{minres, pcg, DirichletOperator};

pub type BoundaryFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Starting point of the Newton iteration.
#[derive(Clone, Debug, Default)]
pub enum InitialGuess {
    #[default]
    HarmonicExtension,
    Field(ScalarField),
}

#[derive(Clone)]
pub struct DirichletProblem {
    weight: WeightSpec,
    grid: Arc<DiskGrid>,
    boundary: BoundaryFn,
    boundary_values: Vec<f64>,
    initial: InitialGuess,
}

impl fmt::Debug for DirichletProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DirichletProblem")
            .field("radius", &self.grid.radius())
            .field("n", &self.grid.n())
            .field("weight", &self.weight)
            .finish()
    }
}

impl DirichletProblem {
    pub fn new(
        grid: Arc<DiskGrid>,
        weight: WeightSpec,
        boundary: impl Fn(Point) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let boundary: BoundaryFn = Arc::new(boundary);
        let boundary_values: Vec<f64> =
            grid.crossings().iter().map(|c| boundary(c.point)).collect();
        if let Some(v) = boundary_values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "boundary data must be bounded, got {v}"
            )));
        }
        Ok(DirichletProblem {
            weight,
            grid,
            boundary,
            boundary_values,
            initial: InitialGuess::default(),
        })
    }

    /// Boundary data taken from the trace of a closed form.
    pub fn from_trace(
        grid: Arc<DiskGrid>,
        weight: WeightSpec,
        trace: Arc<dyn ClosedForm>,
    ) -> Result<Self> {
        Self::new(grid, weight, move |x| trace.value(x))
    }

    pub fn with_initial(mut self, initial: InitialGuess) -> Self {
        self.initial = initial;
        self
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }

    pub fn grid(&self) -> &Arc<DiskGrid> {
        &self.grid
    }

    pub fn boundary(&self) -> &BoundaryFn {
        &self.boundary
    }

    pub fn boundary_values(&self) -> &[f64] {
        &self.boundary_values
    }

    pub fn initial(&self) -> &InitialGuess {
        &self.initial
    }

    /// `max g - min g` over the discrete boundary.
    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self
            .boundary_values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                (l.min(v), h.max(v))
            });
        hi - lo
    }

    fn boundary_sup(&self) -> f64 {
        self.boundary_values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonParams {
    pub max_iterations: usize,
    /// Residual tolerance relative to `(4 / h^2) (1 + max |g|)`.
    pub rtol: f64,
    pub backtrack: f64,
    pub min_step: f64,
    /// Upper bound of the inexact-Newton forcing term.
    pub linear_rtol: f64,
    pub linear_max_iterations: usize,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams {
            max_iterations: 50,
            rtol: 1e-9,
            backtrack: 0.5,
            min_step: 1.0 / 1024.0,
            linear_rtol: 0.1,
            linear_max_iterations: 20_000,
        }
    }
}

impl NewtonParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.rtol > 0.0) {
            return Err(Error::Config(format!(
                "rtol must be positive, got {}",
                self.rtol
            )));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config(format!(
                "backtrack factor must lie in (0, 1), got {}",
                self.backtrack
            )));
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return Err(Error::Config(format!(
                "min_step must lie in (0, 1], got {}",
                self.min_step
            )));
        }
        if !(self.linear_rtol > 0.0 && self.linear_rtol < 1.0) {
            return Err(Error::Config(format!(
                "linear_rtol must lie in (0, 1), got {}",
                self.linear_rtol
            )));
        }
        Ok(())
    }
}

/// One line of a convergence record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub residual: f64,
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceKind {
    Quadratic,
    DampedOnly,
    Diverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub iterations: Vec<IterationRecord>,
    pub tolerance: f64,
    pub kind: ConvergenceKind,
    pub linear_iterations: usize,
}

impl ConvergenceRecord {
    /// Newton steps taken.
    pub fn steps(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |r| r.residual)
    }

    /// Writes one JSON object `{iter, residual, step}` per line.
    pub fn write_json_lines(&self, mut out: impl Write) -> Result<()> {
        for r in &self.iterations {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub field: ScalarField,
    pub record: ConvergenceRecord,
    /// Sup-norm of `Δξ + W e^ξ` over interior nodes, 5-point stencil.
    pub interior_residual: f64,
}

/// A failed solve with the best iterate reached.
#[derive(Debug)]
pub struct SolveFailure {
    pub message: String,
    pub best: Option<Solution>,
}

impl fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for SolveFailure {}

impl From<SolveFailure> for Error {
    fn from(e: SolveFailure) -> Self {
        Error::Solver(e.message)
    }
}

impl From<Error> for SolveFailure {
    fn from(e: Error) -> Self {
        SolveFailure {
            message: e.to_string(),
            best: None,
        }
    }
}

impl From<Error> for Box<SolveFailure> {
    fn from(e: Error) -> Self {
        Box::new(e.into())
    }
}

pub type SolveResult = std::result::Result<Solution, Box<SolveFailure>>;

struct Discrete<'a> {
    op: DirichletOperator,
    rhs: Vec<f64>,
    weight: Vec<f64>,
    problem: &'a DirichletProblem,
}

impl Discrete<'_> {
    /// `A u - b - W e^u`.
    fn residual(&self, u: &[f64], out: &mut [f64]) {
        self.op.apply(u, out);
        for i in 0..u.len() {
            out[i] -= self.rhs[i] + density(self.weight[i], u[i]);
        }
    }

    /// Sup-norm of the residual with each row scaled by `(4 / h^2) / A_ii`.
    /// Interior rows are unscaled; rows with short cut arms would otherwise
    /// dominate through their `1 / (θ h^2)` diagonal.
    fn merit(&self, r: &[f64]) -> f64 {
        let full = 4.0 * self.op.inv_h2();
        r.iter().zip(self.op.diagonal()).fold(0.0, |m, (x, d)| {
            if x.is_nan() {
                f64::INFINITY
            } else {
                m.max((x * full / d).abs())
            }
        })
    }

    fn to_field(&self, u: &[f64]) -> Result<ScalarField> {
        let grid = self.problem.grid();
        let mut values = vec![f64::NAN; grid.len()];
        for (k, &idx) in grid.domain().iter().enumerate() {
            values[idx] = u[k];
        }
        ScalarField::from_values(
            grid.clone(),
            values,
            Some(self.problem.boundary_values().to_vec()),
        )
    }
}

/// Discrete harmonic extension of the boundary data (PCG on the Dirichlet Laplacian).
pub fn harmonic_extension(problem: &DirichletProblem) -> Result<ScalarField> {
    let op = DirichletOperator::new(problem.grid());
    let rhs = op.boundary_rhs(problem.boundary_values());
    let mut u = vec![0.0; op.len()];
    let stats = pcg(
        |x, y| op.apply(x, y),
        op.diagonal(),
        &rhs,
        &mut u,
        1e-13,
        50_000,
    );
    if !stats.converged && stats.relative_residual > 1e-10 {
        return Err(Error::Solver(format!(
            "harmonic extension stalled at relative residual {:.3e}",
            stats.relative_residual
        )));
    }
    let d = Discrete {
        op,
        rhs,
        weight: Vec::new(),
        problem,
    };
    d.to_field(&u)
}

/// Solves the Dirichlet problem by damped inexact Newton with MINRES inner solves.
pub fn solve_dirichlet(problem: &DirichletProblem, params: &NewtonParams) -> SolveResult {
    params.validate()?;
    let grid = problem.grid().clone();
    let op = DirichletOperator::new(&grid);
    let rhs = op.boundary_rhs(problem.boundary_values());
    let weight: Vec<f64> = grid
        .domain()
        .iter()
        .map(|&i| problem.weight().value(grid.point(i)))
        .collect();
    let disc = Discrete {
        op,
        rhs,
        weight,
        problem,
    };
    let m = disc.op.len();

    let mut u: Vec<f64> = match problem.initial() {
        InitialGuess::HarmonicExtension => {
            let h = harmonic_extension(problem)?;
            grid.domain().iter().map(|&i| h.value(i)).collect()
        }
        InitialGuess::Field(f) => {
            let f = if Arc::ptr_eq(f.grid(), &grid) {
                f.clone()
            } else {
                f.resample(grid.clone())?
            };
            grid.domain().iter().map(|&i| f.value(i)).collect()
        }
    };

    let h = grid.spacing();
    let tolerance = params.rtol * 4.0 / (h * h) * (1.0 + problem.boundary_sup());
    let mut r = vec![0.0; m];
    disc.residual(&u, &mut r);
    let mut res = disc.merit(&r);
    let res0 = res;
    let mut history = vec![IterationRecord {
        iter: 0,
        residual: res,
        step: 0.0,
    }];
    let mut linear_iterations = 0;
    let mut trial = vec![0.0; m];
    let mut r_trial = vec![0.0; m];
    let mut failure = None;

    while res > tolerance {
        let iter = history.len();
        if iter > params.max_iterations {
            failure = Some(format!(
                "Newton did not converge in {} iterations (residual {res:.3e}, tolerance {tolerance:.3e})",
                params.max_iterations
            ));
            break;
        }
        if !res.is_finite() {
            failure = Some("residual is not finite".to_string());
            break;
        }
        let jac_diag: Vec<f64> = (0..m).map(|i| density(disc.weight[i], u[i])).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            disc.op.apply(x, y);
            for i in 0..x.len() {
                y[i] -= jac_diag[i] * x[i];
            }
        };
        // MINRES controls a weighted 2-norm; the merit is a sup-norm, so the
        // correction is refined until the linear residual meets the forcing
        // term in the merit as well.
        let forcing = params.linear_rtol.min(res / res0).max(1e-14);
        let mut delta = vec![0.0; m];
        let mut lin = r.clone();
        let mut inner_rtol = forcing;
        for _ in 0..8 {
            let rhs: Vec<f64> = lin.iter().map(|v| -v).collect();
            let (correction, stats) = minres(
                apply,
                disc.op.diagonal(),
                &rhs,
                inner_rtol,
                params.linear_max_iterations,
            );
            linear_iterations += stats.iterations;
            for (d, c) in delta.iter_mut().zip(&correction) {
                *d += c;
            }
            apply(&delta, &mut lin);
            for (l, ri) in lin.iter_mut().zip(&r) {
                *l += ri;
            }
            if disc.merit(&lin) <= forcing * res || inner_rtol <= 1e-14 {
                break;
            }
            inner_rtol = (inner_rtol * 0.1).max(1e-14);
        }

        let mut step = 1.0;
        let accepted = loop {
            for i in 0..m {
                trial[i] = u[i] + step * delta[i];
            }
            disc.residual(&trial, &mut r_trial);
            let candidate = disc.merit(&r_trial);
            if candidate < res {
                break Some(candidate);
            }
            step *= params.backtrack;
            if step < params.min_step {
                break None;
            }
        };
        match accepted {
            Some(new_res) => {
                std::mem::swap(&mut u, &mut trial);
                std::mem::swap(&mut r, &mut r_trial);
                res = new_res;
                history.push(IterationRecord {
                    iter,
                    residual: res,
                    step,
                });
            }
            None => {
                failure = Some(format!(
                    "line search failed at iteration {iter} (residual {res:.3e}, tolerance {tolerance:.3e})"
                ));
                break;
            }
        }
    }

    let kind = if failure.is_some() {
        ConvergenceKind::Diverged
    } else {
        classify(&history)
    };
    let record = ConvergenceRecord {
        iterations: history,
        tolerance,
        kind,
        linear_iterations,
    };
    let solution = disc.to_field(&u).and_then(|field| {
        let interior_residual = sup_norm(&residual(&field, problem.weight())?, NodeSet::Interior);
        Ok(Solution {
            field,
            record,
            interior_residual,
        })
    });
    match (failure, solution) {
        (None, Ok(s)) => Ok(s),
        (Some(message), best) => Err(Box::new(SolveFailure {
            message,
            best: best.ok(),
        })),
        (None, Err(e)) => Err(e.into()),
    }
}

/// Quadratic if the last step was a full step, the per-step contraction
/// `r_K / r_{K-1}` is still shrinking, and relative to the first residual
/// `ln e_K <= 1.5 ln e_{K-1}`.
fn classify(history: &[IterationRecord]) -> ConvergenceKind {
    let k = history.len();
    if k <= 1 {
        return ConvergenceKind::Quadratic;
    }
    let last = history[k - 1];
    if last.step != 1.0 {
        return ConvergenceKind::DampedOnly;
    }
    if k == 2 || last.residual == 0.0 {
        return ConvergenceKind::Quadratic;
    }
    let r0 = history[0].residual;
    let (e_last, e_prev) = (last.residual / r0, history[k - 2].residual / r0);
    let contraction = last.residual / history[k - 2].residual;
    let previous = history[k - 2].residual / history[k - 3].residual;
    if contraction < previous && (e_prev >= 1.0 || e_last.ln() <= 1.5 * e_prev.ln()) {
        ConvergenceKind::Quadratic
    } else {
        ConvergenceKind::DampedOnly
    }
}

/// One stage of a continuation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStage {
    pub parameter: f64,
    pub record: ConvergenceRecord,
}

/// Default continuation fractions (`λ/4, λ/2, λ`).
pub const CONTINUATION_FRACTIONS: [f64; 3] = [0.25, 0.5, 1.0];

/// Solves `make(1)` directly; if Newton fails, walks `make(t)` through
/// `fractions` using each solution as the next initial guess.
pub fn solve_with_continuation(
    make: impl Fn(f64) -> Result<DirichletProblem>,
    params: &NewtonParams,
    fractions: &[f64],
) -> std::result::Result<(Solution, Vec<ContinuationStage>), Box<SolveFailure>> {
    let target = make(1.0)?;
    let first = solve_dirichlet(&target, params);
    let direct_failure = match first {
        Ok(s) => {
            let stage = ContinuationStage {
                parameter: 1.0,
                record: s.record.clone(),
            };
            return Ok((s, vec![stage]));
        }
        Err(f) => f,
    };
    let mut stages = Vec::new();
    let mut previous: Option<ScalarField> = None;
    let mut last = None;
    for &t in fractions {
        let mut p = make(t)?;
        if let Some(f) = previous.take() {
            p = p.with_initial(InitialGuess::Field(f));
        }
        match solve_dirichlet(&p, params) {
            Ok(s) => {
                stages.push(ContinuationStage {
                    parameter: t,
                    record: s.record.clone(),
                });
                previous = Some(s.field.clone());
                last = Some(s);
            }
            Err(f) => {
                return Err(Box::new(SolveFailure {
                    message: format!(
                        "continuation failed at parameter {t}: {} (direct solve: {})",
                        f.message, direct_failure.message
                    ),
                    best: f.best,
                }))
            }
        }
    }
    match last {
        Some(s) if fractions.last() == Some(&1.0) => Ok((s, stages)),
        _ => Err(direct_failure),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::RadialBubble;

    #[test]
    fn classifies_quadratic_tail() {
        let rec = |r: &[f64], s: &[f64]| -> Vec<IterationRecord> {
            r.iter()
                .zip(s)
                .enumerate()
                .map(|(i, (&residual, &step))| IterationRecord {
                    iter: i,
                    residual,
                    step,
                })
                .collect()
        };
        assert_eq!(
            classify(&rec(&[1.0, 1e-2, 1e-5], &[0.0, 1.0, 1.0])),
            ConvergenceKind::Quadratic
        );
        assert_eq!(
            classify(&rec(&[1.0, 0.5, 0.25], &[0.0, 1.0, 1.0])),
            ConvergenceKind::DampedOnly
        );
        assert_eq!(
            classify(&rec(&[1.0, 1e-2, 1e-5], &[0.0, 1.0, 0.5])),
            ConvergenceKind::DampedOnly
        );
    }

    #[test]
    fn tiny_weight_gives_harmonic_extension() {
        let grid = DiskGrid::shared(1.0, 33).unwrap();
        let w = WeightSpec::constant(1e-300).unwrap();
        let p = DirichletProblem::new(grid, w, |x| x[0] * x[0] - x[1] * x[1] + 2.0).unwrap();
        let s = solve_dirichlet(&p, &NewtonParams::default()).unwrap();
        let h = harmonic_extension(&p).unwrap();
        for &i in p.grid().domain() {
            assert!((s.field.value(i) - h.value(i)).abs() < 1e-10);
            // x^2 - y^2 + 2 is harmonic and the 5-point stencil is exact on it.
            let x = p.grid().point(i);
            assert!((h.value(i) - (x[0] * x[0] - x[1] * x[1] + 2.0)).abs() < 1e-3);
        }
    }

    #[test]
    fn recovers_moderate_bubble() {
        let grid = DiskGrid::shared(1.0, 65).unwrap();
        let b = RadialBubble::new(0, 0.5).unwrap();
        let p = DirichletProblem::from_trace(grid.clone(), b.weight(), Arc::new(b)).unwrap();
        let s = solve_dirichlet(&p, &NewtonParams::default()).unwrap();
        let exact = ScalarField::from_closed_form(grid, Arc::new(b)).unwrap();
        let err = crate::calculus::sup_distance(&s.field, &exact, NodeSet::Domain).unwrap();
        assert!(err < 1e-3, "{err}");
        assert!(s.record.steps() <= 10);
    }
}
