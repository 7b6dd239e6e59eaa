//! Perturbed-bubble experiments: the Dirichlet problem with a weight that
//! is positive at the origin, boundary data from the flat bubble built on `W(0)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::BubbleProfile;
use crate::field::ScalarField;
use crate::grid::DiskGrid;
use crate::weight::{PoleConfig, WeightSpec};

use super::{solve_dirichlet, DirichletProblem, InitialGuess, NewtonParams, SolveResult};

/// One member of a least-mass experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeastMassSpec {
    /// Poles at `±eps` on the first axis, multiplicity one each.
    pub eps: f64,
    /// Concentration `e^{ξ(0)} W(0)` of the boundary bubble.
    pub concentration: f64,
    pub radius: f64,
    pub n: usize,
}

impl LeastMassSpec {
    pub fn poles(&self) -> Result<PoleConfig> {
        PoleConfig::new(vec![[self.eps, 0.0], [-self.eps, 0.0]], vec![1, 1])
    }

    pub fn weight(&self) -> Result<WeightSpec> {
        Ok(WeightSpec::pure(self.poles()?))
    }

    /// The flat bubble on `W(0)` whose trace is imposed on the boundary.
    pub fn profile(&self) -> Result<BubbleProfile> {
        let w0 = self.weight()?.at_origin();
        if !(w0 > 0.0) {
            return Err(Error::Inapplicable("W(0) must be positive".into()));
        }
        if !(self.concentration > 0.0) {
            return Err(Error::Config(format!(
                "concentration must be positive, got {}",
                self.concentration
            )));
        }
        Ok(BubbleProfile {
            peak: (self.concentration / w0).ln(),
            w0,
        })
    }

    pub fn problem(&self) -> Result<DirichletProblem> {
        let grid = DiskGrid::shared(self.radius, self.n)?;
        let profile = Arc::new(self.profile()?);
        let initial = ScalarField::from_closed_form(grid.clone(), profile.clone())?;
        Ok(DirichletProblem::from_trace(grid, self.weight()?, profile)?
            .with_initial(InitialGuess::Field(initial)))
    }
}

/// Solves one least-mass member from the bubble initial guess.
pub fn solve_least_mass(spec: &LeastMassSpec, params: &NewtonParams) -> SolveResult {
    let problem = spec.problem()?;
    solve_dirichlet(&problem, params)
}
