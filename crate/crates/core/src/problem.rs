//! The tumor model as a sample evaluator: parameters to coefficients to a
//! PDE solve to the total terminal cellularity.

use crate::error::{Error, Result};
use crate::estimator::SampleEvaluator;
use crate::fields::{FieldEvaluator, ParameterDomain};
use crate::lattice::Target;
use crate::solver::{LambdaShift, SolveOutput, StateVector, TumorSolver};

pub struct TumorProblem {
    solver: TumorSolver,
    fields: FieldEvaluator,
    u0: StateVector,
    shift: Option<LambdaShift>,
}

impl TumorProblem {
    pub fn new(solver: TumorSolver, fields: FieldEvaluator, u0: StateVector) -> Result<Self> {
        let n = solver.space().n_nodes();
        if u0.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: u0.len(),
            });
        }
        Ok(TumorProblem {
            solver,
            fields,
            u0,
            shift: None,
        })
    }

    /// Solves the exponentially reparameterized equation instead.
    pub fn with_shift(mut self, shift: LambdaShift) -> Self {
        self.shift = Some(shift);
        self
    }

    pub fn solver(&self) -> &TumorSolver {
        &self.solver
    }

    pub fn fields(&self) -> &FieldEvaluator {
        &self.fields
    }

    pub fn initial_state(&self) -> &StateVector {
        &self.u0
    }

    pub fn solve(&self, y: &[f64]) -> Result<SolveOutput> {
        let coeffs = self.fields.coefficients(y)?;
        match self.shift {
            None => self.solver.solve(&coeffs, &self.u0),
            Some(shift) => self.solver.solve_shifted(&coeffs, &self.u0, shift),
        }
    }
}

impl SampleEvaluator for TumorProblem {
    fn dim(&self) -> usize {
        self.fields.dim()
    }

    fn target(&self) -> Target {
        match self.fields.model().domain() {
            ParameterDomain::CenteredCube => Target::CenteredCube,
            ParameterDomain::Gaussian => Target::Gaussian,
        }
    }

    fn evaluate(&self, y: &[f64]) -> Result<f64> {
        let out = self.solve(y)?;
        Ok(self.solver.qoi(&out.terminal))
    }
}
