//! Implicit Euler time stepping of the tumor growth equation
//!
//! ```text
//! u_t - div(a grad u) - kappa u (1 - u) + f u = 0,   grad u · n = 0,
//! ```
//!
//! and of its exponentially shifted form `u = exp(lambda t) w`,
//!
//! ```text
//! w_t - div(a grad w) + b w^2 + c w = 0,   b = kappa exp(lambda t),  c = lambda + f - kappa.
//! ```
//!
//! The quadratic term is discretized with the group finite element method:
//! the reaction mass matrix weighted by `kappa` acts on the nodal vector of
//! `u_i^2`. Each step is solved by full Newton iterations with a banded direct
//! factorization of the Jacobian.

use std::fmt::Write as _;
use std::ops::{Deref, DerefMut};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{lump, FemSpace};
use crate::mesh::{Mesh, Point};
use crate::sparse::{BandSolver, SparseMatrix};
use crate::treatment::Treatment;

/// Choice of the shift `lambda` in the reparameterized equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaShift {
    /// `kappa_max + 1`, with `kappa_max` taken over the quadrature samples.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub final_time: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub mass_lumping: bool,
    pub keep_trajectory: bool,
}

impl SolverConfig {
    pub fn new(dt: f64, final_time: f64) -> Result<Self> {
        let config = SolverConfig {
            dt,
            final_time,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            mass_lumping: false,
            keep_trajectory: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.final_time >= self.dt) || !self.final_time.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "final time {} must be at least dt = {}",
                self.final_time, self.dt
            )));
        }
        let ratio = self.final_time / self.dt;
        if (ratio - ratio.round()).abs() >= 0.5 - 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "final time / dt = {ratio} is ambiguous to round"
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidArgument(
                "Newton tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.final_time / self.dt).round() as usize
    }

    /// Time level `n`; computed by multiplication so levels never drift.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }
}

/// Nodal values of the tumor volume fraction at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("state entry {i} is not finite")));
        }
        Ok(StateVector(values))
    }

    pub fn constant(n: usize, value: f64) -> Self {
        StateVector(vec![value; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// `amplitude * exp(-|x - center|^2 / (2 width^2))` at every node.
pub fn initial_condition_gaussian(
    mesh: &Mesh,
    center: Point,
    amplitude: f64,
    width: f64,
) -> Result<StateVector> {
    if !(0.0..=1.0).contains(&amplitude) {
        return Err(Error::InvalidArgument(format!(
            "initial amplitude {amplitude} must lie in [0, 1]"
        )));
    }
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("width must be positive, got {width}")));
    }
    let values = mesh
        .nodes()
        .iter()
        .map(|x| {
            let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
            amplitude * (-r2 / (2.0 * width * width)).exp()
        })
        .collect();
    StateVector::new(values)
}

/// Diffusion and proliferation sampled at the quadrature points of a
/// [`FemSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub diffusion: Vec<f64>,
    pub proliferation: Vec<f64>,
}

impl Coefficients {
    pub fn from_fns(
        space: &FemSpace,
        diffusion: impl Fn(Point) -> f64,
        proliferation: impl Fn(Point) -> f64,
    ) -> Self {
        Coefficients {
            diffusion: space.sample_at_quadrature(diffusion),
            proliferation: space.sample_at_quadrature(proliferation),
        }
    }

    pub fn diffusion_range(&self) -> (f64, f64) {
        range(&self.diffusion)
    }

    pub fn proliferation_range(&self) -> (f64, f64) {
        range(&self.proliferation)
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Time-dependent source `s(x, t)` added to the right-hand side; used for
/// manufactured-solution checks.
pub type Source = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub terminal: StateVector,
    /// Smallest nodal value over all time levels, including the initial one.
    pub min_value: f64,
    pub max_value: f64,
    pub newton_iterations: usize,
    pub trajectory: Option<Vec<StateVector>>,
    /// Shift used in the reparameterized mode.
    pub lambda: Option<f64>,
    /// Largest `max_i w_i - exp(-lambda t_n)` over all levels, reparameterized mode only.
    pub shifted_bound_excess: Option<f64>,
}

/// Mass-type operator in either consistent or lumped form.
enum MassOp {
    Full(SparseMatrix),
    Lumped(Vec<f64>),
}

impl MassOp {
    fn new(m: SparseMatrix, lumped: bool) -> Self {
        if lumped {
            MassOp::Lumped(lump(&m))
        } else {
            MassOp::Full(m)
        }
    }

    fn row_sums(&self) -> Vec<f64> {
        match self {
            MassOp::Lumped(d) => d.clone(),
            MassOp::Full(m) => m.row_sums(),
        }
    }

    fn apply_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            MassOp::Lumped(d) => {
                for ((o, di), xi) in out.iter_mut().zip(d).zip(x) {
                    *o += scale * di * xi;
                }
            }
            MassOp::Full(m) => {
                let offsets = m.row_offsets();
                let cols = m.col_indices();
                let vals = m.values();
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for p in offsets[i]..offsets[i + 1] {
                        acc += vals[p] * x[cols[p]];
                    }
                    *o += scale * acc;
                }
            }
        }
    }
}

/// Forcing operator for one step.
enum Forcing {
    None,
    /// Spatially uniform value multiplying the mass operator.
    Uniform(f64),
    Field(MassOp),
}

/// Step-halving limit of the Newton line search.
const MAX_HALVINGS: usize = 10;

/// Fixed inputs of one time step.
struct StepData<'a> {
    u_prev: &'a [f64],
    dt: f64,
    shift: f64,
    quad_scale: f64,
    forcing: &'a Forcing,
    load: Option<&'a [f64]>,
}

/// Per-sample assembled operators.
struct SampleOperators {
    stiffness: SparseMatrix,
    reaction: MassOp,
}

/// Simulator for one mesh, treatment, and configuration; solves any number
/// of coefficient samples.
pub struct TumorSolver {
    space: Arc<FemSpace>,
    treatment: Treatment,
    config: SolverConfig,
    mass: MassOp,
    nodal_mass: Vec<f64>,
    source: Option<Source>,
}

impl TumorSolver {
    pub fn new(space: Arc<FemSpace>, treatment: Treatment, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let nodal_mass = space.mass().row_sums();
        let mass = MassOp::new(space.mass().clone(), config.mass_lumping);
        Ok(TumorSolver {
            space,
            treatment,
            config,
            mass,
            nodal_mass,
            source: None,
        })
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = Some(source);
        self
    }

    pub fn space(&self) -> &Arc<FemSpace> {
        &self.space
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn treatment(&self) -> &Treatment {
        &self.treatment
    }

    fn operators(&self, coeffs: &Coefficients) -> Result<SampleOperators> {
        let nq = self.space.n_quadrature_points();
        for v in [&coeffs.diffusion, &coeffs.proliferation] {
            if v.len() != nq {
                return Err(Error::Dimension {
                    expected: nq,
                    found: v.len(),
                });
            }
        }
        let stiffness = self.space.stiffness_from_samples(&coeffs.diffusion)?;
        let reaction = MassOp::new(
            self.space.weighted_mass_from_samples(&coeffs.proliferation)?,
            self.config.mass_lumping,
        );
        Ok(SampleOperators {
            stiffness,
            reaction,
        })
    }

    fn forcing(&self, t_prev: f64, t_next: f64) -> Result<Forcing> {
        if self.treatment.is_empty() {
            return Ok(Forcing::None);
        }
        if self.treatment.is_spatially_uniform() {
            let f = self.treatment.step_forcing([0.0, 0.0], t_prev, t_next);
            return Ok(if f == 0.0 { Forcing::None } else { Forcing::Uniform(f) });
        }
        let samples = self
            .space
            .sample_at_quadrature(|x| self.treatment.step_forcing(x, t_prev, t_next));
        Ok(Forcing::Field(MassOp::new(
            self.space.weighted_mass_from_samples(&samples)?,
            self.config.mass_lumping,
        )))
    }

    fn source_load(&self, t: f64) -> Result<Option<Vec<f64>>> {
        match &self.source {
            None => Ok(None),
            Some(s) => {
                let samples = self.space.sample_at_quadrature(|x| s(x, t));
                self.space.load_from_samples(&samples).map(Some)
            }
        }
    }

    /// Solves the original equation from `u0` to the final time.
    pub fn solve(&self, coeffs: &Coefficients, u0: &StateVector) -> Result<SolveOutput> {
        self.run(coeffs, u0, None)
    }

    /// Solves the reparameterized equation and maps `w(T)` back to `u(T)`.
    pub fn solve_shifted(
        &self,
        coeffs: &Coefficients,
        u0: &StateVector,
        shift: LambdaShift,
    ) -> Result<SolveOutput> {
        let kappa_max = coeffs.proliferation_range().1;
        let lambda = match shift {
            LambdaShift::Auto => kappa_max + 1.0,
            LambdaShift::Value(l) => l,
        };
        if !(lambda > kappa_max) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "shift {lambda} must exceed the maximal proliferation {kappa_max}"
            )));
        }
        self.run(coeffs, u0, Some(lambda))
    }

    fn run(&self, coeffs: &Coefficients, u0: &StateVector, lambda: Option<f64>) -> Result<SolveOutput> {
        let n = self.space.n_nodes();
        if u0.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: u0.len(),
            });
        }
        let ops = self.operators(coeffs)?;
        let mut workspace = Workspace::new(&self.space, self.config.mass_lumping);
        let mut state = u0.clone();
        let mut min_value = state.min();
        let mut max_value = state.max();
        let mut excess = lambda.map(|_| max_value - 1.0);
        let mut trajectory = self.config.keep_trajectory.then(|| vec![state.clone()]);
        let mut newton_iterations = 0;

        for step in 0..self.config.n_steps() {
            let t_prev = self.config.time(step);
            let t_next = self.config.time(step + 1);
            let (next, iters) = self.step(&ops, &state, t_prev, t_next, lambda, &mut workspace)?;
            newton_iterations += iters;
            state = next;
            min_value = min_value.min(state.min());
            max_value = max_value.max(state.max());
            if let (Some(l), Some(e)) = (lambda, excess.as_mut()) {
                *e = e.max(state.max() - (-l * t_next).exp());
            }
            if let Some(traj) = trajectory.as_mut() {
                traj.push(state.clone());
            }
        }

        if let Some(l) = lambda {
            let growth = (l * self.config.time(self.config.n_steps())).exp();
            state.iter_mut().for_each(|w| *w *= growth);
        }
        Ok(SolveOutput {
            terminal: state,
            min_value,
            max_value,
            newton_iterations,
            trajectory,
            lambda,
            shifted_bound_excess: excess,
        })
    }

    /// One implicit Euler step of the original equation.
    pub fn implicit_euler_step(
        &self,
        coeffs: &Coefficients,
        u_prev: &StateVector,
        t_prev: f64,
        t_next: f64,
    ) -> Result<StateVector> {
        let ops = self.operators(coeffs)?;
        let mut workspace = Workspace::new(&self.space, self.config.mass_lumping);
        self.step(&ops, u_prev, t_prev, t_next, None, &mut workspace)
            .map(|(u, _)| u)
    }

    fn step(
        &self,
        ops: &SampleOperators,
        u_prev: &StateVector,
        t_prev: f64,
        t_next: f64,
        lambda: Option<f64>,
        ws: &mut Workspace,
    ) -> Result<(StateVector, usize)> {
        let dt = t_next - t_prev;
        let n = u_prev.len();
        let shift = lambda.unwrap_or(0.0);
        let quad_scale = lambda.map_or(1.0, |l| (l * t_next).exp());
        let forcing = self.forcing(t_prev, t_next)?;
        let load = self.source_load(t_next)?;

        let step = StepData {
            u_prev,
            dt,
            shift,
            quad_scale,
            forcing: &forcing,
            load: load.as_deref(),
        };
        let mut u = self.initial_guess(ops, &step);
        let mut trial = u.clone();
        let mut delta = vec![0.0; n];
        let mut norm = self.residual(ops, &step, &u, ws);
        if !norm.is_finite() {
            return Err(Error::Numeric(format!("non-finite Newton residual at t = {t_next}")));
        }
        let mut trace = Vec::new();
        for iteration in 0..=self.config.newton_max_iter {
            trace.push(norm);
            if norm <= self.config.newton_tol {
                return Ok((u, iteration));
            }
            if iteration == self.config.newton_max_iter {
                break;
            }
            self.factor_jacobian(ops, &u, dt, shift, quad_scale, &forcing, ws)?;
            delta.copy_from_slice(&ws.residual);
            ws.solve(&mut delta);
            // Backtrack on the residual norm; the full step is taken whenever
            // it already reduces the residual.
            let mut alpha = 1.0;
            let mut trial_norm = f64::NAN;
            for _ in 0..=MAX_HALVINGS {
                for ((t, ui), d) in trial.iter_mut().zip(u.iter()).zip(&delta) {
                    *t = ui - alpha * d;
                }
                trial_norm = self.residual(ops, &step, &trial, ws);
                if trial_norm <= (1.0 - 1e-4 * alpha) * norm {
                    break;
                }
                alpha *= 0.5;
            }
            if !trial_norm.is_finite() {
                return Err(Error::Numeric(format!("non-finite Newton residual at t = {t_next}")));
            }
            std::mem::swap(&mut u, &mut trial);
            norm = trial_norm;
        }
        Err(Error::NonConvergence {
            iterations: self.config.newton_max_iter,
            time: t_next,
            trace,
        })
    }

    /// `F(u) = M (u - u_prev)/dt + K u + q R[u^2] + (shift M + R_f - R) u - load`,
    /// left in `ws.residual`; returns its Euclidean norm.
    fn residual(&self, ops: &SampleOperators, step: &StepData, u: &[f64], ws: &mut Workspace) -> f64 {
        let residual = &mut ws.residual;
        ops.stiffness.mul_vec_into(u, residual);
        for i in 0..u.len() {
            ws.diff[i] = (u[i] - step.u_prev[i]) / step.dt + step.shift * u[i];
            ws.square[i] = step.quad_scale * u[i] * u[i] - u[i];
        }
        self.mass.apply_add(&ws.diff, 1.0, residual);
        ops.reaction.apply_add(&ws.square, 1.0, residual);
        match step.forcing {
            Forcing::None => {}
            Forcing::Uniform(f) => self.mass.apply_add(u, *f, residual),
            Forcing::Field(rf) => rf.apply_add(u, 1.0, residual),
        }
        if let Some(load) = step.load {
            residual.iter_mut().zip(load).for_each(|(r, l)| *r -= l);
        }
        residual.iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    /// Nodewise positive root of the lumped step equation without diffusion.
    /// At this point the reaction part of the Jacobian is positive, which
    /// keeps Newton away from the spurious negative branch when `kappa dt > 1`.
    fn initial_guess(&self, ops: &SampleOperators, step: &StepData) -> StateVector {
        let rate = ops.reaction.row_sums();
        let forcing_rate = match step.forcing {
            Forcing::None => None,
            Forcing::Uniform(f) => Some(vec![*f; rate.len()]),
            Forcing::Field(rf) => Some(rf.row_sums()),
        };
        let mut guess = StateVector(step.u_prev.to_vec());
        for i in 0..guess.len() {
            let m = self.nodal_mass[i];
            let kappa = rate[i] / m;
            let f = forcing_rate.as_ref().map_or(0.0, |r| r[i] / m);
            let a = step.quad_scale * kappa;
            let b = 1.0 / step.dt + step.shift + f - kappa;
            let c = step.u_prev[i] / step.dt + step.load.map_or(0.0, |l| l[i] / m);
            let disc = b * b + 4.0 * a * c;
            let root = if a == 0.0 {
                c / b
            } else if b >= 0.0 {
                2.0 * c / (b + disc.sqrt())
            } else {
                (disc.sqrt() - b) / (2.0 * a)
            };
            if disc >= 0.0 && root.is_finite() {
                guess[i] = root;
            }
        }
        guess
    }

    #[allow(clippy::too_many_arguments)]
    fn factor_jacobian(
        &self,
        ops: &SampleOperators,
        u: &[f64],
        dt: f64,
        shift: f64,
        quad_scale: f64,
        forcing: &Forcing,
        ws: &mut Workspace,
    ) -> Result<()> {
        let uniform_f = match forcing {
            Forcing::Uniform(f) => *f,
            _ => 0.0,
        };
        let mass_factor = 1.0 / dt + shift + uniform_f;
        match (&self.mass, &ops.reaction) {
            (MassOp::Lumped(m), MassOp::Lumped(r)) => {
                for i in 0..u.len() {
                    ws.diag[i] = m[i] * mass_factor + r[i] * (2.0 * quad_scale * u[i] - 1.0);
                }
                if let Forcing::Field(MassOp::Lumped(rf)) = forcing {
                    ws.diag.iter_mut().zip(rf).for_each(|(d, f)| *d += f);
                }
                ws.factor_lumped(&ops.stiffness)
            }
            (MassOp::Full(m), MassOp::Full(r)) => {
                let jac = ws.jacobian.values_mut();
                let cols = m.col_indices();
                let (mv, kv, rv) = (m.values(), ops.stiffness.values(), r.values());
                for p in 0..jac.len() {
                    jac[p] = mv[p] * mass_factor + kv[p] + rv[p] * (2.0 * quad_scale * u[cols[p]] - 1.0);
                }
                if let Forcing::Field(MassOp::Full(rf)) = forcing {
                    jac.iter_mut().zip(rf.values()).for_each(|(j, f)| *j += f);
                }
                ws.factor_full()
            }
            _ => unreachable!("mass and reaction operators share the lumping mode"),
        }
    }

    /// Total cellularity `1ᵀ M u`.
    pub fn qoi(&self, u: &[f64]) -> f64 {
        qoi_from_nodal_mass(&self.nodal_mass, u)
    }
}

fn qoi_from_nodal_mass(nodal_mass: &[f64], u: &[f64]) -> f64 {
    nodal_mass.iter().zip(u).map(|(m, v)| m * v).sum()
}

/// Scratch buffers and the factorization for one solve.
struct Workspace {
    residual: Vec<f64>,
    diff: Vec<f64>,
    square: Vec<f64>,
    diag: Vec<f64>,
    jacobian: SparseMatrix,
    cholesky: Option<BandSolver>,
    lu: BandSolver,
    use_lu: bool,
}

impl Workspace {
    fn new(space: &FemSpace, lumped: bool) -> Self {
        let n = space.n_nodes();
        Workspace {
            residual: vec![0.0; n],
            diff: vec![0.0; n],
            square: vec![0.0; n],
            diag: vec![0.0; n],
            jacobian: SparseMatrix::zeros(space.pattern().clone()),
            cholesky: lumped.then(|| BandSolver::cholesky(space.ordering().clone())),
            lu: BandSolver::lu(space.ordering().clone()),
            use_lu: !lumped,
        }
    }

    fn factor_lumped(&mut self, stiffness: &SparseMatrix) -> Result<()> {
        // The lumped Jacobian is symmetric; fall back to LU if it is not definite.
        if let Some(chol) = self.cholesky.as_mut() {
            if chol.factor(stiffness, Some(&self.diag)).is_ok() {
                self.use_lu = false;
                return Ok(());
            }
        }
        self.use_lu = true;
        self.lu.factor(stiffness, Some(&self.diag))
    }

    fn factor_full(&mut self) -> Result<()> {
        self.use_lu = true;
        self.lu.factor(&self.jacobian, None)
    }

    fn solve(&mut self, rhs: &mut [f64]) {
        match (&mut self.cholesky, self.use_lu) {
            (Some(chol), false) => chol.solve_in_place(rhs),
            _ => self.lu.solve_in_place(rhs),
        }
    }
}

/// Total cellularity `1ᵀ M u` with the consistent mass matrix.
pub fn qoi_total_cellularity(u: &[f64], mass: &SparseMatrix) -> Result<f64> {
    if u.len() != mass.n_cols() {
        return Err(Error::Dimension {
            expected: mass.n_cols(),
            found: u.len(),
        });
    }
    Ok(qoi_from_nodal_mass(&mass.row_sums(), u))
}

/// Diagnostic constant of the a priori bound for the shifted equation,
/// `(1 + a_max + lambda + f_max) / sqrt(2 min(a_min, lambda - kappa_max))`.
pub fn apriori_constant(a_min: f64, a_max: f64, kappa_max: f64, f_max: f64, lambda: f64) -> Result<f64> {
    if !(a_min > 0.0) {
        return Err(Error::InvalidArgument(format!("a_min = {a_min} must be positive")));
    }
    if !(lambda > kappa_max) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must exceed kappa_max = {kappa_max}"
        )));
    }
    let c = (1.0 + a_max + lambda + f_max) / (2.0 * a_min.min(lambda - kappa_max)).sqrt();
    if !c.is_finite() {
        return Err(Error::Numeric(format!(
            "a priori constant overflows for lambda - kappa_max = {}",
            lambda - kappa_max
        )));
    }
    Ok(c)
}

/// Writes a trajectory as a whitespace-delimited matrix, one row per time
/// level, preceded by a `rows cols` header line.
pub fn write_trajectory(path: impl AsRef<Path>, trajectory: &[StateVector]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let cols = trajectory.first().map_or(0, |s| s.len());
    let _ = writeln!(out, "{} {}", trajectory.len(), cols);
    for state in trajectory {
        let row: Vec<String> = state.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic_exact(u0: f64, kappa: f64, t: f64) -> f64 {
        let g = (kappa * t).exp();
        u0 * g / (1.0 - u0 + u0 * g)
    }

    fn square_solver(n: usize, dt: f64, lumped: bool) -> TumorSolver {
        let mesh = Mesh::generate_structured(100.0, n).unwrap();
        let space = Arc::new(FemSpace::new(Arc::new(mesh)).unwrap());
        let mut config = SolverConfig::new(dt, 7.0).unwrap();
        config.mass_lumping = lumped;
        TumorSolver::new(space, Treatment::none(), config).unwrap()
    }

    #[test]
    fn constant_state_single_step_matches_quadratic_root() {
        // 0.0375 u^2 + 0.9625 u - 0.1 = 0
        let (a, b, c) = (0.0375f64, 0.9625f64, -0.1f64);
        let root = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        assert!((root - 0.1034789135500199).abs() < 1e-15);
        for lumped in [false, true] {
            let solver = square_solver(4, 0.125, lumped);
            let coeffs = Coefficients::from_fns(solver.space(), |_| 0.05, |_| 0.3);
            let u0 = StateVector::constant(25, 0.1);
            let u1 = solver.implicit_euler_step(&coeffs, &u0, 0.0, 0.125).unwrap();
            assert!(u1.iter().all(|v| (v - root).abs() < 1e-12), "{:?}", &u1[..3]);
        }
    }

    #[test]
    fn fixed_points() {
        let solver = square_solver(3, 0.125, false);
        let coeffs = Coefficients::from_fns(solver.space(), |_| 0.05, |_| 0.3);
        let zero = StateVector::constant(16, 0.0);
        let one = StateVector::constant(16, 1.0);
        let z = solver.implicit_euler_step(&coeffs, &zero, 0.0, 0.125).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let o = solver.implicit_euler_step(&coeffs, &one, 0.0, 0.125).unwrap();
        assert!(o.iter().all(|v| (v - 1.0).abs() < 1e-13));
    }

    #[test]
    fn logistic_terminal_state_first_order() {
        let exact = logistic_exact(0.1, 0.3, 7.0);
        assert!((exact - 0.47572).abs() < 1e-5);
        let mut errors = Vec::new();
        for dt in [0.25, 0.125, 0.0625] {
            let solver = square_solver(3, dt, false);
            let coeffs = Coefficients::from_fns(solver.space(), |x| 0.02 + 1e-4 * x[0], |_| 0.3);
            let out = solver.solve(&coeffs, &StateVector::constant(16, 0.1)).unwrap();
            let spread = out.terminal.max() - out.terminal.min();
            assert!(spread < 1e-12);
            errors.push((out.terminal[0] - exact).abs());
        }
        assert!(errors[0] < 0.02);
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let mesh = Mesh::generate_structured(100.0, 4).unwrap();
        let space = Arc::new(FemSpace::new(Arc::new(mesh)).unwrap());
        let config = SolverConfig::new(0.125, 7.0).unwrap();
        let solver = TumorSolver::new(space, Treatment::standard_protocol(0.125).unwrap(), config).unwrap();
        let coeffs = Coefficients::from_fns(solver.space(), |_| 0.05, |_| 0.3);
        let out = solver.solve(&coeffs, &StateVector::constant(25, 0.0)).unwrap();
        assert!(out.terminal.iter().all(|&v| v == 0.0));
        let out = solver
            .solve_shifted(&coeffs, &StateVector::constant(25, 0.0), LambdaShift::Auto)
            .unwrap();
        assert!(out.terminal.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shifted_mode_requires_large_lambda() {
        let solver = square_solver(2, 0.125, false);
        let coeffs = Coefficients::from_fns(solver.space(), |_| 0.05, |_| 0.3);
        let err = solver
            .solve_shifted(&coeffs, &StateVector::constant(9, 0.1), LambdaShift::Value(0.3))
            .unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn qoi_values() {
        let mesh = Mesh::generate_structured(100.0, 10).unwrap();
        let space = FemSpace::new(Arc::new(mesh)).unwrap();
        let n = space.n_nodes();
        let ones = vec![1.0; n];
        assert!((qoi_total_cellularity(&ones, space.mass()).unwrap() - 10000.0).abs() < 1e-8);
        assert_eq!(qoi_total_cellularity(&vec![0.0; n], space.mass()).unwrap(), 0.0);
        let c = vec![0.47572; n];
        assert!((qoi_total_cellularity(&c, space.mass()).unwrap() - 4757.2).abs() < 0.1);
        assert!(qoi_total_cellularity(&ones[1..], space.mass()).is_err());
    }

    #[test]
    fn gaussian_initial_condition() {
        let mesh = Mesh::generate_structured(100.0, 20).unwrap();
        let u = initial_condition_gaussian(&mesh, [50.0, 50.0], 0.8, 5.0).unwrap();
        let center = mesh.nodes().iter().position(|x| *x == [50.0, 50.0]).unwrap();
        assert_eq!(u[center], 0.8);
        let at_width = mesh.nodes().iter().position(|x| *x == [55.0, 50.0]).unwrap();
        assert!((u[at_width] - 0.8 * (-0.5f64).exp()).abs() < 1e-15);
        assert!(u.iter().all(|v| (0.0..=1.0).contains(v)));
        let zero = initial_condition_gaussian(&mesh, [50.0, 50.0], 0.0, 5.0).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        assert!(initial_condition_gaussian(&mesh, [50.0, 50.0], 1.2, 5.0).is_err());
    }

    #[test]
    fn apriori_constant_values() {
        assert!((apriori_constant(0.5, 0.5, 0.0, 0.0, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!(apriori_constant(0.5, 0.5, 0.3, 0.0, 0.3).is_err());
        assert!(apriori_constant(0.5, 0.5, 0.3, 0.0, 0.3 + 1e-300).is_err());
        let c = apriori_constant(0.025, 0.075, 0.45, 8.0 * 0.058 + 6.3, 1.45).unwrap();
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.0, 7.0).is_err());
        assert!(SolverConfig::new(0.125, 0.1).is_err());
        assert_eq!(SolverConfig::new(0.125, 7.0).unwrap().n_steps(), 56);
        assert_eq!(SolverConfig::new(0.3, 1.0).unwrap().n_steps(), 3);
    }
}
