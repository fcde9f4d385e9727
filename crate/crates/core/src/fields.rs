//! Random coefficient fields `a(x; y)` and `kappa(x; y)`.
//!
//! Parameters are interleaved: odd coordinates `y_1, y_3, ...` drive the
//! diffusion field and even coordinates `y_2, y_4, ...` drive proliferation,
//! so the two fields are independent. (In 0-based storage `y[2k]` feeds the
//! diffusion mode `k` and `y[2k + 1]` the proliferation mode `k`.)

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::kl::KlModes;
use crate::mesh::{Mesh, Point};
use crate::solver::Coefficients;

/// Affine fields with sine fluctuations and uniform parameters in `[-1/2, 1/2]`:
///
/// `a = a0 + Σ_k y_{2k-1} a0 ½ k^{-ν} sin(kπx₁/L) sin(kπx₂/L)`,
/// and `kappa` likewise over even coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformAffineModel {
    a0: f64,
    kappa0: f64,
    decay_nu: f64,
    s: usize,
    length: f64,
}

impl UniformAffineModel {
    pub fn new(a0: f64, kappa0: f64, decay_nu: f64, s: usize, length: f64) -> Result<Self> {
        if s == 0 || s % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "stochastic dimension must be even and positive, got {s}"
            )));
        }
        if !(decay_nu > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "decay exponent must exceed 1, got {decay_nu}"
            )));
        }
        if !(length > 0.0) {
            return Err(Error::InvalidArgument(format!("length must be positive, got {length}")));
        }
        if !(a0 > 0.0) || !(kappa0 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mean fields must be positive (a0 = {a0}, kappa0 = {kappa0})"
            )));
        }
        let model = UniformAffineModel {
            a0,
            kappa0,
            decay_nu,
            s,
            length,
        };
        let (a_min, _) = model.diffusion_bounds();
        if !(a_min > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "diffusion lower bound {a_min} is not positive"
            )));
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.s
    }

    pub fn n_modes(&self) -> usize {
        self.s / 2
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn decay_nu(&self) -> f64 {
        self.decay_nu
    }

    /// `¼ Σ_{k ≤ s/2} k^{-ν}`: half the sum of the fluctuation amplitudes
    /// relative to the mean.
    fn relative_spread(&self) -> f64 {
        0.25 * (1..=self.n_modes())
            .map(|k| (k as f64).powf(-self.decay_nu))
            .sum::<f64>()
    }

    /// Certified `(a_min, a_max)` over all admissible parameters.
    pub fn diffusion_bounds(&self) -> (f64, f64) {
        let r = self.relative_spread();
        (self.a0 * (1.0 - r), self.a0 * (1.0 + r))
    }

    pub fn proliferation_bounds(&self) -> (f64, f64) {
        let r = self.relative_spread();
        (self.kappa0 * (1.0 - r), self.kappa0 * (1.0 + r))
    }

    /// `max(‖ψ_j‖∞, ‖ξ_j‖∞)` for `j = 1..s`.
    pub fn beta_sequence(&self) -> Vec<f64> {
        (0..self.s)
            .map(|j| {
                let k = (j / 2 + 1) as f64;
                let scale = if j % 2 == 0 { self.a0 } else { self.kappa0 };
                scale * 0.5 * k.powf(-self.decay_nu)
            })
            .collect()
    }

    /// Shape of fluctuation mode `k` (1-based).
    fn mode(&self, k: usize, x: Point) -> f64 {
        let w = k as f64 * PI / self.length;
        0.5 * (k as f64).powf(-self.decay_nu) * (w * x[0]).sin() * (w * x[1]).sin()
    }

    pub fn eval(&self, y: &[f64], x: Point) -> Result<(f64, f64)> {
        check_dim(y, self.s)?;
        if let Some(j) = y.iter().position(|v| !(v.abs() <= 0.5)) {
            return Err(Error::InvalidArgument(format!(
                "uniform parameter y_{} = {} outside [-1/2, 1/2]",
                j + 1,
                y[j]
            )));
        }
        let (mut a, mut kappa) = (self.a0, self.kappa0);
        for k in 1..=self.n_modes() {
            let phi = self.mode(k, x);
            a += y[2 * k - 2] * self.a0 * phi;
            kappa += y[2 * k - 1] * self.kappa0 * phi;
        }
        Ok((a, kappa))
    }
}

fn check_dim(y: &[f64], s: usize) -> Result<()> {
    if y.len() != s {
        return Err(Error::Dimension {
            expected: s,
            found: y.len(),
        });
    }
    Ok(())
}

/// Lognormal fields `a = a0 + exp(Z_a)`, `kappa = kappa0 + exp(Z_kappa)` with
/// truncated Karhunen-Loève expansions of the Gaussian fields `Z`.
#[derive(Debug, Clone)]
pub struct LognormalKLModel {
    mesh: Arc<Mesh>,
    a0: f64,
    kappa0: f64,
    modes_a: KlModes,
    modes_kappa: KlModes,
    s: usize,
}

impl LognormalKLModel {
    pub fn new(
        mesh: Arc<Mesh>,
        a0: f64,
        kappa0: f64,
        modes_a: KlModes,
        modes_kappa: KlModes,
        s: usize,
    ) -> Result<Self> {
        if s == 0 || s % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "stochastic dimension must be even and positive, got {s}"
            )));
        }
        for modes in [&modes_a, &modes_kappa] {
            if modes.n_modes() < s / 2 {
                return Err(Error::InvalidArgument(format!(
                    "{} modes available, {} needed",
                    modes.n_modes(),
                    s / 2
                )));
            }
            if modes.n_nodes() != mesh.n_nodes() {
                return Err(Error::Dimension {
                    expected: mesh.n_nodes(),
                    found: modes.n_nodes(),
                });
            }
        }
        if !(a0 >= 0.0) || !(kappa0 >= 0.0) {
            return Err(Error::InvalidArgument("mean fields must be nonnegative".into()));
        }
        Ok(LognormalKLModel {
            mesh,
            a0,
            kappa0,
            modes_a,
            modes_kappa,
            s,
        })
    }

    pub fn dim(&self) -> usize {
        self.s
    }

    pub fn modes_a(&self) -> &KlModes {
        &self.modes_a
    }

    pub fn modes_kappa(&self) -> &KlModes {
        &self.modes_kappa
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    /// Gaussian fields `(Z_a, Z_kappa)` at a point.
    pub fn gaussian_parts(&self, y: &[f64], x: Point) -> Result<(f64, f64)> {
        check_dim(y, self.s)?;
        let (t, bary) = self
            .mesh
            .locate(x)
            .ok_or_else(|| Error::InvalidArgument(format!("point {x:?} outside the mesh")))?;
        let tri = self.mesh.triangles()[t];
        let interp = |modes: &KlModes, k: usize| -> f64 {
            let v = modes.eigenvector(k);
            (0..3).map(|c| bary[c] * v[tri[c]]).sum()
        };
        let (mut za, mut zk) = (0.0, 0.0);
        for k in 0..self.s / 2 {
            za += y[2 * k] * self.modes_a.eigenvalue(k).sqrt() * interp(&self.modes_a, k);
            zk += y[2 * k + 1] * self.modes_kappa.eigenvalue(k).sqrt() * interp(&self.modes_kappa, k);
        }
        Ok((za, zk))
    }

    pub fn eval(&self, y: &[f64], x: Point) -> Result<(f64, f64)> {
        let (za, zk) = self.gaussian_parts(y, x)?;
        Ok((self.a0 + za.exp(), self.kappa0 + zk.exp()))
    }
}

/// Where the parameters of a model live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParameterDomain {
    /// `[-1/2, 1/2]^s`
    CenteredCube,
    /// `R^s` with the standard normal measure.
    Gaussian,
}

#[derive(Debug, Clone)]
pub enum FieldModel {
    UniformAffine(UniformAffineModel),
    LognormalKL(LognormalKLModel),
}

impl FieldModel {
    pub fn dim(&self) -> usize {
        match self {
            FieldModel::UniformAffine(m) => m.dim(),
            FieldModel::LognormalKL(m) => m.dim(),
        }
    }

    pub fn domain(&self) -> ParameterDomain {
        match self {
            FieldModel::UniformAffine(_) => ParameterDomain::CenteredCube,
            FieldModel::LognormalKL(_) => ParameterDomain::Gaussian,
        }
    }

    pub fn eval(&self, y: &[f64], x: Point) -> Result<(f64, f64)> {
        match self {
            FieldModel::UniformAffine(m) => m.eval(y, x),
            FieldModel::LognormalKL(m) => m.eval(y, x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Link {
    Affine,
    Exponential,
}

/// Mode table of one field at the quadrature points, mode-major.
#[derive(Debug, Clone)]
struct ModeTable {
    base: f64,
    link: Link,
    n_points: usize,
    /// `values[k * n_points + q]`
    values: Vec<f64>,
}

impl ModeTable {
    fn eval(&self, y: impl Iterator<Item = f64>, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (k, yk) in y.enumerate() {
            if yk == 0.0 {
                continue;
            }
            let row = &self.values[k * self.n_points..(k + 1) * self.n_points];
            for (o, m) in out.iter_mut().zip(row) {
                *o += yk * m;
            }
        }
        match self.link {
            Link::Affine => out.iter_mut().for_each(|v| *v += self.base),
            Link::Exponential => out.iter_mut().for_each(|v| *v = self.base + v.exp()),
        }
    }
}

/// Precomputed mode values at the quadrature points of a mesh, turning a
/// parameter vector into [`Coefficients`] with one pass per mode.
#[derive(Debug, Clone)]
pub struct FieldEvaluator {
    model: FieldModel,
    diffusion: ModeTable,
    proliferation: ModeTable,
}

impl FieldEvaluator {
    pub fn new(model: FieldModel, space: &FemSpace) -> Result<Self> {
        let points = space.quadrature_points();
        let nq = points.len();
        let (diffusion, proliferation) = match &model {
            FieldModel::UniformAffine(m) => {
                let mut shape = Vec::with_capacity(m.n_modes() * nq);
                for k in 1..=m.n_modes() {
                    shape.extend(points.iter().map(|&x| m.mode(k, x)));
                }
                let scaled = |c: f64| shape.iter().map(|v| c * v).collect::<Vec<_>>();
                (
                    ModeTable {
                        base: m.a0,
                        link: Link::Affine,
                        n_points: nq,
                        values: scaled(m.a0),
                    },
                    ModeTable {
                        base: m.kappa0,
                        link: Link::Affine,
                        n_points: nq,
                        values: scaled(m.kappa0),
                    },
                )
            }
            FieldModel::LognormalKL(m) => {
                if m.mesh.n_nodes() != space.n_nodes() {
                    return Err(Error::Dimension {
                        expected: space.n_nodes(),
                        found: m.mesh.n_nodes(),
                    });
                }
                let rule = space.rule().points();
                let triangles = space.mesh().triangles();
                let table = |modes: &KlModes, base: f64| {
                    let mut values = Vec::with_capacity(m.s / 2 * nq);
                    for k in 0..m.s / 2 {
                        let scale = modes.eigenvalue(k).sqrt();
                        let v = modes.eigenvector(k);
                        for tri in triangles {
                            for bary in rule {
                                let phi: f64 = (0..3).map(|c| bary[c] * v[tri[c]]).sum();
                                values.push(scale * phi);
                            }
                        }
                    }
                    ModeTable {
                        base,
                        link: Link::Exponential,
                        n_points: nq,
                        values,
                    }
                };
                (table(&m.modes_a, m.a0), table(&m.modes_kappa, m.kappa0))
            }
        };
        Ok(FieldEvaluator {
            model,
            diffusion,
            proliferation,
        })
    }

    pub fn model(&self) -> &FieldModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn coefficients(&self, y: &[f64]) -> Result<Coefficients> {
        check_dim(y, self.dim())?;
        if let FieldModel::UniformAffine(_) = self.model {
            if let Some(j) = y.iter().position(|v| !(v.abs() <= 0.5)) {
                return Err(Error::InvalidArgument(format!(
                    "uniform parameter y_{} = {} outside [-1/2, 1/2]",
                    j + 1,
                    y[j]
                )));
            }
        } else if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite Gaussian parameter".into()));
        }
        let nq = self.diffusion.n_points;
        let mut diffusion = vec![0.0; nq];
        let mut proliferation = vec![0.0; nq];
        self.diffusion.eval(y.iter().step_by(2).copied(), &mut diffusion);
        self.proliferation
            .eval(y.iter().skip(1).step_by(2).copied(), &mut proliferation);
        Ok(Coefficients {
            diffusion,
            proliferation,
        })
    }
}

/// Hyperparameters of the covariance `(-γΔ + δ I)^{-2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec {
    pub gamma: f64,
    pub delta: f64,
    /// Target correlation length the parameters were calibrated for, if any.
    pub correlation_length: Option<f64>,
    /// Target pointwise variance the parameters were calibrated for, if any.
    pub pointwise_variance: Option<f64>,
}

impl CovarianceSpec {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(delta > 0.0) || !gamma.is_finite() || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "covariance parameters must be positive (gamma = {gamma}, delta = {delta})"
            )));
        }
        Ok(CovarianceSpec {
            gamma,
            delta,
            correlation_length: None,
            pointwise_variance: None,
        })
    }

    /// Operator power; fixed at two.
    pub fn nu(&self) -> u32 {
        2
    }

    /// Chooses `(γ, δ)` from the Whittle-Matérn relations in two dimensions
    /// for the operator power two (Matérn smoothness one):
    ///
    /// * correlation length `ρ = sqrt(8 γ / δ)`,
    /// * marginal variance `σ² = 1 / (4π γ δ)`,
    ///
    /// which hold exactly on the whole plane and approximately away from the
    /// boundary of a bounded domain.
    pub fn calibrate(correlation_length: f64, pointwise_variance: f64) -> Result<Self> {
        if !(correlation_length > 0.0) || !(pointwise_variance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "correlation length {correlation_length} and variance {pointwise_variance} must be positive"
            )));
        }
        let ratio = correlation_length * correlation_length / 8.0; // γ/δ
        let product = 1.0 / (4.0 * PI * pointwise_variance); // γδ
        let mut spec = CovarianceSpec::new((ratio * product).sqrt(), (product / ratio).sqrt())?;
        spec.correlation_length = Some(correlation_length);
        spec.pointwise_variance = Some(pointwise_variance);
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn default_uniform(s: usize) -> UniformAffineModel {
        UniformAffineModel::new(0.05, 0.3, 2.0, s, 100.0).unwrap()
    }

    #[test]
    fn mean_fields_at_zero() {
        let m = default_uniform(16);
        assert_eq!(m.eval(&[0.0; 16], [12.0, 80.0]).unwrap(), (0.05, 0.3));
    }

    #[test]
    fn first_mode_at_center() {
        let m = default_uniform(16);
        let mut y = vec![0.0; 16];
        y[0] = 0.5;
        let (a, k) = m.eval(&y, [50.0, 50.0]).unwrap();
        assert!((a - 0.0625).abs() < 1e-15);
        assert_eq!(k, 0.3);
        y[0] = -0.5;
        let (a, _) = m.eval(&y, [50.0, 50.0]).unwrap();
        assert!((a - 0.0375).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_cube() {
        let m = default_uniform(4);
        assert!(m.eval(&[0.6, 0.0, 0.0, 0.0], [1.0, 1.0]).is_err());
        assert!(m.eval(&[0.0; 3], [1.0, 1.0]).is_err());
    }

    #[test]
    fn constructor_validation() {
        assert!(UniformAffineModel::new(0.05, 0.3, 2.0, 15, 100.0).is_err());
        assert!(UniformAffineModel::new(0.05, 0.3, 1.0, 16, 100.0).is_err());
        // ν close to 1 with many terms makes the lower bound negative.
        assert!(UniformAffineModel::new(0.05, 0.3, 1.01, 20000, 100.0).is_err());
    }

    #[test]
    fn positivity_matches_certified_bound() {
        let m = default_uniform(32);
        let (a_min, _) = m.diffusion_bounds();
        let (k_min, _) = m.proliferation_bounds();
        assert!(a_min > 0.0 && k_min > 0.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let y: Vec<f64> = (0..32).map(|_| rng.gen_range(-0.5..=0.5)).collect();
            let x = [rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)];
            let (a, k) = m.eval(&y, x).unwrap();
            assert!(a >= a_min && k >= k_min);
        }
    }

    #[test]
    fn evaluator_matches_pointwise() {
        let mesh = Arc::new(Mesh::generate_structured(100.0, 6).unwrap());
        let space = FemSpace::new(mesh).unwrap();
        let model = default_uniform(8);
        let eval = FieldEvaluator::new(FieldModel::UniformAffine(model.clone()), &space).unwrap();
        let y = [0.1, -0.2, 0.3, 0.45, -0.5, 0.0, 0.25, -0.1];
        let c = eval.coefficients(&y).unwrap();
        for (q, &x) in space.quadrature_points().iter().enumerate() {
            let (a, k) = model.eval(&y, x).unwrap();
            assert!((c.diffusion[q] - a).abs() < 1e-15);
            assert!((c.proliferation[q] - k).abs() < 1e-15);
        }
    }

    #[test]
    fn calibration_relations() {
        let spec = CovarianceSpec::calibrate(180.0, 0.2336).unwrap();
        assert!(spec.gamma > 0.0 && spec.delta > 0.0);
        assert!(((8.0 * spec.gamma / spec.delta).sqrt() - 180.0).abs() < 1e-10);
        assert!((1.0 / (4.0 * PI * spec.gamma * spec.delta) - 0.2336).abs() < 1e-14);
        let ratios: Vec<f64> = [50.0, 180.0, 1000.0]
            .iter()
            .map(|&l| {
                let s = CovarianceSpec::calibrate(l, 0.1).unwrap();
                s.gamma / s.delta
            })
            .collect();
        assert!(ratios[0] < ratios[1] && ratios[1] < ratios[2]);
        assert!(CovarianceSpec::calibrate(0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn interleaving_independence(
            y in proptest::collection::vec(-0.5f64..=0.5, 12),
            bump in -0.5f64..=0.5,
            j in 0usize..12,
            x0 in 0.0f64..100.0,
            x1 in 0.0f64..100.0,
        ) {
            let m = default_uniform(12);
            let (a, k) = m.eval(&y, [x0, x1]).unwrap();
            let mut z = y.clone();
            z[j] = bump;
            let (a2, k2) = m.eval(&z, [x0, x1]).unwrap();
            if j % 2 == 0 {
                prop_assert_eq!(k, k2);
            } else {
                prop_assert_eq!(a, a2);
            }
        }
    }
}
