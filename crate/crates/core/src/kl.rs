//! Karhunen-Loève modes of Gaussian fields with covariance
//! `C = (-γΔ + δI)^{-2}` under homogeneous Neumann conditions.
//!
//! The discrete covariance is `Γ = A⁻¹ M A⁻¹ M` with `A = γK + δM`; its
//! leading eigenpairs solve the generalized problem `M Γ φ = μ M φ`. They are
//! found with a randomized double-pass method: sample the range of `Γ`,
//! M-orthonormalize, optionally take power steps, then solve the small
//! projected eigenproblem.
//!
//! Cache file layout (text):
//!
//! ```text
//! n_modes n_nodes gamma delta seed
//! μ_1 μ_2 ... μ_n_modes
//! φ_1 (n_nodes values)
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fem::FemSpace;
use crate::fields::CovarianceSpec;
use crate::random::CounterRng;
use crate::sparse::{BandSolver, SparseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct KlModes {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
    gamma: f64,
    delta: f64,
    seed: u64,
}

impl KlModes {
    pub fn new(
        eigenvalues: Vec<f64>,
        eigenvectors: Vec<Vec<f64>>,
        gamma: f64,
        delta: f64,
        seed: u64,
    ) -> Result<Self> {
        if eigenvalues.len() != eigenvectors.len() {
            return Err(Error::Dimension {
                expected: eigenvalues.len(),
                found: eigenvectors.len(),
            });
        }
        if eigenvalues.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(Error::Validation("KL eigenvalues must be positive".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Validation("KL eigenvalues must be sorted descending".into()));
        }
        if let Some(first) = eigenvectors.first() {
            if eigenvectors.iter().any(|v| v.len() != first.len()) {
                return Err(Error::Validation("KL eigenvectors differ in length".into()));
            }
        }
        Ok(KlModes {
            eigenvalues,
            eigenvectors,
            gamma,
            delta,
            seed,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.eigenvectors.first().map_or(0, Vec::len)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    pub fn eigenvector(&self, k: usize) -> &[f64] {
        &self.eigenvectors[k]
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `max |φ_iᵀ M φ_j - δ_ij|`.
    pub fn orthonormality_error(&self, mass: &SparseMatrix) -> f64 {
        let mv: Vec<Vec<f64>> = self.eigenvectors.iter().map(|v| mass.mul_vec(v)).collect();
        let mut worst: f64 = 0.0;
        for (i, vi) in self.eigenvectors.iter().enumerate() {
            for (j, mvj) in mv.iter().enumerate() {
                let ip = dot(vi, mvj);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }

    /// Pointwise variance `Σ_k μ_k φ_k(x_i)^2` at node `i`.
    pub fn nodal_variance(&self, node: usize) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .map(|(m, v)| m * v[node] * v[node])
            .sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {:?} {:?} {}",
            self.n_modes(),
            self.n_nodes(),
            self.gamma,
            self.delta,
            self.seed
        );
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "{}", join(&self.eigenvalues));
        for v in &self.eigenvectors {
            let _ = writeln!(out, "{}", join(v));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Format {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty KL cache".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 {
            return Err(err(1, format!("expected 5 header fields, found {}", h.len())));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| err(1, format!("{s:?}: {e}")));
        let parse_f64 = |s: &str, line: usize| s.parse::<f64>().map_err(|e| err(line, format!("{s:?}: {e}")));
        let n_modes = parse_usize(h[0])?;
        let n_nodes = parse_usize(h[1])?;
        let gamma = parse_f64(h[2], 1)?;
        let delta = parse_f64(h[3], 1)?;
        let seed = h[4].parse::<u64>().map_err(|e| err(1, format!("{:?}: {e}", h[4])))?;

        let mut row = |expected: usize| -> Result<Vec<f64>> {
            let (i, line) = lines
                .next()
                .ok_or_else(|| err(0, "unexpected end of KL cache".into()))?;
            let values = line
                .split_whitespace()
                .map(|s| parse_f64(s, i + 1))
                .collect::<Result<Vec<_>>>()?;
            if values.len() != expected {
                return Err(err(i + 1, format!("expected {expected} values, found {}", values.len())));
            }
            Ok(values)
        };
        let eigenvalues = row(n_modes)?;
        let eigenvectors = (0..n_modes).map(|_| row(n_nodes)).collect::<Result<Vec<_>>>()?;
        KlModes::new(eigenvalues, eigenvectors, gamma, delta, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KlOptions {
    pub n_modes: usize,
    pub oversample: usize,
    pub power_iterations: usize,
    pub seed: u64,
}

impl KlOptions {
    pub fn new(n_modes: usize, seed: u64) -> Self {
        KlOptions {
            n_modes,
            oversample: 10,
            power_iterations: 1,
            seed,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Application of the discrete covariance `Γ = A⁻¹ M A⁻¹ M`.
struct CovarianceOperator<'a> {
    mass: &'a SparseMatrix,
    solver: BandSolver,
}

impl<'a> CovarianceOperator<'a> {
    fn new(space: &'a FemSpace, spec: &CovarianceSpec) -> Result<Self> {
        let mass = space.mass();
        let laplace = space.stiffness_from_samples(&vec![1.0; space.n_quadrature_points()])?;
        let values = laplace
            .values()
            .iter()
            .zip(mass.values())
            .map(|(k, m)| spec.gamma * k + spec.delta * m)
            .collect();
        let a = SparseMatrix::from_parts(space.pattern().clone(), values)?;
        let mut solver = BandSolver::cholesky(space.ordering().clone());
        solver.factor(&a, None)?;
        Ok(CovarianceOperator { mass, solver })
    }

    fn apply(&mut self, x: &[f64]) -> Vec<f64> {
        let mut v = self.mass.mul_vec(x);
        self.solver.solve_in_place(&mut v);
        let mut w = self.mass.mul_vec(&v);
        self.solver.solve_in_place(&mut w);
        w
    }
}

/// Modified Gram-Schmidt in the M inner product, two passes.
fn m_orthonormalize(columns: &mut [Vec<f64>], mass: &SparseMatrix) -> Result<()> {
    let mut m_cols: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    for j in 0..columns.len() {
        let initial = dot(&columns[j], &mass.mul_vec(&columns[j])).sqrt();
        for _ in 0..2 {
            for (i, mq) in m_cols.iter().enumerate() {
                let c = dot(mq, &columns[j]);
                let (done, rest) = columns.split_at_mut(j);
                rest[0].iter_mut().zip(&done[i]).for_each(|(x, q)| *x -= c * q);
            }
        }
        let mq = mass.mul_vec(&columns[j]);
        let norm = dot(&columns[j], &mq).sqrt();
        if !(norm > 1e-12 * initial) || !norm.is_finite() {
            return Err(Error::Numeric(format!(
                "sample column {j} lost rank during M-orthonormalization"
            )));
        }
        columns[j].iter_mut().for_each(|x| *x /= norm);
        m_cols.push(mq.into_iter().map(|x| x / norm).collect());
    }
    Ok(())
}

/// Leading eigenpairs of `M Γ φ = μ M φ`, descending, M-orthonormal.
pub fn compute_kl(space: &FemSpace, spec: &CovarianceSpec, options: &KlOptions) -> Result<KlModes> {
    let n = space.n_nodes();
    let k = options.n_modes + options.oversample;
    if options.n_modes == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "{} modes plus {} oversampling exceed {n} nodes",
            options.n_modes, options.oversample
        )));
    }
    let mut cov = CovarianceOperator::new(space, spec)?;
    let mass = space.mass();

    let mut rng = CounterRng::new(options.seed, 0);
    let mut basis: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let omega: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            cov.apply(&omega)
        })
        .collect();
    m_orthonormalize(&mut basis, mass)?;
    for _ in 0..options.power_iterations {
        basis = basis.iter().map(|q| cov.apply(q)).collect();
        m_orthonormalize(&mut basis, mass)?;
    }

    // Projected matrix T = Qᵀ M Γ Q.
    let images: Vec<Vec<f64>> = basis.iter().map(|q| mass.mul_vec(&cov.apply(q))).collect();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            t[(i, j)] = dot(&basis[i], &images[j]);
        }
    }
    let t = (&t + t.transpose()) * 0.5;
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut eigenvalues = Vec::with_capacity(options.n_modes);
    let mut eigenvectors = Vec::with_capacity(options.n_modes);
    for &col in order.iter().take(options.n_modes) {
        let mu = eig.eigenvalues[col];
        if !(mu > 0.0) {
            return Err(Error::Numeric(format!(
                "non-positive covariance eigenvalue {mu}; too many modes requested"
            )));
        }
        let mut v = vec![0.0; n];
        for (i, q) in basis.iter().enumerate() {
            let c = eig.eigenvectors[(i, col)];
            v.iter_mut().zip(q).for_each(|(x, qi)| *x += c * qi);
        }
        // Sign convention: largest-magnitude entry positive.
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        eigenvalues.push(mu);
        eigenvectors.push(v);
    }
    KlModes::new(eigenvalues, eigenvectors, spec.gamma, spec.delta, options.seed)
}
