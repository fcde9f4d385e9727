//! P1 finite element assembly on triangles.
//!
//! All spatially varying coefficients are sampled with the three-point
//! mid-edge rule, which integrates quadratics exactly. Assembly writes into a
//! pattern shared by every operator on the mesh, so per-sample assembly only
//! touches values.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::sparse::{BandOrdering, CsrPattern, SparseMatrix};

/// Quadrature on the reference triangle, weights normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn mid_edge() -> Self {
        QuadratureRule {
            points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Analytic P1 mass matrix of a triangle with the given area.
pub fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// P1 stiffness matrix for a constant coefficient.
pub fn local_stiffness(grads: &[[f64; 2]; 3], area: f64, coeff: f64) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = coeff * area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
        }
    }
    k
}

/// Mesh-bound assembler: shared sparsity pattern, element scatter map,
/// geometry, and physical quadrature points.
#[derive(Debug)]
pub struct FemSpace {
    mesh: Arc<Mesh>,
    pattern: Arc<CsrPattern>,
    ordering: Arc<BandOrdering>,
    rule: QuadratureRule,
    element_slots: Vec<[usize; 9]>,
    areas: Vec<f64>,
    gradients: Vec<[[f64; 2]; 3]>,
    quad_points: Vec<Point>,
    mass: SparseMatrix,
}

impl FemSpace {
    pub fn new(mesh: Arc<Mesh>) -> Result<Self> {
        let n = mesh.n_nodes();
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tri in mesh.triangles() {
            for &i in tri {
                rows[i].extend_from_slice(tri);
            }
        }
        let pattern = Arc::new(CsrPattern::from_rows(n, rows)?);
        let ordering = Arc::new(BandOrdering::reverse_cuthill_mckee(&pattern));
        let rule = QuadratureRule::mid_edge();

        let mut element_slots = Vec::with_capacity(mesh.n_triangles());
        let mut areas = Vec::with_capacity(mesh.n_triangles());
        let mut gradients = Vec::with_capacity(mesh.n_triangles());
        let mut quad_points = Vec::with_capacity(mesh.n_triangles() * rule.len());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let mut slots = [0usize; 9];
            for a in 0..3 {
                for b in 0..3 {
                    slots[3 * a + b] = pattern
                        .position(tri[a], tri[b])
                        .expect("element entries are in the pattern");
                }
            }
            element_slots.push(slots);
            areas.push(mesh.triangle_area(t));
            gradients.push(mesh.basis_gradients(t));
            let verts = mesh.vertices(t);
            for bary in rule.points() {
                quad_points.push([
                    bary[0] * verts[0][0] + bary[1] * verts[1][0] + bary[2] * verts[2][0],
                    bary[0] * verts[0][1] + bary[1] * verts[1][1] + bary[2] * verts[2][1],
                ]);
            }
        }

        let mut space = FemSpace {
            mass: SparseMatrix::zeros(pattern.clone()),
            mesh,
            pattern,
            ordering,
            rule,
            element_slots,
            areas,
            gradients,
            quad_points,
        };
        let mut mass = SparseMatrix::zeros(space.pattern.clone());
        for t in 0..space.areas.len() {
            space.scatter(&mut mass, t, &local_mass(space.areas[t]));
        }
        space.mass = mass;
        Ok(space)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn ordering(&self) -> &Arc<BandOrdering> {
        &self.ordering
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    /// Physical quadrature points, element-major: point `q` of triangle `t`
    /// is at index `t * 3 + q`.
    pub fn quadrature_points(&self) -> &[Point] {
        &self.quad_points
    }

    pub fn n_quadrature_points(&self) -> usize {
        self.quad_points.len()
    }

    /// Consistent mass matrix.
    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    fn scatter(&self, target: &mut SparseMatrix, t: usize, local: &[[f64; 3]; 3]) {
        let slots = &self.element_slots[t];
        let values = target.values_mut();
        for a in 0..3 {
            for b in 0..3 {
                values[slots[3 * a + b]] += local[a][b];
            }
        }
    }

    /// Evaluates `f` at every quadrature point.
    pub fn sample_at_quadrature(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.quad_points.iter().map(|&x| f(x)).collect()
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.mesh.nodes().iter().map(|&x| f(x)).collect()
    }

    /// Stiffness matrix `∫ c ∇φ_i·∇φ_j` from coefficient values at the
    /// quadrature points.
    pub fn stiffness_from_samples(&self, coeff: &[f64]) -> Result<SparseMatrix> {
        self.check_samples(coeff)?;
        let nq = self.rule.len();
        if let Some(q) = coeff.iter().position(|&c| !(c > 0.0) || !c.is_finite()) {
            let [x, y] = self.quad_points[q];
            return Err(Error::CoefficientBound {
                value: coeff[q],
                x,
                y,
            });
        }
        let mut k = SparseMatrix::zeros(self.pattern.clone());
        for t in 0..self.areas.len() {
            let mean: f64 = coeff[t * nq..(t + 1) * nq]
                .iter()
                .zip(self.rule.weights())
                .map(|(c, w)| c * w)
                .sum();
            let local = local_stiffness(&self.gradients[t], self.areas[t], mean);
            self.scatter(&mut k, t, &local);
        }
        Ok(k)
    }

    /// Weighted mass matrix `∫ w φ_i φ_j` from weight values at the
    /// quadrature points.
    pub fn weighted_mass_from_samples(&self, weight: &[f64]) -> Result<SparseMatrix> {
        self.check_samples(weight)?;
        if let Some(q) = weight.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite weight at quadrature point {q}"
            )));
        }
        let nq = self.rule.len();
        let mut m = SparseMatrix::zeros(self.pattern.clone());
        for t in 0..self.areas.len() {
            let area = self.areas[t];
            let mut local = [[0.0; 3]; 3];
            for (q, (bary, w)) in self.rule.points().iter().zip(self.rule.weights()).enumerate() {
                let scale = area * w * weight[t * nq + q];
                for a in 0..3 {
                    for b in 0..3 {
                        local[a][b] += scale * bary[a] * bary[b];
                    }
                }
            }
            self.scatter(&mut m, t, &local);
        }
        Ok(m)
    }

    pub fn stiffness(&self, coeff: impl Fn(Point) -> f64) -> Result<SparseMatrix> {
        self.stiffness_from_samples(&self.sample_at_quadrature(coeff))
    }

    pub fn weighted_mass(&self, weight: impl Fn(Point) -> f64) -> Result<SparseMatrix> {
        self.weighted_mass_from_samples(&self.sample_at_quadrature(weight))
    }

    /// Load vector `∫ g φ_i` from values of `g` at the quadrature points.
    pub fn load_from_samples(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_samples(g)?;
        let nq = self.rule.len();
        let mut out = vec![0.0; self.n_nodes()];
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let area = self.areas[t];
            for (q, (bary, w)) in self.rule.points().iter().zip(self.rule.weights()).enumerate() {
                let v = area * w * g[t * nq + q];
                for a in 0..3 {
                    out[tri[a]] += v * bary[a];
                }
            }
        }
        Ok(out)
    }

    fn check_samples(&self, samples: &[f64]) -> Result<()> {
        if samples.len() != self.quad_points.len() {
            return Err(Error::Dimension {
                expected: self.quad_points.len(),
                found: samples.len(),
            });
        }
        Ok(())
    }
}

/// Diagonal of the row-sum lumped version of `m`.
pub fn lump(m: &SparseMatrix) -> Vec<f64> {
    m.row_sums()
}

pub fn assemble_mass(mesh: &Mesh) -> Result<SparseMatrix> {
    Ok(FemSpace::new(Arc::new(mesh.clone()))?.mass().clone())
}

pub fn assemble_stiffness(mesh: &Mesh, coeff: impl Fn(Point) -> f64) -> Result<SparseMatrix> {
    FemSpace::new(Arc::new(mesh.clone()))?.stiffness(coeff)
}

pub fn assemble_weighted_mass(mesh: &Mesh, weight: impl Fn(Point) -> f64) -> Result<SparseMatrix> {
    FemSpace::new(Arc::new(mesh.clone()))?.weighted_mass(weight)
}
