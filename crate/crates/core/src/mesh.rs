//! Two-dimensional triangulations.
//!
//! Structured meshes of a square are generated directly; unstructured meshes
//! are read from a small whitespace-delimited text format:
//!
//! ```text
//! # comment lines start with '#'
//! N_nodes N_triangles
//! x y            (N_nodes lines)
//! i j k          (N_triangles lines, 0-based node indices)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A point in the plane, in millimetres.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    domain_area: f64,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    /// Builds a mesh, flipping clockwise triangles and rejecting degenerate ones.
    pub fn new(nodes: Vec<Point>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        if nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite node coordinate".into()));
        }
        let mut domain_area = 0.0;
        for (t, tri) in triangles.iter_mut().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= nodes.len()) {
                return Err(Error::Validation(format!(
                    "triangle {t} references node {bad} but the mesh has {} nodes",
                    nodes.len()
                )));
            }
            let mut area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if area < 0.0 {
                tri.swap(1, 2);
                area = -area;
            }
            if area <= 0.0 {
                return Err(Error::Validation(format!("triangle {t} has zero area")));
            }
            domain_area += area;
        }
        Ok(Mesh {
            nodes,
            triangles,
            domain_area,
        })
    }

    /// Uniform grid on `[0, length]^2` with every cell cut along its
    /// lower-left to upper-right diagonal.
    pub fn generate_structured(length: f64, n_cells_per_side: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mesh length must be positive, got {length}"
            )));
        }
        if n_cells_per_side == 0 {
            return Err(Error::InvalidArgument(
                "mesh needs at least one cell per side".into(),
            ));
        }
        let n = n_cells_per_side;
        let h = length / n as f64;
        let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                // The last row and column sit exactly on the boundary.
                let x = if i == n { length } else { i as f64 * h };
                let y = if j == n { length } else { j as f64 * h };
                nodes.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (ll, lr, ul, ur) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                triangles.push([ll, lr, ur]);
                triangles.push([ll, ur, ul]);
            }
        }
        let mut mesh = Mesh::new(nodes, triangles)?;
        mesh.domain_area = length * length;
        Ok(mesh)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses the mesh text format; `origin` is only used in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let fmt_err = |line: usize, message: String| Error::Format {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let mut fields = |expected: usize, what: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| fmt_err(0, format!("unexpected end of file while reading {what}")))?;
            let parts: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
            if parts.len() != expected {
                return Err(fmt_err(
                    no,
                    format!("expected {expected} fields for {what}, found {}", parts.len()),
                ));
            }
            Ok((no, parts))
        };

        let (no, header) = fields(2, "header")?;
        let parse_count = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| fmt_err(no, format!("bad count {s:?}: {e}")))
        };
        let n_nodes = parse_count(&header[0])?;
        let n_tris = parse_count(&header[1])?;

        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (no, p) = fields(2, "node")?;
            let mut xy = [0.0; 2];
            for (slot, s) in xy.iter_mut().zip(&p) {
                *slot = s
                    .parse::<f64>()
                    .map_err(|e| fmt_err(no, format!("bad coordinate {s:?}: {e}")))?;
            }
            nodes.push(xy);
        }
        let mut triangles = Vec::with_capacity(n_tris);
        for _ in 0..n_tris {
            let (no, p) = fields(3, "triangle")?;
            let mut tri = [0usize; 3];
            for (slot, s) in tri.iter_mut().zip(&p) {
                *slot = s
                    .parse::<usize>()
                    .map_err(|e| fmt_err(no, format!("bad node index {s:?}: {e}")))?;
            }
            triangles.push(tri);
        }
        if let Some((no, _)) = lines.next() {
            return Err(fmt_err(no, "trailing content after the triangle list".into()));
        }
        Mesh::new(nodes, triangles)
    }

    /// Serializes to the text format. Coordinates use the shortest
    /// representation that parses back to the identical `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.nodes.len(), self.triangles.len());
        for [x, y] in &self.nodes {
            let _ = writeln!(out, "{x:?} {y:?}");
        }
        for [i, j, k] in &self.triangles {
            let _ = writeln!(out, "{i} {j} {k}");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn domain_area(&self) -> f64 {
        self.domain_area
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [i, j, k] = self.triangles[t];
        [self.nodes[i], self.nodes[j], self.nodes[k]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        signed_area(a, b, c)
    }

    /// Area-weighted centroid of the domain.
    pub fn centroid(&self) -> Point {
        let mut c = [0.0; 2];
        for t in 0..self.triangles.len() {
            let area = self.triangle_area(t);
            let [a, b, d] = self.vertices(t);
            c[0] += area * (a[0] + b[0] + d[0]) / 3.0;
            c[1] += area * (a[1] + b[1] + d[1]) / 3.0;
        }
        let total: f64 = (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum();
        [c[0] / total, c[1] / total]
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Gradients of the three P1 hat functions on triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.vertices(t);
        let two_area = 2.0 * signed_area(a, b, c);
        [
            [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area],
            [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area],
            [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
        ]
    }

    /// Locates the triangle containing `x` and its barycentric coordinates.
    /// Linear scan; intended for diagnostics, not inner loops.
    pub fn locate(&self, x: Point) -> Option<(usize, [f64; 3])> {
        let tol = 1e-12;
        (0..self.triangles.len()).find_map(|t| {
            let [a, b, c] = self.vertices(t);
            let area = signed_area(a, b, c);
            let l0 = signed_area(x, b, c) / area;
            let l1 = signed_area(a, x, c) / area;
            let l2 = 1.0 - l0 - l1;
            (l0 >= -tol && l1 >= -tol && l2 >= -tol).then_some((t, [l0, l1, l2]))
        })
    }
}
