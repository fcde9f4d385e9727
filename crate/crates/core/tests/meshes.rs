use std::path::Path;
use std::sync::Arc;

use qmc_tumor::config::StudyConfig;
use qmc_tumor::fem::FemSpace;
use qmc_tumor::harness::run_single;
use qmc_tumor::mesh::Mesh;

/// Rectangular grid of `nx × ny` vertices with spacing `h`, two triangles per cell.
fn grid(nx: usize, ny: usize, h: f64) -> Mesh {
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let mut tris = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            let (b, c, d) = (a + 1, a + nx, a + nx + 1);
            tris.push([a, b, d]);
            tris.push([a, d, c]);
        }
    }
    Mesh::new(nodes, tris).unwrap()
}

#[test]
fn text_round_trip_is_exact() {
    let mut mesh = grid(4, 3, 0.1);
    let text = mesh.to_text();
    let back = Mesh::parse(&text, Path::new("mem")).unwrap();
    assert_eq!(back.nodes(), mesh.nodes());
    assert_eq!(back.triangles(), mesh.triangles());
    mesh = back;
    assert_eq!(mesh.to_text(), text);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let text = "# two triangles\n4 2\n0 0\n1 0\n0 1\n1 x\n0 1 2\n1 3 2\n";
    let err = Mesh::parse(text, Path::new("bad.mesh")).unwrap_err().to_string();
    assert!(err.contains("bad.mesh") && err.contains('6'), "{err}");
    let short = "3 1\n0 0\n1 0\n";
    assert!(Mesh::parse(short, Path::new("short.mesh")).is_err());
    let out_of_range = "3 1\n0 0\n1 0\n0 1\n0 1 5\n";
    assert!(Mesh::parse(out_of_range, Path::new("idx.mesh")).is_err());
}

#[test]
fn strip_of_9995_vertices_solves_from_file() {
    // Same vertex count as the realistic brain mesh, as a 5 x 1999 strip.
    let mesh = grid(5, 1999, 1.0);
    assert_eq!(mesh.n_nodes(), 9995);
    let area = mesh.domain_area();
    assert!((area - 4.0 * 1998.0).abs() < 1e-9);

    let dir = tempfile::tempdir().unwrap();
    mesh.save(dir.path().join("strip.mesh")).unwrap();
    let cfg_text = "mesh.source = file\nmesh.file = strip.mesh\nfields.s = 4\ntime.final = 1\n";
    std::fs::write(dir.path().join("strip.cfg"), cfg_text).unwrap();
    let cfg = StudyConfig::load(
        dir.path().join("strip.cfg"),
        &[("output.dir".into(), dir.path().join("out").display().to_string())],
    )
    .unwrap();
    let loaded = Mesh::load(dir.path().join("strip.mesh")).unwrap();
    let space = FemSpace::new(Arc::new(loaded)).unwrap();
    assert!((space.mass().total_sum() - area).abs() < 1e-8 * area);

    let out = run_single(&cfg, &[0.1, -0.1, 0.2, 0.0]).unwrap();
    assert!(out.qoi.is_finite() && out.qoi > 0.0);
    assert!(out.min_value >= -1e-6 && out.max_value <= 1.0 + 1e-6);
}
