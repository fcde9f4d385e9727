//! Configuration-driven runs: convergence studies, single solves, KL
//! precomputation and generating-vector construction.
//!
//! Study outputs (in `output.dir`):
//!
//! * `results.csv` with columns `kind,m,N,R,mean,rms_or_stderr,wall_seconds`.
//!   QMC rows hold `N = 2^m` points and `R` shifts; MC rows hold `N = R 2^m`
//!   samples and `R = 1`. `wall_seconds` is written as 0 unless
//!   `output.timings = true`, so reruns are byte-identical.
//! * `timings.csv` with measured cumulative seconds per row.
//! * `summary.txt` with fitted convergence slopes.
//! * `metadata.txt` with the resolved configuration and input hashes.
//! * `plot.gp`, a gnuplot script for the log-log convergence plot.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::config::{MeshSource, Mode, StudyConfig, TreatmentConfig, VectorSource};
use crate::error::{Error, Result};
use crate::estimator::{fit_rate, mc_ladder, qmc_ladder, EstimatorResult, McResult};
use crate::fem::FemSpace;
use crate::fields::{CovarianceSpec, FieldEvaluator, FieldModel, LognormalKLModel, UniformAffineModel};
use crate::kl::{compute_kl, KlModes, KlOptions};
use crate::lattice::{
    bundled_generating_vector, cbc_construct_embedded_traced, cbc_construct_traced, format_generating_vector,
    load_generating_vector, prime_power, sha256_hex, GeneratingVector, LatticeRule, WeightSequence,
};
use crate::mesh::Mesh;
use crate::problem::TumorProblem;
use crate::solver::{apriori_constant, initial_condition_gaussian, write_trajectory, LambdaShift, SolverConfig, TumorSolver};
use crate::treatment::{ChemotherapySchedule, DoseMap, RadiotherapySchedule, Treatment};

pub const CSV_HEADER: &str = "kind,m,N,R,mean,rms_or_stderr,wall_seconds";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

pub fn build_mesh(cfg: &StudyConfig) -> Result<Arc<Mesh>> {
    let mesh = match &cfg.mesh {
        MeshSource::Structured { n, length } => Mesh::generate_structured(*length, *n)?,
        MeshSource::File(path) => Mesh::load(path)?,
    };
    Ok(Arc::new(mesh))
}

pub fn build_treatment(t: &TreatmentConfig, dt: f64) -> Result<Treatment> {
    let radiotherapy = if t.rt_days.is_empty() {
        RadiotherapySchedule::empty()
    } else {
        RadiotherapySchedule::new(
            t.rt_days.clone(),
            vec![DoseMap::Uniform(t.rt_dose); t.rt_days.len()],
            t.rt_alpha,
            t.rt_beta,
            1.0 / dt,
        )?
    };
    let chemotherapy = if t.ct_days.is_empty() {
        ChemotherapySchedule::empty()
    } else {
        ChemotherapySchedule::new(
            t.ct_days.clone(),
            vec![DoseMap::Uniform(t.ct_dose); t.ct_days.len()],
            t.ct_alpha,
            t.ct_beta,
        )?
    };
    Ok(Treatment {
        radiotherapy,
        chemotherapy,
    })
}

pub fn solver_config(cfg: &StudyConfig) -> Result<SolverConfig> {
    let mut sc = SolverConfig::new(cfg.dt, cfg.final_time)?;
    sc.newton_tol = cfg.newton_tol;
    sc.newton_max_iter = cfg.newton_max_iter;
    sc.mass_lumping = cfg.mass_lumping;
    sc.keep_trajectory = cfg.trajectory;
    sc.validate()?;
    Ok(sc)
}

/// KL modes of both log-fields, computed or read from `kl.cache_dir`.
#[derive(Debug, Clone)]
pub struct KlPair {
    pub a: KlModes,
    pub kappa: KlModes,
    pub spec_a: CovarianceSpec,
    pub spec_kappa: CovarianceSpec,
    pub orthonormality_error: f64,
}

pub fn kl_pair(cfg: &StudyConfig, space: &FemSpace) -> Result<KlPair> {
    let spec_a = CovarianceSpec::calibrate(cfg.kl.correlation_length, cfg.kl.variance_a)?;
    let spec_kappa = CovarianceSpec::calibrate(cfg.kl.correlation_length, cfg.kl.variance_kappa)?;
    let (a, kappa) = match &cfg.kl.cache_dir {
        Some(dir) => {
            let a = KlModes::load(dir.join("kl_a.txt"))?;
            let kappa = KlModes::load(dir.join("kl_kappa.txt"))?;
            for (name, modes, spec) in [("kl_a.txt", &a, &spec_a), ("kl_kappa.txt", &kappa, &spec_kappa)] {
                if modes.gamma() != spec.gamma || modes.delta() != spec.delta {
                    return Err(Error::Validation(format!(
                        "{name} was computed for other covariance parameters"
                    )));
                }
                if modes.n_nodes() != space.n_nodes() || modes.n_modes() < cfg.s / 2 {
                    return Err(Error::Validation(format!(
                        "{name} has {} modes on {} nodes; need {} on {}",
                        modes.n_modes(),
                        modes.n_nodes(),
                        cfg.s / 2,
                        space.n_nodes()
                    )));
                }
            }
            (a, kappa)
        }
        None => {
            let opts = KlOptions {
                n_modes: cfg.kl.n_modes,
                oversample: cfg.kl.oversample,
                power_iterations: cfg.kl.power_iterations,
                seed: cfg.kl.seed,
            };
            if opts.n_modes + opts.oversample > space.n_nodes() {
                return Err(Error::Validation(format!(
                    "kl.n_modes + kl.oversample = {} exceeds the {} mesh nodes",
                    opts.n_modes + opts.oversample,
                    space.n_nodes()
                )));
            }
            (compute_kl(space, &spec_a, &opts)?, compute_kl(space, &spec_kappa, &opts)?)
        }
    };
    let orthonormality_error = a
        .orthonormality_error(space.mass())
        .max(kappa.orthonormality_error(space.mass()));
    Ok(KlPair {
        a,
        kappa,
        spec_a,
        spec_kappa,
        orthonormality_error,
    })
}

/// Assembled problem plus facts worth recording.
pub struct Built {
    pub mesh: Arc<Mesh>,
    pub problem: TumorProblem,
    pub kl: Option<KlPair>,
    pub notes: Vec<(String, String)>,
}

pub fn build_problem(cfg: &StudyConfig) -> Result<Built> {
    let mesh = build_mesh(cfg)?;
    let space = Arc::new(FemSpace::new(mesh.clone())?);
    let treatment = build_treatment(&cfg.treatment, cfg.dt)?;
    let solver = TumorSolver::new(space.clone(), treatment, solver_config(cfg)?)?;
    let mut notes = vec![
        ("mesh.nodes".to_string(), mesh.n_nodes().to_string()),
        ("mesh.triangles".to_string(), mesh.n_triangles().to_string()),
        ("mesh.sha256".to_string(), sha256_hex(mesh.to_text().as_bytes())),
    ];
    let (model, kl) = match cfg.mode {
        Mode::Uniform => {
            let length = cfg.field_length.unwrap_or_else(|| {
                let (lo, hi) = mesh.bounding_box();
                (hi[0] - lo[0]).max(hi[1] - lo[1])
            });
            let m = UniformAffineModel::new(cfg.a0, cfg.kappa0, cfg.nu, cfg.s, length)?;
            let (a_min, a_max) = m.diffusion_bounds();
            let (k_min, k_max) = m.proliferation_bounds();
            notes.push(("fields.length_resolved".into(), format!("{length:?}")));
            notes.push(("fields.diffusion_bounds".into(), format!("{a_min:?},{a_max:?}")));
            notes.push(("fields.proliferation_bounds".into(), format!("{k_min:?},{k_max:?}")));
            (FieldModel::UniformAffine(m), None)
        }
        Mode::Lognormal => {
            let pair = kl_pair(cfg, &space)?;
            for (name, spec, modes) in [("a", &pair.spec_a, &pair.a), ("kappa", &pair.spec_kappa, &pair.kappa)] {
                notes.push((format!("covariance.{name}.gamma"), format!("{:?}", spec.gamma)));
                notes.push((format!("covariance.{name}.delta"), format!("{:?}", spec.delta)));
                notes.push((format!("kl.{name}.sha256"), sha256_hex(modes.to_text().as_bytes())));
            }
            notes.push((
                "covariance.relations".into(),
                "correlation_length = sqrt(8 gamma / delta); variance = 1 / (4 pi gamma delta)".into(),
            ));
            notes.push((
                "kl.orthonormality_error".into(),
                format!("{:e}", pair.orthonormality_error),
            ));
            let m = LognormalKLModel::new(
                mesh.clone(),
                cfg.a0,
                cfg.kappa0,
                pair.a.clone(),
                pair.kappa.clone(),
                cfg.s,
            )?;
            (FieldModel::LognormalKL(m), Some(pair))
        }
    };
    let fields = FieldEvaluator::new(model, &space)?;
    let center = cfg.initial_center.unwrap_or_else(|| mesh.centroid());
    notes.push(("initial.center_resolved".into(), format!("{:?},{:?}", center[0], center[1])));
    let u0 = initial_condition_gaussian(&mesh, center, cfg.initial_amplitude, cfg.initial_width)?;
    let mut problem = TumorProblem::new(solver, fields, u0)?;
    if let Some(shift) = cfg.lambda_shift {
        problem = problem.with_shift(shift);
    }
    Ok(Built {
        mesh,
        problem,
        kl,
        notes,
    })
}

/// Generating vector for the study's dimension and largest level.
pub fn study_generating_vector(cfg: &StudyConfig) -> Result<(GeneratingVector, Option<WeightSequence>)> {
    match &cfg.vector {
        VectorSource::Cbc { decay } => {
            let weights = WeightSequence::product_power(cfg.s, *decay);
            let built = cbc_construct_embedded_traced(cfg.m_min, cfg.m_max, cfg.s, &weights)?;
            let text = format_generating_vector(&built.z, "");
            Ok((
                GeneratingVector {
                    z: built.z,
                    source: "cbc".into(),
                    sha256: sha256_hex(text.as_bytes()),
                },
                Some(weights),
            ))
        }
        VectorSource::Bundled => Ok((bundled_generating_vector(cfg.s)?, None)),
        VectorSource::File(path) => Ok((load_generating_vector(path, cfg.s)?, None)),
    }
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub qmc: Vec<EstimatorResult>,
    pub mc: Vec<McResult>,
    pub qmc_slope: f64,
    pub mc_slope: Option<f64>,
    pub kl_orthonormality_error: Option<f64>,
    pub csv: String,
    pub output_dir: PathBuf,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Runs the QMC ladder and the MC baseline on the current rayon pool and
/// writes all study files.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutcome> {
    let built = build_problem(cfg)?;
    let (gv, weights) = study_generating_vector(cfg)?;
    let n_max = 1u64 << cfg.m_max;
    let rule = LatticeRule::new(&gv.z, n_max, cfg.shifts, cfg.seed)?;
    let problem = &built.problem;

    let qmc = qmc_ladder(problem, &rule, cfg.m_min)?;
    let mc = if cfg.mc_enabled {
        let counts: Vec<usize> = (cfg.m_min..=cfg.m_max).map(|m| cfg.shifts << m).collect();
        mc_ladder(problem, &counts, cfg.seed)?
    } else {
        Vec::new()
    };

    let qmc_points: Vec<(f64, f64)> = qmc.iter().map(|l| (l.n_points as f64, l.rms_error)).collect();
    let qmc_slope = fit_or_nan(&qmc_points);
    let mc_slope = (!mc.is_empty()).then(|| {
        let pts: Vec<(f64, f64)> = mc.iter().map(|l| (l.n_samples as f64, l.standard_error)).collect();
        fit_or_nan(&pts)
    });

    let mut csv = String::new();
    let mut timings = String::from("kind,m,wall_seconds\n");
    let _ = writeln!(csv, "{CSV_HEADER}");
    for (level, m) in qmc.iter().zip(cfg.m_min..) {
        let wall = if cfg.timings { level.wall_seconds } else { 0.0 };
        let _ = writeln!(
            csv,
            "qmc,{m},{},{},{},{},{}",
            level.n_points,
            level.n_shifts,
            fmt_f64(level.mean),
            fmt_f64(level.rms_error),
            fmt_f64(wall)
        );
        let _ = writeln!(timings, "qmc,{m},{}", fmt_f64(level.wall_seconds));
    }
    for (level, m) in mc.iter().zip(cfg.m_min..) {
        let wall = if cfg.timings { level.wall_seconds } else { 0.0 };
        let _ = writeln!(
            csv,
            "mc,{m},{},1,{},{},{}",
            level.n_samples,
            fmt_f64(level.mean),
            fmt_f64(level.standard_error),
            fmt_f64(wall)
        );
        let _ = writeln!(timings, "mc,{m},{}", fmt_f64(level.wall_seconds));
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "qmc_rms_slope = {}", fmt_f64(qmc_slope));
    if let Some(s) = mc_slope {
        let _ = writeln!(summary, "mc_stderr_slope = {}", fmt_f64(s));
    }
    if let Some(last) = qmc.last() {
        let _ = writeln!(summary, "qmc_mean_at_max_level = {}", fmt_f64(last.mean));
    }
    if let Some(last) = mc.last() {
        let _ = writeln!(summary, "mc_mean_at_max_level = {}", fmt_f64(last.mean));
    }
    let kl_err = built.kl.as_ref().map(|k| k.orthonormality_error);
    if let Some(pair) = &built.kl {
        let _ = writeln!(summary, "kl_orthonormality_error = {:e}", pair.orthonormality_error);
        if let Ok(slope) = kl_decay_slope(&pair.a) {
            let _ = writeln!(summary, "kl_a_sqrt_eigenvalue_slope = {}", fmt_f64(slope));
        }
    }

    let mut meta = String::new();
    let _ = writeln!(meta, "# resolved configuration");
    meta.push_str(&cfg.to_text());
    let _ = writeln!(meta, "# inputs");
    for (k, v) in &built.notes {
        let _ = writeln!(meta, "{k} = {v}");
    }
    let _ = writeln!(meta, "vector.source = {}", gv.source);
    let _ = writeln!(meta, "vector.sha256 = {}", gv.sha256);
    if let Some(w) = &weights {
        let _ = writeln!(meta, "vector.weights = {}", w.describe());
    }
    let z: Vec<String> = rule.generating_vector().iter().map(u64::to_string).collect();
    let _ = writeln!(meta, "vector.z_mod_n = {}", z.join(","));
    let _ = writeln!(meta, "lattice.n_max = {n_max}");
    let _ = writeln!(meta, "lattice.shift_seed = {}", cfg.seed);
    let _ = writeln!(meta, "csv.sha256 = {}", sha256_hex(csv.as_bytes()));
    let _ = writeln!(meta, "software.version = {}", env!("CARGO_PKG_VERSION"));

    let dir = &cfg.output_dir;
    create_dir(dir)?;
    write_file(&dir.join("results.csv"), &csv)?;
    write_file(&dir.join("timings.csv"), &timings)?;
    write_file(&dir.join("summary.txt"), &summary)?;
    write_file(&dir.join("metadata.txt"), &meta)?;
    write_file(&dir.join("plot.gp"), &gnuplot_script(cfg.mc_enabled))?;

    Ok(StudyOutcome {
        qmc,
        mc,
        qmc_slope,
        mc_slope,
        kl_orthonormality_error: kl_err,
        csv,
        output_dir: dir.clone(),
    })
}

fn fit_or_nan(points: &[(f64, f64)]) -> f64 {
    if points.len() < 3 {
        return f64::NAN;
    }
    fit_rate(points).unwrap_or(f64::NAN)
}

fn gnuplot_script(with_mc: bool) -> String {
    let mut s = String::from(
        "# Log-log convergence plot of results.csv against total PDE solves.\n\
         set datafile separator ','\n\
         set logscale xy\n\
         set format x '10^{%L}'\n\
         set format y '10^{%L}'\n\
         set xlabel 'total PDE solves'\n\
         set ylabel 'estimated error'\n\
         set key bottom left\n\
         set terminal pngcairo size 800,600\n\
         set output 'convergence.png'\n\
         qmc(k) = (stringcolumn(1) eq 'qmc') ? k : 1/0\n\
         mc(k) = (stringcolumn(1) eq 'mc') ? k : 1/0\n",
    );
    s.push_str("plot 'results.csv' skip 1 using (qmc($3*$4)):(qmc($6)) with linespoints title 'QMC RMS'");
    if with_mc {
        s.push_str(", \\\n     'results.csv' skip 1 using (mc($3)):(mc($6)) with linespoints title 'MC standard error'");
    }
    s.push('\n');
    s
}

/// Least-squares slope of `log sqrt(μ_k)` against `log k`.
pub fn kl_decay_slope(modes: &KlModes) -> Result<f64> {
    let pts: Vec<(f64, f64)> = modes
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(k, mu)| ((k + 1) as f64, mu.sqrt()))
        .collect();
    fit_rate(&pts)
}

#[derive(Debug, Clone)]
pub struct SingleOutcome {
    pub qoi: f64,
    pub apriori_constant: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub newton_iterations: usize,
    pub lambda: f64,
    pub trajectory_path: Option<PathBuf>,
}

/// One solve at an explicit parameter vector.
pub fn run_single(cfg: &StudyConfig, y: &[f64]) -> Result<SingleOutcome> {
    if y.len() != cfg.s {
        return Err(Error::Validation(format!(
            "parameter vector has {} entries, fields.s = {}",
            y.len(),
            cfg.s
        )));
    }
    if cfg.mode == Mode::Uniform {
        if let Some(j) = y.iter().position(|v| !(v.abs() <= 0.5)) {
            return Err(Error::Validation(format!(
                "uniform parameter y_{} = {} outside [-1/2, 1/2]",
                j + 1,
                y[j]
            )));
        }
    } else if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("parameters must be finite".into()));
    }
    let built = build_problem(cfg)?;
    let problem = &built.problem;
    let coeffs = problem.fields().coefficients(y)?;
    let out = problem.solve(y)?;
    let qoi = problem.solver().qoi(&out.terminal);
    let (a_min, a_max) = coeffs.diffusion_range();
    let kappa_max = coeffs.proliferation_range().1;
    let lambda = out.lambda.unwrap_or(match cfg.lambda_shift {
        Some(LambdaShift::Value(l)) => l,
        _ => kappa_max + 1.0,
    });
    let f_max = problem.solver().treatment().f_max_bound(cfg.final_time, cfg.dt);
    let constant = apriori_constant(a_min, a_max, kappa_max, f_max, lambda)?;
    let trajectory_path = match &out.trajectory {
        Some(traj) => {
            create_dir(&cfg.output_dir)?;
            let path = cfg.output_dir.join("trajectory.txt");
            write_trajectory(&path, traj)?;
            Some(path)
        }
        None => None,
    };
    Ok(SingleOutcome {
        qoi,
        apriori_constant: constant,
        min_value: out.min_value,
        max_value: out.max_value,
        newton_iterations: out.newton_iterations,
        lambda,
        trajectory_path,
    })
}

#[derive(Debug, Clone)]
pub struct KlOutcome {
    pub pair: KlPair,
    pub files: Vec<PathBuf>,
}

/// Computes both KL bases and writes caches plus decay tables.
pub fn run_kl(cfg: &StudyConfig) -> Result<KlOutcome> {
    if cfg.mode != Mode::Lognormal {
        return Err(Error::Validation("the kl tool needs mode = lognormal".into()));
    }
    let mesh = build_mesh(cfg)?;
    let space = FemSpace::new(mesh)?;
    let mut fresh = cfg.clone();
    fresh.kl.cache_dir = None;
    let pair = kl_pair(&fresh, &space)?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let mut files = Vec::new();
    for (name, modes) in [("a", &pair.a), ("kappa", &pair.kappa)] {
        let cache = dir.join(format!("kl_{name}.txt"));
        modes.save(&cache)?;
        let mut csv = String::from("k,mu,sqrt_mu\n");
        for (k, mu) in modes.eigenvalues().iter().enumerate() {
            let _ = writeln!(csv, "{},{},{}", k + 1, fmt_f64(*mu), fmt_f64(mu.sqrt()));
        }
        let decay = dir.join(format!("kl_decay_{name}.csv"));
        write_file(&decay, &csv)?;
        files.push(cache);
        files.push(decay);
    }
    Ok(KlOutcome { pair, files })
}

#[derive(Debug, Clone)]
pub struct CbcOutcome {
    pub z: Vec<u64>,
    pub wce: Vec<f64>,
    pub vector_path: PathBuf,
    pub report_path: PathBuf,
}

/// Builds a generating vector with product weights `j^{-decay}` and writes
/// it with a per-dimension worst-case error report. With `m_min`, `n` must be
/// a power of two and the rule is embedded over `2^m_min..=n`.
pub fn run_cbc(n: u64, s: usize, decay: f64, m_min: Option<u32>, out_dir: &Path) -> Result<CbcOutcome> {
    if prime_power(n).is_none() {
        return Err(Error::Validation(format!("N = {n} is not a prime power")));
    }
    if s == 0 {
        return Err(Error::Validation("s must be positive".into()));
    }
    if !(decay > 0.0) {
        return Err(Error::Validation(format!("decay must be positive, got {decay}")));
    }
    let weights = WeightSequence::product_power(s, decay);
    let (built, header) = match m_min {
        Some(m0) => {
            if !n.is_power_of_two() {
                return Err(Error::Validation("embedded construction needs N = 2^m".into()));
            }
            let m_max = n.trailing_zeros();
            (
                cbc_construct_embedded_traced(m0, m_max, s, &weights)?,
                format!("embedded lattice rule, N = 2^m for m = {m0}..{m_max}, s = {s}, product weights j^-{decay}"),
            )
        }
        None => (
            cbc_construct_traced(n, s, &weights)?,
            format!("lattice rule, N = {n}, s = {s}, product weights j^-{decay}"),
        ),
    };
    create_dir(out_dir)?;
    let vector_path = out_dir.join(format!("lattice-n{n}-s{s}.txt"));
    write_file(&vector_path, &format_generating_vector(&built.z, &header))?;
    let wce: Vec<f64> = built.wce_squared.iter().map(|e| e.max(0.0).sqrt()).collect();
    let mut report = String::from("j,z_j,wce\n");
    for (j, (z, e)) in built.z.iter().zip(&wce).enumerate() {
        let _ = writeln!(report, "{},{z},{}", j + 1, fmt_f64(*e));
    }
    let report_path = out_dir.join(format!("lattice-n{n}-s{s}-wce.csv"));
    write_file(&report_path, &report)?;
    Ok(CbcOutcome {
        z: built.z,
        wce,
        vector_path,
        report_path,
    })
}
