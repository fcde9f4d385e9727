//! Study configuration: flat `section.key = value` text.
//!
//! Every key has a default (see [`KEYS`]); a config file only lists what it
//! changes. Unknown keys and malformed values are errors, and validation
//! reports every violated field at once.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::solver::LambdaShift;

/// `(key, default, description)` for every recognized key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("mode", "uniform", "uniform | lognormal"),
    ("seed", "20240601", "seed for lattice shifts and Monte Carlo samples"),
    ("mesh.source", "structured", "structured | file"),
    ("mesh.n", "25", "cells per side of the structured square"),
    ("mesh.length", "100", "side length of the structured square [mm]"),
    ("mesh.file", "", "mesh file when mesh.source = file"),
    ("time.dt", "0.125", "time step [day]"),
    ("time.final", "7", "final time [day]"),
    ("solver.newton_tol", "1e-10", "absolute Newton residual tolerance"),
    ("solver.newton_max_iter", "25", "Newton iteration cap per step"),
    ("solver.mass_lumping", "true", "lump mass-type matrices"),
    ("solver.lambda_shift", "off", "off (or 0) | auto | value: solve the reparameterized equation"),
    ("initial.amplitude", "0.8", "peak of the Gaussian initial tumor"),
    ("initial.width", "5", "width of the Gaussian initial tumor [mm]"),
    ("initial.center", "auto", "auto (mesh centroid) | x,y"),
    ("treatment.rt_days", "0,1,2,3,4", "radiotherapy fraction times [day]; empty for none"),
    ("treatment.rt_dose", "2", "dose per fraction [Gy]"),
    ("treatment.rt_alpha", "0.025", "radiosensitivity alpha [1/Gy]"),
    ("treatment.rt_beta", "0.0025", "radiosensitivity beta [1/Gy^2]"),
    ("treatment.ct_days", "0,1,2,3,4,5,6", "chemotherapy administration times [day]; empty for none"),
    ("treatment.ct_dose", "1", "drug concentration per administration"),
    ("treatment.ct_alpha", "0.9", "chemotherapy efficacy"),
    ("treatment.ct_beta", "13.333333333333334", "drug clearance rate [1/day]"),
    ("fields.s", "16", "stochastic dimension (even; s/2 modes per field)"),
    ("fields.a0", "0.05", "mean diffusion [mm^2/day]"),
    ("fields.kappa0", "0.3", "mean proliferation [1/day]"),
    ("fields.nu", "2", "decay exponent of the uniform model"),
    ("fields.length", "auto", "period length of the uniform modes; auto = mesh extent"),
    ("kl.correlation_length", "180", "correlation length of the lognormal model [mm]"),
    ("kl.variance_a", "0.2336", "pointwise variance of log-diffusion"),
    ("kl.variance_kappa", "0.0682", "pointwise variance of log-proliferation"),
    ("kl.n_modes", "auto", "modes to compute; auto = s/2"),
    ("kl.oversample", "10", "randomized eigensolver oversampling"),
    ("kl.power_iterations", "1", "randomized eigensolver power steps"),
    ("kl.seed", "7", "randomized eigensolver seed"),
    ("kl.cache_dir", "", "directory with kl_a.txt and kl_kappa.txt to reuse"),
    ("qmc.m_min", "4", "smallest ladder level (N = 2^m)"),
    ("qmc.m_max", "10", "largest ladder level"),
    ("qmc.shifts", "8", "number of random shifts R"),
    ("qmc.vector", "cbc", "cbc | bundled | path to a generating vector file"),
    ("qmc.cbc_decay", "2", "product weights j^-decay for on-the-fly construction"),
    ("mc.enabled", "true", "run the Monte Carlo baseline"),
    ("output.dir", "out", "output directory"),
    ("output.timings", "false", "write measured seconds into the CSV (breaks byte-identical reruns)"),
    ("output.trajectory", "false", "solve only: dump all time levels"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Uniform,
    Lognormal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Structured { n: usize, length: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum VectorSource {
    Cbc { decay: f64 },
    Bundled,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentConfig {
    pub rt_days: Vec<f64>,
    pub rt_dose: f64,
    pub rt_alpha: f64,
    pub rt_beta: f64,
    pub ct_days: Vec<f64>,
    pub ct_dose: f64,
    pub ct_alpha: f64,
    pub ct_beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlConfig {
    pub correlation_length: f64,
    pub variance_a: f64,
    pub variance_kappa: f64,
    pub n_modes: usize,
    pub oversample: usize,
    pub power_iterations: usize,
    pub seed: u64,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub mode: Mode,
    pub seed: u64,
    pub mesh: MeshSource,
    pub dt: f64,
    pub final_time: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub mass_lumping: bool,
    pub lambda_shift: Option<LambdaShift>,
    pub initial_amplitude: f64,
    pub initial_width: f64,
    pub initial_center: Option<Point>,
    pub treatment: TreatmentConfig,
    pub s: usize,
    pub a0: f64,
    pub kappa0: f64,
    pub nu: f64,
    pub field_length: Option<f64>,
    pub kl: KlConfig,
    pub m_min: u32,
    pub m_max: u32,
    pub shifts: usize,
    pub vector: VectorSource,
    pub mc_enabled: bool,
    pub output_dir: PathBuf,
    pub timings: bool,
    pub trajectory: bool,
    resolved: BTreeMap<String, String>,
}

/// Typed access to the merged key map, collecting every problem.
struct Reader<'a> {
    map: &'a BTreeMap<String, String>,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> &str {
        self.map.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, fallback: T) -> T
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key).parse::<T>() {
            Ok(v) => v,
            Err(e) => {
                self.errors.push(format!("{key}: cannot parse {:?} ({e})", self.raw(key)));
                fallback
            }
        }
    }

    fn positive(&mut self, key: &str) -> f64 {
        let v = self.parse(key, 1.0f64);
        if !(v > 0.0) || !v.is_finite() {
            self.errors.push(format!("{key}: must be positive, got {v}"));
        }
        v
    }

    fn nonnegative(&mut self, key: &str) -> f64 {
        let v = self.parse(key, 0.0f64);
        if !(v >= 0.0) || !v.is_finite() {
            self.errors.push(format!("{key}: must be nonnegative, got {v}"));
        }
        v
    }

    fn boolean(&mut self, key: &str) -> bool {
        match self.raw(key) {
            "true" | "yes" | "1" => true,
            "false" | "no" | "0" => false,
            other => {
                self.errors.push(format!("{key}: expected true or false, got {other:?}"));
                false
            }
        }
    }

    fn list(&mut self, key: &str) -> Vec<f64> {
        let raw = self.raw(key).trim().to_string();
        if raw.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for part in raw.split(',') {
            match part.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(v),
                _ => {
                    self.errors.push(format!("{key}: bad list entry {:?}", part.trim()));
                    return Vec::new();
                }
            }
        }
        out
    }
}

impl StudyConfig {
    pub fn default_config() -> Result<Self> {
        Self::from_text("", Path::new("<defaults>"), &[])
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_text(&text, path, overrides)?;
        // Relative paths in the config resolve against its directory.
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let MeshSource::File(p) = &mut cfg.mesh {
            rebase(p);
        }
        if let VectorSource::File(p) = &mut cfg.vector {
            rebase(p);
        }
        if let Some(p) = cfg.kl.cache_dir.as_mut() {
            rebase(p);
        }
        cfg.check_files()?;
        Ok(cfg)
    }

    /// Parses config text, then applies `overrides` (e.g. from the command
    /// line) on top.
    pub fn from_text(text: &str, origin: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let mut map: BTreeMap<String, String> =
            KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect();
        for (i, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Format {
                path: origin.to_path_buf(),
                line: i + 1,
                message: format!("expected key = value, got {content:?}"),
            })?;
            let key = key.trim();
            if !map.contains_key(key) {
                return Err(Error::Format {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: format!("unknown key {key:?}"),
                });
            }
            map.insert(key.to_string(), value.trim().to_string());
        }
        for (key, value) in overrides {
            if !map.contains_key(key.as_str()) {
                return Err(Error::Validation(format!("unknown key {key:?}")));
            }
            map.insert(key.clone(), value.clone());
        }
        Self::from_map(map)
    }

    fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        let mut r = Reader {
            map: &map,
            errors: Vec::new(),
        };
        let mode = match r.raw("mode") {
            "uniform" => Mode::Uniform,
            "lognormal" => Mode::Lognormal,
            other => {
                r.errors.push(format!("mode: expected uniform or lognormal, got {other:?}"));
                Mode::Uniform
            }
        };
        let seed = r.parse("seed", 0u64);
        let mesh = match r.raw("mesh.source") {
            "structured" => {
                let n = r.parse("mesh.n", 1usize);
                if n == 0 {
                    r.errors.push("mesh.n: must be at least 1".into());
                }
                MeshSource::Structured {
                    n,
                    length: r.positive("mesh.length"),
                }
            }
            "file" => {
                let f = r.raw("mesh.file").to_string();
                if f.is_empty() {
                    r.errors.push("mesh.file: required when mesh.source = file".into());
                }
                MeshSource::File(PathBuf::from(f))
            }
            other => {
                r.errors.push(format!("mesh.source: expected structured or file, got {other:?}"));
                MeshSource::Structured { n: 1, length: 1.0 }
            }
        };
        let dt = r.positive("time.dt");
        let final_time = r.positive("time.final");
        if dt > 0.0 && final_time < dt {
            r.errors.push(format!("time.final: {final_time} is shorter than one step {dt}"));
        }
        let newton_tol = r.positive("solver.newton_tol");
        let newton_max_iter = r.parse("solver.newton_max_iter", 1usize);
        let mass_lumping = r.boolean("solver.mass_lumping");
        let lambda_shift = match r.raw("solver.lambda_shift") {
            "off" | "0" => None,
            "auto" => Some(LambdaShift::Auto),
            _ => Some(LambdaShift::Value(r.positive("solver.lambda_shift"))),
        };
        let initial_amplitude = r.nonnegative("initial.amplitude");
        if initial_amplitude > 1.0 {
            r.errors.push(format!("initial.amplitude: must lie in [0, 1], got {initial_amplitude}"));
        }
        let initial_width = r.positive("initial.width");
        let initial_center = match r.raw("initial.center") {
            "auto" => None,
            _ => {
                let v = r.list("initial.center");
                if v.len() == 2 {
                    Some([v[0], v[1]])
                } else {
                    r.errors.push("initial.center: expected auto or x,y".into());
                    None
                }
            }
        };
        let treatment = TreatmentConfig {
            rt_days: r.list("treatment.rt_days"),
            rt_dose: r.nonnegative("treatment.rt_dose"),
            rt_alpha: r.positive("treatment.rt_alpha"),
            rt_beta: r.positive("treatment.rt_beta"),
            ct_days: r.list("treatment.ct_days"),
            ct_dose: r.nonnegative("treatment.ct_dose"),
            ct_alpha: r.nonnegative("treatment.ct_alpha"),
            ct_beta: r.nonnegative("treatment.ct_beta"),
        };
        let s = r.parse("fields.s", 2usize);
        if s == 0 || s % 2 != 0 {
            r.errors.push(format!("fields.s: must be even and positive, got {s}"));
        }
        let a0 = r.nonnegative("fields.a0");
        let kappa0 = r.nonnegative("fields.kappa0");
        let nu = r.positive("fields.nu");
        if mode == Mode::Uniform && nu <= 1.0 {
            r.errors.push(format!("fields.nu: must exceed 1, got {nu}"));
        }
        let field_length = match r.raw("fields.length") {
            "auto" => None,
            _ => Some(r.positive("fields.length")),
        };
        let n_modes = match r.raw("kl.n_modes") {
            "auto" => s / 2,
            _ => r.parse("kl.n_modes", s / 2),
        };
        if n_modes < s / 2 {
            r.errors.push(format!("kl.n_modes: {n_modes} is fewer than s/2 = {}", s / 2));
        }
        let cache = r.raw("kl.cache_dir").to_string();
        let kl = KlConfig {
            correlation_length: r.positive("kl.correlation_length"),
            variance_a: r.positive("kl.variance_a"),
            variance_kappa: r.positive("kl.variance_kappa"),
            n_modes,
            oversample: r.parse("kl.oversample", 10usize),
            power_iterations: r.parse("kl.power_iterations", 1usize),
            seed: r.parse("kl.seed", 0u64),
            cache_dir: (!cache.is_empty()).then(|| PathBuf::from(cache)),
        };
        let m_min = r.parse("qmc.m_min", 0u32);
        let m_max = r.parse("qmc.m_max", 0u32);
        if m_min > m_max {
            r.errors.push(format!("qmc.m_min: {m_min} exceeds qmc.m_max = {m_max}"));
        }
        if m_max > 24 {
            r.errors.push(format!("qmc.m_max: {m_max} is beyond the supported 24"));
        }
        if m_min < 2 {
            r.errors.push(format!("qmc.m_min: rate fits need m_min >= 2, got {m_min}"));
        }
        let shifts = r.parse("qmc.shifts", 2usize);
        if shifts < 2 {
            r.errors.push(format!("qmc.shifts: need at least 2, got {shifts}"));
        }
        let vector = match r.raw("qmc.vector") {
            "cbc" => VectorSource::Cbc {
                decay: r.positive("qmc.cbc_decay"),
            },
            "bundled" => VectorSource::Bundled,
            "" => {
                r.errors.push("qmc.vector: must not be empty".into());
                VectorSource::Bundled
            }
            path => VectorSource::File(PathBuf::from(path)),
        };
        let mc_enabled = r.boolean("mc.enabled");
        let output_dir = PathBuf::from(r.raw("output.dir"));
        let timings = r.boolean("output.timings");
        let trajectory = r.boolean("output.trajectory");

        if !r.errors.is_empty() {
            return Err(Error::Validation(r.errors.join("; ")));
        }
        Ok(StudyConfig {
            mode,
            seed,
            mesh,
            dt,
            final_time,
            newton_tol,
            newton_max_iter,
            mass_lumping,
            lambda_shift,
            initial_amplitude,
            initial_width,
            initial_center,
            treatment,
            s,
            a0,
            kappa0,
            nu,
            field_length,
            kl,
            m_min,
            m_max,
            shifts,
            vector,
            mc_enabled,
            output_dir,
            timings,
            trajectory,
            resolved: map,
        })
    }

    /// Every referenced file must exist.
    pub fn check_files(&self) -> Result<()> {
        let mut missing = Vec::new();
        if let MeshSource::File(p) = &self.mesh {
            if !p.is_file() {
                missing.push(format!("mesh.file: {} does not exist", p.display()));
            }
        }
        if let VectorSource::File(p) = &self.vector {
            if !p.is_file() {
                missing.push(format!("qmc.vector: {} does not exist", p.display()));
            }
        }
        if let Some(dir) = &self.kl.cache_dir {
            for name in ["kl_a.txt", "kl_kappa.txt"] {
                if !dir.join(name).is_file() {
                    missing.push(format!("kl.cache_dir: {} has no {name}", dir.display()));
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(missing.join("; ")))
        }
    }

    /// Complete resolved configuration, one `key = value` per line, sorted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.resolved {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<StudyConfig> {
        StudyConfig::from_text(text, Path::new("t.cfg"), &[])
    }

    #[test]
    fn defaults_are_valid() {
        let c = StudyConfig::default_config().unwrap();
        assert_eq!(c.mode, Mode::Uniform);
        assert_eq!(c.treatment.rt_days.len(), 5);
        assert_eq!(c.kl.n_modes, 8);
        assert_eq!(c.vector, VectorSource::Cbc { decay: 2.0 });
    }

    #[test]
    fn overrides_and_comments() {
        let c = StudyConfig::from_text(
            "# study\nmode = lognormal\nqmc.m_max = 9 # trailing\n\nfields.s=32\n",
            Path::new("t.cfg"),
            &[("seed".into(), "5".into())],
        )
        .unwrap();
        assert_eq!(c.mode, Mode::Lognormal);
        assert_eq!((c.m_max, c.s, c.seed, c.kl.n_modes), (9, 32, 5, 16));
        assert!(c.to_text().contains("qmc.m_max = 9\n"));
    }

    #[test]
    fn reports_every_violation() {
        let err = parse("qmc.m_min = 8\nqmc.m_max = 6\nfields.s = 15\ntime.dt = -1\n").unwrap_err();
        let msg = err.to_string();
        for key in ["qmc.m_min", "fields.s", "time.dt"] {
            assert!(msg.contains(key), "{msg}");
        }
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn unknown_key_and_syntax() {
        assert!(matches!(parse("qmc.mmax = 3\n"), Err(Error::Format { line: 1, .. })));
        assert!(matches!(parse("\nnot a pair\n"), Err(Error::Format { line: 2, .. })));
    }

    #[test]
    fn missing_files_detected() {
        let c = parse("qmc.vector = /nonexistent/z.txt\n").unwrap();
        assert!(c.check_files().is_err());
    }

    #[test]
    fn lambda_shift_values() {
        assert_eq!(parse("solver.lambda_shift = auto").unwrap().lambda_shift, Some(LambdaShift::Auto));
        assert_eq!(
            parse("solver.lambda_shift = 1.5").unwrap().lambda_shift,
            Some(LambdaShift::Value(1.5))
        );
        assert!(parse("solver.lambda_shift = nope").is_err());
    }
}
