//! Chemoradiation forcing `f = f_rt + f_ct`.
//!
//! Radiotherapy acts through the linear-quadratic surviving fraction, each
//! dose spread over a single time step with magnitude `gamma_scale`.
//! Chemotherapy decays exponentially after each administration.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Point;

/// Spatial dose map.
#[derive(Clone)]
pub enum DoseMap {
    Uniform(f64),
    /// Arbitrary nonnegative map together with its supremum over the domain.
    Field {
        eval: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
        sup: f64,
    },
}

impl DoseMap {
    pub fn at(&self, x: Point) -> f64 {
        match self {
            DoseMap::Uniform(v) => *v,
            DoseMap::Field { eval, .. } => eval(x),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            DoseMap::Uniform(v) => *v,
            DoseMap::Field { sup, .. } => *sup,
        }
    }

    fn is_uniform(&self) -> bool {
        matches!(self, DoseMap::Uniform(_))
    }
}

impl fmt::Debug for DoseMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DoseMap::Uniform(v) => write!(f, "Uniform({v})"),
            DoseMap::Field { sup, .. } => write!(f, "Field {{ sup: {sup} }}"),
        }
    }
}

// Tolerance for comparing times that were computed as n * dt.
fn time_eps(dt: f64) -> f64 {
    1e-9 * dt.max(1.0)
}

fn check_times(times: &[f64], what: &str) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} times must be finite")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(format!(
            "{what} times must be sorted ascending"
        )));
    }
    Ok(())
}

fn check_doses(doses: &[DoseMap], n_times: usize, what: &str) -> Result<()> {
    if doses.len() != n_times {
        return Err(Error::InvalidArgument(format!(
            "{what}: {} dose maps for {n_times} times",
            doses.len()
        )));
    }
    if doses.iter().any(|d| !(d.sup() >= 0.0) || !d.sup().is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} doses must be nonnegative")));
    }
    if doses.iter().any(|d| matches!(d, DoseMap::Uniform(v) if *v < 0.0)) {
        return Err(Error::InvalidArgument(format!("{what} doses must be nonnegative")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RadiotherapySchedule {
    times: Vec<f64>,
    doses: Vec<DoseMap>,
    alpha: f64,
    beta: f64,
    gamma_scale: f64,
}

impl RadiotherapySchedule {
    pub fn new(
        times: Vec<f64>,
        doses: Vec<DoseMap>,
        alpha: f64,
        beta: f64,
        gamma_scale: f64,
    ) -> Result<Self> {
        check_times(&times, "radiotherapy")?;
        check_doses(&doses, times.len(), "radiotherapy")?;
        if !(alpha > 0.0) || !(beta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "radiosensitivities must be positive (alpha = {alpha}, beta = {beta})"
            )));
        }
        if !(gamma_scale > 0.0) || !gamma_scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "radiotherapy scale must be positive, got {gamma_scale}"
            )));
        }
        Ok(RadiotherapySchedule {
            times,
            doses,
            alpha,
            beta,
            gamma_scale,
        })
    }

    pub fn empty() -> Self {
        RadiotherapySchedule {
            times: Vec::new(),
            doses: Vec::new(),
            alpha: 1.0,
            beta: 1.0,
            gamma_scale: 1.0,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma_scale(&self) -> f64 {
        self.gamma_scale
    }

    /// `1 - exp(-alpha z - beta z^2)`: the fraction of cells killed by dose `z`.
    pub fn kill_fraction(&self, dose: f64) -> f64 {
        -(-self.alpha * dose - self.beta * dose * dose).exp_m1()
    }

    /// Radiotherapy forcing at `(x, t)`; each pulse occupies `[τ, τ + dt)`.
    pub fn eval(&self, x: Point, t: f64, dt: f64) -> f64 {
        let eps = time_eps(dt);
        self.times
            .iter()
            .zip(&self.doses)
            .filter(|(&tau, _)| t >= tau - eps && t < tau + dt - eps)
            .map(|(_, z)| self.gamma_scale * self.kill_fraction(z.at(x)))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct ChemotherapySchedule {
    times: Vec<f64>,
    concentrations: Vec<DoseMap>,
    alpha: f64,
    beta: f64,
}

impl ChemotherapySchedule {
    pub fn new(times: Vec<f64>, concentrations: Vec<DoseMap>, alpha: f64, beta: f64) -> Result<Self> {
        check_times(&times, "chemotherapy")?;
        check_doses(&concentrations, times.len(), "chemotherapy")?;
        if !(alpha > 0.0) || !(beta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "chemotherapy efficacy and clearance must be positive (alpha = {alpha}, beta = {beta})"
            )));
        }
        Ok(ChemotherapySchedule {
            times,
            concentrations,
            alpha,
            beta,
        })
    }

    pub fn empty() -> Self {
        ChemotherapySchedule {
            times: Vec::new(),
            concentrations: Vec::new(),
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eval(&self, x: Point, t: f64) -> f64 {
        let eps = time_eps(1.0);
        self.times
            .iter()
            .zip(&self.concentrations)
            .filter(|(&tau, _)| t >= tau - eps)
            .map(|(&tau, z)| self.alpha * z.at(x) * (-self.beta * (t - tau).max(0.0)).exp())
            .sum()
    }
}

/// Combined schedule.
#[derive(Debug, Clone)]
pub struct Treatment {
    pub radiotherapy: RadiotherapySchedule,
    pub chemotherapy: ChemotherapySchedule,
}

impl Treatment {
    pub fn none() -> Self {
        Treatment {
            radiotherapy: RadiotherapySchedule::empty(),
            chemotherapy: ChemotherapySchedule::empty(),
        }
    }

    /// Five daily 2 Gy fractions on days 0-4 and daily chemotherapy on days
    /// 0-6, with `gamma_scale = 1/dt`.
    pub fn standard_protocol(dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let rt_times: Vec<f64> = (0..5).map(f64::from).collect();
        let ct_times: Vec<f64> = (0..7).map(f64::from).collect();
        let alpha_rt = 0.025;
        Ok(Treatment {
            radiotherapy: RadiotherapySchedule::new(
                rt_times.clone(),
                vec![DoseMap::Uniform(2.0); rt_times.len()],
                alpha_rt,
                alpha_rt / 10.0,
                1.0 / dt,
            )?,
            chemotherapy: ChemotherapySchedule::new(
                ct_times.clone(),
                vec![DoseMap::Uniform(1.0); ct_times.len()],
                0.9,
                24.0 / 1.8,
            )?,
        })
    }

    pub fn is_spatially_uniform(&self) -> bool {
        self.radiotherapy.doses.iter().all(DoseMap::is_uniform)
            && self.chemotherapy.concentrations.iter().all(DoseMap::is_uniform)
    }

    pub fn is_empty(&self) -> bool {
        self.radiotherapy.times.is_empty() && self.chemotherapy.times.is_empty()
    }

    /// `f(x, t)` with radiotherapy pulses of width `dt`.
    pub fn eval_f(&self, x: Point, t: f64, dt: f64) -> f64 {
        self.radiotherapy.eval(x, t, dt) + self.chemotherapy.eval(x, t)
    }

    /// Forcing used for the implicit step `t_prev -> t_next`: the radiotherapy
    /// pulse starting in this step plus chemotherapy at `t_next`.
    pub fn step_forcing(&self, x: Point, t_prev: f64, t_next: f64) -> f64 {
        let dt = t_next - t_prev;
        self.radiotherapy.eval(x, t_prev, dt) + self.chemotherapy.eval(x, t_next)
    }

    /// Certified upper bound of `f` over the domain and `[0, horizon]`.
    pub fn f_max_bound(&self, horizon: f64, dt: f64) -> f64 {
        let rt = &self.radiotherapy;
        let eps = time_eps(dt);
        let active: Vec<f64> = rt
            .times
            .iter()
            .zip(&rt.doses)
            .filter(|(&tau, _)| tau <= horizon + eps)
            .map(|(_, z)| rt.gamma_scale * rt.kill_fraction(z.sup()))
            .collect();
        let overlapping = rt.times.windows(2).any(|w| w[1] - w[0] < dt - eps);
        let rt_bound = if overlapping {
            active.iter().sum()
        } else {
            active.iter().copied().fold(0.0, f64::max)
        };
        let ct = &self.chemotherapy;
        let ct_bound: f64 = ct
            .times
            .iter()
            .zip(&ct.concentrations)
            .filter(|(&tau, _)| tau <= horizon + eps)
            .map(|(_, z)| ct.alpha * z.sup())
            .sum();
        rt_bound + ct_bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_rt(dose: f64) -> Treatment {
        Treatment {
            radiotherapy: RadiotherapySchedule::new(
                vec![1.0],
                vec![DoseMap::Uniform(dose)],
                0.025,
                0.0025,
                8.0,
            )
            .unwrap(),
            chemotherapy: ChemotherapySchedule::empty(),
        }
    }

    #[test]
    fn radiotherapy_pulse_value() {
        let f = single_rt(2.0).eval_f([0.0, 0.0], 1.05, 0.125);
        let expected = 8.0 * (1.0 - (-0.06f64).exp());
        assert!((f - expected).abs() < 1e-15);
        assert!((f - 0.465884).abs() < 5e-7);
        // The pulse is closed on the left and open on the right.
        assert_eq!(single_rt(2.0).eval_f([0.0, 0.0], 1.125, 0.125), 0.0);
        assert!(single_rt(2.0).eval_f([0.0, 0.0], 1.0, 0.125) > 0.0);
    }

    #[test]
    fn nothing_before_first_treatment() {
        let tr = Treatment::standard_protocol(0.125).unwrap();
        assert_eq!(tr.eval_f([3.0, 4.0], -0.5, 0.125), 0.0);
        assert_eq!(Treatment::none().eval_f([0.0, 0.0], 2.0, 0.125), 0.0);
    }

    #[test]
    fn chemo_at_administration_time() {
        let ct = ChemotherapySchedule::new(vec![0.0], vec![DoseMap::Uniform(1.0)], 0.9, 24.0 / 1.8)
            .unwrap();
        assert_eq!(ct.eval([0.0, 0.0], 0.0), 0.9);
    }

    #[test]
    fn chemo_superposition() {
        let both = ChemotherapySchedule::new(
            vec![0.0, 1.0],
            vec![DoseMap::Uniform(1.0), DoseMap::Uniform(0.5)],
            0.9,
            2.0,
        )
        .unwrap();
        let first = ChemotherapySchedule::new(vec![0.0], vec![DoseMap::Uniform(1.0)], 0.9, 2.0).unwrap();
        let second = ChemotherapySchedule::new(vec![1.0], vec![DoseMap::Uniform(0.5)], 0.9, 2.0).unwrap();
        for t in [0.0, 0.3, 1.0, 1.7, 5.0] {
            let sum = first.eval([0.0, 0.0], t) + second.eval([0.0, 0.0], t);
            assert!((both.eval([0.0, 0.0], t) - sum).abs() < 1e-15);
        }
    }

    #[test]
    fn pulse_integrates_to_kill_fraction() {
        let dt = 0.125;
        let rt = RadiotherapySchedule::new(vec![2.0], vec![DoseMap::Uniform(2.0)], 0.025, 0.0025, 1.0 / dt)
            .unwrap();
        // Midpoint sum over a fine grid of one step.
        let n = 1000;
        let integral: f64 = (0..n)
            .map(|k| rt.eval([0.0, 0.0], 2.0 + (k as f64 + 0.5) * dt / n as f64, dt) * dt / n as f64)
            .sum();
        assert!((integral - rt.kill_fraction(2.0)).abs() < 1e-12);
    }

    #[test]
    fn bound_cases() {
        assert_eq!(Treatment::none().f_max_bound(7.0, 0.125), 0.0);
        let b = single_rt(2.0).f_max_bound(7.0, 0.125);
        assert!((b - 8.0 * (1.0 - (-0.06f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(RadiotherapySchedule::new(vec![1.0, 0.0], vec![DoseMap::Uniform(1.0); 2], 0.1, 0.1, 1.0).is_err());
        assert!(RadiotherapySchedule::new(vec![0.0], vec![DoseMap::Uniform(-1.0)], 0.1, 0.1, 1.0).is_err());
        assert!(ChemotherapySchedule::new(vec![0.0], vec![DoseMap::Uniform(1.0)], 0.0, 0.1).is_err());
    }

    #[test]
    fn bound_dominates_random_probes() {
        use rand::{Rng, SeedableRng};
        let dt = 0.125;
        let mut tr = Treatment::standard_protocol(dt).unwrap();
        tr.chemotherapy.concentrations[2] = DoseMap::Field {
            eval: Arc::new(|x: Point| 1.0 + 0.5 * (x[0] / 20.0).sin()),
            sup: 1.5,
        };
        let bound = tr.f_max_bound(7.0, dt);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = [rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)];
            let t = rng.gen_range(0.0..7.0);
            assert!(tr.eval_f(x, t, dt) <= bound);
        }
    }

    proptest! {
        #[test]
        fn forcing_is_nonnegative(t in -1.0f64..10.0, x in 0.0f64..100.0, y in 0.0f64..100.0) {
            let tr = Treatment::standard_protocol(0.125).unwrap();
            let f = tr.eval_f([x, y], t, 0.125);
            prop_assert!(f >= 0.0 && f.is_finite());
        }
    }
}
