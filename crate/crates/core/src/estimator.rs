//! Randomly shifted QMC and plain MC estimators of `E[G]`.
//!
//! Evaluations run on the current rayon pool and land in a slot array indexed
//! by `(r, i)`; every reduction afterwards is a sequential sum in ascending
//! index order, so results do not depend on the number of workers.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{map_to_target, LatticeRule, Target};
use crate::random::CounterRng;

/// Stream reserved for Monte Carlo samples.
const MC_STREAM: u64 = 7;

/// Parameter-to-QoI map `y ↦ G(u^y)`.
pub trait SampleEvaluator: Sync {
    fn dim(&self) -> usize;
    /// Domain of the parameters, expressed as the lattice target map.
    fn target(&self) -> Target;
    fn evaluate(&self, y: &[f64]) -> Result<f64>;
}

/// Evaluator from a plain function, mainly for tests and analytic checks.
pub struct FnEvaluator<F> {
    pub dim: usize,
    pub target: Target,
    pub f: F,
}

impl<F> SampleEvaluator for FnEvaluator<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn target(&self) -> Target {
        self.target
    }

    fn evaluate(&self, y: &[f64]) -> Result<f64> {
        Ok((self.f)(y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub per_shift_values: Vec<f64>,
    pub mean: f64,
    pub rms_error: f64,
    pub n_points: u64,
    pub n_shifts: usize,
    pub wall_seconds: f64,
}

/// Mean and `sqrt(Σ_r (Q̄ - Q_r)² / (R (R - 1)))`, summed in ascending `r`.
pub fn shift_statistics(per_shift: &[f64]) -> Result<(f64, f64)> {
    let r = per_shift.len();
    if r < 2 {
        return Err(Error::InvalidArgument(format!(
            "root-mean-square error needs at least two shifts, got {r}"
        )));
    }
    let mut sum = 0.0;
    for q in per_shift {
        sum += q;
    }
    let mean = sum / r as f64;
    let mut ss = 0.0;
    for q in per_shift {
        ss += (mean - q) * (mean - q);
    }
    Ok((mean, (ss / (r * (r - 1)) as f64).sqrt()))
}

fn check_dims<P: SampleEvaluator + ?Sized>(problem: &P, rule: &LatticeRule) -> Result<()> {
    if rule.dim() != problem.dim() {
        return Err(Error::Dimension {
            expected: problem.dim(),
            found: rule.dim(),
        });
    }
    Ok(())
}

/// Evaluates `G` at the given `(r, i)` lattice points, in parallel, returning
/// values in input order. The first failure in input order is reported.
fn evaluate_points<P: SampleEvaluator + ?Sized>(
    problem: &P,
    rule: &LatticeRule,
    slots: &[(usize, u64)],
) -> Result<Vec<f64>> {
    let target = problem.target();
    let results: Vec<Result<f64>> = slots
        .par_iter()
        .map(|&(r, i)| {
            let mut y = vec![0.0; rule.dim()];
            rule.point_into(i, r, target, &mut y)
                .and_then(|_| problem.evaluate(&y))
                .map_err(|e| Error::Sample {
                    sample: i as usize,
                    shift: Some(r),
                    source: Box::new(e),
                })
        })
        .collect();
    results.into_iter().collect()
}

/// `Q_N^{(r)} = (1/N) Σ_{i=1}^N G(frac(i z / N + Δ_r))` for every shift.
pub fn qmc_estimate<P: SampleEvaluator + ?Sized>(problem: &P, rule: &LatticeRule) -> Result<EstimatorResult> {
    check_dims(problem, rule)?;
    let start = Instant::now();
    let n = rule.n_points();
    let slots: Vec<(usize, u64)> = (0..rule.n_shifts())
        .flat_map(|r| (1..=n).map(move |i| (r, i)))
        .collect();
    let values = evaluate_points(problem, rule, &slots)?;
    let per_shift: Vec<f64> = values
        .chunks(n as usize)
        .map(|chunk| {
            let mut s = 0.0;
            for v in chunk {
                s += v;
            }
            s / n as f64
        })
        .collect();
    let (mean, rms_error) = shift_statistics(&per_shift)?;
    Ok(EstimatorResult {
        per_shift_values: per_shift,
        mean,
        rms_error,
        n_points: n,
        n_shifts: rule.n_shifts(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Estimates for `N = 2^m`, `m_min ≤ m ≤ log2(rule.n_points())`.
///
/// Level `m` uses points `k 2^{M-m}` (`k = 1..=2^m`) of the largest rule, so
/// each level only evaluates the points it adds. `wall_seconds` is
/// cumulative.
pub fn qmc_ladder<P: SampleEvaluator + ?Sized>(
    problem: &P,
    rule: &LatticeRule,
    m_min: u32,
) -> Result<Vec<EstimatorResult>> {
    check_dims(problem, rule)?;
    let n_max = rule.n_points();
    if !n_max.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "ladder needs a power-of-two point count, got {n_max}"
        )));
    }
    let m_max = n_max.trailing_zeros();
    if m_min > m_max {
        return Err(Error::InvalidArgument(format!(
            "m_min = {m_min} exceeds m_max = {m_max}"
        )));
    }
    let n_shifts = rule.n_shifts();
    let start = Instant::now();
    // values[r][i - 1]
    let mut values = vec![vec![f64::NAN; n_max as usize]; n_shifts];
    let mut out = Vec::new();
    for m in m_min..=m_max {
        let stride = 1u64 << (m_max - m);
        let n_level = 1u64 << m;
        let new_k = |k: &u64| m == m_min || k % 2 == 1;
        let slots: Vec<(usize, u64)> = (0..n_shifts)
            .flat_map(|r| (1..=n_level).filter(new_k).map(move |k| (r, k * stride)))
            .collect();
        let fresh = evaluate_points(problem, rule, &slots)?;
        for (&(r, i), v) in slots.iter().zip(fresh) {
            values[r][(i - 1) as usize] = v;
        }
        let per_shift: Vec<f64> = values
            .iter()
            .map(|row| {
                let mut s = 0.0;
                for k in 1..=n_level {
                    s += row[(k * stride - 1) as usize];
                }
                s / n_level as f64
            })
            .collect();
        let (mean, rms_error) = shift_statistics(&per_shift)?;
        out.push(EstimatorResult {
            per_shift_values: per_shift,
            mean,
            rms_error,
            n_points: n_level,
            n_shifts,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub mean: f64,
    pub standard_error: f64,
    pub n_samples: usize,
    pub wall_seconds: f64,
}

/// Parameter vector of Monte Carlo sample `index` (0-based).
pub fn mc_sample(seed: u64, index: u64, dim: usize, target: Target) -> Result<Vec<f64>> {
    let mut rng = CounterRng::at_block(seed, MC_STREAM, index, dim as u64);
    let mut y: Vec<f64> = match target {
        Target::Gaussian => (0..dim).map(|_| rng.open_uniform()).collect(),
        _ => (0..dim).map(|_| rng.uniform()).collect(),
    };
    map_to_target(&mut y, target)?;
    Ok(y)
}

fn mc_statistics(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / n as f64;
    let mut ss = 0.0;
    for v in values {
        ss += (v - mean) * (v - mean);
    }
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Plain Monte Carlo with `n_samples` i.i.d. draws.
pub fn mc_estimate<P: SampleEvaluator + ?Sized>(problem: &P, n_samples: usize, seed: u64) -> Result<McResult> {
    mc_ladder(problem, &[n_samples], seed).map(|mut v| v.remove(0))
}

/// Monte Carlo estimates over nested prefixes of one sample sequence.
pub fn mc_ladder<P: SampleEvaluator + ?Sized>(problem: &P, counts: &[usize], seed: u64) -> Result<Vec<McResult>> {
    if counts.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument("Monte Carlo needs at least two samples".into()));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let total = sorted.last().copied().unwrap_or(0);
    let start = Instant::now();
    let mut values: Vec<f64> = Vec::with_capacity(total);
    let mut elapsed = Vec::with_capacity(sorted.len());
    for &n in &sorted {
        let fresh: Vec<Result<f64>> = (values.len()..n)
            .into_par_iter()
            .map(|i| {
                mc_sample(seed, i as u64, problem.dim(), problem.target())
                    .and_then(|y| problem.evaluate(&y))
                    .map_err(|e| Error::Sample {
                        sample: i,
                        shift: None,
                        source: Box::new(e),
                    })
            })
            .collect();
        for v in fresh {
            values.push(v?);
        }
        elapsed.push(start.elapsed().as_secs_f64());
    }
    Ok(counts
        .iter()
        .map(|&n| {
            let (mean, standard_error) = mc_statistics(&values[..n]);
            let pos = sorted.iter().position(|&c| c == n).unwrap_or(0);
            McResult {
                mean,
                standard_error,
                n_samples: n,
                wall_seconds: elapsed[pos],
            }
        })
        .collect())
}

/// Least-squares slope of `log(error)` against `log(N)`.
pub fn fit_rate(levels: &[(f64, f64)]) -> Result<f64> {
    if levels.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs at least 3 levels, got {}",
            levels.len()
        )));
    }
    if levels.iter().any(|&(n, e)| !(n > 0.0) || !(e > 0.0)) {
        return Err(Error::InvalidArgument("rate fit needs positive N and errors".into()));
    }
    let xs: Vec<f64> = levels.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = levels.iter().map(|(_, e)| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
