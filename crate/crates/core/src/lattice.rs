//! Randomly shifted rank-1 lattice rules.
//!
//! Point `i` of shift `r` is `frac(i z / N + Δ_r)`, `i = 1..=N`. Shifts are
//! drawn from a counter-based stream keyed by `(seed, r)`, so every shift
//! can be regenerated on its own.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::normal::inverse_normal_cdf;
use crate::random::CounterRng;

/// Coordinates that are exactly zero after shifting are moved here before
/// the inverse normal map.
pub const GAUSSIAN_ZERO_GUARD: f64 = 1.0 / 18_446_744_073_709_551_616.0;

/// Stream offset reserved for lattice shifts.
const SHIFT_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// `[0, 1)^s`
    UniformCube,
    /// `[-1/2, 1/2)^s`
    CenteredCube,
    /// `R^s` via componentwise `Φ⁻¹`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeRule {
    z: Vec<u64>,
    n: u64,
    shifts: Vec<Vec<f64>>,
    seed: u64,
}

impl LatticeRule {
    /// Rule with `n_shifts` random shifts drawn from `seed`.
    ///
    /// Components of `z` are reduced modulo `n`, which is how an embedded
    /// vector built for a larger point count is used at a smaller one.
    pub fn new(z: &[u64], n: u64, n_shifts: usize, seed: u64) -> Result<Self> {
        let shifts = (0..n_shifts).map(|r| random_shift(seed, r, z.len())).collect();
        Self::build(z, n, shifts, seed)
    }

    /// Rule with explicit shifts (each in `[0, 1)^s`).
    pub fn with_shifts(z: &[u64], n: u64, shifts: Vec<Vec<f64>>) -> Result<Self> {
        for shift in &shifts {
            if shift.len() != z.len() {
                return Err(Error::Dimension {
                    expected: z.len(),
                    found: shift.len(),
                });
            }
            if shift.iter().any(|d| !(0.0..1.0).contains(d)) {
                return Err(Error::InvalidArgument("shift components must lie in [0, 1)".into()));
            }
        }
        Self::build(z, n, shifts, 0)
    }

    fn build(z: &[u64], n: u64, shifts: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("lattice needs at least one point".into()));
        }
        if z.is_empty() {
            return Err(Error::InvalidArgument("generating vector is empty".into()));
        }
        let mut reduced = Vec::with_capacity(z.len());
        for (j, &zj) in z.iter().enumerate() {
            let r = zj % n;
            if n > 1 && (r == 0 || gcd(r, n) != 1) {
                return Err(Error::InvalidArgument(format!(
                    "component {} of the generating vector ({zj}) is not a unit modulo {n}",
                    j + 1
                )));
            }
            reduced.push(r);
        }
        Ok(LatticeRule {
            z: reduced,
            n,
            shifts,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn n_points(&self) -> u64 {
        self.n
    }

    pub fn n_shifts(&self) -> usize {
        self.shifts.len()
    }

    pub fn generating_vector(&self) -> &[u64] {
        &self.z
    }

    pub fn shift(&self, r: usize) -> &[f64] {
        &self.shifts[r]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Unshifted point `frac(i z / N)`.
    pub fn base_point_into(&self, i: u64, out: &mut [f64]) {
        let n = self.n as f64;
        for (o, &zj) in out.iter_mut().zip(&self.z) {
            let k = ((u128::from(i) * u128::from(zj)) % u128::from(self.n)) as u64;
            *o = k as f64 / n;
        }
    }

    /// Point `i` (1-based, `i ≤ N`) under shift `r`, mapped to `target`.
    pub fn point_into(&self, i: u64, r: usize, target: Target, out: &mut [f64]) -> Result<()> {
        if i == 0 || i > self.n {
            return Err(Error::InvalidArgument(format!(
                "point index {i} outside 1..={}",
                self.n
            )));
        }
        if r >= self.shifts.len() {
            return Err(Error::InvalidArgument(format!(
                "shift index {r} but only {} shifts",
                self.shifts.len()
            )));
        }
        if out.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: out.len(),
            });
        }
        self.base_point_into(i, out);
        for (o, d) in out.iter_mut().zip(&self.shifts[r]) {
            let x = *o + d;
            *o = if x >= 1.0 { x - 1.0 } else { x };
        }
        map_to_target(out, target)
    }

    pub fn point(&self, i: u64, r: usize, target: Target) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.point_into(i, r, target, &mut out)?;
        Ok(out)
    }
}

/// Maps points of `[0, 1)^s` in place.
pub fn map_to_target(x: &mut [f64], target: Target) -> Result<()> {
    match target {
        Target::UniformCube => {}
        Target::CenteredCube => x.iter_mut().for_each(|v| *v -= 0.5),
        Target::Gaussian => {
            for v in x.iter_mut() {
                let p = if *v == 0.0 { GAUSSIAN_ZERO_GUARD } else { *v };
                *v = inverse_normal_cdf(p)?;
            }
        }
    }
    Ok(())
}

/// Shift `r` of a study seeded with `seed`.
pub fn random_shift(seed: u64, r: usize, s: usize) -> Vec<f64> {
    let mut rng = CounterRng::new(seed, SHIFT_STREAM_BASE + r as u64);
    (0..s).map(|_| rng.uniform()).collect()
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `(p, k)` with `n = p^k`, if `n` is a prime power.
pub fn prime_power(n: u64) -> Option<(u64, u32)> {
    if n < 2 {
        return None;
    }
    let factors = factorize(n);
    match factors.as_slice() {
        [(p, k)] => Some((*p, *k)),
        _ => None,
    }
}

fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p.saturating_mul(p) <= n {
        if n % p == 0 {
            let mut k = 0;
            while n % p == 0 {
                n /= p;
                k += 1;
            }
            out.push((p, k));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// Number of `1 ≤ z ≤ n` coprime to `n`.
pub fn euler_totient(n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    factorize(n)
        .into_iter()
        .fold(n, |acc, (p, _)| acc / p * (p - 1))
}

/// `|½ (½ - 1) ⋯ (½ - n + 1)|`, with the empty product equal to one.
pub fn falling_factorial_half(n: usize) -> f64 {
    (0..n).map(|i| (0.5 - i as f64).abs()).product()
}

/// Riemann zeta for real `x > 1` by Euler-Maclaurin summation.
pub fn zeta(x: f64) -> Result<f64> {
    if !(x > 1.0) {
        return Err(Error::InvalidArgument(format!("zeta needs x > 1, got {x}")));
    }
    const N: usize = 12;
    // B_2k / (2k)!
    const B: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
    ];
    let nf = N as f64;
    let mut sum: f64 = (1..N).map(|k| (k as f64).powf(-x)).sum();
    sum += nf.powf(1.0 - x) / (x - 1.0) + 0.5 * nf.powf(-x);
    // Rising factorial x (x+1) ... (x+2k-2), times N^{-x-2k+1}.
    let mut rising = x;
    let mut power = nf.powf(-x - 1.0);
    for (k, b) in B.iter().enumerate() {
        if k > 0 {
            rising *= (x + 2.0 * k as f64 - 1.0) * (x + 2.0 * k as f64);
            power /= nf * nf;
        }
        sum += b * rising * power;
    }
    Ok(sum)
}

/// Weights of the unanchored Sobolev space.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSequence {
    /// `γ_u = Π_{j∈u} γ_j`
    Product(Vec<f64>),
    /// `γ_u = Γ_{|u|} Π_{j∈u} γ_j`; `order[ℓ] = Γ_ℓ` for `ℓ ≤ order.len() - 1`,
    /// zero beyond.
    Pod { order: Vec<f64>, coordinate: Vec<f64> },
}

impl WeightSequence {
    /// Product weights `γ_j = j^{-decay}`.
    pub fn product_power(s: usize, decay: f64) -> Self {
        WeightSequence::Product((1..=s).map(|j| (j as f64).powf(-decay)).collect())
    }

    pub fn dim(&self) -> usize {
        match self {
            WeightSequence::Product(g) => g.len(),
            WeightSequence::Pod { coordinate, .. } => coordinate.len(),
        }
    }

    pub fn coordinate(&self) -> &[f64] {
        match self {
            WeightSequence::Product(g) => g,
            WeightSequence::Pod { coordinate, .. } => coordinate,
        }
    }

    /// `γ_u` for a set of 0-based coordinate indices.
    pub fn weight_of_set(&self, u: &[usize]) -> f64 {
        let prod: f64 = u.iter().map(|&j| self.coordinate()[j]).product();
        match self {
            WeightSequence::Product(_) => prod,
            WeightSequence::Pod { order, .. } => order.get(u.len()).copied().unwrap_or(0.0) * prod,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |v: &f64| !(*v >= 0.0) || !v.is_finite();
        let order_bad = match self {
            WeightSequence::Pod { order, .. } => order.iter().any(bad) || order.first() != Some(&1.0),
            WeightSequence::Product(_) => false,
        };
        if self.coordinate().iter().any(bad) || order_bad {
            return Err(Error::InvalidArgument(
                "weights must be finite and nonnegative, with Γ_0 = 1".into(),
            ));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        match self {
            WeightSequence::Product(g) => format!("product[{}]", list(g)),
            WeightSequence::Pod { order, coordinate } => {
                format!("pod[order={};coordinate={}]", list(order), list(coordinate))
            }
        }
    }
}

/// POD weights of the best-rate choice:
/// `γ_u = ([½]_{|u|} Π_{j∈u} ρβ_j / sqrt(2ζ(2λ)/(2π²)^λ))^{2/(1+λ)}`.
pub fn pod_weights(lambda_q: f64, rho_beta: &[f64], max_order: usize) -> Result<WeightSequence> {
    if !(lambda_q > 0.5 && lambda_q <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "QMC parameter must lie in (1/2, 1], got {lambda_q}"
        )));
    }
    if rho_beta.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
        return Err(Error::InvalidArgument("ρβ_j must be positive".into()));
    }
    let expo = 2.0 / (1.0 + lambda_q);
    let denom = (2.0 * zeta(2.0 * lambda_q)? / (2.0 * PI * PI).powf(lambda_q)).sqrt();
    let order = (0..=max_order)
        .map(|l| falling_factorial_half(l).powf(expo))
        .collect();
    let coordinate = rho_beta.iter().map(|b| (b / denom).powf(expo)).collect();
    Ok(WeightSequence::Pod { order, coordinate })
}

/// `B₂(x) = x² - x + 1/6`
pub fn bernoulli2(x: f64) -> f64 {
    x * x - x + 1.0 / 6.0
}

fn b2_table(n: u64) -> Vec<f64> {
    (0..n).map(|k| bernoulli2(k as f64 / n as f64)).collect()
}

/// Per-point state of the shift-averaged squared worst-case error, supporting
/// both product and POD weights. After fixing `j` coordinates,
/// `e² = -1 + (1/N) Σ_k Σ_ℓ Γ_ℓ P_ℓ[k]` with
/// `P_ℓ = P_ℓ + γ_j ω(k z_j / N) P_{ℓ-1}` per added coordinate.
///
/// The constant 1 is never formed: product weights store `P_0 - 1` and POD
/// weights leave out the empty-set term. Otherwise `e²` near `1/N²` would be
/// swamped by rounding in `Σ_k P[k] - N`.
struct WceState {
    n: u64,
    b2: Vec<f64>,
    order: Option<Vec<f64>>,
    /// `levels[ℓ][k]` (product weights keep only `ℓ = 0`).
    levels: Vec<Vec<f64>>,
}

impl WceState {
    fn new(n: u64, weights: &WeightSequence) -> Self {
        let order = match weights {
            WeightSequence::Product(_) => None,
            WeightSequence::Pod { order, .. } => Some(order.clone()),
        };
        let n_levels = order.as_ref().map_or(1, Vec::len);
        let mut levels = vec![vec![0.0; n as usize]; n_levels];
        if order.is_some() {
            levels[0].iter_mut().for_each(|v| *v = 1.0);
        }
        WceState {
            n,
            b2: b2_table(n),
            order,
            levels,
        }
    }

    /// `(a[k], b[k])` such that adding coordinate `z` with weight `γ` yields
    /// `e² = (1/N) Σ_k a[k] + γ ω(kz) b[k]`.
    fn split(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.order {
            None => (
                self.levels[0].clone(),
                self.levels[0].iter().map(|p| p + 1.0).collect(),
            ),
            Some(order) => {
                let n = self.n as usize;
                let mut a = vec![order[0] - 1.0; n];
                let mut b = vec![0.0; n];
                for (l, level) in self.levels.iter().enumerate() {
                    let ga = if l == 0 { 0.0 } else { order[l] };
                    let gb = order.get(l + 1).copied().unwrap_or(0.0);
                    for k in 0..n {
                        a[k] += ga * level[k];
                        b[k] += gb * level[k];
                    }
                }
                (a, b)
            }
        }
    }

    fn push(&mut self, z: u64, gamma: f64) {
        let n = self.n as usize;
        let omega: Vec<f64> = (0..n)
            .map(|k| self.b2[((k as u128 * u128::from(z)) % u128::from(self.n)) as usize])
            .collect();
        if self.order.is_none() {
            for (p, w) in self.levels[0].iter_mut().zip(&omega) {
                *p += gamma * w * (1.0 + *p);
            }
            return;
        }
        for l in (1..self.levels.len()).rev() {
            let (lower, upper) = self.levels.split_at_mut(l);
            for k in 0..n {
                upper[0][k] += gamma * omega[k] * lower[l - 1][k];
            }
        }
    }

    fn error_squared(&self) -> f64 {
        let n = self.n as usize;
        let total: f64 = match &self.order {
            None => compensated(self.levels[0].iter().copied()),
            Some(order) => compensated((0..n).map(|k| {
                    self.levels[1..]
                        .iter()
                        .zip(&order[1..])
                        .map(|(lv, g)| g * lv[k])
                        .sum::<f64>()
                })) + (order[0] - 1.0) * self.n as f64,
        };
        total / self.n as f64
    }
}

/// Shift-averaged worst-case error `e ≥ 0` of the unshifted rule `(z, N)`.
pub fn wce(z: &[u64], n: u64, weights: &WeightSequence) -> Result<f64> {
    Ok(wce_squared(z, n, weights)?.max(0.0).sqrt())
}

pub fn wce_squared(z: &[u64], n: u64, weights: &WeightSequence) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("lattice needs at least one point".into()));
    }
    if z.len() > weights.dim() {
        return Err(Error::Dimension {
            expected: z.len(),
            found: weights.dim(),
        });
    }
    weights.validate()?;
    let mut state = WceState::new(n, weights);
    for (j, &zj) in z.iter().enumerate() {
        state.push(zj % n, weights.coordinate()[j]);
    }
    Ok(state.error_squared())
}

fn cbc_candidates(n: u64) -> Vec<u64> {
    if n == 2 {
        return vec![1];
    }
    (1..n).filter(|&c| gcd(c, n) == 1).collect()
}

fn check_cbc_args(n: u64, s: usize, weights: &WeightSequence) -> Result<()> {
    if prime_power(n).is_none() {
        return Err(Error::InvalidArgument(format!("{n} is not a prime power")));
    }
    if s == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if weights.dim() < s {
        return Err(Error::Dimension {
            expected: s,
            found: weights.dim(),
        });
    }
    weights.validate()
}

/// Component-by-component construction for a single point count.
///
/// Each step picks the candidate minimizing the squared worst-case error of
/// the rule truncated to the coordinates fixed so far; ties go to the
/// smallest candidate.
pub fn cbc_construct(n: u64, s: usize, weights: &WeightSequence) -> Result<Vec<u64>> {
    cbc_construct_traced(n, s, weights).map(|c| c.z)
}

/// Generating vector plus `e²` of the rule after each construction step.
#[derive(Debug, Clone, PartialEq)]
pub struct CbcResult {
    pub z: Vec<u64>,
    /// `wce_squared[j]`: first `j + 1` coordinates, largest point count.
    pub wce_squared: Vec<f64>,
}

pub fn cbc_construct_traced(n: u64, s: usize, weights: &WeightSequence) -> Result<CbcResult> {
    check_cbc_args(n, s, weights)?;
    let candidates = cbc_candidates(n);
    let mut state = WceState::new(n, weights);
    let mut z = Vec::with_capacity(s);
    let mut trace = Vec::with_capacity(s);
    for j in 0..s {
        let gamma = weights.coordinate()[j];
        let (a, b) = state.split();
        let base = compensated(a.iter().copied());
        let mut best = (f64::INFINITY, 0);
        for &c in &candidates {
            let e2 = base + gamma * omega_dot(&state.b2, &b, c, n);
            if improves(e2, best.0) {
                best = (e2, c);
            }
        }
        z.push(best.1);
        trace.push(best.0 / n as f64);
        state.push(best.1, gamma);
    }
    Ok(CbcResult {
        z,
        wce_squared: trace,
    })
}

/// `Σ_k ω(kc mod N) b[k]` with the index advanced incrementally.
/// Neumaier-compensated sum. Candidate errors differ from each other by far
/// less than plain summation noise at `N` in the thousands.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

fn compensated(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = CompensatedSum::default();
    values.into_iter().for_each(|x| acc.add(x));
    acc.value()
}

fn omega_dot(b2: &[f64], b: &[f64], c: u64, n: u64) -> f64 {
    let mut idx = 0u64;
    let mut acc = CompensatedSum::default();
    for bk in b {
        acc.add(b2[idx as usize] * bk);
        idx += c;
        if idx >= n {
            idx -= n;
        }
    }
    acc.value()
}

/// Embedded CBC for `N = 2^m`, `m_min ≤ m ≤ m_max`.
///
/// Level `m` uses the first `2^m` points of the largest rule, i.e. the
/// indices `k 2^{m_max - m}`. Each step picks the candidate minimizing
/// `max_m e²_m(c) / min_{c'} e²_m(c')`.
pub fn cbc_construct_embedded(
    m_min: u32,
    m_max: u32,
    s: usize,
    weights: &WeightSequence,
) -> Result<Vec<u64>> {
    cbc_construct_embedded_traced(m_min, m_max, s, weights).map(|c| c.z)
}

pub fn cbc_construct_embedded_traced(
    m_min: u32,
    m_max: u32,
    s: usize,
    weights: &WeightSequence,
) -> Result<CbcResult> {
    if m_min > m_max || m_max > 30 {
        return Err(Error::InvalidArgument(format!(
            "invalid level range {m_min}..={m_max}"
        )));
    }
    let n = 1u64 << m_max;
    check_cbc_args(n, s, weights)?;
    let candidates = cbc_candidates(n);
    let n_levels = (m_max - m_min + 1) as usize;
    let mut state = WceState::new(n, weights);
    let mut z = Vec::with_capacity(s);
    let mut trace = Vec::with_capacity(s);
    let mut errors = vec![0.0; candidates.len() * n_levels];
    for j in 0..s {
        let gamma = weights.coordinate()[j];
        let (a, b) = state.split();
        let base = level_sums(&a, m_min, m_max);
        for (ci, &c) in candidates.iter().enumerate() {
            let mut terms = vec![0.0; n as usize];
            let mut idx = 0u64;
            for (t, bk) in terms.iter_mut().zip(&b) {
                *t = state.b2[idx as usize] * bk;
                idx += c;
                if idx >= n {
                    idx -= n;
                }
            }
            let sums = level_sums(&terms, m_min, m_max);
            for l in 0..n_levels {
                let nm = (1u64 << (m_min as usize + l)) as f64;
                errors[ci * n_levels + l] = (base[l] + gamma * sums[l]) / nm;
            }
        }
        let minima: Vec<f64> = (0..n_levels)
            .map(|l| {
                (0..candidates.len())
                    .map(|ci| errors[ci * n_levels + l])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut best = (f64::INFINITY, 0, 0);
        for (ci, &c) in candidates.iter().enumerate() {
            let score = (0..n_levels)
                .map(|l| {
                    let e = errors[ci * n_levels + l];
                    if minima[l] > 0.0 {
                        e / minima[l]
                    } else if e <= 0.0 {
                        1.0
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max);
            if improves(score, best.0) {
                best = (score, c, ci);
            }
        }
        z.push(best.1);
        trace.push(errors[best.2 * n_levels + n_levels - 1]);
        state.push(best.1, gamma);
    }
    Ok(CbcResult {
        z,
        wce_squared: trace,
    })
}

/// Candidates that differ from the incumbent only by rounding keep the
/// smaller index, so equivalent choices resolve the same way everywhere.
fn improves(value: f64, best: f64) -> bool {
    if best.is_infinite() {
        return value < best;
    }
    value < best - 1e-12 * best.abs()
}

/// Sums of `v[k]` over `k ≡ 0 mod 2^{m_max - m}` for each level `m`.
fn level_sums(v: &[f64], m_min: u32, m_max: u32) -> Vec<f64> {
    // Bucket by the coarsest level containing k, then accumulate.
    let n_levels = (m_max - m_min + 1) as usize;
    let mut bucket = vec![CompensatedSum::default(); n_levels];
    for (k, x) in v.iter().enumerate() {
        let tz = if k == 0 { m_max } else { (k as u64).trailing_zeros().min(m_max) };
        let level = (m_max - tz).max(m_min);
        bucket[(level - m_min) as usize].add(*x);
    }
    let mut acc = CompensatedSum::default();
    bucket
        .into_iter()
        .map(|b| {
            acc.add(b.sum);
            acc.add(b.carry);
            acc.value()
        })
        .collect()
}

/// Generating vector with its provenance for run metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratingVector {
    pub z: Vec<u64>,
    /// File path, or a short tag for built-in sources.
    pub source: String,
    /// Hex SHA-256 of the source text.
    pub sha256: String,
}

/// Parses one positive integer per line; `#` starts a comment.
pub fn parse_generating_vector(text: &str, origin: &Path, s: usize) -> Result<Vec<u64>> {
    let mut z = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let v: u64 = content.parse().map_err(|e| Error::Format {
            path: origin.to_path_buf(),
            line: i + 1,
            message: format!("{content:?}: {e}"),
        })?;
        if v == 0 {
            return Err(Error::Format {
                path: origin.to_path_buf(),
                line: i + 1,
                message: "generating vector entries must be positive".into(),
            });
        }
        z.push(v);
    }
    if z.len() < s {
        return Err(Error::Dimension {
            expected: s,
            found: z.len(),
        });
    }
    z.truncate(s);
    Ok(z)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// First `s` entries of a generating vector file.
pub fn load_generating_vector(path: impl AsRef<Path>, s: usize) -> Result<GeneratingVector> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let z = parse_generating_vector(&text, path, s)?;
    Ok(GeneratingVector {
        z,
        source: path.display().to_string(),
        sha256: sha256_hex(text.as_bytes()),
    })
}

const BUNDLED: &str = include_str!("../data/lattice-embedded-s1024-m12.txt");

/// Largest point count the bundled vector was built for.
pub const BUNDLED_MAX_POINTS: u64 = 1 << 12;

/// Embedded rule shipped with the crate: product weights `j^{-2}`,
/// `N = 2^m` for `m ≤ 12`, up to 1024 dimensions.
pub fn bundled_generating_vector(s: usize) -> Result<GeneratingVector> {
    let z = parse_generating_vector(BUNDLED, Path::new("<bundled>"), s)?;
    Ok(GeneratingVector {
        z,
        source: "bundled:lattice-embedded-s1024-m12".into(),
        sha256: sha256_hex(BUNDLED.as_bytes()),
    })
}

/// Header-annotated text for a generating vector file.
pub fn format_generating_vector(z: &[u64], header: &str) -> String {
    let mut out = String::new();
    for line in header.lines() {
        let _ = writeln!(out, "# {line}");
    }
    for v in z {
        let _ = writeln!(out, "{v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_points() {
        let rule = LatticeRule::with_shifts(&[1, 3], 5, vec![vec![0.0, 0.0], vec![0.9, 0.9]]).unwrap();
        let p = rule.point(2, 0, Target::CenteredCube).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-15 && (p[1] + 0.3).abs() < 1e-15);
        assert_eq!(rule.point(5, 0, Target::CenteredCube).unwrap(), vec![-0.5, -0.5]);
        let p = rule.point(2, 1, Target::CenteredCube).unwrap();
        assert!((p[0] + 0.2).abs() < 1e-15 && (p[1] + 0.4).abs() < 1e-15);
        assert!(rule.point(0, 0, Target::UniformCube).is_err());
        assert!(rule.point(6, 0, Target::UniformCube).is_err());
    }

    #[test]
    fn gaussian_guard() {
        let rule = LatticeRule::with_shifts(&[1], 4, vec![vec![0.0]]).unwrap();
        let p = rule.point(4, 0, Target::Gaussian).unwrap();
        assert!(p[0].is_finite() && p[0] < -9.0);
    }

    #[test]
    fn rejects_non_units() {
        assert!(LatticeRule::new(&[2], 8, 1, 0).is_err());
        assert!(LatticeRule::new(&[8], 8, 1, 0).is_err());
        // Reduction modulo N keeps odd entries valid.
        assert_eq!(LatticeRule::new(&[9], 8, 1, 0).unwrap().generating_vector(), &[1]);
    }

    #[test]
    fn shifts_reproducible() {
        let a = LatticeRule::new(&[1, 3, 5], 16, 4, 99).unwrap();
        let b = LatticeRule::new(&[1, 3, 5], 16, 8, 99).unwrap();
        for r in 0..4 {
            assert_eq!(a.shift(r), b.shift(r));
            assert_eq!(a.shift(r), random_shift(99, r, 3).as_slice());
        }
    }

    #[test]
    fn wce_hand_values() {
        let w = WeightSequence::Product(vec![1.0]);
        assert!((wce(&[1], 1, &w).unwrap() - (1.0f64 / 6.0).sqrt()).abs() < 1e-15);
        assert!((wce_squared(&[1], 2, &w).unwrap() - 1.0 / 24.0).abs() < 1e-15);
        let zero = WeightSequence::Product(vec![0.0, 0.0]);
        assert_eq!(wce(&[1, 3], 8, &zero).unwrap(), 0.0);
    }

    #[test]
    fn pod_with_unit_order_is_product() {
        let gammas = vec![0.8, 0.3, 0.1];
        let pod = WeightSequence::Pod {
            order: vec![1.0; 4],
            coordinate: gammas.clone(),
        };
        let prod = WeightSequence::Product(gammas);
        let a = wce_squared(&[1, 5, 7], 16, &pod).unwrap();
        let b = wce_squared(&[1, 5, 7], 16, &prod).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert_eq!(cbc_construct(64, 3, &pod).unwrap(), cbc_construct(64, 3, &prod).unwrap());
    }

    #[test]
    fn cbc_first_component_is_one() {
        let w = WeightSequence::product_power(4, 2.0);
        let z = cbc_construct(32, 4, &w).unwrap();
        assert_eq!(z[0], 1);
        assert!(z.iter().all(|&v| gcd(v, 32) == 1));
        assert!(cbc_construct(12, 2, &w).is_err());
    }

    #[test]
    fn embedded_single_level_equals_plain() {
        let w = WeightSequence::product_power(6, 2.0);
        assert_eq!(
            cbc_construct_embedded(6, 6, 6, &w).unwrap(),
            cbc_construct(64, 6, &w).unwrap()
        );
    }

    #[test]
    fn trace_matches_direct_wce() {
        let w = WeightSequence::product_power(5, 2.0);
        for c in [cbc_construct_traced(64, 5, &w).unwrap(), cbc_construct_embedded_traced(3, 6, 5, &w).unwrap()] {
            for j in 0..5 {
                let direct = wce_squared(&c.z[..=j], 64, &w).unwrap();
                assert!((c.wce_squared[j] - direct).abs() < 1e-13);
            }
            assert!(c.wce_squared.windows(2).all(|p| p[1] >= p[0]));
        }
    }

    #[test]
    fn level_sums_nested() {
        let v: Vec<f64> = (0..8).map(|k| k as f64).collect();
        // m=1: k ∈ {0,4}; m=2: {0,2,4,6}; m=3: all.
        assert_eq!(level_sums(&v, 1, 3), vec![4.0, 12.0, 28.0]);
        assert_eq!(level_sums(&v, 0, 3), vec![0.0, 4.0, 12.0, 28.0]);
    }

    #[test]
    fn zeta_values() {
        assert!((zeta(2.0).unwrap() - PI * PI / 6.0).abs() < 1e-14);
        assert!((zeta(4.0).unwrap() - PI.powi(4) / 90.0).abs() < 1e-14);
        assert!((zeta(1.001).unwrap() - 1000.577_288_476_011_6).abs() < 1e-9);
        assert!(zeta(1.0).is_err());
    }

    #[test]
    fn totient_and_factorial() {
        assert_eq!(euler_totient(8), 4);
        assert_eq!(euler_totient(7), 6);
        assert_eq!(euler_totient(36), 12);
        assert_eq!(falling_factorial_half(0), 1.0);
        assert_eq!(falling_factorial_half(2), 0.25);
        assert_eq!(falling_factorial_half(3), 0.375);
        assert_eq!(prime_power(27), Some((3, 3)));
        assert_eq!(prime_power(12), None);
    }

    #[test]
    fn pod_singleton() {
        let w = pod_weights(1.0, &[0.4, 0.2], 3).unwrap();
        let expect = 0.5 * 0.4 / (1.0f64 / 6.0).sqrt();
        assert!((w.weight_of_set(&[0]) - expect).abs() < 1e-14);
        assert_eq!(w.weight_of_set(&[]), 1.0);
        assert!(pod_weights(0.5, &[0.4], 2).is_err());
    }

    #[test]
    fn pod_weights_decrease_with_order() {
        // Adding coordinate j to a set of size l scales the weight by
        // (|1/2 - l| ρβ_j sqrt(6))^{2/(1+λ)} at λ = 1, so the order must stay
        // below 1 / (2.5 sqrt 6) ≈ 0.163 up to |u| = 4. ρβ_j ≤ 1 is not enough.
        let rb = [0.1, 0.08, 0.05, 0.02, 0.01];
        let w = pod_weights(1.0, &rb, 4).unwrap();
        let sets: [&[usize]; 5] = [&[], &[0], &[0, 1], &[0, 1, 2], &[0, 1, 2, 3]];
        for pair in sets.windows(2) {
            assert!(w.weight_of_set(pair[1]) < w.weight_of_set(pair[0]));
        }
        let loose = pod_weights(1.0, &[1.0; 4], 4).unwrap();
        assert!(loose.weight_of_set(&[0, 1, 2, 3]) > loose.weight_of_set(&[0, 1, 2]));
    }

    #[test]
    fn vector_file_parsing() {
        let p = Path::new("v.txt");
        assert_eq!(parse_generating_vector("1\n3\n", p, 2).unwrap(), vec![1, 3]);
        assert_eq!(parse_generating_vector("# hdr\n1\n\n3 # c\n5\n", p, 2).unwrap(), vec![1, 3]);
        match parse_generating_vector("abc\n", p, 1) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_generating_vector("1\n", p, 2),
            Err(Error::Dimension { .. })
        ));
    }
}
