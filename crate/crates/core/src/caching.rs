//! Cache placement policies and the low-reuse parameter solver.

use rand::Rng;

use crate::error::{invalid_param, Error, Result};
use crate::network::Partition;
use crate::popularity::ZipfLaw;

/// `((1/√2) + 2)²`: area factor of the largest square a cluster's users can cover.
pub const ALPHA: f64 = (std::f64::consts::FRAC_1_SQRT_2 + 2.0) * (std::f64::consts::FRAC_1_SQRT_2 + 2.0);

/// Upper end of the admissible `ε` interval.
pub const EPSILON_MAX: f64 = 1.0 / 6.0;

/// One cached file per node, ids in `1..=m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheAssignment {
    files: Vec<usize>,
    m: usize,
}

impl CacheAssignment {
    pub fn new(files: Vec<usize>, m: usize) -> Result<Self> {
        if let Some(&f) = files.iter().find(|&&f| f == 0 || f > m) {
            return Err(invalid_param(format!("cached file {f} outside 1..={m}")));
        }
        Ok(Self { files, m })
    }

    pub fn file(&self, node: usize) -> usize {
        self.files[node]
    }

    pub fn files(&self) -> &[usize] {
        &self.files
    }

    pub fn library_size(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

/// Every node caches an independent draw from `Zipf(γ_c, m)`.
pub fn assign_random_zipf<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    gamma_c: f64,
    rng: &mut R,
) -> Result<CacheAssignment> {
    if n == 0 {
        return Err(invalid_param("n must be at least 1"));
    }
    let law = ZipfLaw::new(gamma_c, m)?;
    assign_from_law(n, &law, rng)
}

pub fn assign_from_law<R: Rng + ?Sized>(
    n: usize,
    law: &ZipfLaw,
    rng: &mut R,
) -> Result<CacheAssignment> {
    let files = (0..n).map(|_| law.sample(rng)).collect();
    CacheAssignment::new(files, law.len())
}

/// Centralized policy: the members of a cluster with `k` users cache files
/// `1..=k`, assigned in node-id order. With `k > m` the files repeat cyclically.
///
/// Panics if `partition` is not a partition of `0..partition.n`.
pub fn assign_centralized_topk(partition: &Partition, m: usize) -> Result<CacheAssignment> {
    if m == 0 {
        return Err(invalid_param("library size m must be at least 1"));
    }
    let mut files = vec![0usize; partition.n];
    for cell in &partition.cells {
        let mut members = cell.clone();
        members.sort_unstable();
        for (rank, node) in members.into_iter().enumerate() {
            assert_eq!(files[node], 0, "node {node} appears in two clusters");
            files[node] = rank % m + 1;
        }
    }
    assert!(files.iter().all(|&f| f != 0), "partition misses a node");
    CacheAssignment::new(files, m)
}

/// `η = (1 − γ_r)/(2 − γ_r)` for `0 ≤ γ_r < 1`.
pub fn eta(gamma_r: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma_r) {
        return Err(Error::UnsupportedExponent(format!(
            "eta is defined for 0 <= gamma_r < 1, got {gamma_r}"
        )));
    }
    Ok((1.0 - gamma_r) / (2.0 - gamma_r))
}

/// Left-hand side of the caching-exponent equation, `(1−γ_r)γ_c / (1−γ_r+γ_c)`.
pub fn gamma_c_equation(gamma_r: f64, gamma_c: f64) -> f64 {
    (1.0 - gamma_r) * gamma_c / (1.0 - gamma_r + gamma_c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCSolution {
    pub gamma_c: f64,
    /// `η₁ − η(γ_r)`.
    pub epsilon: f64,
    /// `ε ∉ (0, 1/6)`: the value solves the equation but sits outside the
    /// regime where the achievability argument applies.
    pub out_of_regime: bool,
}

fn check_low_reuse(gamma_r: f64) -> Result<()> {
    if gamma_r > 0.0 && gamma_r < 1.0 {
        Ok(())
    } else {
        Err(Error::UnsupportedExponent(format!(
            "caching exponent solver needs 0 < gamma_r < 1, got {gamma_r}"
        )))
    }
}

/// Solves `(1−γ_r)γ_c/(1−γ_r+γ_c) = η₁` for `γ_c` in closed form.
pub fn solve_gamma_c(gamma_r: f64, eta1: f64) -> Result<GammaCSolution> {
    check_low_reuse(gamma_r)?;
    let reach = 1.0 - gamma_r;
    if !(eta1 > 0.0 && eta1 < reach) {
        return Err(Error::NoSolution(format!(
            "eta1 = {eta1} must lie in (0, 1 - gamma_r = {reach})"
        )));
    }
    let gamma_c = eta1 * reach / (reach - eta1);
    let epsilon = eta1 - eta(gamma_r)?;
    Ok(GammaCSolution {
        gamma_c,
        epsilon,
        out_of_regime: !(epsilon > 0.0 && epsilon < EPSILON_MAX),
    })
}

/// Bisection on the defining equation; independent of the closed form.
pub fn solve_gamma_c_bisection(gamma_r: f64, eta1: f64) -> Result<f64> {
    check_low_reuse(gamma_r)?;
    if !(eta1 > 0.0 && eta1 < 1.0 - gamma_r) {
        return Err(Error::NoSolution(format!("eta1 = {eta1} has no positive root")));
    }
    let residual = |g: f64| gamma_c_equation(gamma_r, g) - eta1;
    let (mut lo, mut hi) = (0.0, 1.0);
    while residual(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Parameters of the low-reuse achievability construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub gamma_r: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub eta1: f64,
    pub gamma_c: f64,
    pub eta2: f64,
    /// `⌈m^{η₁/γ_c}⌉`: files below `q` carry no value in the restricted model.
    pub q: usize,
    pub alpha: f64,
    /// `γ_c < 2`, the range where the value concentration bound tightens with `m`.
    /// Not implied by `ε < 1/6` alone.
    pub concentration_regime: bool,
}

pub fn theory_params(gamma_r: f64, epsilon: f64, m: usize) -> Result<TheoryParams> {
    if !(epsilon > 0.0 && epsilon < EPSILON_MAX) {
        return Err(Error::OutOfValidity(format!(
            "epsilon must lie in (0, 1/6), got {epsilon}"
        )));
    }
    if m < 2 {
        return Err(invalid_param("theory parameters need m >= 2"));
    }
    let eta = eta(gamma_r)?;
    let eta1 = eta + epsilon;
    let sol = solve_gamma_c(gamma_r, eta1)?;
    let gamma_c = sol.gamma_c;
    let eta2 = (1.0 - gamma_r) * (1.0 + gamma_c) / (1.0 - gamma_r + gamma_c);
    let q = ((m as f64).powf(eta1 / gamma_c).ceil() as usize).clamp(1, m);
    Ok(TheoryParams {
        gamma_r,
        eta,
        epsilon,
        eta1,
        gamma_c,
        eta2,
        q,
        alpha: ALPHA,
        concentration_regime: gamma_c < 2.0,
    })
}
