//! Truncated Zipf laws and the closed-form harmonic-sum bounds built on them.
//!
//! File ids are 1-based throughout the crate: file `1` is the most popular.
//! The same [`ZipfLaw`] type serves as the request law (exponent `gamma_r`)
//! and as the random caching law (exponent `gamma_c`).

use rand::Rng;

use crate::error::{invalid_param, invalid_range, Error, Result};

/// Compensated (Kahan) accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum
    }
}

/// A Zipf law truncated to `m` files: `P(i) ∝ i^-γ` for `i = 1..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZipfLaw {
    exponent: f64,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl ZipfLaw {
    pub fn new(exponent: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid_param("library size m must be at least 1"));
        }
        if !exponent.is_finite() || exponent < 0.0 {
            return Err(invalid_param(format!(
                "Zipf exponent must be finite and nonnegative, got {exponent}"
            )));
        }
        let weights: Vec<f64> = (1..=m).map(|i| (i as f64).powf(-exponent)).collect();
        let mut total = KahanSum::default();
        for &w in &weights {
            total.add(w);
        }
        let total = total.value();

        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(m);
        let mut running = KahanSum::default();
        for &w in &weights {
            running.add(w);
            cdf.push(running.value() / total);
        }
        // Pin the last entry so inverse-cdf sampling always terminates.
        cdf[m - 1] = 1.0;

        Ok(Self { exponent, pmf, cdf })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Library size.
    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }

    /// Probability of file `i` (1-based).
    ///
    /// Panics if `i` is outside `1..=m`.
    pub fn prob(&self, i: usize) -> f64 {
        self.pmf[i - 1]
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Inverse-cdf lookup of a uniform variate `u ∈ [0, 1)`: the smallest file
    /// `i` with `cdf[i] > u`.
    pub fn quantile(&self, u: f64) -> usize {
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) + 1
    }

    /// Draws one file id in `1..=m`. Consumes exactly one `f64` from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.quantile(rng.gen::<f64>())
    }

    /// Probability mass of the `k` most popular files.
    pub fn head_mass(&self, k: usize) -> Result<f64> {
        match k {
            0 => Ok(0.0),
            k if k > self.len() => Err(invalid_range(format!(
                "head index {k} exceeds library size {}",
                self.len()
            ))),
            k => Ok(self.cdf[k - 1]),
        }
    }
}

/// `Σ_{j=a..=b} j^-γ`, summed in ascending `j` with compensation.
pub fn harmonic_sum(gamma: f64, a: u64, b: u64) -> Result<f64> {
    if a == 0 {
        return Err(invalid_range("harmonic sum starts at a >= 1"));
    }
    if a > b {
        return Err(invalid_range(format!("empty harmonic range a={a} > b={b}")));
    }
    let mut acc = KahanSum::default();
    for j in a..=b {
        acc.add((j as f64).powf(-gamma));
    }
    Ok(acc.value())
}

/// Integral sandwich around [`harmonic_sum`] for `γ ≠ 1`.
///
/// `lower = (b^{1-γ} - a^{1-γ}) / (1-γ)` and `upper = lower + a^-γ`.
pub fn harmonic_bounds(gamma: f64, a: u64, b: u64) -> Result<(f64, f64)> {
    if gamma == 1.0 {
        return Err(Error::UnsupportedExponent(
            "gamma = 1 has no power-law integral; use head_mass_bounds_gamma1".into(),
        ));
    }
    if a == 0 || a > b {
        return Err(invalid_range(format!("need 1 <= a <= b, got a={a}, b={b}")));
    }
    let e = 1.0 - gamma;
    let (a, b) = (a as f64, b as f64);
    let lower = (b.powf(e) - a.powf(e)) / e;
    Ok((lower, lower + a.powf(-gamma)))
}

/// Upper bound `2 (k/m)^{1-γ_r}` on the head mass of `k` files, for `0 < γ_r < 1`.
pub fn head_mass_bound_sublinear(gamma_r: f64, k: usize, m: usize) -> Result<f64> {
    if !(gamma_r > 0.0 && gamma_r < 1.0) {
        return Err(Error::UnsupportedExponent(format!(
            "sublinear head-mass bound needs 0 < gamma_r < 1, got {gamma_r}"
        )));
    }
    if k == 0 || k > m {
        return Err(invalid_range(format!("need 1 <= k <= m, got k={k}, m={m}")));
    }
    let e = 1.0 - gamma_r;
    Ok(2.0 * (k as f64).powf(e) / (m as f64).powf(e))
}

/// Bounds for `γ_r = 1`, natural log.
///
/// `upper = (ln k + 1) / ln m` bounds `Σ_{j=1..k} f_j`; `lower = (ln k − 1)/(ln m + 1)`,
/// clamped at zero, bounds `Σ_{j=2..k} f_j`.
pub fn head_mass_bounds_gamma1(k: usize, m: usize) -> Result<(f64, f64)> {
    if k < 2 || m < k {
        return Err(invalid_range(format!("need 2 <= k <= m, got k={k}, m={m}")));
    }
    let (lk, lm) = ((k as f64).ln(), (m as f64).ln());
    let lower = ((lk - 1.0) / (lm + 1.0)).max(0.0);
    Ok((lower, (lk + 1.0) / lm))
}

/// `Σ_{j=2..m} f_j p_j` with `f ~ Zipf(γ_r, m)` and `p ~ Zipf(γ_c, m)`.
pub fn reuse_product_sum(gamma_r: f64, gamma_c: f64, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(invalid_range("reuse product sum needs m >= 2"));
    }
    let f = ZipfLaw::new(gamma_r, m)?;
    let p = ZipfLaw::new(gamma_c, m)?;
    let mut acc = KahanSum::default();
    for (fj, pj) in f.pmf()[1..].iter().zip(&p.pmf()[1..]) {
        acc.add(fj * pj);
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_sum(gamma: f64, a: u64, b: u64) -> f64 {
        (a..=b).map(|j| 1.0 / (j as f64).powf(gamma)).sum()
    }

    #[test]
    fn zipf_examples() {
        let u = ZipfLaw::new(0.0, 4).unwrap();
        assert_eq!(u.pmf(), &[0.25; 4]);
        assert_eq!(ZipfLaw::new(3.7, 1).unwrap().pmf(), &[1.0]);

        let z = ZipfLaw::new(1.0, 2).unwrap();
        assert!((z.prob(1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((z.prob(2) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zipf_rejects_bad_parameters() {
        assert!(matches!(ZipfLaw::new(1.0, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(ZipfLaw::new(-0.1, 4), Err(Error::InvalidParameter(_))));
        assert!(matches!(ZipfLaw::new(f64::NAN, 4), Err(Error::InvalidParameter(_))));
        assert!(matches!(ZipfLaw::new(f64::INFINITY, 4), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn quantile_examples() {
        let single = ZipfLaw::new(1.3, 1).unwrap();
        assert_eq!(single.quantile(0.999), 1);
        let uniform = ZipfLaw::new(0.0, 4).unwrap();
        assert_eq!(uniform.quantile(0.6), 3);
        assert_eq!(uniform.quantile(0.0), 1);
        assert_eq!(uniform.quantile(0.25), 2);
    }

    #[test]
    fn sampling_matches_pmf_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};

        let law = ZipfLaw::new(1.0, 10).unwrap();
        let draws = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0u64; 10];
        for _ in 0..draws {
            counts[law.sample(&mut rng) - 1] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(law.pmf())
            .map(|(&c, &p)| {
                let e = p * draws as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let critical = ChiSquared::new(9.0).unwrap().inverse_cdf(0.999);
        assert!(chi2 < critical, "chi2 {chi2} >= {critical}");

        let p1 = law.prob(1);
        let sigma = (p1 * (1.0 - p1) / draws as f64).sqrt();
        let freq = counts[0] as f64 / draws as f64;
        assert!((freq - p1).abs() < 3.0 * sigma);
    }

    #[test]
    fn harmonic_sum_examples() {
        assert_eq!(harmonic_sum(1.7, 5, 5).unwrap(), 5f64.powf(-1.7));
        assert!((harmonic_sum(1.0, 1, 4).unwrap() - 25.0 / 12.0).abs() < 1e-15);
        assert!((harmonic_sum(2.0, 1, 3).unwrap() - 49.0 / 36.0).abs() < 1e-15);
        assert!(matches!(harmonic_sum(1.0, 5, 4), Err(Error::InvalidRange(_))));
    }

    #[test]
    fn harmonic_sum_is_accurate_at_large_m() {
        // Pairwise reference summed in descending order (smallest terms first).
        let exact: f64 = (1..=1_000_000u64).rev().map(|j| 1.0 / j as f64).sum();
        let ours = harmonic_sum(1.0, 1, 1_000_000).unwrap();
        assert!((ours - exact).abs() < 1e-12, "{ours} vs {exact}");
    }

    #[test]
    fn harmonic_bounds_examples() {
        let (lo, hi) = harmonic_bounds(2.0, 1, 3).unwrap();
        assert!((lo - 2.0 / 3.0).abs() < 1e-15 && (hi - 5.0 / 3.0).abs() < 1e-15);
        let s = naive_sum(2.0, 1, 3);
        assert!(lo <= s && s <= hi);

        let (lo, hi) = harmonic_bounds(0.5, 1, 100).unwrap();
        assert!((lo - 18.0).abs() < 1e-12 && (hi - 19.0).abs() < 1e-12);
        let s = naive_sum(0.5, 1, 100);
        assert!((s - 18.5896).abs() < 1e-3);
        assert!(lo <= s && s <= hi);

        let (lo, hi) = harmonic_bounds(2.0, 5, 5).unwrap();
        assert!(lo <= 0.04 && 0.04 <= hi);

        assert!(matches!(harmonic_bounds(1.0, 1, 3), Err(Error::UnsupportedExponent(_))));
    }

    #[test]
    fn head_mass_examples() {
        let law = ZipfLaw::new(1.0, 4).unwrap();
        assert_eq!(law.head_mass(0).unwrap(), 0.0);
        assert_eq!(law.head_mass(4).unwrap(), 1.0);
        assert!((law.head_mass(2).unwrap() - 0.72).abs() < 1e-15);
        assert!(matches!(law.head_mass(5), Err(Error::InvalidRange(_))));
    }

    #[test]
    fn sublinear_bound_examples() {
        assert_eq!(head_mass_bound_sublinear(0.5, 7, 7).unwrap(), 2.0);
        let b = head_mass_bound_sublinear(0.5, 4, 16).unwrap();
        assert!((b - 1.0).abs() < 1e-15);
        let direct = ZipfLaw::new(0.5, 16).unwrap().head_mass(4).unwrap();
        assert!((direct - 0.417_836_029_899).abs() < 1e-11, "{direct}");
        assert!(direct <= b);

        let b = head_mass_bound_sublinear(0.9, 1, 100).unwrap();
        assert!((b - 2.0 / 100f64.powf(0.1)).abs() < 1e-15 && (b - 1.262).abs() < 1e-3);
        assert!(ZipfLaw::new(0.9, 100).unwrap().prob(1) <= b);

        assert!(matches!(
            head_mass_bound_sublinear(1.0, 1, 10),
            Err(Error::UnsupportedExponent(_))
        ));
    }

    #[test]
    fn gamma1_bound_examples() {
        let (lo, _) = head_mass_bounds_gamma1(2, 8).unwrap();
        assert_eq!(lo, 0.0);
        assert!(lo <= ZipfLaw::new(1.0, 8).unwrap().prob(2));

        let (_, hi) = head_mass_bounds_gamma1(8, 8).unwrap();
        assert!((hi - (8f64.ln() + 1.0) / 8f64.ln()).abs() < 1e-15);
        assert!(1.0 <= hi);

        let law = ZipfLaw::new(1.0, 256).unwrap();
        let tail: f64 = (2..=16).map(|j| law.prob(j)).sum();
        let (lo, hi) = head_mass_bounds_gamma1(16, 256).unwrap();
        assert!((tail - 0.388_732_020_760).abs() < 1e-11, "{tail}");
        assert!((lo - 0.270_823_631_181).abs() < 1e-11, "{lo}");
        assert!(lo <= tail);
        assert!(law.head_mass(16).unwrap() <= hi);

        assert!(matches!(head_mass_bounds_gamma1(1, 8), Err(Error::InvalidRange(_))));
        assert!(matches!(head_mass_bounds_gamma1(9, 8), Err(Error::InvalidRange(_))));
    }

    #[test]
    fn reuse_product_sum_examples() {
        assert!((reuse_product_sum(2.0, 2.0, 2).unwrap() - 0.04).abs() < 1e-15);

        let vals: Vec<f64> = [10, 100, 1000, 10_000]
            .iter()
            .map(|&m| reuse_product_sum(1.5, 1.5, m).unwrap())
            .collect();
        // Successive decades past m = 100 agree to within 10%.
        assert!((vals[3] - vals[2]).abs() / vals[2] < 0.10, "{vals:?}");
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
        assert!(vals.iter().all(|&v| v > 0.02));

        for m in [2usize, 10, 1000] {
            let expect = (m - 1) as f64 / (m * m) as f64;
            assert!((reuse_product_sum(0.0, 0.0, m).unwrap() - expect).abs() < 1e-15);
        }
        assert!(matches!(reuse_product_sum(1.0, 1.0, 1), Err(Error::InvalidRange(_))));
    }

    proptest! {
        #[test]
        fn zipf_invariants(gamma in 0.0f64..4.0, m in 1usize..400) {
            let law = ZipfLaw::new(gamma, m).unwrap();
            let total: f64 = law.pmf().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(law.pmf().iter().all(|&p| p > 0.0));
            prop_assert!(law.pmf().windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(law.cdf()[m - 1], 1.0);
            prop_assert!(law.cdf().windows(2).all(|w| w[1] > w[0]));
            for (i, &p) in law.pmf().iter().enumerate() {
                let expect = (i as f64 + 1.0).powf(-gamma) / naive_sum(gamma, 1, m as u64);
                prop_assert!((p - expect).abs() < 1e-12);
            }
        }

        #[test]
        fn harmonic_sandwich(gamma in 0.0f64..3.0, a in 1u64..50, len in 0u64..500) {
            prop_assume!((gamma - 1.0).abs() > 1e-9);
            let b = a + len;
            let (lo, hi) = harmonic_bounds(gamma, a, b).unwrap();
            let s = harmonic_sum(gamma, a, b).unwrap();
            prop_assert!(lo <= s && s <= hi, "{} <= {} <= {}", lo, s, hi);
        }

        #[test]
        fn sublinear_dominance(gamma in 0.01f64..0.99, m in 1usize..300, frac in 0.0f64..1.0) {
            let k = 1 + ((m - 1) as f64 * frac) as usize;
            let law = ZipfLaw::new(gamma, m).unwrap();
            prop_assert!(law.head_mass(k).unwrap() <= head_mass_bound_sublinear(gamma, k, m).unwrap());
        }
    }
}
