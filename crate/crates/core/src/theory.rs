//! Computable forms of the analytic bounds: regime-wise optimal radius and
//! link-count scalings, goodness bounds for a cluster, and the Chernoff and
//! Azuma tail evaluators. All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::caching::eta;
use crate::error::{invalid_param, invalid_range, Error, Result};
use crate::popularity::{KahanSum, ZipfLaw};
use crate::scheduling::cluster_value;

/// Floor applied to `ln ln m` in the critical regime.
pub const LOGLOG_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "regime")]
pub enum Regime {
    /// `γ_r > 1`.
    HighReuse,
    /// `γ_r < 1`, carrying `η₁ = η(γ_r) + ε`.
    LowReuse { eta1: f64 },
    /// `γ_r = 1`.
    Critical,
}

impl Regime {
    /// Classifies `γ_r` with an exact comparison at 1. `epsilon` is only used
    /// below 1.
    pub fn classify(gamma_r: f64, epsilon: f64) -> Result<Self> {
        if !gamma_r.is_finite() || gamma_r < 0.0 {
            return Err(invalid_param(format!("gamma_r must be finite and >= 0, got {gamma_r}")));
        }
        Ok(if gamma_r > 1.0 {
            Regime::HighReuse
        } else if gamma_r == 1.0 {
            Regime::Critical
        } else {
            Regime::LowReuse {
                eta1: eta(gamma_r)? + epsilon,
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::HighReuse => "high-reuse",
            Regime::LowReuse { .. } => "low-reuse",
            Regime::Critical => "critical",
        }
    }
}

/// A scaling-law evaluation with the conditions under which it was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: f64,
    /// Critical regime with `m ≤ e^e`, where `ln ln m ≤ 1` makes the form unreliable.
    pub flagged: bool,
    /// The radius exceeded `√2` and was clamped.
    pub clamped: bool,
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n < 2 {
        return Err(invalid_param(format!("n must be at least 2, got {n}")));
    }
    if m < 2 {
        return Err(invalid_param(format!("m must be at least 2, got {m}")));
    }
    Ok(())
}

/// `(ln m, floored ln ln m, flagged)`.
fn critical_logs(m: usize) -> (f64, f64, bool) {
    let lm = (m as f64).ln();
    let llm = lm.ln();
    (lm, llm.max(LOGLOG_FLOOR), llm <= 1.0)
}

pub fn predicted_r_opt(regime: Regime, n: usize, m: usize, c: f64) -> Result<Prediction> {
    check_sizes(n, m)?;
    if !(c.is_finite() && c > 0.0) {
        return Err(invalid_param(format!("constant must be positive, got {c}")));
    }
    let nf = n as f64;
    let (raw, flagged) = match regime {
        Regime::HighReuse => (c * (1.0 / nf).sqrt(), false),
        Regime::LowReuse { eta1 } => (c * ((m as f64).powf(eta1) / nf).sqrt(), false),
        Regime::Critical => {
            let (lm, llm, flagged) = critical_logs(m);
            (c * (lm / (nf * llm)).sqrt(), flagged)
        }
    };
    let max = std::f64::consts::SQRT_2;
    Ok(Prediction {
        value: raw.min(max),
        flagged,
        clamped: raw > max,
    })
}

/// Expected active-link count up to its constant.
pub fn predicted_el(regime: Regime, n: usize, m: usize) -> Result<Prediction> {
    check_sizes(n, m)?;
    let nf = n as f64;
    let (value, flagged) = match regime {
        Regime::HighReuse => (nf, false),
        Regime::LowReuse { eta1 } => (nf / (m as f64).powf(eta1), false),
        Regime::Critical => {
            let (lm, llm, flagged) = critical_logs(m);
            (nf * llm / lm, flagged)
        }
    };
    Ok(Prediction {
        value,
        flagged,
        clamped: false,
    })
}

/// `1 − (1 − Σ_{j≤min(k,m)} f_j)^k`: no cluster of `k` users is good with
/// higher probability than when it caches the `k` most popular files.
pub fn goodness_upper_bound(k: usize, law: &ZipfLaw) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let head = law.head_mass(k.min(law.len())).expect("index clamped to m");
    (1.0 - (1.0 - head).powi(k as i32)).clamp(0.0, 1.0)
}

/// Which popularity is discounted from the cluster value in the lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discount {
    /// The most popular cached file of rank `≥ q`.
    MaxCached,
    /// `f_q` itself (the restricted-file construction).
    RankQ,
}

/// `1 − (1 − max(0, v(ω) − d))^k` with `k = |ω|`.
pub fn goodness_lower_bound(omega: &[usize], law: &ZipfLaw, q: usize, discount: Discount) -> Result<f64> {
    let k = omega.len();
    if k == 0 {
        return Err(invalid_param("goodness lower bound needs at least one cached file"));
    }
    if q == 0 || q > law.len() {
        return Err(invalid_range(format!("q = {q} outside 1..={}", law.len())));
    }
    let v = cluster_value(omega, law, q)?;
    let d = match discount {
        Discount::MaxCached => omega
            .iter()
            .filter(|&&f| f >= q)
            .map(|&f| law.prob(f))
            .fold(0.0, f64::max),
        Discount::RankQ => law.prob(q),
    };
    let x = (v - d).max(0.0);
    Ok((1.0 - (1.0 - x).powi(k as i32)).clamp(0.0, 1.0))
}

/// `Pr[Binomial(n, p) ≥ R] ≤ 2^{−R}`, valid for `R ≥ 6np`.
pub fn chernoff_binomial_tail(trials: u64, p: f64, threshold: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid_param(format!("p must be a probability, got {p}")));
    }
    let mean = trials as f64 * p;
    if threshold < 6.0 * mean || !threshold.is_finite() {
        return Err(Error::OutOfValidity(format!(
            "R = {threshold} is below 6·E[K] = {}",
            6.0 * mean
        )));
    }
    Ok((-threshold).exp2().clamp(0.0, 1.0))
}

/// `Pr[|v − E v| ≥ t] ≤ 2 exp(−2t² / ((k − h) f_q²))` for the restricted
/// cluster value with `h` of `k` caches pinned to file `q`.
pub fn azuma_value_tail(k: usize, h: usize, f_q: f64, t: f64) -> Result<f64> {
    if h > k {
        return Err(invalid_range(format!("h = {h} exceeds k = {k}")));
    }
    if !(f_q > 0.0 && f_q <= 1.0) {
        return Err(invalid_param(format!("f_q must lie in (0, 1], got {f_q}")));
    }
    if t.is_nan() || t <= 0.0 {
        return Err(invalid_param(format!("t must be positive, got {t}")));
    }
    if k == h {
        return Ok(0.0);
    }
    let free = (k - h) as f64;
    Ok((2.0 * (-2.0 * t * t / (free * f_q * f_q)).exp()).min(1.0))
}

/// `f_q + Σ_{j=q+1..m} f_j (1 − (1 − p_j)^{k−h})`: the mean restricted value
/// when `h` members cache file `q` and the other `k − h` draw from the caching law.
pub fn conditional_value_mean(
    k: usize,
    h: usize,
    requests: &ZipfLaw,
    caching: &ZipfLaw,
    q: usize,
) -> Result<f64> {
    let m = requests.len();
    if caching.len() != m {
        return Err(invalid_param("request and caching laws differ in library size"));
    }
    if h > k {
        return Err(invalid_range(format!("h = {h} exceeds k = {k}")));
    }
    if q == 0 || q > m {
        return Err(invalid_range(format!("q = {q} outside 1..={m}")));
    }
    let free = (k - h) as i32;
    let mut acc = KahanSum::default();
    acc.add(requests.prob(q));
    for j in q + 1..=m {
        acc.add(requests.prob(j) * (1.0 - (1.0 - caching.prob(j)).powi(free)));
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caching::theory_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn classification() {
        assert_eq!(Regime::classify(1.5, 0.05).unwrap(), Regime::HighReuse);
        assert_eq!(Regime::classify(1.0, 0.05).unwrap(), Regime::Critical);
        match Regime::classify(0.5, 0.05).unwrap() {
            Regime::LowReuse { eta1 } => assert!((eta1 - (1.0 / 3.0 + 0.05)).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert!(Regime::classify(f64::NAN, 0.05).is_err());
    }

    #[test]
    fn r_opt_examples() {
        let p = predicted_r_opt(Regime::HighReuse, 10_000, 20, 1.5).unwrap();
        assert!((p.value - 0.015).abs() < 1e-15 && !p.flagged && !p.clamped);

        let low = Regime::LowReuse { eta1: 1.0 / 3.0 + 0.05 };
        let p = predicted_r_opt(low, 1_000_000, 100, 1.0).unwrap();
        let expect = (100f64.powf(1.0 / 3.0 + 0.05) / 1e6).sqrt();
        assert!((p.value - expect).abs() < 1e-15);
        assert!((p.value - 0.002_417).abs() < 1e-6, "{}", p.value);

        let p = predicted_r_opt(Regime::HighReuse, 2, 2, 10.0).unwrap();
        assert_eq!(p.value, std::f64::consts::SQRT_2);
        assert!(p.clamped);

        assert!(predicted_r_opt(Regime::Critical, 1000, 10, 1.0).unwrap().flagged);
        assert!(!predicted_r_opt(Regime::Critical, 1000, 16, 1.0).unwrap().flagged);
        // m = 2 has ln ln m < 0; the floor keeps the form finite and positive.
        let p = predicted_r_opt(Regime::Critical, 1000, 2, 1.0).unwrap();
        assert!(p.value.is_finite() && p.value > 0.0 && p.flagged);
        assert!(predicted_r_opt(Regime::HighReuse, 1000, 10, 0.0).is_err());
    }

    #[test]
    fn el_examples() {
        assert_eq!(predicted_el(Regime::HighReuse, 1000, 8).unwrap().value, 1000.0);
        let low = Regime::LowReuse { eta1: 1.0 / 3.0 + 0.05 };
        let v = predicted_el(low, 1_000_000, 100).unwrap().value;
        assert!((v - 1.711e5).abs() < 1e2, "{v}");
        let v = predicted_el(Regime::Critical, 1_000_000, 10_000).unwrap().value;
        assert!((v - 2.4107e5).abs() < 1e2, "{v}");
        for n in [2usize, 17, 1000, 123_456] {
            assert_eq!(predicted_el(Regime::HighReuse, n, 9).unwrap().value / n as f64, 1.0);
        }
    }

    #[test]
    fn upper_bound_examples() {
        let law = ZipfLaw::new(1.0, 4).unwrap();
        assert_eq!(goodness_upper_bound(0, &law), 0.0);
        assert_eq!(goodness_upper_bound(4, &law), 1.0);
        assert_eq!(goodness_upper_bound(9, &law), 1.0);
        assert!((goodness_upper_bound(2, &law) - 0.9216).abs() < 1e-12);
        let law = ZipfLaw::new(0.6, 30).unwrap();
        let vals: Vec<f64> = (0..40).map(|k| goodness_upper_bound(k, &law)).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn lower_bound_examples() {
        let law = ZipfLaw::new(1.0, 4).unwrap();
        assert_eq!(goodness_lower_bound(&[3], &law, 1, Discount::MaxCached).unwrap(), 0.0);
        let v = goodness_lower_bound(&[1, 2], &law, 1, Discount::MaxCached).unwrap();
        assert!((v - 0.4224).abs() < 1e-12, "{v}");
        // f_q discount with q = 1 matches when file 1 is cached.
        let w = goodness_lower_bound(&[1, 2], &law, 1, Discount::RankQ).unwrap();
        assert!((w - v).abs() < 1e-15);
        assert!(goodness_lower_bound(&[], &law, 1, Discount::MaxCached).is_err());
    }

    fn cluster_is_good(files: &[usize], reqs: &[usize]) -> bool {
        (0..files.len()).any(|i| {
            files[i] != reqs[i] && (0..files.len()).any(|j| j != i && files[j] == reqs[i])
        })
    }

    #[test]
    fn lower_bound_against_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draws = 100_000;
        for cfg in 0..50 {
            let m = 3 + cfg % 10;
            let k = 1 + cfg % 8;
            let law = ZipfLaw::new([0.6, 1.0, 1.5][cfg % 3], m).unwrap();
            let caching = ZipfLaw::new(1.2, m).unwrap();
            let omega: Vec<usize> = (0..k).map(|_| caching.sample(&mut rng)).collect();
            let bound = goodness_lower_bound(&omega, &law, 1, Discount::MaxCached).unwrap();
            let mut hits = 0usize;
            let mut reqs = vec![0; k];
            for _ in 0..draws {
                reqs.iter_mut().for_each(|q| *q = law.sample(&mut rng));
                hits += cluster_is_good(&omega, &reqs) as usize;
            }
            let p = hits as f64 / draws as f64;
            let sigma = (p * (1.0 - p) / draws as f64).sqrt().max(1.0 / draws as f64);
            assert!(p >= bound - 3.0 * sigma, "cfg {cfg}: {p} < {bound}");
        }
    }

    #[test]
    fn chernoff_examples() {
        assert_eq!(chernoff_binomial_tail(100, 0.01, 6.0).unwrap(), 0.015625);
        assert_eq!(chernoff_binomial_tail(100, 0.01, 1e6).unwrap(), 0.0);
        assert!(matches!(chernoff_binomial_tail(100, 0.01, 5.9), Err(Error::OutOfValidity(_))));

        // Exact Pr[Bin(100, 0.01) >= 6].
        let mut pmf = 0.99f64.powi(100);
        let mut below = 0.0;
        for k in 0..6 {
            below += pmf;
            pmf *= (100 - k) as f64 / (k + 1) as f64 * (0.01 / 0.99);
        }
        let tail = 1.0 - below;
        assert!((tail - 5e-4).abs() < 1e-4, "{tail}");
        assert!(tail <= 0.015625);
    }

    #[test]
    fn azuma_examples() {
        assert_eq!(azuma_value_tail(7, 7, 0.1, 0.5).unwrap(), 0.0);
        assert_eq!(azuma_value_tail(102, 2, 0.01, 0.05).unwrap(), 1.0);
        let v = azuma_value_tail(102, 2, 0.01, 0.1).unwrap();
        assert!((v - 2.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert!(azuma_value_tail(5, 2, 0.0, 0.1).is_err());
        assert!(azuma_value_tail(5, 6, 0.1, 0.1).is_err());

        let mut prev = 1.0;
        for i in 1..100 {
            let v = azuma_value_tail(50, 3, 0.02, i as f64 * 0.01).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn conditional_mean_examples() {
        let f = ZipfLaw::new(0.5, 5).unwrap();
        let p = ZipfLaw::new(1.5, 5).unwrap();
        assert_eq!(conditional_value_mean(4, 4, &f, &p, 2).unwrap(), f.prob(2));
        assert_eq!(conditional_value_mean(9, 1, &f, &p, 5).unwrap(), f.prob(5));
        assert!(conditional_value_mean(4, 1, &f, &p, 6).is_err());

        for h in 0..10 {
            let a = conditional_value_mean(10, h, &f, &p, 2).unwrap();
            let b = conditional_value_mean(11, h, &f, &p, 2).unwrap();
            let c = conditional_value_mean(10, h + 1, &f, &p, 2).unwrap();
            assert!(b >= a && c <= a);
        }
    }

    #[test]
    fn conditional_mean_against_monte_carlo() {
        let f = ZipfLaw::new(0.5, 5).unwrap();
        let p = ZipfLaw::new(1.5, 5).unwrap();
        let (k, h, q) = (10, 1, 2);
        let expect = conditional_value_mean(k, h, &f, &p, q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let draws = 1_000_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        let mut omega = vec![q; k];
        for _ in 0..draws {
            for slot in omega.iter_mut().skip(h) {
                *slot = p.sample(&mut rng);
            }
            let v = cluster_value(&omega, &f, q).unwrap();
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / draws as f64;
        let sd = (sum2 / draws as f64 - mean * mean).sqrt();
        assert!((mean - expect).abs() < 3.0 * sd / (draws as f64).sqrt(), "{mean} vs {expect}");
    }

    #[test]
    fn theory_params_feed_azuma() {
        let t = theory_params(0.6, 0.05, 200).unwrap();
        let f = ZipfLaw::new(0.6, 200).unwrap();
        let f_q = f.prob(t.q);
        let bound = azuma_value_tail(50, 2, f_q, 2.0 * f_q * 48f64.sqrt()).unwrap();
        assert!((bound - 2.0 * (-8.0f64).exp()).abs() < 1e-12);
    }
}
