#![allow(clippy::excessive_precision)]
//! Standard-normal simulation draws for the mixing distribution.
//!
//! Two interchangeable sources sit behind [`DrawSource`] and are selected by
//! name at runtime: `halton` (low-discrepancy, one prime base per dimension)
//! and `pseudo` (counter-based, seeded). Either way a draw is a pure function
//! of (config, individual, dimension, draw index), so results never depend on
//! scheduling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Largest number of random dimensions supported by the prime table.
pub const MAX_DIMENSIONS: usize = 64;

/// First 64 primes; Halton dimension `d` uses the `d`-th entry as its base.
const PRIMES: [u32; MAX_DIMENSIONS] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283,
    293, 307, 311,
];

/// How simulation draws are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawConfig {
    /// Registered draw source name: `halton` or `pseudo`.
    pub method: String,
    /// Draws per individual.
    pub r: usize,
    pub seed: u64,
    /// Leading Halton points skipped per dimension.
    pub burn: usize,
}

impl DrawConfig {
    pub fn halton(r: usize, seed: u64, burn: usize) -> Self {
        DrawConfig {
            method: "halton".into(),
            r,
            seed,
            burn,
        }
    }

    pub fn pseudo(r: usize, seed: u64) -> Self {
        DrawConfig {
            method: "pseudo".into(),
            r,
            seed,
            burn: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::Validation("draw count must be at least 1".into()));
        }
        draw_source(&self.method).map(|_| ())
    }
}

impl Default for DrawConfig {
    fn default() -> Self {
        DrawConfig::halton(1000, 12345, 100)
    }
}

/// A named generator of per-individual standard-normal draws.
pub trait DrawSource: Send + Sync {
    fn name(&self) -> &'static str;

    /// Fills `out` (length `r * k`, dimension-major: `out[d * r + r_i]`)
    /// with the draws of one individual.
    fn fill(&self, config: &DrawConfig, individual: usize, k: usize, out: &mut [f64]);
}

pub const DRAW_SOURCE_NAMES: [&str; 4] = ["halton", "halton-antithetic", "halton-common", "pseudo"];

/// Runtime lookup of a draw source by its registered name.
pub fn draw_source(name: &str) -> Result<Box<dyn DrawSource>> {
    match name {
        "halton" => Ok(Box::new(HaltonSource)),
        "halton-antithetic" => Ok(Box::new(AntitheticHaltonSource)),
        "halton-common" => Ok(Box::new(CommonHaltonSource)),
        "pseudo" => Ok(Box::new(PseudoSource)),
        other => Err(Error::UnknownStrategy {
            kind: "draw source",
            name: other.to_string(),
            available: DRAW_SOURCE_NAMES.to_vec(),
        }),
    }
}

/// Radical-inverse Halton point for 1-based sequence index `i`.
fn radical_inverse(base: u32, mut i: u64) -> f64 {
    let b = base as u64;
    let mut result = 0.0;
    let mut fraction = 1.0 / b as f64;
    while i > 0 {
        result += (i % b) as f64 * fraction;
        i /= b;
        fraction /= b as f64;
    }
    result
}

/// Halton sequence mapped through the inverse normal CDF. Individual `n`
/// owns sequence positions `burn + n * r + 1 ..= burn + (n + 1) * r` of every
/// dimension, so panels stay contiguous and draws are scheduling-free.
pub struct HaltonSource;

impl DrawSource for HaltonSource {
    fn name(&self) -> &'static str {
        "halton"
    }

    fn fill(&self, config: &DrawConfig, individual: usize, k: usize, out: &mut [f64]) {
        for d in 0..k {
            let base = PRIMES[d];
            for r_i in 0..config.r {
                let index = (config.burn + individual * config.r + r_i + 1) as u64;
                out[d * config.r + r_i] = inverse_normal_cdf(radical_inverse(base, index));
            }
        }
    }
}

/// Halton draws completed with their reflections: draw `2m` is the Halton
/// point, draw `2m + 1` its antithetic `1 - u`. Every individual's draws
/// then have exactly zero mean in each dimension, which removes the
/// first-order channel by which small draw sets let spurious taste spreads
/// chase noise. Odd draw counts keep one unpaired point.
pub struct AntitheticHaltonSource;

impl DrawSource for AntitheticHaltonSource {
    fn name(&self) -> &'static str {
        "halton-antithetic"
    }

    fn fill(&self, config: &DrawConfig, individual: usize, k: usize, out: &mut [f64]) {
        let pairs = config.r.div_ceil(2);
        for d in 0..k {
            let base = PRIMES[d];
            for m in 0..pairs {
                let index = (config.burn + individual * pairs + m + 1) as u64;
                let value = inverse_normal_cdf(radical_inverse(base, index));
                out[d * config.r + 2 * m] = value;
                if 2 * m + 1 < config.r {
                    out[d * config.r + 2 * m + 1] = -value;
                }
            }
        }
    }
}

/// Halton draws shared by every individual: one length-`r` block per
/// dimension, reused for all. Integration error is then a common
/// deterministic quadrature error rather than per-individual noise, which
/// keeps small draw sets from letting spurious taste spreads chase
/// individual-level choice shocks. The flip side is that simulation error
/// no longer averages out across individuals.
pub struct CommonHaltonSource;

impl DrawSource for CommonHaltonSource {
    fn name(&self) -> &'static str {
        "halton-common"
    }

    fn fill(&self, config: &DrawConfig, _individual: usize, k: usize, out: &mut [f64]) {
        for d in 0..k {
            let base = PRIMES[d];
            for r_i in 0..config.r {
                let index = (config.burn + r_i + 1) as u64;
                out[d * config.r + r_i] = inverse_normal_cdf(radical_inverse(base, index));
            }
        }
    }
}

/// Counter-based pseudo-random normals: each value hashes
/// (seed, individual, dimension, draw index) and maps through the inverse
/// normal CDF.
pub struct PseudoSource;

impl DrawSource for PseudoSource {
    fn name(&self) -> &'static str {
        "pseudo"
    }

    fn fill(&self, config: &DrawConfig, individual: usize, k: usize, out: &mut [f64]) {
        for d in 0..k {
            for r_i in 0..config.r {
                let word = rng::mix(config.seed, individual as u64, d as u64, r_i as u64);
                out[d * config.r + r_i] = inverse_normal_cdf(rng::to_unit_open(word));
            }
        }
    }
}

/// Materialized standard-normal draws for `n` individuals with `k` random
/// dimensions each, dimension-major per individual. Because dimension `d`
/// always uses the `d`-th prime (or the `d`-th counter lane), a prefix of
/// dimensions is itself a valid smaller draw set, which lets one generation
/// serve every subset size during model selection.
#[derive(Clone, Debug)]
pub struct DrawSet {
    pub config: DrawConfig,
    pub k: usize,
    pub n_individuals: usize,
    values: Vec<f64>,
}

impl DrawSet {
    /// Generates draws for every individual. `k = 0` yields an empty draw
    /// set: integration degenerates to a single deterministic evaluation and
    /// the likelihood reduces to plain logit exactly.
    pub fn generate(config: &DrawConfig, k: usize, n_individuals: usize) -> Result<Self> {
        config.validate()?;
        if k > MAX_DIMENSIONS {
            return Err(Error::Validation(format!(
                "{k} random dimensions exceed the supported maximum of {MAX_DIMENSIONS}"
            )));
        }
        let source = draw_source(&config.method)?;
        let mut values = vec![0.0; n_individuals * config.r * k];
        if k > 0 {
            let stride = config.r * k;
            for i in 0..n_individuals {
                source.fill(config, i, k, &mut values[i * stride..(i + 1) * stride]);
            }
        }
        Ok(DrawSet {
            config: config.clone(),
            k,
            n_individuals,
            values,
        })
    }

    /// View over all `k` dimensions.
    pub fn view(&self) -> DrawView<'_> {
        self.prefix(self.k).expect("own dimension count is valid")
    }

    /// View over the first `k_used` dimensions.
    pub fn prefix(&self, k_used: usize) -> Result<DrawView<'_>> {
        if k_used > self.k {
            return Err(Error::Validation(format!(
                "requested {k_used} draw dimensions from a {}-dimension set",
                self.k
            )));
        }
        Ok(DrawView {
            k: k_used,
            r: if k_used == 0 { 1 } else { self.config.r },
            n_individuals: self.n_individuals,
            stride: self.config.r * self.k,
            values: &self.values,
        })
    }

    /// Effective number of integration points (1 when `k = 0`).
    pub fn r(&self) -> usize {
        if self.k == 0 {
            1
        } else {
            self.config.r
        }
    }

    /// The `k * r` draw block of one individual, dimension-major.
    pub fn individual(&self, i: usize) -> &[f64] {
        self.view().individual(i)
    }
}

/// Borrowed, possibly dimension-truncated draw set.
#[derive(Clone, Copy, Debug)]
pub struct DrawView<'a> {
    pub k: usize,
    pub r: usize,
    pub n_individuals: usize,
    stride: usize,
    values: &'a [f64],
}

impl<'a> DrawView<'a> {
    /// The `k * r` draw block of one individual, dimension-major:
    /// `block[d * r + r_i]`.
    pub fn individual(self, i: usize) -> &'a [f64] {
        if self.k == 0 {
            return &[];
        }
        let start = i * self.stride;
        &self.values[start..start + self.k * self.r]
    }

    /// Narrows the view to its first `k` dimensions.
    pub fn truncate(self, k: usize) -> Result<DrawView<'a>> {
        if k > self.k {
            return Err(Error::Validation(format!(
                "requested {k} draw dimensions from a {}-dimension view",
                self.k
            )));
        }
        Ok(DrawView {
            k,
            r: if k == 0 { 1 } else { self.r },
            ..self
        })
    }
}

/// Inverse standard-normal CDF, Wichura-style rational approximation
/// (absolute error below 1e-9 over (0, 1)).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly_a(r) / poly_b(r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        let r = r - 1.6;
        poly_c(r) / poly_d(r)
    } else {
        let r = r - 5.0;
        poly_e(r) / poly_f(r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

fn horner(r: f64, coeffs: &[f64]) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c)
}

fn poly_a(r: f64) -> f64 {
    horner(
        r,
        &[
            3.387_132_872_796_366_608,
            1.331_416_678_917_843_774_5e2,
            1.971_590_950_306_551_442_7e3,
            1.373_169_376_550_946_112_5e4,
            4.592_195_393_154_987_145_7e4,
            6.726_577_092_700_870_085_3e4,
            3.343_057_558_358_812_810_5e4,
            2.509_080_928_730_122_672_7e3,
        ],
    )
}

fn poly_b(r: f64) -> f64 {
    horner(
        r,
        &[
            1.0,
            4.231_333_070_160_091_125_2e1,
            6.871_870_074_920_579_083e2,
            5.394_196_021_424_751_107_7e3,
            2.121_379_430_158_659_586_7e4,
            3.930_789_580_009_271_061e4,
            2.872_908_573_572_194_267_4e4,
            5.226_495_278_852_854_561e3,
        ],
    )
}

fn poly_c(r: f64) -> f64 {
    horner(
        r,
        &[
            1.423_437_110_749_683_577_3,
            4.630_337_846_156_545_295_9,
            5.769_497_221_460_691_405_5,
            3.647_848_324_763_204_605,
            1.270_458_252_452_368_382_6,
            2.417_807_251_774_506_117_7e-1,
            2.272_384_498_926_918_458_3e-2,
            7.745_450_142_783_414_076_4e-4,
        ],
    )
}

fn poly_d(r: f64) -> f64 {
    horner(
        r,
        &[
            1.0,
            2.053_191_626_637_758_821_9,
            1.676_384_830_183_803_849_4,
            6.897_673_349_851_000_045_5e-1,
            1.481_039_764_274_800_745_9e-1,
            1.519_866_656_361_645_719_7e-2,
            5.475_938_084_995_344_946e-4,
            1.050_750_071_644_416_843_2e-9,
        ],
    )
}

fn poly_e(r: f64) -> f64 {
    horner(
        r,
        &[
            6.657_904_643_501_103_777_2,
            5.463_784_911_164_114_369_9,
            1.784_826_539_917_291_335_8,
            2.965_605_718_285_048_912_3e-1,
            2.653_218_952_657_612_309_3e-2,
            1.242_660_947_388_078_438_6e-3,
            2.711_555_568_743_487_578_2e-5,
            2.010_334_399_292_288_132_6e-7,
        ],
    )
}

fn poly_f(r: f64) -> f64 {
    horner(
        r,
        &[
            1.0,
            5.998_322_065_558_879_377e-1,
            1.369_298_809_227_358_053_1e-1,
            1.487_536_129_085_061_485_3e-2,
            7.868_691_311_456_132_591e-4,
            1.846_318_317_510_054_681_8e-5,
            1.421_511_758_316_445_888_7e-7,
            2.044_263_103_389_939_785_6e-15,
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Standard normal CDF by Simpson quadrature, accurate far beyond 1e-12.
    fn normal_cdf_quadrature(x: f64) -> f64 {
        let (lo, hi) = if x < 0.0 { (x, 0.0) } else { (0.0, x) };
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut sum = pdf(lo) + pdf(hi);
        for i in 1..n {
            let t = lo + i as f64 * h;
            sum += pdf(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = sum * h / 3.0;
        if x < 0.0 {
            0.5 - integral
        } else {
            0.5 + integral
        }
    }

    #[test]
    fn inverse_cdf_matches_quadrature_oracle() {
        for &p in &[
            1e-9, 1e-6, 1e-4, 0.01, 0.1, 0.25, 0.5, 0.6745, 0.9, 0.975, 0.999, 1.0 - 1e-7,
        ] {
            let q = inverse_normal_cdf(p);
            let back = normal_cdf_quadrature(q);
            assert!(
                (back - p).abs() < 1e-9,
                "p={p}, quantile={q}, cdf back={back}"
            );
        }
        assert_relative_eq!(inverse_normal_cdf(0.5), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn halton_base_two_dyadic_points() {
        assert_eq!(radical_inverse(2, 1), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(2, 3), 0.75);
        // Through the inverse CDF: {0, -0.6745, +0.6745} to 1e-4.
        let config = DrawConfig::halton(3, 0, 0);
        let set = DrawSet::generate(&config, 1, 1).unwrap();
        let draws = set.individual(0);
        assert!(draws[0].abs() < 1e-12);
        assert!((draws[1] + 0.6745).abs() < 1e-4);
        assert!((draws[2] - 0.6745).abs() < 1e-4);
    }

    #[test]
    fn halton_moments_are_tight() {
        let config = DrawConfig::halton(10_000, 0, 100);
        let set = DrawSet::generate(&config, 2, 1).unwrap();
        let draws = set.individual(0);
        for d in 0..2 {
            let mean: f64 =
                (0..10_000).map(|r| draws[d * 10_000 + r]).sum::<f64>() / 10_000.0;
            assert!(mean.abs() < 0.01, "dimension {d} mean {mean}");
        }
    }

    #[test]
    fn pseudo_draws_are_counter_pure() {
        let config = DrawConfig::pseudo(50, 99);
        let a = DrawSet::generate(&config, 3, 4).unwrap();
        let b = DrawSet::generate(&config, 3, 4).unwrap();
        assert_eq!(a.individual(2), b.individual(2));
        // different seeds decorrelate
        let c = DrawSet::generate(&DrawConfig::pseudo(50, 100), 3, 4).unwrap();
        assert_ne!(a.individual(2), c.individual(2));
    }

    #[test]
    fn pseudo_moments_are_reasonable() {
        let config = DrawConfig::pseudo(20_000, 7);
        let set = DrawSet::generate(&config, 1, 1).unwrap();
        let draws = set.individual(0);
        let mean: f64 = draws.iter().sum::<f64>() / draws.len() as f64;
        let var: f64 = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (draws.len() - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn zero_dimensions_gives_single_point() {
        let set = DrawSet::generate(&DrawConfig::halton(500, 0, 10), 0, 3).unwrap();
        assert_eq!(set.r(), 1);
        assert!(set.individual(1).is_empty());
    }

    #[test]
    fn prefix_view_matches_smaller_generation() {
        let config = DrawConfig::halton(20, 3, 5);
        let big = DrawSet::generate(&config, 4, 3).unwrap();
        let small = DrawSet::generate(&config, 2, 3).unwrap();
        let view = big.prefix(2).unwrap();
        for i in 0..3 {
            assert_eq!(view.individual(i), small.individual(i));
        }
        assert!(big.prefix(5).is_err());
        assert_eq!(big.prefix(0).unwrap().r, 1);
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let err = DrawSet::generate(&DrawConfig::halton(10, 0, 0), 65, 1).unwrap_err();
        assert!(err.to_string().contains("64"));
    }

    #[test]
    fn unknown_method_is_rejected() {
        let config = DrawConfig {
            method: "sobol".into(),
            r: 10,
            seed: 0,
            burn: 0,
        };
        assert!(config.validate().is_err());
    }
}
