//! Seeded randomness and the noise models.
//!
//! [`Rng`] is ChaCha8 keyed by a 64-bit seed. Substreams are derived from the
//! seed and a text label only, never from consumed state, so a component's
//! draws do not depend on what other components drew before it.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{usage, Result};
use crate::lens::Matrix;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed of the substream `label` under `seed`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(label)))
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream named `label`; unaffected by draws already taken.
    pub fn substream(&self, label: &str) -> Rng {
        Rng::new(derive_seed(self.seed, label))
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// `true` with probability `p`; exact at `p = 0` and `p = 1`.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

pub fn sample_uniform(rng: &mut Rng, lo: f64, hi: f64) -> Result<f64> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(usage(format!("uniform bounds [{lo}, {hi}) are invalid")));
    }
    let x = lo + (hi - lo) * rng.unit();
    // rounding can land on hi
    Ok(if x >= hi && hi > lo { lo } else { x })
}

pub fn sample_gaussian(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    alpha: f64,
    beta: f64,
}

impl StableParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(usage(format!("stability alpha {alpha} outside (0, 2]")));
        }
        if !(-1.0..=1.0).contains(&beta) {
            return Err(usage(format!("skewness beta {beta} outside [-1, 1]")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Standard stable draw `S(α, β; 1, 0)` in the 1-parametrization, by the
/// Chambers–Mallows–Stuck construction.
pub fn sample_stable(rng: &mut Rng, params: StableParams) -> f64 {
    let StableParams { alpha, beta } = params;
    // V ~ U(-π/2, π/2) open, W ~ Exp(1)
    let v = loop {
        let u = rng.unit();
        if u > 0.0 {
            break PI * (u - 0.5);
        }
    };
    let w = -(1.0 - rng.unit()).ln();

    if alpha == 1.0 {
        let shifted = FRAC_PI_2 + beta * v;
        return (shifted * v.tan() - beta * ((FRAC_PI_2 * w * v.cos()) / shifted).ln()) / FRAC_PI_2;
    }
    let zeta = beta * (PI * alpha / 2.0).tan();
    let b = zeta.atan() / alpha;
    let s = (1.0 + zeta * zeta).powf(1.0 / (2.0 * alpha));
    let av = alpha * (v + b);
    s * av.sin() / v.cos().powf(1.0 / alpha) * ((v - av).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Adds independent `Uniform[−amplitude, amplitude]` noise to every entry.
pub fn noise_inputs(features: &Matrix, amplitude: f64, rng: &mut Rng) -> Result<Matrix> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(usage(format!("input noise amplitude {amplitude} must be nonnegative")));
    }
    let mut out = features.clone();
    if amplitude == 0.0 {
        return Ok(out);
    }
    for x in out.as_mut_slice() {
        *x += sample_uniform(rng, -amplitude, amplitude)?;
    }
    Ok(out)
}

/// How training targets are perturbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetNoiseSpec {
    NoNoise,
    /// `y + X·σ_y·N(0, 1)`
    WhiteNoise { x: f64 },
    /// `y + factor·σ_y·S(α, β)`
    Stable { params: StableParams, factor: f64 },
}

impl TargetNoiseSpec {
    pub const DEFAULT_STABLE_FACTOR: f64 = 0.03;

    pub fn white(x: f64) -> Result<Self> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(usage(format!("white-noise factor {x} must be nonnegative")));
        }
        Ok(Self::WhiteNoise { x })
    }

    pub fn stable(alpha: f64, beta: f64, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(usage(format!("stable-noise factor {factor} must be nonnegative")));
        }
        Ok(Self::Stable {
            params: StableParams::new(alpha, beta)?,
            factor,
        })
    }

    /// One perturbation `δ` so that the noisy target is `y + δ`.
    fn draw(&self, sigma_y: f64, rng: &mut Rng) -> f64 {
        match *self {
            TargetNoiseSpec::NoNoise => 0.0,
            TargetNoiseSpec::WhiteNoise { x } => x * sigma_y * sample_gaussian(rng),
            TargetNoiseSpec::Stable { params, factor } => {
                factor * sigma_y * sample_stable(rng, params)
            }
        }
    }

    fn is_identity(&self) -> bool {
        matches!(
            self,
            TargetNoiseSpec::NoNoise | TargetNoiseSpec::WhiteNoise { x: 0.0 }
        )
    }
}

impl fmt::Display for TargetNoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetNoiseSpec::NoNoise => f.write_str("NoNoise"),
            TargetNoiseSpec::WhiteNoise { x } => write!(f, "TDS{x}"),
            TargetNoiseSpec::Stable { params, factor } => {
                write!(f, "StableA{}B{}F{}", params.alpha, params.beta, factor)
            }
        }
    }
}

impl FromStr for TargetNoiseSpec {
    type Err = crate::Error;

    /// `NoNoise`, `TDS<X>` or `StableA<alpha>B<beta>F<factor>`; the `F` part
    /// may be left out for the default factor. A dataset number between
    /// `Stable` and `A` (`Stable3A1.25B0F0.03`) is accepted and ignored.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || usage(format!("unrecognised target noise '{s}'"));
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());
        if s == "NoNoise" {
            return Ok(Self::NoNoise);
        }
        if let Some(x) = s.strip_prefix("TDS") {
            return Self::white(num(x)?);
        }
        if let Some(rest) = s
            .strip_prefix("Stable")
            .and_then(|r| r.trim_start_matches(|c: char| c.is_ascii_digit()).strip_prefix('A'))
        {
            let (alpha, rest) = rest.split_once('B').ok_or_else(bad)?;
            let (beta, factor) = match rest.split_once('F') {
                Some((beta, factor)) => (beta, num(factor)?),
                None => (rest, Self::DEFAULT_STABLE_FACTOR),
            };
            return Self::stable(num(alpha)?, num(beta)?, factor);
        }
        Err(bad())
    }
}

/// Perturbs regression targets; `sigma_y` is the training-split standard
/// deviation.
pub fn noise_targets(
    targets: &[f64],
    spec: &TargetNoiseSpec,
    sigma_y: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if !(sigma_y >= 0.0) {
        return Err(usage(format!("target sigma {sigma_y} must be nonnegative")));
    }
    if spec.is_identity() {
        return Ok(targets.to_vec());
    }
    Ok(targets.iter().map(|&y| y + spec.draw(sigma_y, rng)).collect())
}

/// Perturbs class indices as numbers, then rounds and clamps to `[0, K−1]`.
pub fn noise_class_targets(
    classes: &[f64],
    num_classes: usize,
    spec: &TargetNoiseSpec,
    sigma_y: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let top = num_classes.saturating_sub(1) as f64;
    Ok(noise_targets(classes, spec, sigma_y, rng)?
        .into_iter()
        .map(|y| if y.is_finite() { y.round().clamp(0.0, top) } else if y > 0.0 { top } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
    }

    #[test]
    fn substreams_ignore_consumed_state() {
        let mut a = Rng::new(11);
        let fresh = a.substream("masks").unit();
        for _ in 0..10 {
            a.unit();
        }
        assert_eq!(a.substream("masks").unit(), fresh);
        assert_ne!(a.substream("init").unit(), fresh);
    }

    #[test]
    fn uniform_examples() {
        let mut rng = Rng::new(1);
        assert_eq!(sample_uniform(&mut rng, 2.5, 2.5).unwrap(), 2.5);
        assert!(sample_uniform(&mut rng, 1.0, 0.0).is_err());
        let xs: Vec<f64> = (0..100_000).map(|_| sample_uniform(&mut rng, 0.0, 1.0).unwrap()).collect();
        assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
        let (m, _) = mean_var(&xs);
        assert!((0.497..=0.503).contains(&m), "{m}");
        let mut r1 = Rng::new(9);
        let mut r2 = Rng::new(9);
        for _ in 0..100 {
            assert_eq!(sample_uniform(&mut r1, -3.0, 4.0).unwrap(), sample_uniform(&mut r2, -3.0, 4.0).unwrap());
        }
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = Rng::new(2);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_gaussian(&mut rng)).collect();
        let (m, v) = mean_var(&xs);
        let skew = xs.iter().map(|x| ((x - m) / v.sqrt()).powi(3)).sum::<f64>() / xs.len() as f64;
        assert!(m.abs() <= 0.005, "{m}");
        assert!((0.995..=1.005).contains(&v), "{v}");
        assert!(skew.abs() <= 0.01, "{skew}");
    }

    #[test]
    fn stable_params_validated() {
        assert!(StableParams::new(0.0, 0.0).is_err());
        assert!(StableParams::new(2.1, 0.0).is_err());
        assert!(StableParams::new(1.5, 1.5).is_err());
        assert!(StableParams::new(2.0, -1.0).is_ok());
    }

    #[test]
    fn stable_cauchy_quantiles() {
        let mut rng = Rng::new(5);
        let p = StableParams::new(1.0, 0.0).unwrap();
        let mut xs: Vec<f64> = (0..1_000_000).map(|_| sample_stable(&mut rng, p)).collect();
        xs.sort_by(f64::total_cmp);
        let q = |f: f64| xs[(f * xs.len() as f64) as usize];
        assert!(q(0.5).abs() <= 0.01, "median {}", q(0.5));
        let iqr = q(0.75) - q(0.25);
        assert!((1.98..=2.02).contains(&iqr), "iqr {iqr}");
    }

    #[test]
    fn stable_skewed_alpha_one_is_finite() {
        let mut rng = Rng::new(6);
        let p = StableParams::new(1.0, 1.0).unwrap();
        assert!((0..10_000).all(|_| sample_stable(&mut rng, p).is_finite()));
    }

    #[test]
    fn input_noise_examples() {
        let mut rng = Rng::new(8);
        let m = Matrix::from_vec(2, 2, vec![-0.0, 1.0, 2.0, 3.0]).unwrap();
        let same = noise_inputs(&m, 0.0, &mut rng).unwrap();
        assert!(same.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(noise_inputs(&m, -1.0, &mut rng).is_err());

        let a = 0.7;
        let z = Matrix::zeros(1000, 100);
        let noisy = noise_inputs(&z, a, &mut rng).unwrap();
        assert!(noisy.as_slice().iter().all(|x| x.abs() <= a));
        let (mean, _) = mean_var(noisy.as_slice());
        assert!(mean.abs() <= 3.0 * a / (3.0f64 * 1e5).sqrt(), "{mean}");
    }

    #[test]
    fn target_noise_examples() {
        let mut rng = Rng::new(4);
        let y: Vec<f64> = (0..50).map(|i| i as f64 * 0.3 - 2.0).collect();
        assert_eq!(noise_targets(&y, &TargetNoiseSpec::NoNoise, 1.7, &mut rng).unwrap(), y);
        assert_eq!(noise_targets(&y, &TargetNoiseSpec::white(0.0).unwrap(), 1.7, &mut rng).unwrap(), y);

        let zeros = vec![0.0; 100_000];
        let noisy = noise_targets(&zeros, &TargetNoiseSpec::white(3.0).unwrap(), 2.0, &mut rng).unwrap();
        let (_, v) = mean_var(&noisy);
        assert!((v.sqrt() - 6.0).abs() <= 0.1, "{}", v.sqrt());
    }

    #[test]
    fn class_noise_rounds_and_clamps() {
        let mut rng = Rng::new(12);
        let y = vec![0.0, 1.0, 2.0, 2.0, 0.0];
        let spec = TargetNoiseSpec::white(10.0).unwrap();
        let noisy = noise_class_targets(&y, 3, &spec, 1.0, &mut rng).unwrap();
        assert!(noisy.iter().all(|&c| c.fract() == 0.0 && (0.0..=2.0).contains(&c)));
        let clean = noise_class_targets(&y, 3, &TargetNoiseSpec::NoNoise, 1.0, &mut rng).unwrap();
        assert_eq!(clean, y);
    }

    #[test]
    fn noise_spec_strings() {
        for s in ["NoNoise", "TDS3", "TDS10", "TDS0.5", "StableA1.75B0F0.03", "StableA1B1F0.03", "StableA1.25B-0.5F0.1"] {
            let spec: TargetNoiseSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert_eq!(
            "StableA1.25B0".parse::<TargetNoiseSpec>().unwrap(),
            TargetNoiseSpec::stable(1.25, 0.0, 0.03).unwrap()
        );
        assert_eq!(
            "Stable4A1B1F0.03".parse::<TargetNoiseSpec>().unwrap(),
            TargetNoiseSpec::stable(1.0, 1.0, 0.03).unwrap()
        );
        for bad in ["", "TDS", "TDS-1", "StableA3B0F0.03", "StableA1B2", "Stable3x1B0", "Gauss3"] {
            assert!(bad.parse::<TargetNoiseSpec>().is_err(), "{bad}");
        }
    }
}
