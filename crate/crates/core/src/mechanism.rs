//! Planar-Laplace obfuscation giving ε-geo-indistinguishability.
//!
//! A mechanism K is ε-geo-indistinguishable when, for any two true locations
//! x and x' and any set Z of reported locations,
//! `K(x)(Z) <= exp(ε · d(x, x')) · K(x')(Z)`. Adding noise with planar
//! density proportional to `exp(-ε · r)` achieves this. Here ε is measured
//! in reciprocal meters and is not comparable to the ε of classical
//! differential privacy: `ε = l / r` grants privacy level `l` within radius
//! `r` meters.
//!
//! The radial marginal of the planar Laplace is Gamma(shape 2, rate ε), so a
//! radius is drawn as the sum of two independent exponentials and a bearing
//! uniformly on [0, 2π). Each trace point is obfuscated independently.
//!
//! The quantile function of the radius (through the lower branch of the
//! Lambert W function) sizes the enlarged query disc used when querying a
//! service from an obfuscated location.

use std::f64::consts::{E, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::geo::{self, GeoPoint};
use crate::model::{MobilityTrace, UserId};

/// Noise scale ε in reciprocal meters. Smaller is more private.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyLevel {
    epsilon: f64,
}

impl PrivacyLevel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    /// ε = l / r for privacy level `l` within `r` meters.
    pub fn from_level(l: f64, r: f64) -> Result<Self> {
        if !(l > 0.0 && r > 0.0) {
            return Err(Error::param(format!("privacy level needs l > 0 and r > 0, got l={l}, r={r}")));
        }
        Self::new(l / r)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Strong, medium and weak privacy: ln2/500, ln6/500, ln4/200.
    pub fn reference_levels() -> [PrivacyLevel; 3] {
        [
            Self { epsilon: 2f64.ln() / 500.0 },
            Self { epsilon: 6f64.ln() / 500.0 },
            Self { epsilon: 4f64.ln() / 200.0 },
        ]
    }

    /// Maps two uniforms in (0, 1] to a Gamma(2, ε) radius.
    pub fn radius_from_uniforms(&self, u1: f64, u2: f64) -> f64 {
        -(u1.ln() + u2.ln()) / self.epsilon
    }

    pub fn sample_radius(&self, rng: &mut RandomSource) -> f64 {
        let u1 = rng.uniform_open_closed();
        let u2 = rng.uniform_open_closed();
        self.radius_from_uniforms(u1, u2)
    }

    /// C(r) = 1 - (1 + εr) e^(-εr).
    pub fn radius_cdf(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::param(format!("radius must be non-negative, got {r}")));
        }
        let s = self.epsilon * r;
        Ok(-((-s).exp_m1()) - s * (-s).exp())
    }

    /// The radius `r` with `radius_cdf(r) = p`, for `p` in [0, 1).
    pub fn inverse_radius_cdf(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::param(format!("probability must lie in [0, 1), got {p}")));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        let w = lambert_w_m1((p - 1.0) / E).expect("argument lies in [-1/e, 0)");
        Ok((-(w + 1.0) / self.epsilon).max(0.0))
    }
}

impl fmt::Display for PrivacyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.epsilon)
    }
}

/// Accepts either a bare ε (`0.00139`) or `l=<f>,r=<meters>`.
impl FromStr for PrivacyLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if !s.contains('=') {
            let eps = s
                .parse()
                .map_err(|_| Error::param(format!("invalid epsilon `{s}`")))?;
            return Self::new(eps);
        }
        let (mut l, mut r) = (None, None);
        for part in s.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::param(format!("invalid level component `{part}`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::param(format!("invalid number in `{part}`")))?;
            match key.trim() {
                "l" => l = Some(value),
                "r" => r = Some(value),
                other => return Err(Error::param(format!("unknown level key `{other}`"))),
            }
        }
        match (l, r) {
            (Some(l), Some(r)) => Self::from_level(l, r),
            _ => Err(Error::param("level needs both l= and r=")),
        }
    }
}

/// Lower real branch W₋₁ of the Lambert W function on [-1/e, 0).
pub fn lambert_w_m1(x: f64) -> Option<f64> {
    let branch_point = -1.0 / E;
    if !(x >= branch_point && x < 0.0) {
        return None;
    }
    if x == branch_point {
        return Some(-1.0);
    }
    let mut w = if x < -0.25 {
        // series about the branch point
        let p = -(2.0 * (1.0 + E * x)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    // Halley iteration on w e^w = x
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        let next = w - step;
        if !next.is_finite() {
            break;
        }
        let done = (next - w).abs() <= 4.0 * f64::EPSILON * next.abs();
        w = next.min(-1.0);
        if done {
            break;
        }
    }
    Some(w)
}

/// Deterministic pseudo-random stream. The same seed always yields the same
/// sequence, on every platform.
#[derive(Debug, Clone)]
pub struct RandomSource {
    rng: ChaCha12Rng,
}

impl RandomSource {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1], safe to pass to `ln`.
    pub fn uniform_open_closed(&mut self) -> f64 {
        1.0 - self.uniform()
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_str(s: &str) -> u64 {
    // FNV-1a, then a finalizer so short ids spread across all bits
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

/// Seed of obfuscation run `run` under `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    master ^ mix64(run as u64)
}

/// Seed of `user`'s stream within a run.
pub fn user_seed(run_seed: u64, user: &UserId) -> u64 {
    run_seed ^ hash_str(user.as_str())
}

/// Seed of a named auxiliary stream (e.g. the precision experiment).
pub fn stream_seed(seed: u64, label: &str) -> u64 {
    seed ^ hash_str(label).rotate_left(17)
}

/// An obfuscation configuration: planar-Laplace noise at some ε, or noise
/// disabled entirely. The disabled mode is used by identity checks; it is not
/// a limit of ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMechanism {
    Disabled,
    PlanarLaplace(PrivacyLevel),
}

impl NoiseMechanism {
    pub fn level(&self) -> Option<PrivacyLevel> {
        match self {
            NoiseMechanism::Disabled => None,
            NoiseMechanism::PlanarLaplace(level) => Some(*level),
        }
    }

    /// Label used in reports: ε, or `off`.
    pub fn label(&self) -> String {
        match self {
            NoiseMechanism::Disabled => "off".to_owned(),
            NoiseMechanism::PlanarLaplace(level) => level.to_string(),
        }
    }

    /// Draws a bearing, then a radius, and displaces `p` on the tangent
    /// plane.
    pub fn obfuscate_point(&self, p: GeoPoint, rng: &mut RandomSource) -> Result<GeoPoint> {
        match self {
            NoiseMechanism::Disabled => Ok(p),
            NoiseMechanism::PlanarLaplace(level) => {
                let theta = TAU * rng.uniform();
                let r = level.sample_radius(rng);
                geo::offset(p, r * theta.cos(), r * theta.sin())
            }
        }
    }

    pub fn obfuscate_trace(&self, trace: &MobilityTrace, rng: &mut RandomSource) -> Result<MobilityTrace> {
        let locations = trace
            .locations()
            .iter()
            .map(|l| Ok(l.with_point(self.obfuscate_point(l.point(), rng)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(MobilityTrace::from_sorted(trace.user().clone(), locations))
    }

    /// Extra query radius covering the true search disc with probability
    /// `alpha`; zero when noise is disabled.
    pub fn enlargement(&self, alpha: f64) -> Result<f64> {
        match self {
            NoiseMechanism::Disabled => Ok(0.0),
            NoiseMechanism::PlanarLaplace(level) => level.inverse_radius_cdf(alpha),
        }
    }
}

impl fmt::Display for NoiseMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}
