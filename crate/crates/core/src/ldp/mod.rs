//! ε-local-differential-privacy release of embeddings through the Laplace
//! mechanism.
//!
//! An embedding is clipped to the ℓ1 ball of radius `R = Δψ/2`, so any two
//! releasable inputs are at ℓ1 distance at most `Δψ`, and then every
//! coordinate receives independent `Laplace(0, Δψ/ε)` noise. `ε = ∞` turns
//! the noise off while keeping the clip.

mod profile;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use profile::{account_ref, PrivateProfile, PROFILE_FORMAT_VERSION};

use crate::data::{AccountId, BankId};
use crate::error::{Error, Result};
use crate::kernel::l1_norm;
use crate::rng::Rng;

pub const DEFAULT_SENSITIVITY: f64 = 1.0;
/// Budget standing in for the `ε → 0⁺` arm of a sweep.
pub const EPSILON_NEAR_ZERO: f64 = 0.01;
pub const MECHANISM_TAG: &str = "laplace";

/// Scales `z` onto the ℓ1 ball of radius `radius` when it lies outside it.
pub fn clip_l1(z: &[f64], radius: f64) -> Vec<f64> {
    let norm = l1_norm(z);
    if norm <= radius {
        return z.to_vec();
    }
    let k = radius / norm;
    let mut out: Vec<f64> = z.iter().map(|v| v * k).collect();
    // Rounding in the rescale can overshoot by an ulp or two.
    while l1_norm(&out) > radius {
        out.iter_mut().for_each(|v| *v *= 1.0 - f64::EPSILON);
    }
    out
}

/// Vector-Jacobian product of [`clip_l1`] at the unclipped input `z`.
pub fn clip_l1_backward(z: &[f64], dy: &[f64], radius: f64) -> Vec<f64> {
    let s = l1_norm(z);
    if s <= radius {
        return dy.to_vec();
    }
    let zdy: f64 = z.iter().zip(dy).map(|(a, b)| a * b).sum();
    z.iter()
        .zip(dy)
        .map(|(zi, di)| radius / s * (di - zi.signum() * zdy / s))
        .collect()
}

/// One Laplace draw by inverse CDF from `u` uniform on `(-1/2, 1/2)`.
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Draws `Laplace(0, scale)` from any uniform bit source.
pub fn sample_laplace<R: RngCore + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    loop {
        // 53-bit uniform on [0, 1); the lower endpoint maps to an infinite draw.
        let r = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        if r > 0.0 {
            let w = laplace_from_uniform(r - 0.5, scale);
            return if w == 0.0 { 0.0 } else { w };
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    /// Privacy budget; `f64::INFINITY` disables the noise.
    pub epsilon: f64,
    pub sensitivity: f64,
    pub dim: usize,
}

impl MechanismConfig {
    pub fn new(epsilon: f64, dim: usize) -> Result<Self> {
        let c = Self {
            epsilon,
            sensitivity: DEFAULT_SENSITIVITY,
            dim,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(format!("privacy budget must be positive, got {}", self.epsilon)));
        }
        if !(self.sensitivity > 0.0 && self.sensitivity.is_finite()) {
            return Err(Error::Config(format!("sensitivity must be positive, got {}", self.sensitivity)));
        }
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(())
    }

    pub fn clip_radius(&self) -> f64 {
        self.sensitivity / 2.0
    }

    /// Laplace scale `Δψ/ε`; zero when the noise is off.
    pub fn scale(&self) -> f64 {
        if self.noise_free() {
            0.0
        } else {
            self.sensitivity / self.epsilon
        }
    }

    pub fn noise_free(&self) -> bool {
        self.epsilon.is_infinite()
    }

    /// Linear shrinkage `σ²/(σ² + 2b²)` that a receiver may apply to a
    /// release, with `σ² = R²/m` the largest mean per-coordinate second
    /// moment inside the clip ball. Exactly 1 when the noise is off.
    pub fn shrinkage(&self) -> f64 {
        if self.noise_free() {
            return 1.0;
        }
        let r = self.clip_radius();
        let prior = r * r / self.dim as f64;
        let b = self.scale();
        prior / (prior + 2.0 * b * b)
    }

    /// Clips and noises `z`, drawing from `rng`.
    pub fn perturb<R: RngCore + ?Sized>(&self, z: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if z.len() != self.dim {
            return Err(Error::dim("publish", format!("m = {}", self.dim), format!("embedding of {}", z.len())));
        }
        let mut out = clip_l1(z, self.clip_radius());
        if !self.noise_free() {
            let b = self.scale();
            for v in &mut out {
                *v += sample_laplace(rng, b);
            }
        }
        Ok(out)
    }

    /// `log p(o | z) − log p(o | z′)` under the product Laplace density.
    pub fn log_density_ratio(&self, z: &[f64], z_alt: &[f64], o: &[f64]) -> Result<f64> {
        if z.len() != self.dim || z_alt.len() != self.dim || o.len() != self.dim {
            return Err(Error::dim("log_density_ratio", self.dim, format!("{}/{}/{}", z.len(), z_alt.len(), o.len())));
        }
        if self.noise_free() {
            return Err(Error::Usage("density ratio is undefined without noise".into()));
        }
        let b = self.scale();
        let s: f64 = o
            .iter()
            .zip(z)
            .zip(z_alt)
            .map(|((o, a), c)| (o - c).abs() - (o - a).abs())
            .sum();
        Ok(s / b)
    }
}

/// A bank's release mechanism with its own noise stream.
#[derive(Debug, Clone)]
pub struct Mechanism {
    pub config: MechanismConfig,
    pub bank: BankId,
    salt: u64,
    rng: Rng,
}

impl Mechanism {
    pub fn new(config: MechanismConfig, bank: BankId, salt: u64, rng: Rng) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            bank,
            salt,
            rng,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon
    }

    pub fn publish(&mut self, account: AccountId, timestamp: i64, z: &[f64]) -> Result<PrivateProfile> {
        let vector = self.config.perturb(z, &mut self.rng)?;
        Ok(self.wrap(account, timestamp, vector))
    }

    /// Publishes using an externally supplied noise stream, so callers can
    /// derive per-sample streams independent of scheduling order.
    pub fn publish_with<R: RngCore + ?Sized>(
        &self,
        rng: &mut R,
        account: AccountId,
        timestamp: i64,
        z: &[f64],
    ) -> Result<PrivateProfile> {
        let vector = self.config.perturb(z, rng)?;
        Ok(self.wrap(account, timestamp, vector))
    }

    fn wrap(&self, account: AccountId, timestamp: i64, vector: Vec<f64>) -> PrivateProfile {
        PrivateProfile {
            version: PROFILE_FORMAT_VERSION,
            bank: self.bank,
            account_ref: account_ref(self.salt, account),
            timestamp,
            epsilon: self.config.epsilon,
            mechanism: MECHANISM_TAG.to_string(),
            vector,
        }
    }
}

/// Label used in tables: `→0⁺` for the near-zero arm, `∞` for noise off.
pub fn epsilon_label(epsilon: f64) -> String {
    if epsilon.is_infinite() {
        "inf".into()
    } else if epsilon == EPSILON_NEAR_ZERO {
        "->0+".into()
    } else {
        format!("{epsilon}")
    }
}
