//! Physical constants, unit conventions, and the elementary probability
//! functions everything else composes.
//!
//! Units are fixed across the crate: distances in kilometres, times in
//! seconds, efficiencies as probabilities in `[0, 1]`. Fiber attenuation is
//! stored in dB/km exactly as quoted for telecom fiber and converted on use,
//! so a transmittance `e^{-alpha*d}` is evaluated as `10^(-att*d/10)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagation speed and fiber loss of the quantum channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Photon velocity in fiber, km/s.
    pub photon_velocity_km_s: f64,
    /// Fiber attenuation, dB/km.
    pub attenuation_db_per_km: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            photon_velocity_km_s: 2.0e5,
            attenuation_db_per_km: 0.2,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.photon_velocity_km_s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "photon velocity must be positive, got {}",
                self.photon_velocity_km_s
            )));
        }
        if !(self.attenuation_db_per_km >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "attenuation must be non-negative, got {}",
                self.attenuation_db_per_km
            )));
        }
        Ok(())
    }
}

/// Quantum memory coherence time.
///
/// `Unbounded` is a first-class no-decay mode (not a large float):
/// [`survival_probability`] returns exactly 1.0 for it, which the
/// infinite-coherence analyses rely on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoherenceTime {
    Unbounded,
    /// Finite coherence time in seconds; must be positive.
    Finite(f64),
}

impl CoherenceTime {
    /// Builds a coherence time from seconds; `f64::INFINITY` selects
    /// `Unbounded`.
    pub fn from_seconds(tau_s: f64) -> Result<Self> {
        if tau_s == f64::INFINITY {
            Ok(Self::Unbounded)
        } else if tau_s > 0.0 && tau_s.is_finite() {
            Ok(Self::Finite(tau_s))
        } else {
            Err(Error::InvalidParameter(format!(
                "coherence time must be positive or infinite, got {tau_s}"
            )))
        }
    }

    /// Seconds, with `Unbounded` mapping to `f64::INFINITY`.
    pub fn seconds(&self) -> f64 {
        match self {
            Self::Unbounded => f64::INFINITY,
            Self::Finite(tau) => *tau,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Self::Unbounded)
    }
}

/// Full parameterization of one chain run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// End-to-end distance between Alice and Bob, km.
    pub total_distance_km: f64,
    /// Number of elementary links in the chain.
    pub num_links: u32,
    /// Quantum memory storage efficiency.
    pub eta_qm: f64,
    /// Single-photon detector efficiency.
    pub eta_detector: f64,
    /// Bell-state measurement success probability (1/2 for linear optics).
    pub eta_bsm: f64,
    /// Repeater-node coupling efficiency.
    pub eta_qr: f64,
    /// Coherence time of the memory on the A side of each link.
    pub tau_mem_a: CoherenceTime,
    /// Coherence time of the memory on the B side of each link.
    pub tau_mem_b: CoherenceTime,
    /// Monte Carlo trial count.
    pub num_trials: u64,
    /// Base RNG seed; all substreams derive from it.
    pub seed: u64,
    /// Hard cap on global clock steps per asynchronous trial.
    pub max_global_steps: u64,
}

impl SystemParams {
    /// Parameters with the default efficiencies (all 0.5), unbounded
    /// coherence, 10^6 trials, and a 10^6-step cap.
    pub fn new(total_distance_km: f64, num_links: u32) -> Self {
        Self {
            total_distance_km,
            num_links,
            eta_qm: 0.5,
            eta_detector: 0.5,
            eta_bsm: 0.5,
            eta_qr: 0.5,
            tau_mem_a: CoherenceTime::Unbounded,
            tau_mem_b: CoherenceTime::Unbounded,
            num_trials: 1_000_000,
            seed: 0,
            max_global_steps: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_distance_km > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "total distance must be positive, got {}",
                self.total_distance_km
            )));
        }
        if self.num_links < 1 {
            return Err(Error::InvalidParameter("num_links must be >= 1".into()));
        }
        for (name, eta) in [
            ("eta_qm", self.eta_qm),
            ("eta_detector", self.eta_detector),
            ("eta_bsm", self.eta_bsm),
            ("eta_qr", self.eta_qr),
        ] {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {eta}"
                )));
            }
        }
        for (name, tau) in [("tau_mem_a", self.tau_mem_a), ("tau_mem_b", self.tau_mem_b)] {
            if let CoherenceTime::Finite(t) = tau {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "{name} must be positive, got {t}"
                    )));
                }
            }
        }
        if self.num_trials < 1 {
            return Err(Error::InvalidParameter("num_trials must be >= 1".into()));
        }
        if self.max_global_steps < 1 {
            return Err(Error::InvalidParameter(
                "max_global_steps must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Fiber transmittance over `distance_km`: `10^(-att*d/10)`.
///
/// Monotone non-increasing in distance; exactly 1 at zero distance.
pub fn fiber_transmittance(distance_km: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(distance_km >= 0.0) {
        return Err(Error::Domain(format!(
            "distance must be non-negative, got {distance_km}"
        )));
    }
    Ok(10f64.powf(-constants.attenuation_db_per_km * distance_km / 10.0))
}

/// Probability that a stored state survives `elapsed_s` of decoherence:
/// `e^(-t/tau)`, exactly 1.0 for unbounded coherence.
pub fn survival_probability(elapsed_s: f64, tau: CoherenceTime) -> Result<f64> {
    if !(elapsed_s >= 0.0) {
        return Err(Error::Domain(format!(
            "elapsed time must be non-negative, got {elapsed_s}"
        )));
    }
    match tau {
        CoherenceTime::Unbounded => Ok(1.0),
        CoherenceTime::Finite(t) => Ok((-elapsed_s / t).exp()),
    }
}

/// Duration of one clock unit, `t' = L/(2vn)`: the travel time from a source
/// to the intermediate measurement station of its link.
pub fn local_time_unit(params: &SystemParams, constants: &PhysicalConstants) -> f64 {
    params.total_distance_km / (2.0 * constants.photon_velocity_km_s * params.num_links as f64)
}

/// Round-trip notification time of the single-link protocol, `t = L/v`.
pub fn notification_time_single_link(
    params: &SystemParams,
    constants: &PhysicalConstants,
) -> f64 {
    params.total_distance_km / constants.photon_velocity_km_s
}

/// Communication time from the chain midpoint to an end party, `L/(2v)`.
pub fn endpoint_communication_time(
    params: &SystemParams,
    constants: &PhysicalConstants,
) -> f64 {
    params.total_distance_km / (2.0 * constants.photon_velocity_km_s)
}

/// Inter-node notification delay used by the multi-link formulas,
/// `t = L/(vn)`: the round trip between adjacent stations via the
/// intermediate measurement apparatus. Reduces to `L/v` at `n = 1`.
pub fn internode_delay(params: &SystemParams, constants: &PhysicalConstants) -> f64 {
    params.total_distance_km / (constants.photon_velocity_km_s * params.num_links as f64)
}
