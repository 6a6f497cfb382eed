//! Closed-form deterministic rate expressions.
//!
//! These serve as oracles for the Monte Carlo estimators and as the dashed
//! reference curves of the rate-versus-distance plots.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::phys::{
    fiber_transmittance, internode_delay, notification_time_single_link, survival_probability,
    PhysicalConstants, SystemParams,
};

/// A deterministic rate in events/second, carrying the inputs it was
/// computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateValue {
    pub rate_hz: f64,
    pub params: SystemParams,
}

/// Composite efficiency of one repeater node including its two memories:
/// `eta_bsm * eta_qr * eta_qm^2 * eta_d^2`.
pub fn eta_det_node(params: &SystemParams) -> f64 {
    params.eta_bsm * params.eta_qr * params.eta_qm * params.eta_qm
        * params.eta_detector * params.eta_detector
}

/// Node efficiency with the memory factors stripped (those are sampled
/// stochastically instead): `eta_bsm * eta_qr * eta_d^2`.
pub fn eta_stoch_node(params: &SystemParams) -> f64 {
    params.eta_bsm * params.eta_qr * params.eta_detector * params.eta_detector
}

/// Deterministic single-link distribution rate:
/// `(v/L) * eta_bsm * (eta_qm*eta_d*e^{-aL/2})^2 * e^{-t/tauA} * e^{-t/tauB}`
/// with `t = L/v`.
pub fn rate_single_link_det(
    params: &SystemParams,
    constants: &PhysicalConstants,
) -> Result<RateValue> {
    params.validate()?;
    constants.validate()?;
    let l = params.total_distance_km;
    let v = constants.photon_velocity_km_s;
    let trans = fiber_transmittance(l / 2.0, constants)?;
    let t = notification_time_single_link(params, constants);
    let per_photon = params.eta_qm * params.eta_detector * trans;
    let rate = (v / l)
        * params.eta_bsm
        * per_photon
        * per_photon
        * survival_probability(t, params.tau_mem_a)?
        * survival_probability(t, params.tau_mem_b)?;
    Ok(RateValue {
        rate_hz: rate,
        params: params.clone(),
    })
}

/// Rate of direct transmission to the midpoint station with no memories:
/// the single-link expression with the memory efficiency and decay factors
/// removed. Reconstructed reference curve; the source equation set does not
/// print it.
pub fn rate_direct_transmission(
    params: &SystemParams,
    constants: &PhysicalConstants,
) -> Result<RateValue> {
    params.validate()?;
    constants.validate()?;
    let l = params.total_distance_km;
    let v = constants.photon_velocity_km_s;
    let trans = fiber_transmittance(l / 2.0, constants)?;
    let per_photon = params.eta_detector * trans;
    Ok(RateValue {
        rate_hz: (v / l) * params.eta_bsm * per_photon * per_photon,
        params: params.clone(),
    })
}

/// Deterministic synchronous multi-link rate:
/// `(2vn/L) * eta_qm^2 * (eta_bsm*(eta_d*e^{-aL/2n})^2)^n
///  * [eta_det * e^{-t/(tauA+tauB)}]^(n-1)` with `t = L/(vn)`.
///
/// The bracket's decay exponent divides by the *sum* of the coherence times,
/// as printed in the source expression, not by each one separately.
pub fn rate_multilink_sync_det(
    params: &SystemParams,
    constants: &PhysicalConstants,
) -> Result<RateValue> {
    params.validate()?;
    constants.validate()?;
    let l = params.total_distance_km;
    let v = constants.photon_velocity_km_s;
    let n = params.num_links as f64;
    let trans = fiber_transmittance(l / (2.0 * n), constants)?;
    let per_photon = params.eta_detector * trans;
    let per_link = params.eta_bsm * per_photon * per_photon;
    let t = internode_delay(params, constants);
    let tau_sum = params.tau_mem_a.seconds() + params.tau_mem_b.seconds();
    let decay = if tau_sum.is_infinite() {
        1.0
    } else {
        (-t / tau_sum).exp()
    };
    let bracket = eta_det_node(params) * decay;
    let rate = (2.0 * v * n / l)
        * params.eta_qm
        * params.eta_qm
        * per_link.powi(params.num_links as i32)
        * bracket.powi(params.num_links as i32 - 1);
    Ok(RateValue {
        rate_hz: rate,
        params: params.clone(),
    })
}
