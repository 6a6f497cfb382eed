//! Seeded random-number streams and the Bernoulli-mean rate estimators.
//!
//! Every stochastic quantity in the crate draws from a [`RngStream`]: a
//! (seed, stream id) pair over ChaCha8, whose independent streams make
//! substreams independent by construction. Identical (seed, stream id)
//! always reproduces the identical sample sequence, and parallel fan-out
//! assigns one substream per unit of work so that serial and parallel runs
//! agree bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phys::{
    fiber_transmittance, internode_delay, notification_time_single_link, survival_probability,
    PhysicalConstants, SystemParams,
};
use crate::rates::eta_stoch_node;

/// Substream offsets for the four Bernoulli means of an estimator, in the
/// fixed order: storage A, storage B, coherence A, coherence B.
pub(crate) const MEAN_STREAMS: [u64; 4] = [0, 1, 2, 3];
/// First substream offset used for per-trial engine streams.
pub(crate) const TRIAL_STREAM_BASE: u64 = 8;

/// Descriptor of a reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A related stream at `stream_id + offset`; distinct offsets give
    /// statistically independent sequences.
    pub fn substream(&self, offset: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: self.stream_id.wrapping_add(offset),
        }
    }

    /// Instantiates the sampler for this stream.
    pub fn sampler(&self) -> Sampler {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        Sampler { rng }
    }
}

/// Single-owner source of uniform variates; never shared across workers.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// One Bernoulli draw from exactly one uniform variate. The caller
    /// guarantees `p` is in [0, 1].
    #[inline]
    pub(crate) fn bernoulli_unchecked(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

/// One Bernoulli draw with probability `p`, consuming exactly one uniform
/// variate from the sampler.
pub fn sample_bernoulli(p: f64, sampler: &mut Sampler) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "Bernoulli probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(sampler.bernoulli_unchecked(p))
}

/// Success count over a fixed number of Bernoulli trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BernoulliEstimate {
    pub successes: u64,
    pub trials: u64,
}

impl BernoulliEstimate {
    pub fn mean(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    /// Binomial standard error `sqrt(m(1-m)/N)`.
    pub fn std_error(&self) -> f64 {
        let m = self.mean();
        (m * (1.0 - m) / self.trials as f64).sqrt()
    }
}

/// Estimates a Bernoulli mean over exactly `n_trials` independent draws.
pub fn estimate_mean(p: f64, n_trials: u64, stream: RngStream) -> Result<BernoulliEstimate> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "Bernoulli probability must lie in [0, 1], got {p}"
        )));
    }
    if n_trials < 1 {
        return Err(Error::InvalidParameter("n_trials must be >= 1".into()));
    }
    let mut sampler = stream.sampler();
    let mut successes = 0u64;
    for _ in 0..n_trials {
        if sampler.bernoulli_unchecked(p) {
            successes += 1;
        }
    }
    Ok(BernoulliEstimate {
        successes,
        trials: n_trials,
    })
}

/// A Monte Carlo rate with first-order propagated standard error and the
/// component estimates it was assembled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate_hz: f64,
    pub std_error_hz: f64,
    /// Storage A, storage B, coherence A, coherence B.
    pub components: [BernoulliEstimate; 4],
    pub params: SystemParams,
}

/// Rate and error of `coeff * (m1*m2*m3*m4)^power` by first-order
/// propagation of the four independent mean errors.
pub(crate) fn propagate_product_power(
    coeff: f64,
    components: &[BernoulliEstimate; 4],
    power: u32,
) -> (f64, f64) {
    let means: Vec<f64> = components.iter().map(|c| c.mean()).collect();
    let product: f64 = means.iter().map(|m| m.powi(power as i32)).product();
    let rate = coeff * product;
    if power == 0 {
        return (coeff, 0.0);
    }
    let mut var = 0.0;
    for i in 0..4 {
        // d(rate)/d(m_i) = coeff * power * m_i^(power-1) * prod_{j!=i} m_j^power
        let mut deriv = coeff * power as f64 * means[i].powi(power as i32 - 1);
        for (j, m) in means.iter().enumerate() {
            if j != i {
                deriv *= m.powi(power as i32);
            }
        }
        let se = components[i].std_error();
        var += (deriv * se) * (deriv * se);
    }
    (rate, var.sqrt())
}

pub(crate) fn sample_four_means(
    storage_p: f64,
    coherence_a_p: f64,
    coherence_b_p: f64,
    n_trials: u64,
    stream: RngStream,
) -> Result<[BernoulliEstimate; 4]> {
    let ps = [storage_p, storage_p, coherence_a_p, coherence_b_p];
    let mut out = [BernoulliEstimate {
        successes: 0,
        trials: 0,
    }; 4];
    for (i, (&p, &offset)) in ps.iter().zip(MEAN_STREAMS.iter()).enumerate() {
        out[i] = estimate_mean(p, n_trials, stream.substream(offset))?;
    }
    Ok(out)
}

/// Stochastic single-link rate: the deterministic prefactor
/// `(v/L) * eta_bsm * eta_d^2 * (e^{-aL/2})^2` times the product of four
/// sampled means — storage at each end memory (success probability
/// `eta_qm`) and coherence over the notification round trip `t = L/v`
/// (success probability `e^{-t/tau}`).
pub fn rate_single_link_stoch(
    params: &SystemParams,
    constants: &PhysicalConstants,
    stream: RngStream,
) -> Result<RateEstimate> {
    params.validate()?;
    constants.validate()?;
    let l = params.total_distance_km;
    let v = constants.photon_velocity_km_s;
    let trans = fiber_transmittance(l / 2.0, constants)?;
    let prefactor = (v / l)
        * params.eta_bsm
        * params.eta_detector
        * params.eta_detector
        * trans
        * trans;
    let t = notification_time_single_link(params, constants);
    let components = sample_four_means(
        params.eta_qm,
        survival_probability(t, params.tau_mem_a)?,
        survival_probability(t, params.tau_mem_b)?,
        params.num_trials,
        stream,
    )?;
    let (rate_hz, std_error_hz) = propagate_product_power(prefactor, &components, 1);
    Ok(RateEstimate {
        rate_hz,
        std_error_hz,
        components,
        params: params.clone(),
    })
}

/// Stochastic synchronous multi-link rate: the prefactor
/// `(2vn/L) * eta_qm^2 * (eta_bsm*(eta_d*e^{-aL/2n})^2)^n` times
/// `[eta_stoch * m1*m2*m3*m4]^(n-1)`, with the coherence means sampled over
/// the inter-node delay `t = L/(vn)`.
pub fn rate_multilink_sync_stoch(
    params: &SystemParams,
    constants: &PhysicalConstants,
    stream: RngStream,
) -> Result<RateEstimate> {
    params.validate()?;
    constants.validate()?;
    let l = params.total_distance_km;
    let v = constants.photon_velocity_km_s;
    let n = params.num_links;
    let trans = fiber_transmittance(l / (2.0 * n as f64), constants)?;
    let per_photon = params.eta_detector * trans;
    let per_link = params.eta_bsm * per_photon * per_photon;
    let prefactor = (2.0 * v * n as f64 / l)
        * params.eta_qm
        * params.eta_qm
        * per_link.powi(n as i32);
    let t = internode_delay(params, constants);
    let components = sample_four_means(
        params.eta_qm,
        survival_probability(t, params.tau_mem_a)?,
        survival_probability(t, params.tau_mem_b)?,
        params.num_trials,
        stream,
    )?;
    let coeff = prefactor * eta_stoch_node(params).powi(n as i32 - 1);
    let (rate_hz, std_error_hz) = propagate_product_power(coeff, &components, n - 1);
    Ok(RateEstimate {
        rate_hz,
        std_error_hz,
        components,
        params: params.clone(),
    })
}
