//! The two-tier global/local clock engine.
//!
//! A chain of `n` links is driven in discrete global steps of duration
//! `t' = L/(2vn)`. Each link owns two quantum memories; a memory is a
//! two-element cell holding a stored flag and a local clock that starts at
//! one unit when a storage event lands and advances once per global step
//! thereafter. The local clock is the memory's position on its decoherence
//! curve: at every global step each stored memory survives with probability
//! `e^{-t'/tau}`, which is exactly the one-step truncation of an exponential
//! lifetime.
//!
//! Synchronous distribution demands every link establish in the same slot,
//! so a successful trial always closes at one global unit. Asynchronous
//! distribution lets links establish independently and hold entanglement
//! until the whole chain is ready; a trial fails only when every link that
//! held entanglement at a step loses it in that same step, and a successful
//! trial records `T_GC`: the longest surviving local clock in units of `t'`
//! plus the midpoint-to-end-party communication time `L/(2v)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phys::{
    endpoint_communication_time, fiber_transmittance, internode_delay, local_time_unit,
    survival_probability, PhysicalConstants, SystemParams,
};
use crate::rates::eta_stoch_node;
use crate::sampling::{
    propagate_product_power, sample_four_means, BernoulliEstimate, RateEstimate, RngStream,
    Sampler, TRIAL_STREAM_BASE,
};

/// One quantum memory: a stored flag plus a local clock in units of `t'`.
///
/// The clock is zero exactly when nothing is stored and starts at one unit
/// upon storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemoryCell {
    stored: bool,
    local_clock: u64,
}

impl MemoryCell {
    pub fn stored(&self) -> bool {
        self.stored
    }

    pub fn local_clock(&self) -> u64 {
        self.local_clock
    }

    fn store(&mut self) {
        self.stored = true;
        self.local_clock = 1;
    }

    fn reset(&mut self) {
        self.stored = false;
        self.local_clock = 0;
    }

    fn tick(&mut self) {
        debug_assert!(self.stored);
        self.local_clock += 1;
    }
}

/// One elementary link: the two memories at its ends and whether the
/// intermediate swap has succeeded. Both cells store together and their
/// clocks advance together, so they stay equal while established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkState {
    pub mem_a: MemoryCell,
    pub mem_b: MemoryCell,
    established: bool,
}

impl LinkState {
    pub fn established(&self) -> bool {
        self.established
    }

    /// Units the link has held entanglement; zero when unestablished.
    pub fn held_units(&self) -> u64 {
        self.mem_a.local_clock.max(self.mem_b.local_clock)
    }

    fn establish(&mut self) {
        self.mem_a.store();
        self.mem_b.store();
        self.established = true;
    }

    fn reset(&mut self) {
        self.mem_a.reset();
        self.mem_b.reset();
        self.established = false;
    }
}

/// Whole-chain snapshot: the ordered links plus the global clock in units
/// of `t'`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChainState {
    pub links: Vec<LinkState>,
    pub global_clock: u64,
}

/// Per-attempt success probabilities of one link, fixed by the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkProbabilities {
    /// Storage in one end memory: `eta_qm`.
    pub storage: f64,
    /// One photon reaching and firing a detector at the intermediate
    /// station: `eta_d * e^{-aL/(2n)}`.
    pub transmission: f64,
    /// The intermediate swap itself: `eta_bsm`.
    pub bsm: f64,
}

impl LinkProbabilities {
    pub fn from_params(params: &SystemParams, constants: &PhysicalConstants) -> Result<Self> {
        let trans = fiber_transmittance(
            params.total_distance_km / (2.0 * params.num_links as f64),
            constants,
        )?;
        Ok(Self {
            storage: params.eta_qm,
            transmission: params.eta_detector * trans,
            bsm: params.eta_bsm,
        })
    }

    /// Product probability that a single attempt establishes the link.
    pub fn success_probability(&self) -> f64 {
        self.storage * self.storage * self.transmission * self.transmission * self.bsm
    }
}

/// One establishment attempt on an unestablished link.
///
/// Samples, in fixed order: storage A, storage B, photon transmission A,
/// photon transmission B, intermediate swap — five draws every call. The
/// link establishes (both cells set to stored with clock one) iff all five
/// succeed.
pub fn attempt_link(
    link: &mut LinkState,
    probs: &LinkProbabilities,
    sampler: &mut Sampler,
) -> bool {
    debug_assert!(!link.established);
    let storage_a = sampler.bernoulli_unchecked(probs.storage);
    let storage_b = sampler.bernoulli_unchecked(probs.storage);
    let photon_a = sampler.bernoulli_unchecked(probs.transmission);
    let photon_b = sampler.bernoulli_unchecked(probs.transmission);
    let bsm = sampler.bernoulli_unchecked(probs.bsm);
    if storage_a && storage_b && photon_a && photon_b && bsm {
        link.establish();
        true
    } else {
        false
    }
}

/// One decoherence step on an established link: advances both local clocks
/// one unit, then samples each memory's one-step survival. Either memory
/// failing tears the whole link down.
pub fn decohere_step(
    link: &mut LinkState,
    survival_a: f64,
    survival_b: f64,
    sampler: &mut Sampler,
) -> bool {
    debug_assert!(link.established);
    link.mem_a.tick();
    link.mem_b.tick();
    let a = sampler.bernoulli_unchecked(survival_a);
    let b = sampler.bernoulli_unchecked(survival_b);
    if a && b {
        true
    } else {
        link.reset();
        false
    }
}

/// Precomputed probabilities for synchronous trials.
#[derive(Debug, Clone)]
pub struct SyncContext {
    params: SystemParams,
    link_probs: LinkProbabilities,
    /// Swap success inside one repeater node: `eta_stoch`.
    node_swap: f64,
    /// Node-memory survival over the inter-node delay `t = L/(vn)`.
    node_survival_a: f64,
    node_survival_b: f64,
}

impl SyncContext {
    pub fn new(params: &SystemParams, constants: &PhysicalConstants) -> Result<Self> {
        params.validate()?;
        constants.validate()?;
        let t = internode_delay(params, constants);
        Ok(Self {
            params: params.clone(),
            link_probs: LinkProbabilities::from_params(params, constants)?,
            node_swap: eta_stoch_node(params),
            node_survival_a: survival_probability(t, params.tau_mem_a)?,
            node_survival_b: survival_probability(t, params.tau_mem_b)?,
        })
    }

    pub fn link_probabilities(&self) -> &LinkProbabilities {
        &self.link_probs
    }

    /// Exact success probability of one synchronous slot, for use as an
    /// oracle against the sampled frequency.
    pub fn success_probability(&self) -> f64 {
        let n = self.params.num_links;
        let per_node = self.node_swap * self.node_survival_a * self.node_survival_b;
        self.link_probs.success_probability().powi(n as i32)
            * per_node.powi(n as i32 - 1)
    }

    /// One synchronous slot: every link attempts, then every one of the
    /// `n-1` repeater nodes samples its swap and the survival of its two
    /// memories over the notification delay. Any failure discards the whole
    /// attempt; on success the global clock reads exactly one unit.
    pub fn run_trial(&self, sampler: &mut Sampler) -> bool {
        let n = self.params.num_links;
        let mut all_links = true;
        for _ in 0..n {
            let mut link = LinkState::default();
            if !attempt_link(&mut link, &self.link_probs, sampler) {
                all_links = false;
            }
        }
        if !all_links {
            return false;
        }
        let mut all_nodes = true;
        for _ in 0..n.saturating_sub(1) {
            let swap = sampler.bernoulli_unchecked(self.node_swap);
            let surv_a = sampler.bernoulli_unchecked(self.node_survival_a);
            let surv_b = sampler.bernoulli_unchecked(self.node_survival_b);
            if !(swap && surv_a && surv_b) {
                all_nodes = false;
            }
        }
        all_nodes
    }
}

/// Result of one asynchronous realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AsyncTrialOutcome {
    Success {
        /// Longest surviving local clock at completion, units of `t'`.
        t_gc_units: u64,
        /// `t_gc_units * t' + L/(2v)`.
        t_gc_seconds: f64,
        /// Global step at which the chain completed.
        completion_step: u64,
        /// Per link, the global step of the establishment that survived to
        /// completion.
        establishment_steps: Vec<u64>,
    },
    /// Every link holding entanglement at some step lost it in that step.
    AllLinksFailed { step: u64 },
    /// The step cap was reached; counted as a failure but kept
    /// distinguishable in diagnostics.
    TimedOut,
}

impl AsyncTrialOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Self::Success { .. })
    }

    pub fn t_gc_seconds(&self) -> Option<f64> {
        match self {
            Self::Success { t_gc_seconds, .. } => Some(*t_gc_seconds),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum TrialSummary {
    Success { t_gc_units: u64, completion_step: u64 },
    AllLinksFailed { step: u64 },
    TimedOut,
}

/// Precomputed probabilities and scratch-free trial runner for asynchronous
/// realizations.
#[derive(Debug, Clone)]
pub struct AsyncContext {
    params: SystemParams,
    link_probs: LinkProbabilities,
    /// One-step survival `e^{-t'/tau}` per memory side.
    step_survival_a: f64,
    step_survival_b: f64,
    t_prime_s: f64,
    endpoint_s: f64,
}

impl AsyncContext {
    pub fn new(params: &SystemParams, constants: &PhysicalConstants) -> Result<Self> {
        params.validate()?;
        constants.validate()?;
        let t_prime = local_time_unit(params, constants);
        Ok(Self {
            params: params.clone(),
            link_probs: LinkProbabilities::from_params(params, constants)?,
            step_survival_a: survival_probability(t_prime, params.tau_mem_a)?,
            step_survival_b: survival_probability(t_prime, params.tau_mem_b)?,
            t_prime_s: t_prime,
            endpoint_s: endpoint_communication_time(params, constants),
        })
    }

    pub fn link_probabilities(&self) -> &LinkProbabilities {
        &self.link_probs
    }

    /// A chain of fresh, unestablished links.
    pub fn fresh_chain(&self) -> ChainState {
        ChainState {
            links: vec![LinkState::default(); self.params.num_links as usize],
            global_clock: 0,
        }
    }

    /// One asynchronous realization from a fresh chain.
    pub fn run_trial(&self, sampler: &mut Sampler) -> AsyncTrialOutcome {
        let mut chain = self.fresh_chain();
        let mut establishment_steps = vec![0u64; self.params.num_links as usize];
        match self.run_trial_inner(&mut chain, &mut establishment_steps, sampler) {
            TrialSummary::Success {
                t_gc_units,
                completion_step,
            } => AsyncTrialOutcome::Success {
                t_gc_units,
                t_gc_seconds: self.t_gc_seconds(t_gc_units),
                completion_step,
                establishment_steps,
            },
            TrialSummary::AllLinksFailed { step } => AsyncTrialOutcome::AllLinksFailed { step },
            TrialSummary::TimedOut => AsyncTrialOutcome::TimedOut,
        }
    }

    fn t_gc_seconds(&self, t_gc_units: u64) -> f64 {
        t_gc_units as f64 * self.t_prime_s + self.endpoint_s
    }

    fn run_trial_inner(
        &self,
        chain: &mut ChainState,
        establishment_steps: &mut [u64],
        sampler: &mut Sampler,
    ) -> TrialSummary {
        for link in chain.links.iter_mut() {
            link.reset();
        }
        chain.global_clock = 0;
        establishment_steps.fill(0);

        for step in 1..=self.params.max_global_steps {
            chain.global_clock = step;

            // Attempt phase: every unestablished link retries this step.
            // `establishment_steps` doubles as the marker that separates
            // freshly stored links (stamped with the current step) from ones
            // that must face this step's decoherence test.
            for (i, link) in chain.links.iter_mut().enumerate() {
                if !link.established() && attempt_link(link, &self.link_probs, sampler) {
                    establishment_steps[i] = step;
                }
            }
            let had_any = chain.links.iter().any(|l| l.established());

            // Decoherence phase: links established in earlier steps advance
            // their clocks and sample the one-step survival.
            for (i, link) in chain.links.iter_mut().enumerate() {
                if link.established() && establishment_steps[i] < step {
                    decohere_step(link, self.step_survival_a, self.step_survival_b, sampler);
                }
            }

            let now_any = chain.links.iter().any(|l| l.established());
            if had_any && !now_any {
                return TrialSummary::AllLinksFailed { step };
            }
            if chain.links.iter().all(|l| l.established()) {
                let t_gc_units = chain.links.iter().map(|l| l.held_units()).max().unwrap_or(0);
                return TrialSummary::Success {
                    t_gc_units,
                    completion_step: step,
                };
            }
        }
        TrialSummary::TimedOut
    }
}

/// Aggregate of an asynchronous simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsyncSimResult {
    pub successes: u64,
    /// Failures by simultaneous loss across all holding links.
    pub all_links_failed: u64,
    /// Failures by hitting the global step cap.
    pub timeouts: u64,
    /// `T_GC` of every successful trial, in trial order, seconds.
    pub t_gc_samples_s: Vec<f64>,
    /// The four bracket means (storage A/B at `eta_qm`, coherence A/B over
    /// the inter-node delay), sampled on dedicated substreams.
    pub component_estimates: [BernoulliEstimate; 4],
    pub params: SystemParams,
}

impl AsyncSimResult {
    pub fn failures(&self) -> u64 {
        self.all_links_failed + self.timeouts
    }

    /// Mean global clock time over all successes, seconds.
    pub fn mean_t_gc_s(&self) -> Option<f64> {
        if self.t_gc_samples_s.is_empty() {
            None
        } else {
            Some(self.t_gc_samples_s.iter().sum::<f64>() / self.t_gc_samples_s.len() as f64)
        }
    }

    /// Standard error of the mean `T_GC`.
    pub fn t_gc_std_error_s(&self) -> Option<f64> {
        let mean = self.mean_t_gc_s()?;
        let n = self.t_gc_samples_s.len();
        if n < 2 {
            return Some(0.0);
        }
        let var = self
            .t_gc_samples_s
            .iter()
            .map(|t| (t - mean) * (t - mean))
            .sum::<f64>()
            / (n as f64 - 1.0);
        Some((var / n as f64).sqrt())
    }
}

const ASYNC_BATCH: u64 = 4096;

/// Runs `params.num_trials` independent asynchronous realizations on
/// per-trial substreams of `base` and aggregates them.
///
/// Trial `i` draws from `base.substream(TRIAL_STREAM_BASE + i)`, so the
/// aggregate is independent of batching and worker count.
pub fn simulate_async(
    params: &SystemParams,
    constants: &PhysicalConstants,
    base: RngStream,
) -> Result<AsyncSimResult> {
    let ctx = AsyncContext::new(params, constants)?;
    let t = internode_delay(params, constants);
    let component_estimates = sample_four_means(
        params.eta_qm,
        survival_probability(t, params.tau_mem_a)?,
        survival_probability(t, params.tau_mem_b)?,
        params.num_trials,
        base,
    )?;

    struct Batch {
        successes: u64,
        all_links_failed: u64,
        timeouts: u64,
        t_gc: Vec<f64>,
    }

    let trials = params.num_trials;
    let batches = trials.div_ceil(ASYNC_BATCH);
    let run_batch = |b: u64| {
        let lo = b * ASYNC_BATCH;
        let hi = (lo + ASYNC_BATCH).min(trials);
        let mut chain = ctx.fresh_chain();
        let mut steps = vec![0u64; ctx.params.num_links as usize];
        let mut out = Batch {
            successes: 0,
            all_links_failed: 0,
            timeouts: 0,
            t_gc: Vec::new(),
        };
        for i in lo..hi {
            let mut sampler = base.substream(TRIAL_STREAM_BASE + i).sampler();
            match ctx.run_trial_inner(&mut chain, &mut steps, &mut sampler) {
                TrialSummary::Success { t_gc_units, .. } => {
                    out.successes += 1;
                    out.t_gc.push(ctx.t_gc_seconds(t_gc_units));
                }
                TrialSummary::AllLinksFailed { .. } => out.all_links_failed += 1,
                TrialSummary::TimedOut => out.timeouts += 1,
            }
        }
        out
    };

    let results = crate::par::map_indexed(batches, run_batch);

    let mut sim = AsyncSimResult {
        successes: 0,
        all_links_failed: 0,
        timeouts: 0,
        t_gc_samples_s: Vec::new(),
        component_estimates,
        params: params.clone(),
    };
    for batch in results {
        sim.successes += batch.successes;
        sim.all_links_failed += batch.all_links_failed;
        sim.timeouts += batch.timeouts;
        sim.t_gc_samples_s.extend(batch.t_gc);
    }
    Ok(sim)
}

/// Asynchronous rate from a finished simulation:
/// `(2vn/(<T_GC>*L)) * eta_qm^2 * eta_bsm * (eta_d*e^{-aL/2n})^2
///  * [eta_stoch * m1*m2*m3*m4]^(n-1)`.
///
/// The swap chain and bracket means multiply in here, outside the engine's
/// trial dynamics. Refuses to divide by an undefined mean when the
/// simulation recorded no successes.
pub fn rate_async(sim: &AsyncSimResult, constants: &PhysicalConstants) -> Result<RateEstimate> {
    let params = &sim.params;
    let mean_t_gc = sim.mean_t_gc_s().ok_or(Error::NoSuccesses {
        trials: params.num_trials,
    })?;
    let l = params.total_distance_km;
    let v = constants.photon_velocity_km_s;
    let n = params.num_links;
    let trans = fiber_transmittance(l / (2.0 * n as f64), constants)?;
    let per_photon = params.eta_detector * trans;
    let coeff = (2.0 * v * n as f64 / (mean_t_gc * l))
        * params.eta_qm
        * params.eta_qm
        * params.eta_bsm
        * per_photon
        * per_photon
        * eta_stoch_node(params).powi(n as i32 - 1);
    let (rate_hz, se_means) = propagate_product_power(coeff, &sim.component_estimates, n - 1);
    let rel_var_t = match sim.t_gc_std_error_s() {
        Some(se) if mean_t_gc > 0.0 => (se / mean_t_gc) * (se / mean_t_gc),
        _ => 0.0,
    };
    let std_error_hz = (se_means * se_means + rate_hz * rate_hz * rel_var_t).sqrt();
    Ok(RateEstimate {
        rate_hz,
        std_error_hz,
        components: sim.component_estimates,
        params: params.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phys::CoherenceTime;

    fn constants() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn ideal_params(n: u32) -> SystemParams {
        let mut p = SystemParams::new(100.0, n);
        p.eta_qm = 1.0;
        p.eta_detector = 1.0;
        p.eta_bsm = 1.0;
        p.eta_qr = 1.0;
        p
    }

    #[test]
    fn attempt_link_ideal_always_succeeds() {
        let mut c = constants();
        c.attenuation_db_per_km = 0.0;
        let probs = LinkProbabilities::from_params(&ideal_params(2), &c).unwrap();
        let mut sampler = RngStream::new(1, 0).sampler();
        for _ in 0..100 {
            let mut link = LinkState::default();
            assert!(attempt_link(&mut link, &probs, &mut sampler));
            assert!(link.established());
            assert_eq!(link.mem_a.local_clock(), 1);
            assert_eq!(link.mem_b.local_clock(), 1);
        }
    }

    #[test]
    fn attempt_link_dead_storage_never_succeeds() {
        let mut p = ideal_params(2);
        p.eta_qm = 0.0;
        let probs = LinkProbabilities::from_params(&p, &constants()).unwrap();
        let mut sampler = RngStream::new(1, 0).sampler();
        for _ in 0..100 {
            let mut link = LinkState::default();
            assert!(!attempt_link(&mut link, &probs, &mut sampler));
            assert!(!link.established());
            assert_eq!(link.mem_a.local_clock(), 0);
        }
    }

    #[test]
    fn attempt_link_empirical_frequency_matches_product() {
        let mut p = SystemParams::new(100.0, 2);
        p.eta_qm = 0.5;
        p.eta_detector = 0.9;
        p.eta_bsm = 0.5;
        let probs = LinkProbabilities::from_params(&p, &constants()).unwrap();
        let expected = probs.success_probability();
        assert!((expected - 0.010125).abs() < 1e-12);
        let n = 1_000_000u64;
        let mut sampler = RngStream::new(99, 0).sampler();
        let mut link = LinkState::default();
        let mut hits = 0u64;
        for _ in 0..n {
            link.reset();
            if attempt_link(&mut link, &probs, &mut sampler) {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!(
            (freq - expected).abs() < 3.0 * sigma,
            "freq {freq} vs expected {expected} (sigma {sigma})"
        );
    }

    #[test]
    fn decohere_unbounded_always_survives() {
        let mut link = LinkState::default();
        link.establish();
        let mut sampler = RngStream::new(4, 0).sampler();
        for step in 2..100u64 {
            assert!(decohere_step(&mut link, 1.0, 1.0, &mut sampler));
            assert_eq!(link.mem_a.local_clock(), step);
            assert_eq!(link.mem_b.local_clock(), step);
        }
    }

    #[test]
    fn decohere_zero_survival_dies_immediately() {
        let mut link = LinkState::default();
        link.establish();
        let mut sampler = RngStream::new(4, 0).sampler();
        assert!(!decohere_step(&mut link, 0.0, 0.0, &mut sampler));
        assert!(!link.established());
        assert_eq!(link.mem_a.local_clock(), 0);
        assert_eq!(link.mem_b.local_clock(), 0);
    }

    #[test]
    fn survival_streaks_are_geometric() {
        // chi-squared fit of streak length against the geometric law
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let s = (-0.2f64).exp(); // per-step survival
        let streaks = 100_000u64;
        let mut sampler = RngStream::new(31, 0).sampler();
        let mut counts = vec![0u64; 60];
        for _ in 0..streaks {
            let mut link = LinkState::default();
            link.establish();
            let mut steps = 0u64;
            loop {
                steps += 1;
                if !decohere_step(&mut link, s, 1.0, &mut sampler) {
                    break;
                }
            }
            let idx = (steps as usize - 1).min(counts.len() - 1);
            counts[idx] += 1;
        }
        // expected geometric pmf s^(k-1)(1-s), last bin holds the tail
        let mut chi2 = 0.0;
        let mut dof = 0i64;
        for (k, &obs) in counts.iter().enumerate() {
            let p = if k + 1 < counts.len() {
                s.powi(k as i32) * (1.0 - s)
            } else {
                s.powi(k as i32)
            };
            let expected = p * streaks as f64;
            if expected >= 5.0 {
                chi2 += (obs as f64 - expected).powi(2) / expected;
                dof += 1;
            }
        }
        let crit = ChiSquared::new((dof - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 {chi2:.2} >= {crit:.2}");
    }

    #[test]
    fn sync_trial_ideal_always_succeeds() {
        let mut c = constants();
        c.attenuation_db_per_km = 0.0;
        let ctx = SyncContext::new(&ideal_params(3), &c).unwrap();
        let mut sampler = RngStream::new(8, 0).sampler();
        for _ in 0..100 {
            assert!(ctx.run_trial(&mut sampler));
        }
    }

    #[test]
    fn sync_trial_dead_bsm_never_succeeds() {
        let mut p = ideal_params(3);
        p.eta_bsm = 0.0;
        let ctx = SyncContext::new(&p, &constants()).unwrap();
        let mut sampler = RngStream::new(8, 0).sampler();
        for _ in 0..100 {
            assert!(!ctx.run_trial(&mut sampler));
        }
    }

    #[test]
    fn sync_trial_frequency_matches_product_probability() {
        let mut p = SystemParams::new(60.0, 3);
        p.eta_qm = 0.7;
        p.eta_detector = 0.9;
        p.eta_bsm = 0.5;
        p.eta_qr = 0.5;
        p.tau_mem_a = CoherenceTime::Finite(1e-3);
        p.tau_mem_b = CoherenceTime::Finite(5e-4);
        let ctx = SyncContext::new(&p, &constants()).unwrap();
        let expected = ctx.success_probability();
        let n = 1_000_000u64;
        let mut sampler = RngStream::new(123, 0).sampler();
        let mut hits = 0u64;
        for _ in 0..n {
            if ctx.run_trial(&mut sampler) {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!(
            (freq - expected).abs() < 3.0 * sigma,
            "freq {freq} vs expected {expected}"
        );
    }

    #[test]
    fn async_trial_ideal_single_link() {
        let mut c = constants();
        c.attenuation_db_per_km = 0.0;
        let ctx = AsyncContext::new(&ideal_params(1), &c).unwrap();
        let mut sampler = RngStream::new(2, 0).sampler();
        match ctx.run_trial(&mut sampler) {
            AsyncTrialOutcome::Success {
                t_gc_units,
                t_gc_seconds,
                completion_step,
                establishment_steps,
            } => {
                assert_eq!(t_gc_units, 1);
                assert_eq!(completion_step, 1);
                assert_eq!(establishment_steps, vec![1]);
                // t' + L/(2v) = L/v for one link
                assert!((t_gc_seconds - 100.0 / 2.0e5).abs() < 1e-18);
            }
            other => panic!("expected success, got {other:?}"),
        }
    }

    #[test]
    fn async_trial_zero_probability_times_out() {
        let mut p = ideal_params(2);
        p.eta_qm = 0.0;
        p.max_global_steps = 50;
        let ctx = AsyncContext::new(&p, &constants()).unwrap();
        let mut sampler = RngStream::new(2, 0).sampler();
        assert_eq!(ctx.run_trial(&mut sampler), AsyncTrialOutcome::TimedOut);
    }

    #[test]
    fn async_trial_clocks_stay_paired_and_valid() {
        // state-machine fuzz: drive trials with mid-success probabilities and
        // check the cell invariants after every engine transition
        let mut p = SystemParams::new(40.0, 3);
        p.eta_qm = 0.6;
        p.eta_detector = 0.8;
        p.tau_mem_a = CoherenceTime::Finite(2e-4);
        p.tau_mem_b = CoherenceTime::Finite(1e-4);
        p.max_global_steps = 200;
        let ctx = AsyncContext::new(&p, &constants()).unwrap();
        let probs = ctx.link_probabilities().clone();
        let mut sampler = RngStream::new(77, 0).sampler();
        for _ in 0..2000 {
            let mut link = LinkState::default();
            if attempt_link(&mut link, &probs, &mut sampler) {
                loop {
                    assert!(link.mem_a.stored() && link.mem_b.stored());
                    assert_eq!(link.mem_a.local_clock(), link.mem_b.local_clock());
                    assert!(link.mem_a.local_clock() >= 1);
                    if !decohere_step(&mut link, 0.8, 0.9, &mut sampler) {
                        break;
                    }
                }
            }
            assert!(!link.established());
            assert_eq!(link.mem_a.local_clock(), 0);
            assert_eq!(link.mem_b.local_clock(), 0);
        }
    }

    #[test]
    fn async_unbounded_tau_never_fails_by_loss() {
        let mut p = SystemParams::new(100.0, 3);
        p.eta_qm = 0.5;
        p.eta_detector = 0.5;
        p.num_trials = 10_000;
        let sim = simulate_async(&p, &constants(), RngStream::new(5, 0)).unwrap();
        assert_eq!(sim.all_links_failed, 0);
        assert_eq!(sim.successes + sim.timeouts, p.num_trials);
    }

    #[test]
    fn simulate_async_deterministic_success_params() {
        let mut c = constants();
        c.attenuation_db_per_km = 0.0;
        let mut p = ideal_params(1);
        p.num_trials = 500;
        let sim = simulate_async(&p, &c, RngStream::new(9, 0)).unwrap();
        assert_eq!(sim.successes, 500);
        assert_eq!(sim.failures(), 0);
        let mean = sim.mean_t_gc_s().unwrap();
        assert!((mean - 100.0 / 2.0e5).abs() < 1e-18);
    }

    #[test]
    fn simulate_async_reproducible() {
        let mut p = SystemParams::new(30.0, 2);
        p.eta_qm = 0.5;
        p.eta_detector = 0.5;
        p.tau_mem_a = CoherenceTime::Finite(1e-4);
        p.tau_mem_b = CoherenceTime::Finite(1e-4);
        p.num_trials = 20_000;
        let a = simulate_async(&p, &constants(), RngStream::new(3, 0)).unwrap();
        let b = simulate_async(&p, &constants(), RngStream::new(3, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.successes + a.failures(), p.num_trials);
    }

    #[test]
    fn success_fraction_monotone_in_tau() {
        let mut fractions = Vec::new();
        for tau in [5e-5, 1e-4, 2e-4] {
            let mut p = SystemParams::new(30.0, 3);
            p.eta_qm = 0.5;
            p.eta_detector = 0.5;
            p.tau_mem_a = CoherenceTime::Finite(tau);
            p.tau_mem_b = CoherenceTime::Finite(tau);
            p.num_trials = 100_000;
            let sim = simulate_async(&p, &constants(), RngStream::new(21, 0)).unwrap();
            fractions.push(sim.successes as f64 / p.num_trials as f64);
        }
        assert!(
            fractions[0] <= fractions[1] && fractions[1] <= fractions[2],
            "{fractions:?}"
        );
    }

    #[test]
    fn rate_async_rejects_zero_successes() {
        let mut p = SystemParams::new(100.0, 2);
        p.eta_qm = 0.0;
        p.num_trials = 100;
        p.max_global_steps = 10;
        let sim = simulate_async(&p, &constants(), RngStream::new(1, 0)).unwrap();
        assert_eq!(sim.successes, 0);
        assert!(matches!(
            rate_async(&sim, &constants()),
            Err(Error::NoSuccesses { trials: 100 })
        ));
    }

    #[test]
    fn rate_async_hand_assembled_example() {
        // <T_GC> = 1 ms, all four means exactly 1, n=2, L=100 km:
        // (2vn/(T*L)) * 0.25 * 0.5 * (0.9 * 10^-0.5)^2 * 0.2025
        let mut p = SystemParams::new(100.0, 2);
        p.eta_qm = 0.5;
        p.eta_detector = 0.9;
        p.eta_bsm = 0.5;
        p.eta_qr = 0.5;
        let ones = BernoulliEstimate {
            successes: 1000,
            trials: 1000,
        };
        let sim = AsyncSimResult {
            successes: 4,
            all_links_failed: 0,
            timeouts: 0,
            t_gc_samples_s: vec![1e-3; 4],
            component_estimates: [ones; 4],
            params: p,
        };
        let est = rate_async(&sim, &constants()).unwrap();
        assert!((est.rate_hz - 16402.5).abs() < 1e-9);
    }

    #[test]
    fn rate_async_n1_bracket_collapses() {
        let mut c = constants();
        c.attenuation_db_per_km = 0.0;
        let mut p = ideal_params(1);
        p.eta_qm = 0.5;
        p.num_trials = 2000;
        p.max_global_steps = 100_000;
        let sim = simulate_async(&p, &c, RngStream::new(17, 0)).unwrap();
        let est = rate_async(&sim, &c).unwrap();
        let mean = sim.mean_t_gc_s().unwrap();
        let expected = (2.0 * 2.0e5 / (mean * 100.0)) * 0.25;
        assert!((est.rate_hz - expected).abs() < 1e-9 * expected);
    }
}
