use qrchain::phys::{CoherenceTime, SystemParams, PhysicalConstants};
use qrchain::sampling::{estimate_mean, RngStream, rate_single_link_stoch};
use qrchain::clock::simulate_async;
use std::time::Instant;

fn main() {
    let c = PhysicalConstants::default();
    let t0 = Instant::now();
    let e = estimate_mean(0.5, 10_000_000, RngStream::new(1, 0)).unwrap();
    println!("estimate_mean 1e7 draws: {:?} ({} hits)", t0.elapsed(), e.successes);

    let mut p = SystemParams::new(100.0, 1);
    p.eta_qm = 0.5; p.eta_detector = 0.9;
    p.tau_mem_a = CoherenceTime::Finite(2e-4);
    p.tau_mem_b = CoherenceTime::Finite(2e-4);
    p.num_trials = 1_000_000;
    let t0 = Instant::now();
    let est = rate_single_link_stoch(&p, &c, RngStream::new(1, 0)).unwrap();
    println!("single-link stoch 1e6 trials: {:?} (rate {})", t0.elapsed(), est.rate_hz);

    // criterion 5 worst cell: n=4, L=100, tau=0.1ms
    let mut q = SystemParams::new(100.0, 4);
    q.eta_qm = 0.5; q.eta_detector = 0.9;
    q.tau_mem_a = CoherenceTime::Finite(1e-4);
    q.tau_mem_b = CoherenceTime::Finite(1e-4);
    q.num_trials = 1_000_000;
    let t0 = Instant::now();
    let sim = simulate_async(&q, &c, RngStream::new(1, 0)).unwrap();
    println!("async 1e6 trials n=4 tau=0.1ms: {:?} (succ {} fail {} timeout {})",
        t0.elapsed(), sim.successes, sim.all_links_failed, sim.timeouts);
}
