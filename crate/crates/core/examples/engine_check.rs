//! Prints the asynchronous engine's summary statistics for one config so
//! they can be cross-checked against an independent implementation.

use qrchain::clock::simulate_async;
use qrchain::phys::{CoherenceTime, PhysicalConstants, SystemParams};
use qrchain::sampling::RngStream;

fn main() {
    let c = PhysicalConstants::default();
    let mut p = SystemParams::new(10.0, 3);
    p.eta_qm = 0.5;
    p.eta_detector = 0.5;
    p.tau_mem_a = CoherenceTime::Finite(1e-4);
    p.tau_mem_b = CoherenceTime::Finite(1e-4);
    p.num_trials = 1_000_000;
    let sim = simulate_async(&p, &c, RngStream::new(1, 0)).unwrap();
    println!(
        "L=10 n=3 tau=1e-4 eta_d=0.5: successes={} all_failed={} timeouts={} p_succ={:.5} mean_tgc={:.6e}",
        sim.successes,
        sim.all_links_failed,
        sim.timeouts,
        sim.successes as f64 / p.num_trials as f64,
        sim.mean_t_gc_s().unwrap()
    );
    let mean_units = (sim.mean_t_gc_s().unwrap() - 10.0 / (2.0 * 2.0e5)) / (10.0 / (2.0 * 2.0e5 * 3.0));
    println!("mean t_gc in units of t': {mean_units:.3}");
}
