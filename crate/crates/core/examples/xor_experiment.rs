//! Runs the bundled exclusive-or experiment and prints per-level test AUCs
//! of the exclusive-or class.
//!
//! cargo run --release --example xor_experiment -- [num_seeds]

use boosted_cascade::experiments::run_xor;
use boosted_cascade::par::Exec;

fn main() -> Result<(), boosted_cascade::Error> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let (mut base, mut ensemble) = (0.0, 0.0);
    for seed in 0..seeds {
        let run = run_xor(seed, Exec::default())?;
        let levels: Vec<String> = run.level_aucs.iter().map(|a| format!("{a:.4}")).collect();
        println!(
            "seed {seed}: levels [{}] ensemble {:.4} gain {:+.4}",
            levels.join(", "),
            run.ensemble_auc,
            run.gain()
        );
        base += run.level_aucs[0];
        ensemble += run.ensemble_auc;
    }
    let k = seeds as f64;
    println!("mean: level 0 {:.4} ensemble {:.4} gain {:+.4}", base / k, ensemble / k, (ensemble - base) / k);
    Ok(())
}
