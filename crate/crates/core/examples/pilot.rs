//! Runs the desk-scale synthetic experiment and pins its AUROCs.
//!
//! `cargo run -p hlpd-core --example pilot -- <lockfile>`

use std::time::Instant;

use hlpd::evalkit::{run_synthetic_experiment, SyntheticExperimentSpec};
use serde_json::json;

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let spec = SyntheticExperimentSpec::desk_scale(format!("{dir}/corpus_a.txt"), format!("{dir}/corpus_b.txt"));
    let out = std::env::args().nth(1).expect("usage: pilot <lockfile>");
    let start = Instant::now();
    let report = run_synthetic_experiment(&spec).expect("experiment runs");
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    let seeds: Vec<_> = report
        .per_seed
        .iter()
        .map(|s| {
            let h = s.humanize.as_ref().expect("desk-scale spec humanizes");
            json!({
                "seed": s.seed,
                "auroc_before": s.auroc_before,
                "auroc_after": s.auroc_after,
                "heldout_margin_after": s.heldout_margin_after,
                "humanize_auroc_first": h.auroc_per_iteration[0],
                "humanize_auroc_last": h.auroc_per_iteration[h.auroc_per_iteration.len() - 1],
            })
        })
        .collect();
    let lock = json!({ "tolerance": 0.02, "seeds": seeds });
    std::fs::write(&out, serde_json::to_string_pretty(&lock).unwrap() + "\n").expect("lockfile written");
    println!("{}", serde_json::to_string_pretty(&lock).unwrap());
}
