// Temporary calibration runs for the acceptance protocol.

use deepimv::data::{synthesize_dataset, SynthConfig};
use deepimv::evaluation::{missing_rate_sweep, run_ablation};
use deepimv::model::Fusion;
use deepimv::training::TrainConfig;

fn arg_f64(n: usize, default: f64) -> f64 {
    std::env::args()
        .nth(n)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn arg_usize(n: usize, default: usize) -> usize {
    std::env::args()
        .nth(n)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn protocol_data(noise: f64, view_dim: usize) -> SynthConfig {
    let mut cfg =
        SynthConfig::with_partitioned_factors(2000, 4, 8, view_dim, noise, 0.08, 20240501);
    cfg.factor_subsets = (0..4)
        .map(|v| (0..5).map(|j| (2 * v + j) % 8).collect())
        .collect();
    cfg
}

fn protocol_train(dropout: f64, beta: f64, alpha: f64) -> TrainConfig {
    TrainConfig {
        epochs: 60,
        batch_size: 64,
        learning_rate: 1e-3,
        alpha,
        beta,
        dropout,
        fusion: Fusion::Poe,
        seed: 7,
        patience: 12,
        latent_dim: 12,
        encoder_hidden: vec![48],
        predictor_hidden: vec![16],
        select_on_joint: true,
        ..TrainConfig::default()
    }
}

fn main() {
    // args: mode repeats noise dropout r
    let mode = std::env::args().nth(1).unwrap_or_else(|| "ablate".into());
    let repeats = arg_usize(2, 3);
    let noise = arg_f64(3, 0.4);
    let dropout = arg_f64(4, 0.2);
    let r = arg_f64(5, 0.5);
    let view_dim = arg_usize(6, 16);
    let beta = arg_f64(7, 0.01);
    let alpha = arg_f64(8, 1.0);
    let ds = synthesize_dataset(&protocol_data(noise, view_dim)).unwrap();
    let cfg = protocol_train(dropout, beta, alpha);
    let start = std::time::Instant::now();
    match mode.as_str() {
        "ablate" => {
            let report = run_ablation(&cfg, &ds, repeats, r).unwrap();
            for variant in ["moe", "moe_marginal", "poe", "poe_marginal"] {
                let v1 = report.row(&[variant, "1"]).unwrap().mean;
                let v4 = report.row(&[variant, "4"]).unwrap().mean;
                println!(
                    "d={view_dim} beta={beta} noise={noise} dropout={dropout} r={r} {variant:<14} v1={v1:.4} v4={v4:.4}"
                );
            }
            let d_moe = report.row(&["moe_marginal", "4"]).unwrap().mean
                - report.row(&["moe", "4"]).unwrap().mean;
            let d_poe = report.row(&["poe_marginal", "4"]).unwrap().mean
                - report.row(&["poe", "4"]).unwrap().mean;
            println!("    margins: moe {d_moe:+.4}  poe {d_poe:+.4}");
        }
        "sweep" => {
            let report =
                missing_rate_sweep(&cfg, &ds, &[0.0, 0.3, 0.6, 0.9], repeats, true).unwrap();
            print!("{}", report.to_csv());
        }
        other => eprintln!("unknown mode {other}"),
    }
    eprintln!("elapsed: {:.1}s", start.elapsed().as_secs_f64());
}
