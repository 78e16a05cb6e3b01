//! Minimal end-to-end run: train one brightness direction for a short
//! while, then print its score curve over the alpha grid.
//!
//!     cargo run --release --example quick_sweep [steps]

use latentdirs::directions::{train, Model, TrainConfig};
use latentdirs::evaluation::{alpha_sweep, build_test_set, ols_slope_ci};
use latentdirs::generator::{init_generator, Generator};
use latentdirs::scorers::ScorerKind;

fn main() {
    let steps: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2_000);
    let gen = Generator::with_defaults(init_generator(11, 16, 10));
    let config = TrainConfig {
        seed: 7,
        steps,
        ..TrainConfig::default()
    };
    println!("training 1 brightness direction for {steps} steps ...");
    let (bank, state) = train(&config, &gen).expect("training succeeds");
    println!(
        "loss: first {:.4}, last {:.4}",
        state.loss_total_history.first().unwrap(),
        state.loss_total_history.last().unwrap()
    );

    let model = Model::Bank(bank);
    let test = build_test_set(99, 64, 2, &gen, config.trunc);
    let sweep = alpha_sweep(&model, &test, &gen, ScorerKind::Brightness).unwrap();
    let curve = sweep.result(0);
    for (i, alpha) in curve.alphas.iter().enumerate() {
        let bar = "#".repeat((curve.mean[i] * 40.0).round() as usize);
        println!("alpha {alpha:+.1}  mean {:.4}  {bar}", curve.mean[i]);
    }
    let fit = ols_slope_ci(&sweep.pooled_points(0)).unwrap();
    println!(
        "slope {:.3} (95% CI [{:.3}, {:.3}]) over {} points",
        fit.beta, fit.ci_low, fit.ci_high, fit.n
    );
}
