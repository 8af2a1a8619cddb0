//! Limiting probability that CAIC prefers the MA(1) space over the true
//! MA-free space: closed-form values and the plug-in estimate from one fit.
//!
//! ```text
//! cargo run --release --example overfit_probability -- [seed]
//! ```

use mcarma::levy::{simulate_sample, stream, Purpose, SimulationSettings};
use mcarma::model::nesting_map;
use mcarma::qmle::{fit, FitOptions};
use mcarma::scenario;
use mcarma::selection::{overfitting_probability, overfitting_probability_from};

fn main() -> mcarma::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(5, |a| a.parse().expect("seed must be an integer"));
    let reference = overfitting_probability_from(vec![2.0, 2.0], 2, 2.0)?;
    println!(
        "eigenvalues (2, 2), C = 2: P(2χ²₁ + 2χ²₁ > {}) = {:.4}; P(χ²₁ > 2) = {:.4}",
        reference.threshold, reference.probability, reference.simplified
    );

    let inner = scenario::ar_space();
    let outer = scenario::arma_space();
    let model = inner.build(&scenario::theta_ar())?;
    let sample = simulate_sample(&model, &scenario::brownian_driver(), &SimulationSettings::new(2000.0, 0.01, 1.0), None, &mut stream(seed, 0, Purpose::Driver))?;
    let nest = nesting_map(&inner, &outer)?;
    let base = FitOptions { n_starts: 0, max_evals: 20_000, ..FitOptions::default() };
    let fit0 = fit(&inner, &sample, &base.clone().with_warm_start(&scenario::theta_ar()))?;
    let fit_e = fit(&outer, &sample, &base.with_warm_start(&nest.embed(&fit0.theta_hat)))?;
    println!("n (L̂₃ − L̂₂) = {:.3}, CAIC threshold 4", sample.len() as f64 * (fit0.objective - fit_e.objective));
    let plug_in = overfitting_probability(&fit0, &fit_e, &nest, 2.0)?;
    println!("plug-in eigenvalues {:?}, probability {:.4}", plug_in.eigenvalues, plug_in.probability);
    Ok(())
}
