//! Quasi maximum likelihood for a univariate CAR(1) process: simulate,
//! fit, and report the estimate with sandwich standard errors.
//!
//! ```text
//! cargo run --release --example fit_car1 -- [n] [seed]
//! ```

use mcarma::levy::{simulate_sample, stream, DriverSpec, Purpose, SimulationSettings};
use mcarma::model::{KroneckerIndex, ParameterSpace};
use mcarma::qmle::{fit, FitOptions};
use nalgebra::DVector;

fn main() -> mcarma::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(2000, |a| a.parse().expect("n must be an integer"));
    let seed: u64 = args.next().map_or(7, |a| a.parse().expect("seed must be an integer"));

    // dY = a Y dt + σ dW with θ = (a, σ)
    let space = ParameterSpace::new(KroneckerIndex::new(vec![1])?, 0)?;
    let truth = DVector::from_vec(vec![-1.0, 1.0]);
    let model = space.build(&truth)?;
    let driver = DriverSpec::brownian(model.sigma_l().clone())?;
    let sample = simulate_sample(&model, &driver, &SimulationSettings::new(n as f64, 0.01, 1.0), None, &mut stream(seed, 0, Purpose::Driver))?;

    let result = fit(&space, &sample, &FitOptions { n_starts: 4, ..FitOptions::default() })?;
    println!("objective {:.6} after {} evaluations (converged {})", result.objective, result.n_evals, result.converged);
    let sandwich = result.sandwich.as_ref();
    for (j, name) in ["a", "σ"].iter().enumerate() {
        let se = sandwich.map(|s| (s[(j, j)] / n as f64).sqrt());
        match se {
            Some(se) => println!("{name}: true {:+.4}, estimate {:+.4} ± {:.4}", truth[j], result.theta_hat[j], se),
            None => println!("{name}: true {:+.4}, estimate {:+.4}", truth[j], result.theta_hat[j]),
        }
    }
    if let (Some(h), Some(i)) = (&result.h_hat, &result.i_hat) {
        println!("Ĥ = {h}Î = {i}(Î ≈ 2Ĥ for a Gaussian driver)");
    }
    Ok(())
}
