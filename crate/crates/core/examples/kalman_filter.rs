//! Discretizes the benchmark model, solves the steady-state Riccati
//! equation, prints the filter dump as JSON and checks that the
//! pseudo-innovations of a Gaussian sample have covariance close to `V`.
//!
//! ```text
//! cargo run --release --example kalman_filter
//! ```

use mcarma::kalman::{filter, DiscretizedModel};
use mcarma::levy::{exact_gaussian_sample, stream, Purpose};
use mcarma::scenario;

fn main() -> mcarma::Result<()> {
    let model = scenario::arma_space().build(&scenario::theta_arma())?;
    let disc = DiscretizedModel::new(&model, 1.0)?;
    let dump = serde_json::to_string_pretty(&disc.dump()).expect("filter dump serializes");
    println!("{dump}");

    let sample = exact_gaussian_sample(&model, &scenario::brownian_driver(), 1.0, 5000, &mut stream(3, 0, Purpose::ExactSampler))?;
    let out = filter(&disc, &sample, None)?;
    let e = &out.innovations;
    let cov = e.transpose() * e / e.nrows() as f64;
    println!("L̂ at the truth {:.5}", out.value);
    println!("innovation covariance {cov}steady-state V {}", disc.innovation_cov());
    Ok(())
}
