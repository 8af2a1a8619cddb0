//! Simulates the benchmark model driven by the NIG Lévy process with an
//! Euler scheme, writes the observations as CSV and compares their lag-0
//! autocovariance with the stationary value.
//!
//! ```text
//! cargo run --release --example simulate_nig -- [n] [seed] [out.csv]
//! ```

use std::path::PathBuf;

use mcarma::levy::{driver_moments, simulate_sample, stream, Purpose, SimulationSettings};
use mcarma::{linalg, scenario};

fn main() -> mcarma::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(2000, |a| a.parse().expect("n must be an integer"));
    let seed: u64 = args.next().map_or(1, |a| a.parse().expect("seed must be an integer"));
    let out = args.next().map(PathBuf::from);

    let driver = scenario::nig_driver();
    let (mean, cov) = driver_moments(&driver)?;
    println!("NIG driver: E L(1) = {mean}Cov L(1) = {cov}");

    let model = scenario::ar_space().build(&scenario::theta_ar())?;
    let settings = SimulationSettings::new(n as f64, 0.01, 1.0);
    let sample = simulate_sample(&model, &driver, &settings, None, &mut stream(seed, 0, Purpose::Driver))?;
    println!("simulated {} observations of dimension {}", sample.len(), sample.dim());

    let y = sample.values();
    let empirical = y.transpose() * y / y.nrows() as f64;
    let b = model.b();
    let stationary = linalg::solve_continuous_lyapunov(model.a(), &(b * model.sigma_l() * b.transpose()))?;
    println!("sample E[Y Yᵀ] = {empirical}stationary C Ω∞ Cᵀ = {}", model.c() * stationary * model.c().transpose());

    if let Some(path) = out {
        sample.save(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
