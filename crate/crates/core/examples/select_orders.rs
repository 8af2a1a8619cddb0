//! Fits all eight benchmark candidate spaces to one simulated sample and
//! reports AIC, CAIC and BIC values and choices.
//!
//! ```text
//! cargo run --release --example select_orders -- [seed]
//! ```

use mcarma::levy::{simulate_sample, stream, Purpose, SimulationSettings};
use mcarma::qmle::FitOptions;
use mcarma::scenario;
use mcarma::selection::{select, Candidate, CriterionSpec};

fn main() -> mcarma::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(11, |a| a.parse().expect("seed must be an integer"));
    let truth_space = scenario::ar_space();
    let truth = scenario::theta_ar();
    let model = truth_space.build(&truth)?;
    let sample = simulate_sample(&model, &scenario::nig_driver(), &SimulationSettings::new(2000.0, 0.01, 1.0), None, &mut stream(seed, 0, Purpose::Driver))?;

    let candidates: Vec<Candidate> = scenario::candidate_spaces()?
        .into_iter()
        .map(|(id, space)| {
            let mut c = Candidate::new(id, space);
            if let Some(w) = c.space.transfer_from(&truth_space, &truth) {
                c.warm_starts.push(w);
            }
            c
        })
        .collect();
    let opts = FitOptions { n_starts: 2, max_evals: 20_000, ..FitOptions::default() };
    let report = select(&candidates, &sample, &[CriterionSpec::Aic, CriterionSpec::Caic, CriterionSpec::Bic], &opts)?;
    print!("{}", report.to_csv()?);
    for (criterion, chosen) in report.criteria.iter().zip(&report.chosen) {
        println!("{criterion} chooses space {}", chosen.as_deref().unwrap_or("none"));
    }
    Ok(())
}
