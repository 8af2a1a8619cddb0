//! Builds the benchmark MCARMA model in Echelon form, prints its state-space
//! matrices and polynomial form, and checks that the MA-free space embeds in
//! the MA(1) space.
//!
//! ```text
//! cargo run --release --example echelon_model
//! ```

use mcarma::model::{echelon_polynomials, is_stable_minimal, nesting_map};
use mcarma::scenario;
use nalgebra::Complex;

fn main() -> mcarma::Result<()> {
    let space = scenario::arma_space();
    let theta = scenario::theta_arma();
    println!("space m = {}, MA cap {}, N(Θ) = {}", space.kronecker(), space.ma_cap(), space.n_params());

    let model = space.build(&theta)?;
    println!("A = {}B = {}C = {}Σᴸ = {}", model.a(), model.b(), model.c(), model.sigma_l());
    let report = is_stable_minimal(&model, 1.0);
    println!("stable {}, minimal {}", report.stable, report.minimal);

    let polys = echelon_polynomials(&model, space.kronecker())?;
    let pair = polys.to_polynomial_pair(1e-12)?;
    println!("monic AR degree {}, MA degree {}", pair.ar_degree(), polys.ma_degree(1e-12));
    let z = Complex::new(0.0, 1.0);
    println!("C(zI − A)⁻¹B at z = i: {}", model.transfer_function(z).expect("z is not an eigenvalue"));

    let inner = scenario::ar_space();
    let nest = nesting_map(&inner, &space)?;
    let embedded = nest.embed(&scenario::theta_ar());
    let same = inner.build(&scenario::theta_ar())?.a() == space.build(&embedded)?.a();
    println!("space 3 embeds in space 2 with offset {}: identical A {same}", nest.offset());
    Ok(())
}
