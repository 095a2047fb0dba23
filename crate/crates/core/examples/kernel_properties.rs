//! Checks the uncertain-input correlation: its Gram matrices stay positive
//! semi-definite and it never exceeds the Monte Carlo expectation of the
//! Gaussian correlation between independent draws.

use blnet::uible::{check_kernel_psd, check_lower_bound};
use blnet::UncertainInput;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> blnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let theta = [0.4, 0.9];
    let specs: Vec<UncertainInput> = (0..25)
        .map(|_| {
            let m = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let v = [rng.random_range(0.0..0.1), rng.random_range(0.0..0.1)];
            UncertainInput::diagonal(&m, &v)
        })
        .collect::<blnet::Result<_>>()?;
    let report = check_kernel_psd(&specs, &theta)?;
    println!("Gram matrix of {} inputs: min eigenvalue {:.3e}", specs.len(), report.min_eigenvalue);

    for i in 0..4 {
        let r = check_lower_bound(&specs[i], &specs[i + 1], &theta, 100_000, i as u64)?;
        println!(
            "pair {i}: kernel {:.5} <= Monte Carlo {:.5} +- {:.5}",
            r.analytic, r.mc_estimate, r.mc_std_err
        );
    }
    Ok(())
}
