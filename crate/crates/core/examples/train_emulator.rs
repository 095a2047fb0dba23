//! Fits an emulator of `f1` on eight runs and prints predictions off the design.

use blnet::emulator::{train, Design, FitConfig, RegressionBasis};
use blnet::testbed::f1;
use nalgebra::DMatrix;

fn main() -> blnet::Result<()> {
    let design = Design::equally_spaced(8, (0.0, 10.0))?;
    let x = design.native();
    let y = DMatrix::from_fn(8, 1, |i, _| f1(x[(i, 0)]));
    let em = train(design, y, RegressionBasis::Linear, &FitConfig::default())?;

    let h = em.hyperparameters();
    println!("theta = {:.4}, sigma2 = {:.4}", h.theta[0], h.sigma2[0]);
    println!("beta = {:?}", em.beta().as_slice());
    println!("{:>6} {:>10} {:>10} {:>10}", "x", "truth", "mean", "sd");
    for i in 0..=10 {
        let x = i as f64 + 0.35;
        let p = em.predict(&[x])?;
        println!("{x:6.2} {:10.4} {:10.4} {:10.4}", f1(x), p.mean[0], p.covariance[(0, 0)].sqrt());
    }
    Ok(())
}
