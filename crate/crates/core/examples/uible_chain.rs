//! Links emulators of `f1` and `f2` in closed form, passing the first
//! emulator's belief as an uncertain input to the second.

use blnet::emulator::{Design, FitConfig, RegressionBasis};
use blnet::testbed::{f1, f2, train_builtin, F1, F2};
use blnet::uible::uible_predict;
use blnet::UncertainInput;

fn main() -> blnet::Result<()> {
    let basis = RegressionBasis::Linear;
    let fit = FitConfig::default();
    let e1 = train_builtin(F1, Design::equally_spaced(8, (0.0, 10.0))?, &basis, &fit)?;
    let e2 = train_builtin(F2, Design::equally_spaced(8, (-0.5, 2.5))?, &basis, &fit)?;

    println!("{:>5} {:>9} {:>9} {:>9} {:>7}", "z", "truth", "mean", "sd", "|err|/sd");
    for i in 0..=20 {
        let z = 0.5 * i as f64;
        let xi = UncertainInput::from_belief(&e1.predict(&[z])?);
        let b = uible_predict(&e2, &xi)?;
        let sd = b.covariance[(0, 0)].sqrt();
        let truth = f2(f1(z));
        println!("{z:5.1} {truth:9.4} {:9.4} {sd:9.4} {:7.2}", b.mean[0], (truth - b.mean[0]).abs() / sd);
    }
    Ok(())
}
