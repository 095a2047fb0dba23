//! Links emulators of `f1` and `f2` by sampling the uncertain intermediate
//! output through the second emulator.

use blnet::emulator::{Design, FitConfig, RegressionBasis};
use blnet::testbed::{f2, train_builtin, F1, F2};
use blnet::uis::uis_predict;
use blnet::{SamplingPolicy, UncertainInput};

fn main() -> blnet::Result<()> {
    let basis = RegressionBasis::Linear;
    let fit = FitConfig::default();
    let e1 = train_builtin(F1, Design::equally_spaced(8, (0.0, 10.0))?, &basis, &fit)?;
    let e2 = train_builtin(F2, Design::equally_spaced(8, (-0.5, 2.5))?, &basis, &fit)?;

    println!("{:>5} {:>9} {:>9} {:>9} {:>11} {:>11}", "z", "truth", "mean", "sd", "var_input", "var_emul");
    for i in 0..=10 {
        let z = i as f64;
        let x = e1.predict(&[z])?;
        let xi = UncertainInput::from_belief(&x);
        let r = uis_predict(&e2, &xi, &SamplingPolicy::normal(200, 1))?;
        let truth = f2(blnet::testbed::f1(z));
        println!(
            "{z:5.1} {truth:9.4} {:9.4} {:9.4} {:11.3e} {:11.3e}",
            r.belief.mean[0],
            r.belief.covariance[(0, 0)].sqrt(),
            r.var_from_input[(0, 0)],
            r.var_from_emulator[(0, 0)],
        );
    }
    Ok(())
}
