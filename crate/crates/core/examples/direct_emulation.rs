//! Emulates the composite chain `f2(f1(z))` directly and compares it with
//! linked emulators of the two components.

use blnet::emulator::{Design, FitConfig, RegressionBasis};
use blnet::network::{chain_spec, load_models, Network};
use blnet::testbed::{train_builtin, F1, F2, H_CHAIN};
use blnet::{Method, NodeModel};
use std::path::Path;

fn main() -> blnet::Result<()> {
    let basis = RegressionBasis::Linear;
    let fit = FitConfig::default();
    let spec = chain_spec();
    let exact = Network::new(spec.clone(), load_models(&spec, Path::new("."))?)?;
    let direct = exact.direct_emulate(Design::equally_spaced(16, (0.0, 10.0))?, basis.clone(), &fit)?;

    let linked = exact
        .clone()
        .with_model(1, NodeModel::Emulator(train_builtin(F1, Design::equally_spaced(8, (0.0, 10.0))?, &basis, &fit)?))?
        .with_model(2, NodeModel::Emulator(train_builtin(F2, Design::equally_spaced(8, (-0.5, 2.5))?, &basis, &fit)?))?;

    let (mut se_direct, mut se_linked) = (0.0, 0.0);
    let n = 200;
    for i in 0..n {
        let z = 10.0 * (i as f64 + 0.5) / n as f64;
        let truth = H_CHAIN.evaluate(&[z]);
        se_direct += (direct.predict(&[z])?.mean[0] - truth).powi(2);
        se_linked += (linked.propagate(&[z], &Method::Uible, i)?.terminal.mean[0] - truth).powi(2);
    }
    println!("direct emulator, 16 composite runs: RMSE {:.4}", (se_direct / n as f64).sqrt());
    println!("linked emulators, 8 + 8 runs:       RMSE {:.4}", (se_linked / n as f64).sqrt());
    Ok(())
}
