//! Propagates beliefs through the four-node network with trained emulators
//! at every node, by both linking methods.

use blnet::emulator::{maximin_lhs, Design, FitConfig, RegressionBasis};
use blnet::network::{load_models, network_spec, Network};
use blnet::testbed::{train_builtin, F1, F2, F3, F4, H_NETWORK};
use blnet::{Method, NodeModel, SamplingPolicy};
use std::path::Path;

fn main() -> blnet::Result<()> {
    let basis = RegressionBasis::Linear;
    let fit = FitConfig::default();
    let spec = network_spec();
    let mut net = Network::new(spec.clone(), load_models(&spec, Path::new("."))?)?;
    let one_d = [(1, F1, 10), (2, F2, 10), (3, F3, 10)];
    for (id, f, n) in one_d {
        let design = Design::equally_spaced(n, f.domain()[0])?;
        net = net.with_model(id, NodeModel::Emulator(train_builtin(f, design, &basis, &fit)?))?;
    }
    let d4 = maximin_lhs(30, 3, 0, 2000)?.with_bounds(F4.domain())?;
    net = net.with_model(4, NodeModel::Emulator(train_builtin(F4, d4, &basis, &fit)?))?;

    let methods = [("uible", Method::Uible), ("uis", Method::Uis(SamplingPolicy::normal(100, 0)))];
    for z in [[2.0, 0.0, 1.5], [5.0, 3.0, 2.0], [8.5, -2.0, 1.2]] {
        let truth = H_NETWORK.evaluate(&z);
        print!("z = {z:?}  truth {truth:8.4}");
        for (name, method) in &methods {
            let p = net.propagate(&z, method, 0)?;
            print!("  {name} {:8.4} +- {:7.4}", p.terminal.mean[0], p.terminal.covariance[(0, 0)].sqrt());
        }
        println!();
    }
    Ok(())
}
