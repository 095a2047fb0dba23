//! Adjusts a belief about two quantities by two observations, one at a time
//! and all at once.

use blnet::belief::{adjust, adjust_covariance, sequential_adjust};
use blnet::{JointBelief, SecondOrderBelief};
use nalgebra::{dmatrix, dvector, DMatrix};

fn main() -> blnet::Result<()> {
    // Joint prior over (B1, B2, D1, D2).
    let full = dmatrix![
        2.0, 0.5, 0.8, 0.3;
        0.5, 1.0, 0.2, 0.4;
        0.8, 0.2, 1.5, 0.1;
        0.3, 0.4, 0.1, 1.2
    ];
    let mean = dvector![1.0, -1.0, 0.0, 0.5];
    let observed = dvector![0.7, 1.1];

    let part = |r: usize, c: usize, nr: usize, nc: usize| -> DMatrix<f64> {
        full.view((r, c), (nr, nc)).into_owned()
    };
    let b = SecondOrderBelief::new(mean.rows(0, 2).into_owned(), part(0, 0, 2, 2))?;
    let d = SecondOrderBelief::new(mean.rows(2, 2).into_owned(), part(2, 2, 2, 2))?;
    let one_shot = adjust(&JointBelief::new(b.clone(), d, part(0, 2, 2, 2))?, &observed)?;

    // First by D1, then by D2.
    let d1 = SecondOrderBelief::scalar(mean[2], full[(2, 2)])?;
    let d2 = SecondOrderBelief::scalar(mean[3], full[(3, 3)])?;
    let b_d1 = adjust(&JointBelief::new(b, d1.clone(), part(0, 2, 2, 1))?, &observed.rows(0, 1).into_owned())?;
    let d2_d1 = adjust(&JointBelief::new(d2, d1, part(3, 2, 1, 1))?, &observed.rows(0, 1).into_owned())?;
    let cov_b_d2 = adjust_covariance(&part(0, 3, 2, 1), &part(0, 2, 2, 1), &part(3, 2, 1, 1), &part(2, 2, 1, 1))?;
    let seq = sequential_adjust(&b_d1, &d2_d1, &cov_b_d2, &observed.rows(1, 1).into_owned())?;

    println!("one-shot   E = {:?}", one_shot.mean.as_slice());
    println!("sequential E = {:?}", seq.mean.as_slice());
    println!("one-shot   Var = {}", one_shot.covariance);
    println!("sequential Var = {}", seq.covariance);
    Ok(())
}
