//! Compares a random Latin hypercube with its maximin-optimised version.

use blnet::emulator::design::random_lhs;
use blnet::emulator::{maximin_lhs, Design};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> blnet::Result<()> {
    let (n, p) = (20, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let random = Design::from_scaled(random_lhs(n, p, &mut rng), vec![(0.0, 1.0); p])?;
    let optimised = maximin_lhs(n, p, 42, 2000)?;
    println!("random LHS   min distance {:.4}", random.min_pairwise_distance());
    println!("maximin LHS  min distance {:.4}", optimised.min_pairwise_distance());

    let bounded = optimised.with_bounds(vec![(0.0, 4.0), (-2.0, 8.0), (1.0, 2.5)])?;
    println!("first runs in native units:");
    for i in 0..5 {
        println!("  {:?}", bounded.native_row(i));
    }
    Ok(())
}
