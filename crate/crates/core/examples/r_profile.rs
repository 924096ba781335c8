//! Prints the estimated link-count profile over collaboration distance.
//!
//! `cargo run --release -p d2dcache --example r_profile -- <n> <r_lo> <r_hi> <trials>`

use d2dcache::harness::{optimize_r, LibrarySize, Policy, RSearch, Radius, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [n, lo, hi, trials] = args.as_slice() else {
        return Err("usage: r_profile <n> <r_lo> <r_hi> <trials>".into());
    };
    let n: usize = n.parse()?;
    let cfg = SimConfig {
        n,
        m: LibrarySize::Fixed(12),
        gamma_r: 1.5,
        policy: Policy::Zipf { gamma_c: 1.5 },
        r: Radius::auto(),
        seed: 11,
        trials: 1,
        exact_cutoff: 40,
    };
    let p = optimize_r(&cfg, &RSearch::new(lo.parse()?, hi.parse()?, 15, trials.parse()?))?;
    for pt in &p.points {
        if let Some(e) = pt.estimate {
            println!("{:.5}  {:9.2} ± {:.2}", pt.r, e.l_greedy.mean, e.l_greedy.se.unwrap_or(0.0));
        }
    }
    println!(
        "r* = {:.5} (r*·√n = {:.3}){}",
        p.best_r,
        p.best_r * (n as f64).sqrt(),
        if p.boundary { ", on the window edge" } else { "" }
    );
    Ok(())
}
