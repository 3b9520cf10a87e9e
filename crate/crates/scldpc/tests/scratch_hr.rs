//! Temporary probe: why does the density recursion stall at half_range 8?

use scldpc::de_density::{build_cn_table, BmsDe, QuantGrid};
use scldpc::de_scalar::ChainParams;

fn n0_for_loss(loss: f64) -> f64 {
    // bisect biawgn capacity
    let (mut lo, mut hi) = (1e-3, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let c = scldpc::de_density::biawgn_capacity(mid).unwrap();
        if 1.0 - c < loss {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
#[ignore]
fn trace_half_range() {
    let chain = ChainParams { dv: 3, dc: 6, w: 3, spatial_len: 12 };
    for half in [8.0_f64, 16.0] {
        let grid = QuantGrid::new(0.25, half).unwrap();
        let table = build_cn_table(&grid);
        let loss = 0.2;
        let n0 = n0_for_loss(loss);
        println!("== half_range {half}: n0 = {n0:.4}");
        let mut de = BmsDe::from_burst(&chain, n0, 0.0, 0.0, 0.0, &table).unwrap();
        for it in 1..=160 {
            let tv = de.step();
            if it <= 8 || it % 8 == 0 {
                let err = de.error_mass_avg();
                println!("  it {it:3}  tv {tv:.3e}  err {err:.6e}");
            }
        }
        // snapshot the mid-chain message density
        let x = &de.x()[6];
        let n = grid.len();
        let neg: f64 = (0..n).filter(|&k| grid.value(k) < 0.0).map(|k| x.mass()[k]).sum();
        let zero: f64 = (0..n).filter(|&k| grid.value(k) == 0.0).map(|k| x.mass()[k]).sum();
        let top: f64 = *x.mass().last().unwrap();
        let bottom: f64 = x.mass()[0];
        println!(
            "  mid-chain x[6]: neg {neg:.3e} zero {zero:.3e} bottom {bottom:.3e} top {top:.3e} \
             -inf {:.3e} +inf {:.3e}",
            x.neg_inf(),
            x.pos_inf()
        );
    }
}
