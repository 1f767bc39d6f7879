// Check cost against role count for the dynamic engine and the
// one-contract-per-role baseline, plus the deployment cost grid.

use std::num::NonZeroU64;

use drbac::cost::{bench_scaling, deployment_cost_dynamic, deployment_cost_static};
use drbac::CostSchedule;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let schedule = CostSchedule::default();
    let counts: Vec<u64> = (0..=8).map(|i| 1 << i).collect();
    let report = bench_scaling(&schedule, &counts, 5, 7)?;
    print!("{}", report.to_table());
    println!("dynamic relative slope: {:.2e}", report.dynamic_relative_slope());

    println!("\n{:>6} {:>4} {:>12} {:>12}", "N_R", "N_UG", "dynamic", "static");
    for n_r in [1u64, 10, 50] {
        for n_ug in [1u64, 5, 20] {
            let (r, u) = (NonZeroU64::new(n_r).unwrap(), NonZeroU64::new(n_ug).unwrap());
            println!(
                "{n_r:>6} {n_ug:>4} {:>12} {:>12}",
                deployment_cost_dynamic(&schedule, r, n_ug),
                deployment_cost_static(&schedule, r, u)
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
