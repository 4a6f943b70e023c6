//! Prints a per-step breakdown of a scenario run.
//!
//! Usage: cargo run --release -p intentgrid-core --example explore -- <scenario.toml>

use std::sync::Arc;
use std::time::Instant;

use intentgrid_core::engine::{precompute, run_actions};
use intentgrid_core::{parse_map, ModelConfig, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).ok_or("usage: explore <scenario.toml>")?;
    let scenario = Scenario::load(path.as_ref())?;
    let map = parse_map(&std::fs::read_to_string(&scenario.map)?)?;
    let cfg = ModelConfig::default().with(&scenario.params);
    let t = Instant::now();
    let pre = precompute(&map, &cfg.planner)?;
    let sweeps: Vec<_> = pre.planner.hypotheses().iter().map(|h| h.values.sweeps).collect();
    println!("precompute {:?}, sweeps {sweeps:?}", t.elapsed());
    for w in &pre.warnings {
        println!("warning: {w}");
    }
    let planner = Arc::new(pre.planner);
    let session = run_actions(
        planner.clone(),
        cfg.hmm,
        scenario.start_pose()?,
        &scenario.actions()?,
        scenario.mode,
        scenario.seed,
    )?;
    for r in session.history() {
        let opt: Vec<_> =
            (0..planner.hypothesis_count()).map(|h| planner.optimal_action(h, &r.pose_before).symbol()).collect();
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        println!(
            "{:>2} {} {:<7} -> {} opt {:?} O [{}] phi {:.2} cons {:?} P [{}]",
            r.step,
            r.pose_before,
            r.intended.name(),
            r.pose_after,
            opt,
            fmt(&r.observation),
            r.phi,
            r.consistent.iter().map(|c| if *c { 'y' } else { 'n' }).collect::<String>(),
            fmt(&r.estimate)
        );
    }
    Ok(())
}
