use misbind_core::models;
use misbind_core::scenario::builtin_scenario;
use misbind_core::search::{explore, ExploreOpts, World};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let model = args.get(1).map(|s| s.as_str()).unwrap_or("ssp-nc");
    let scen = args.get(2).map(|s| s.as_str()).unwrap_or("honest");
    let m = models::build(model).unwrap();
    let s = builtin_scenario(model, scen).unwrap();
    let w = World::build(&m, &s).unwrap();
    let t0 = Instant::now();
    let ex = explore(&w, &ExploreOpts::default()).unwrap();
    println!(
        "{model}/{scen}: {} states, {} maximal, bounded={} in {:?}",
        ex.states, ex.traces.len(), ex.bounded, t0.elapsed()
    );
}
