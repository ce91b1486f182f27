use misbind_core::models;
use misbind_core::scenario::builtin_scenario;
use misbind_core::search::{explore_debug_widths, World};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let model = args.get(1).map(|s| s.as_str()).unwrap_or("ssp-nc");
    let scen = args.get(2).map(|s| s.as_str()).unwrap_or("fig6");
    let m = models::build(model).unwrap();
    let s = builtin_scenario(model, scen).unwrap();
    let w = World::build(&m, &s).unwrap();
    explore_debug_widths(&w);
}
