use misbind_core::event::EventKind;
use misbind_core::models;
use misbind_core::scenario::builtin_scenario;
use misbind_core::search::{explore, ExploreOpts, World};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let model = args.get(1).map(|s| s.as_str()).unwrap_or("ssp-nc");
    let scen = args.get(2).map(|s| s.as_str()).unwrap_or("fig3");
    let m = models::build(model).unwrap();
    let s = builtin_scenario(model, scen).unwrap();
    let w = World::build(&m, &s).unwrap();
    let ex = explore(&w, &ExploreOpts::default()).unwrap();
    println!("{} states, {} maximal", ex.states, ex.traces.len());
    let mut init_completes = std::collections::BTreeMap::new();
    let mut nonin_completes = std::collections::BTreeMap::new();
    let mut max_events = 0usize;
    let mut longest = None;
    for t in &ex.traces {
        for (_, e) in t.events_of(EventKind::InitiatorComplete) {
            *init_completes.entry(format!("{}", e.args[0])).or_insert(0) += 1;
        }
        for (_, e) in t.events_of(EventKind::NoninitiatorComplete) {
            *nonin_completes.entry(format!("{}", e.args[0])).or_insert(0) += 1;
        }
        if t.entries.len() > max_events {
            max_events = t.entries.len();
            longest = Some(t);
        }
    }
    println!("initiator completes: {init_completes:?}");
    println!("noninitiator completes: {nonin_completes:?}");
    if let Some(t) = longest {
        println!("--- longest trace ({} entries):", t.entries.len());
        print!("{}", t.render_text());
    }
}
