use misbind_core::models;
use misbind_core::scenario::builtin_scenario;
use misbind_core::search::{analyze, validate_trace, ExploreOpts, World};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let model = args.get(1).map(|s| s.as_str()).unwrap_or("ssp-nc");
    let scen = args.get(2).map(|s| s.as_str()).unwrap_or("fig3");
    let m = models::build(model).unwrap();
    let s = builtin_scenario(model, scen).unwrap();
    let w = World::build(&m, &s).unwrap();
    let queries: Vec<_> = m.misbinding_queries().into_iter().cloned().collect();
    let t0 = Instant::now();
    let an = analyze(&w, &queries, &ExploreOpts { early_stop: true, ..Default::default() }).unwrap();
    println!("{model}/{scen}: {} states in {:?}", an.states, t0.elapsed());
    for v in &an.verdicts {
        match &v.trace {
            None => println!("  {}: holds (bounded={})", v.query, an.bounded),
            Some(t) => {
                println!("  {}: VIOLATION ({} entries)", v.query, t.entries.len());
                validate_trace(&w, t).unwrap();
                if std::env::args().any(|a| a == "-v") {
                    print!("{}", t.render_text());
                    if let Some(viol) = &t.violation {
                        println!("  binding: {:?}", viol.conclusion_binding);
                    }
                }
            }
        }
    }
}
