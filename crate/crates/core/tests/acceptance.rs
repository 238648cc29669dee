//! Runs all fourteen acceptance criteria at the default 128x256 grid and
//! prints one line per criterion. Fails if any criterion fails.

use isoq::acceptance::{run, SuiteConfig, CRITERIA};

fn main() {
    let cfg = SuiteConfig::default();
    let outcomes = run(&cfg, &[], |o| println!("{}  [{:.2}s]", o.line(), o.elapsed.as_secs_f64()))
        .expect("suite setup failed");
    assert_eq!(outcomes.len(), CRITERIA);
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| format!("{} {}", o.id, o.name)).collect();
    println!("acceptance: {}/{} passed", CRITERIA - failed.len(), CRITERIA);
    if !failed.is_empty() {
        eprintln!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
