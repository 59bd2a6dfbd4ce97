//! Runs every primary acceptance check and prints one line per criterion.
//!
//! Set `QP_ACCEPTANCE=full` for the larger ensembles.

use qpurify::checks::{run_all, Suite};

fn main() {
    let suite = match std::env::var("QP_ACCEPTANCE").as_deref() {
        Ok("full") => Suite::Full,
        _ => Suite::Fast,
    };
    println!("acceptance suite: {suite:?}");
    let results = run_all(suite, None);
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.id.as_str()).collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        println!("failed checks: {}", failed.join(", "));
        std::process::exit(1);
    }
}
