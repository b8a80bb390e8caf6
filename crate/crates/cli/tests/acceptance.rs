use std::process::ExitCode;

use martingality_cli::acceptance::{criteria, run_criterion};

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for c in criteria() {
        let r = run_criterion(&c);
        println!("{}", r.line());
        if !r.pass {
            failed.push(r.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
