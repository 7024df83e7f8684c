use anyhow::Result;
use clap::{Args, ValueEnum};
use madeon::selftest::run_selftest;
use madeon::ssm::inject_scan_fault;

use crate::Outcome;

#[derive(Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deliberately break a kernel to confirm the checks notice.
    #[arg(long, value_enum, hide = true)]
    inject_fault: Option<Fault>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    Scan,
}

pub fn run(args: SelftestArgs) -> Result<Outcome> {
    if let Some(Fault::Scan) = args.inject_fault {
        inject_scan_fault(true);
    }
    println!("selftest seed={}", args.seed);
    let outcomes = run_selftest(args.seed);
    let mut failed = 0;
    for c in &outcomes {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {} ({:.2}s): {}", c.name, c.seconds, c.detail);
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        eprintln!("{failed} check(s) failed");
        Ok(Outcome::CheckFailed)
    } else {
        Ok(Outcome::Success)
    }
}
