//! `verify <suite> --scenario <path>`: runs a verification suite and prints one line per check.
//!
//! Exit codes: 0 when no check fails, 1 on a failing check, 2 on a malformed scenario or usage error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use blowup_loops::cli::{run_suite, Scenario, Status, Suite};
use blowup_loops::diffgeo::VolumeConvention;
use blowup_loops::hamloop::SecondLegSign;
use blowup_loops::Error;
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteArg {
    Forms,
    Local,
    Blowup,
    Loop,
    Bundle,
    Weinstein,
    Order,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Forms => Suite::Forms,
            SuiteArg::Local => Suite::Local,
            SuiteArg::Blowup => Suite::Blowup,
            SuiteArg::Loop => Suite::Loop,
            SuiteArg::Bundle => Suite::Bundle,
            SuiteArg::Weinstein => Suite::Weinstein,
            SuiteArg::Order => Suite::Order,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ConventionArg {
    Liouville,
    Wedge,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SignArg {
    Literal,
    TimeReversed,
}

#[derive(Debug, Parser)]
#[command(name = "verify", about = "Run the blow-up loop verification suites")]
struct Args {
    suite: SuiteArg,
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Writes the JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, value_enum)]
    convention: Option<ConventionArg>,
    #[arg(long, value_enum)]
    sign: Option<SignArg>,
}

fn load(args: &Args) -> Result<Scenario, Error> {
    let text = std::fs::read_to_string(&args.scenario).map_err(|e| Error::Scenario {
        field: "scenario".into(),
        message: format!("cannot read {}: {e}", args.scenario.display()),
    })?;
    let mut sc = Scenario::from_json(&text)?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    if let Some(c) = args.convention {
        sc.convention = match c {
            ConventionArg::Liouville => VolumeConvention::Liouville,
            ConventionArg::Wedge => VolumeConvention::Wedge,
        };
    }
    if let Some(s) = args.sign {
        sc.second_leg_sign = match s {
            SignArg::Literal => SecondLegSign::Literal,
            SignArg::TimeReversed => SecondLegSign::TimeReversed,
        };
    }
    sc.validate()?;
    Ok(sc)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let sc = match load(&args) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let started = Instant::now();
    let report = match run_suite(args.suite.into(), &sc) {
        Ok(r) => r,
        Err(e @ Error::Scenario { .. }) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    for r in &report.records {
        let status = match r.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Diagnostic => "diag",
        };
        println!("{status:>4}  {:>2} {:<22} {}", r.criterion, r.name, r.anchor);
        for v in &r.values {
            println!("          {:<36} {}", v.name, v.value);
        }
        if let Some(n) = &r.note {
            println!("          note: {n}");
        }
    }
    if let Some(path) = &args.json {
        if let Err(e) = std::fs::write(path, report.to_json() + "\n") {
            eprintln!("cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    eprintln!("runtime {:.2?}", started.elapsed());
    for r in report.failures() {
        eprintln!("failed: criterion {} ({}): {}", r.criterion, r.anchor, r.note.as_deref().unwrap_or(""));
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
