use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use revbridge_harness::{
    bundled, check_golden, check_golden_ignoring, run_scenario, timestamp_fields, Deployment,
    FaultSpec, GoldenVerdict, HarnessError, ScenarioScript,
};
use revbridge_http::{Role, ServiceConfig};

#[derive(Parser)]
#[command(name = "revbridge", about = "Run the authoring and review services or replay scenarios against them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario by name.
    Run {
        scenario: String,
        /// Doc and review base URLs of already running services.
        #[arg(long, num_args = 2, value_names = ["DOC_URL", "REVIEW_URL"])]
        live: Option<Vec<String>>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON array of `{step, fault}` replacing the script's schedule.
        #[arg(long)]
        faults: Option<PathBuf>,
        /// Golden report to compare against. Bundled scenarios default to theirs.
        #[arg(long)]
        golden: Option<PathBuf>,
        /// Write the report to the golden path instead of comparing.
        #[arg(long)]
        update_golden: bool,
    },
    /// Serve one of the two services, configured from REVBRIDGE_* variables.
    Serve {
        #[arg(long)]
        role: Role,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Bundled scenarios.
    Scenarios {
        #[command(subcommand)]
        command: ScenariosCommand,
    },
}

#[derive(Subcommand)]
enum ScenariosCommand {
    List,
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Loaded {
    script: ScenarioScript,
    golden: Option<String>,
    golden_path: Option<PathBuf>,
}

fn load(scenario: &str) -> Result<Loaded, HarnessError> {
    if let Some(b) = bundled::find(scenario) {
        return Ok(Loaded {
            script: b.parse()?,
            golden: b.golden().map(str::to_string),
            golden_path: Some(b.golden_path()),
        });
    }
    let script = ScenarioScript::parse(&read(Path::new(scenario))?)?;
    Ok(Loaded {
        script,
        golden: None,
        golden_path: None,
    })
}

fn run(
    scenario: &str,
    live: Option<Vec<String>>,
    seed: Option<u64>,
    faults: Option<PathBuf>,
    golden: Option<PathBuf>,
    update_golden: bool,
) -> Result<bool, HarnessError> {
    let mut loaded = load(scenario)?;
    if let Some(path) = faults {
        let text = read(&path)?;
        loaded.script.faults = serde_json::from_str::<Vec<FaultSpec>>(&text)
            .map_err(|e| HarnessError::ScriptParse(format!("{}: {e}", path.display())))?;
        loaded.script.validate()?;
    }
    if let Some(path) = golden {
        loaded.golden = match path.exists() {
            true => Some(read(&path)?),
            false => None,
        };
        loaded.golden_path = Some(path);
    }
    let exact = loaded.script.faults.is_empty() && live.is_none() && seed.is_none();
    let seed = seed.unwrap_or(loaded.script.seed);
    let deployment = match &live {
        Some(urls) => Deployment::live(&urls[0], &urls[1])?,
        None => Deployment::in_process(seed, &loaded.script.faults)?,
    };
    let report = run_scenario(&loaded.script, &deployment, seed)?;

    for step in &report.steps {
        println!(
            "{:>3} {:<4} {:<10} {:<20} expect {:<24} got {}",
            step.index,
            if step.matched { "ok" } else { "FAIL" },
            step.actor.as_deref().unwrap_or("-"),
            step.action,
            step.expect,
            step.outcome
        );
    }
    for v in &report.violations {
        println!("violation: {v}");
    }
    let mut passed = report.steps_passed() && report.violations.is_empty();

    if update_golden {
        let path = loaded
            .golden_path
            .ok_or_else(|| HarnessError::Internal("--update-golden needs --golden for script files".into()))?;
        std::fs::write(&path, report.golden_text()).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        println!("golden written to {}", path.display());
    } else if loaded.golden_path.is_some() {
        let golden = loaded.golden.as_deref();
        let verdict = if exact {
            check_golden(&report, golden)
        } else {
            let mut ignore = timestamp_fields();
            ignore.insert("seed".into());
            check_golden_ignoring(&report, golden, &ignore)
        };
        match verdict {
            GoldenVerdict::Match => println!("golden: match"),
            GoldenVerdict::Missing => println!("golden: missing"),
            GoldenVerdict::Mismatch { first_difference } => {
                println!("golden: MISMATCH at {first_difference}");
                passed = false;
            }
        }
    }
    println!(
        "{}: {}",
        report.scenario,
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(passed)
}

fn serve(role: Role, port: Option<u16>) -> Result<(), String> {
    let mut config = ServiceConfig::from_env(role).map_err(|e| e.to_string())?;
    if let Some(port) = port {
        config.port = port;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime
        .block_on(revbridge_http::serve(config))
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            live,
            seed,
            faults,
            golden,
            update_golden,
        } => match run(&scenario, live, seed, faults, golden, update_golden) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Serve { role, port } => match serve(role, port) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Scenarios {
            command: ScenariosCommand::List,
        } => {
            for b in bundled::SCENARIOS {
                let description = b.parse().map(|s| s.description).unwrap_or_default();
                println!("{:<36} {}", b.name, description);
            }
            ExitCode::SUCCESS
        }
    }
}
