//! Config-driven run: parse a TOML experiment, run it into a temporary
//! directory and print the summary.

use mixfield::experiment::{presets::PRESETS, runner, ExperimentConfig};

const CONFIG: &str = r#"
name = "demo"

[model]
type = "mma"
l = 1
basis = { dim = 1, sigma = [[1.0]], atoms = [{ point = [0.5], mass = 2.0 }] }
kernel = [{ shape = { kind = "indicator", lower = [0.0], upper = [2.0] } }]

[sequence]
type = "ray"
step = 0.5
count = 12

[diagnostics]
run = ["combined", "pair", "law", "codifference", "marginal-mc"]

[simulation]
seed = 7
replicates = 1000
h = 0.05
"#;

fn main() -> mixfield::Result<()> {
    println!("{} presets available", PRESETS.len());
    let cfg = ExperimentConfig::parse(CONFIG)?;
    let dir = std::env::temp_dir().join("mixfield-demo");
    let report = runner::run_in(&cfg, "inline", &dir)?;
    for o in &report.outcomes {
        println!("{:<14} {:<8} {}", o.name, o.status.as_str(), o.verdict.as_deref().unwrap_or("-"));
    }
    println!("{} files in {}, exit code {}", report.files.len(), dir.display(), report.exit_code());
    Ok(())
}
