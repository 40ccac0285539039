//! Driving the command-line front end from an experiment file.

use tipping_kit::cli::{main_from, ExperimentConfig};

const EXPERIMENT: &str = r#"
analysis = "fpe1d"

[forcing]
p0 = -0.5
p2 = 2.0

[solver]
nx = 401
"#;

fn main() -> tipping_kit::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(EXPERIMENT)?;
    let args = cfg.to_args()?;
    println!("equivalent command: {}", args.join(" "));

    let out = std::env::temp_dir().join("tipping-kit-example");
    let mut argv = args.clone();
    argv.insert(1, format!("--out={}", out.display()));
    let code = main_from(argv);
    println!("exit code {code}, files in {}", out.display());

    let bad = ExperimentConfig::from_toml_str("analysis = \"criterion\"\n[forcing]\nspeed = 1\ntypo = 2\n")?;
    if let Err(e) = bad.to_args() {
        println!("rejected: {e}");
    }
    Ok(())
}
