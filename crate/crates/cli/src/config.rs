//! Config resolution: defaults, then the file, then `--set`, then named flags.

use std::path::Path;

use jacdeform::optimizer::OptimConfig;

use crate::args::{ConfigAction, ConfigArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::hex;

pub fn resolve_config(
    file: Option<&Path>,
    overrides: &[String],
    iterations: Option<usize>,
    seed: Option<u64>,
) -> CliResult<OptimConfig> {
    let mut config = OptimConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        config
            .apply_kv(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    }
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got '{item}'")))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(n) = iterations {
        config.iterations = n;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

pub fn cmd_config(action: &ConfigAction) -> CliResult<()> {
    match action {
        ConfigAction::Show(args) => {
            print!("{}", load(args)?.to_kv_string()?);
        }
        ConfigAction::Validate(args) => {
            let config = load(args)?;
            println!("{}", serde_json::json!({ "valid": true, "hash": hex(&config.hash()) }));
        }
    }
    Ok(())
}

fn load(args: &ConfigArgs) -> CliResult<OptimConfig> {
    resolve_config(args.config.as_deref(), &args.overrides, None, None)
}
