//! Re-running a recorded command and checking its outputs.

use std::path::Path;

use jacdeform::guidance_client::GUIDANCE_URL_ENV;
use log::warn;

use crate::args::{Cli, ReplayArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{file_hash, replace_out, RunManifest};

pub fn cmd_replay(args: &ReplayArgs) -> CliResult<()> {
    let manifest = RunManifest::load(&args.manifest)?;
    let cwd = Path::new(&manifest.cwd);
    for input in &manifest.inputs {
        let path = cwd.join(&input.path);
        let hash = file_hash(&path)?;
        if hash != input.hash {
            return Err(CliError::Mismatch(format!(
                "input {} ({}) changed since the recorded run",
                path.display(),
                input.role
            )));
        }
    }
    if manifest.tool_version != env!("CARGO_PKG_VERSION") {
        warn!(
            "manifest written by version {}, replaying with {}",
            manifest.tool_version,
            env!("CARGO_PKG_VERSION")
        );
    }

    let out = std::path::absolute(&args.out).map_err(|e| CliError::io("resolving --out", e))?;
    let command = replace_out(&manifest.command, &out.to_string_lossy())?;
    std::env::set_current_dir(cwd).map_err(|e| CliError::io(format!("entering {}", cwd.display()), e))?;
    if let Some(url) = &manifest.guidance_endpoint_env {
        std::env::set_var(GUIDANCE_URL_ENV, url);
    }
    let argv: Vec<String> = std::iter::once("jacdeform".to_string()).chain(command.iter().cloned()).collect();
    let cli = <Cli as clap::Parser>::try_parse_from(&argv)
        .map_err(|e| CliError::usage(format!("recorded command no longer parses: {e}")))?;
    crate::dispatch(&cli, &command)?;

    let mut mismatched = Vec::new();
    for output in &manifest.outputs {
        let path = out.join(&output.path);
        match file_hash(&path) {
            Ok(h) if h == output.hash => {}
            _ => mismatched.push(output.path.clone()),
        }
    }
    let summary = serde_json::json!({
        "outputs": manifest.outputs.len(),
        "mismatched": mismatched,
    });
    println!("{summary}");
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(CliError::Mismatch(format!(
            "{} of {} outputs differ: {}",
            mismatched.len(),
            manifest.outputs.len(),
            mismatched.join(", ")
        )))
    }
}
