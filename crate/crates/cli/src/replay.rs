use std::path::PathBuf;
use std::process::Command;

use clap::Args;
use graphfm::{Error, Result};

use crate::config;
use crate::manifest::{RunManifest, RunStatus, MANIFEST_FILE};
use crate::Global;

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest of the run to repeat (or its output directory).
    #[arg(long)]
    manifest: PathBuf,
}

/// Exit code 0 when every recorded output is reproduced byte for byte, 2 otherwise.
pub fn run(global: &Global, args: ReplayArgs) -> Result<u8> {
    let out = config::absolute(&global.out()?);
    let path = if args.manifest.is_dir() {
        args.manifest.join(MANIFEST_FILE)
    } else {
        args.manifest.clone()
    };
    let original = RunManifest::read(&path)?;
    if original.status != RunStatus::Ok {
        return Err(Error::Config(format!("{} records a run that did not finish", path.display())));
    }
    if out == config::absolute(&original.out) {
        return Err(Error::Config("replay needs a fresh --out directory".into()));
    }
    eprintln!("replaying `{} {}` in {}", original.command, original.args.join(" "), original.cwd.display());
    let status = Command::new(std::env::current_exe()?)
        .args(&original.args)
        .arg("--out")
        .arg(&out)
        .current_dir(&original.cwd)
        .status()?;
    if !status.success() {
        eprintln!("replayed command failed with {status}");
        return Ok(2);
    }
    let replayed = RunManifest::read(&out.join(MANIFEST_FILE))?;
    let mut diffs = Vec::new();
    for (file, hash) in &original.outputs {
        match replayed.outputs.get(file) {
            Some(h) if h == hash => {}
            Some(_) => diffs.push(format!("changed: {file}")),
            None => diffs.push(format!("missing: {file}")),
        }
    }
    for file in replayed.outputs.keys().filter(|f| !original.outputs.contains_key(*f)) {
        diffs.push(format!("extra: {file}"));
    }
    if replayed.config != original.config {
        diffs.push("resolved config differs".into());
    }
    if diffs.is_empty() {
        println!("identical: {} outputs reproduced", original.outputs.len());
        Ok(0)
    } else {
        for d in &diffs {
            println!("{d}");
        }
        Ok(2)
    }
}
