//! Run manifests: enough provenance to reproduce any output file.
//!
//! Every command writes `<output>.manifest` next to its primary output:
//! the tool version, the subcommand, the full effective configuration,
//! and a SHA-256 of every input file. Deliberately timestamp-free so a
//! rerun of the same command produces a byte-identical manifest.

use std::fmt::Write as _;
use std::path::Path;

use seq2seq::checkpoint::sha256_file;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Writes `bytes` to `path` via a sibling temp file and an atomic rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the manifest for a command run whose primary output is `output`.
pub fn write_manifest(
    output: &Path,
    command: &str,
    cfg: &RunConfig,
    inputs: &[&Path],
) -> Result<()> {
    let mut text = String::new();
    writeln!(text, "tool_version\t{}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(text, "command\t{command}").unwrap();
    for line in cfg.echo().lines() {
        writeln!(text, "config\t{line}").unwrap();
    }
    for input in inputs {
        let digest = sha256_file(input).map_err(|e| {
            CliError::Runtime(anyhow::anyhow!("hashing input {}: {e}", input.display()))
        })?;
        writeln!(text, "input\t{}\t{}", input.display(), hex(&digest)).unwrap();
    }
    let mut manifest_path = output.as_os_str().to_owned();
    manifest_path.push(".manifest");
    write_atomic(Path::new(&manifest_path), text.as_bytes())
}
