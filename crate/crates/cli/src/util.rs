// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_bytes(path: &Path, data: &[u8]) -> Result<()> {
    std::fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}

pub fn hex_arg(text: &str) -> Result<Vec<u8>> {
    hex::decode(text.trim().trim_start_matches("0x")).map_err(|e| anyhow!("bad hex {text:?}: {e}"))
}

pub fn hex_array<const N: usize>(text: &str) -> Result<[u8; N]> {
    let v = hex_arg(text)?;
    let len = v.len();
    v.try_into().map_err(|_| anyhow!("expected {N} bytes, got {len}"))
}

/// Parses decimal or `0x` hexadecimal.
pub fn parse_u8(text: &str) -> Result<u8, String> {
    match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(h) => u8::from_str_radix(h, 16),
        None => text.parse(),
    }
    .map_err(|e| format!("{text:?}: {e}"))
}

/// Writes one line to stdout, reporting a closed pipe as an error instead of
/// panicking.
pub fn out_line(line: &str) -> Result<()> {
    writeln!(std::io::stdout().lock(), "{line}")?;
    Ok(())
}

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    out_line(&serde_json::to_string_pretty(value)?)
}

/// Prints `value` as JSON in JSON mode, otherwise the text form.
pub fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    if json {
        print_json(value)
    } else {
        out_line(&text())
    }
}
