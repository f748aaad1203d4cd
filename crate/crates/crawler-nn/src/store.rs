//! Persist and restore trained networks as a textual, line-oriented,
//! versioned file.
//!
//! Layout (fixed order, one numeric value per line inside each section):
//!
//! ```text
//! format_version 1
//! input_size 1
//! hidden_size <h>
//! output_size 2
//! seed <network init seed>
//! denorm_mode paper-stated|table-affine
//! target_servo1_deg <deg>
//! target_servo2_deg <deg>
//! tolerance_deg <deg>
//! learning_rate <rate>
//! generations_used <count>
//! w_ih <h>        input->hidden weights, row-major
//! w_ho <2h>       hidden->output weights, row-major (output 0 first)
//! b_h <h>         hidden biases
//! b_o 2           output biases
//! ```
//!
//! Floats are written with Rust's shortest round-trip decimal representation,
//! so a load reconstructs exactly the saved values. Writes go to a temporary
//! file in the destination directory and are renamed into place.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::net::{DenormMode, Network, NetworkConfig, OUTPUT_SIZE};
use crate::train::{AngleTargets, TrainingRun};

pub const FORMAT_VERSION: u64 = 1;

/// Run context stored alongside the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelMetadata {
    pub targets: AngleTargets,
    pub tolerance_deg: f64,
    pub learning_rate: f64,
    pub generations_used: u64,
    pub denorm_mode: DenormMode,
    pub seed: u64,
}

impl ModelMetadata {
    pub fn from_run(run: &TrainingRun) -> Self {
        Self {
            targets: run.targets,
            tolerance_deg: run.config.tolerance_deg,
            learning_rate: run.config.learning_rate,
            generations_used: run.generations_used,
            denorm_mode: run.config.denorm_mode,
            seed: run.config.seed,
        }
    }

    fn finite(&self) -> bool {
        self.targets.servo1_deg.is_finite()
            && self.targets.servo2_deg.is_finite()
            && self.tolerance_deg.is_finite()
            && self.learning_rate.is_finite()
    }
}

/// Serialize a network and its metadata to `path`, atomically: the file is
/// fully written next to the destination and renamed over it, so a crash or
/// error leaves either the old file or no file, never a partial one.
pub fn save(net: &Network, meta: &ModelMetadata, path: &Path) -> Result<()> {
    if !net.all_finite() {
        return Err(Error::NonFinite(
            "refusing to save a network with non-finite parameters".into(),
        ));
    }
    if !meta.finite() {
        return Err(Error::NonFinite(
            "refusing to save metadata with non-finite values".into(),
        ));
    }

    let h = net.hidden_size();
    let params = net.params();
    let mut text = String::new();
    let _ = writeln!(text, "format_version {FORMAT_VERSION}");
    let _ = writeln!(text, "input_size 1");
    let _ = writeln!(text, "hidden_size {h}");
    let _ = writeln!(text, "output_size {OUTPUT_SIZE}");
    let _ = writeln!(text, "seed {}", meta.seed);
    let _ = writeln!(text, "denorm_mode {}", meta.denorm_mode);
    let _ = writeln!(text, "target_servo1_deg {}", meta.targets.servo1_deg);
    let _ = writeln!(text, "target_servo2_deg {}", meta.targets.servo2_deg);
    let _ = writeln!(text, "tolerance_deg {}", meta.tolerance_deg);
    let _ = writeln!(text, "learning_rate {}", meta.learning_rate);
    let _ = writeln!(text, "generations_used {}", meta.generations_used);
    let sections = [
        ("w_ih", &params[..h]),
        ("w_ho", &params[h..3 * h]),
        ("b_h", &params[3 * h..4 * h]),
        ("b_o", &params[4 * h..]),
    ];
    for (name, values) in sections {
        let _ = writeln!(text, "{name} {}", values.len());
        for v in values {
            let _ = writeln!(text, "{v}");
        }
    }

    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Shorthand for saving a finished run's network with its own metadata.
pub fn save_run(run: &TrainingRun, path: &Path) -> Result<()> {
    save(&run.final_network, &ModelMetadata::from_run(run), path)
}

struct Lines<'a> {
    path: &'a Path,
    lines: std::str::Lines<'a>,
    current: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        self.current += 1;
        self.lines
            .next()
            .ok_or_else(|| Error::parse(self.path, self.current, "unexpected end of file"))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.current, msg)
    }

    /// Read `key <value>`, returning the value text.
    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(self.err(format!("expected `{key} <value>`, found {line:?}"))),
        }
    }

    fn keyed_u64(&mut self, key: &str) -> Result<u64> {
        let text = self.keyed(key)?;
        text.parse::<u64>()
            .map_err(|_| self.err(format!("invalid {key} {text:?}")))
    }

    fn keyed_f64(&mut self, key: &str) -> Result<f64> {
        let text = self.keyed(key)?;
        let v = text
            .parse::<f64>()
            .map_err(|_| self.err(format!("invalid {key} {text:?}")))?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite {key} {text:?}")));
        }
        Ok(v)
    }

    /// Read a section header `name <count>` and its value lines. The declared
    /// count must match what the hidden size dictates.
    fn section(&mut self, name: &str, expected: usize, into: &mut Vec<f64>) -> Result<()> {
        let declared = self.keyed_u64(name)? as usize;
        if declared != expected {
            return Err(self.err(format!(
                "count mismatch: section {name} declares {declared} values, hidden_size requires {expected}"
            )));
        }
        for _ in 0..expected {
            let line = self.next_line()?;
            let v = line
                .parse::<f64>()
                .map_err(|_| self.err(format!("invalid value {line:?} in section {name}")))?;
            if !v.is_finite() {
                return Err(self.err(format!("non-finite value {line:?} in section {name}")));
            }
            into.push(v);
        }
        Ok(())
    }
}

/// Load a network and its metadata from a file written by [`save`].
pub fn load(path: &Path) -> Result<(Network, ModelMetadata)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Lines {
        path,
        lines: text.lines(),
        current: 0,
    };

    let version = lines.keyed_u64("format_version")?;
    if version != FORMAT_VERSION {
        return Err(lines.err(format!(
            "unsupported format_version {version} (this build reads {FORMAT_VERSION})"
        )));
    }
    let input_size = lines.keyed_u64("input_size")? as usize;
    let hidden_size = lines.keyed_u64("hidden_size")? as usize;
    let output_size = lines.keyed_u64("output_size")? as usize;
    let seed = lines.keyed_u64("seed")?;
    // Shape errors surface on the header line that declared the sizes.
    NetworkConfig::with_sizes(input_size, hidden_size, output_size, seed)
        .map_err(|e| lines.err(e.to_string()))?;

    let denorm_mode: DenormMode = {
        let text = lines.keyed("denorm_mode")?;
        text.parse().map_err(|e: Error| lines.err(e.to_string()))?
    };
    let targets = AngleTargets::new(
        lines.keyed_f64("target_servo1_deg")?,
        lines.keyed_f64("target_servo2_deg")?,
    );
    let tolerance_deg = lines.keyed_f64("tolerance_deg")?;
    let learning_rate = lines.keyed_f64("learning_rate")?;
    let generations_used = lines.keyed_u64("generations_used")?;

    let h = hidden_size;
    let mut params = Vec::with_capacity(4 * h + 2);
    lines.section("w_ih", h, &mut params)?;
    lines.section("w_ho", 2 * h, &mut params)?;
    lines.section("b_h", h, &mut params)?;
    lines.section("b_o", 2, &mut params)?;
    if let Some(extra) = lines.lines.next() {
        if !extra.trim().is_empty() {
            return Err(Error::parse(
                path,
                lines.current + 1,
                format!("unexpected trailing content {extra:?}"),
            ));
        }
    }

    let net = Network::from_params(h, &params)?;
    let meta = ModelMetadata {
        targets,
        tolerance_deg,
        learning_rate,
        generations_used,
        denorm_mode,
        seed,
    };
    Ok((net, meta))
}
