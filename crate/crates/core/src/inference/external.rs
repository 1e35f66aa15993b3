//! Predictor running as a separate process.
//!
//! Protocol, for a command `cmd`:
//!
//! * `cmd --metadata` prints [`PredictorMetadata`] as JSON on stdout;
//! * `cmd <in.nii> <out.nii>` reads a float32 1mm volume and writes a float32
//!   volume on the same grid with `dim[4] = L + 2` (softmax posteriors in
//!   schema order, predicted image, predicted bias), plus a sidecar
//!   `<out>.json` declaring the schema hash and channel order.
//!
//! A nonzero exit status is a predictor failure.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::{Predictor, PredictorMetadata};
use crate::error::{Error, Result};
use crate::nifti::{read_stack, write_intensity, DataType};
use crate::schema::LabelSchema;
use crate::volume::{ChannelStack, IntensityVolume};

/// Names of the two channels that follow the posteriors.
pub const EXTRA_CHANNELS: [&str; 2] = ["image", "bias"];

/// JSON written next to each predictor response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_hash: String,
    /// Label id of each posterior channel.
    pub label_ids: Vec<u32>,
    /// Trailing channels, `["image", "bias"]`.
    pub extra_channels: Vec<String>,
}

impl Sidecar {
    pub fn for_schema(schema: &LabelSchema) -> Self {
        Sidecar {
            schema_hash: schema.hash(),
            label_ids: schema.ids().collect(),
            extra_channels: EXTRA_CHANNELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Sidecar location for a response file: `out.nii` gives `out.json`.
    pub fn path_for(response: &Path) -> PathBuf {
        let name = response.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let stem = name
            .strip_suffix(".nii.gz")
            .or_else(|| name.strip_suffix(".nii"))
            .unwrap_or(name);
        response.with_file_name(format!("{stem}.json"))
    }
}

#[derive(Debug, Clone)]
pub struct ExternalPredictor {
    program: String,
    args: Vec<String>,
    schema: LabelSchema,
    metadata: PredictorMetadata,
}

impl ExternalPredictor {
    /// `command` is split on whitespace into program and leading arguments.
    /// The predictor is queried for its metadata, which must match `schema`.
    pub fn new(command: &str, schema: &LabelSchema) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::invalid("empty predictor command"))?;
        let args: Vec<String> = parts.collect();
        let out = Command::new(&program)
            .args(&args)
            .arg("--metadata")
            .output()
            .map_err(|e| Error::Predictor(format!("cannot run {program}: {e}")))?;
        if !out.status.success() {
            return Err(Error::Predictor(format!(
                "{program} --metadata exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let metadata: PredictorMetadata = serde_json::from_slice(&out.stdout)
            .map_err(|e| Error::Contract(format!("unreadable predictor metadata: {e}")))?;
        metadata.check(schema)?;
        Ok(ExternalPredictor {
            program,
            args,
            schema: schema.clone(),
            metadata,
        })
    }

    fn check_sidecar(&self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Contract(format!("missing predictor sidecar {}: {e}", path.display())))?;
        let sidecar: Sidecar = serde_json::from_str(&text)
            .map_err(|e| Error::Contract(format!("unreadable predictor sidecar: {e}")))?;
        let want = Sidecar::for_schema(&self.schema);
        if sidecar.schema_hash != want.schema_hash {
            return Err(Error::Contract(format!(
                "response schema hash {} does not match {}",
                sidecar.schema_hash, want.schema_hash
            )));
        }
        if sidecar.label_ids != want.label_ids || sidecar.extra_channels != want.extra_channels {
            return Err(Error::Contract("response channel order differs from the schema".into()));
        }
        Ok(())
    }
}

impl Predictor for ExternalPredictor {
    fn metadata(&self) -> &PredictorMetadata {
        &self.metadata
    }

    fn predict(&self, input: &IntensityVolume) -> Result<ChannelStack> {
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let request = dir.path().join("input.nii");
        let response = dir.path().join("output.nii");
        write_intensity(input, &request, DataType::F32)?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(&request)
            .arg(&response)
            .output()
            .map_err(|e| Error::Predictor(format!("cannot run {}: {e}", self.program)))?;
        if !out.status.success() {
            return Err(Error::Predictor(format!(
                "{} exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        self.check_sidecar(&Sidecar::path_for(&response))?;
        let stack = read_stack(&response)?;
        if stack.channels() != self.metadata.channels {
            return Err(Error::Contract(format!(
                "response has {} channels, expected {}",
                stack.channels(),
                self.metadata.channels
            )));
        }
        Ok(stack)
    }
}
