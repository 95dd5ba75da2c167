use std::fs;
use std::io::Write;
use std::path::Path;

use fvmd_core::{FeatureConfig, FvmdScore64, VERSION};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{SourceData, SourceKind, StageTimings};

pub const REPORT_SCHEMA: &str = "fvmd-report/1";
pub const SANITY_SCHEMA: &str = "fvmd-sanity/1";
pub const SENSITIVITY_SCHEMA: &str = "fvmd-sensitivity/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub path: String,
    pub kind: SourceKind,
    pub tracker_source: String,
    pub videos: usize,
    pub videos_failed: usize,
    pub clips: usize,
}

impl From<&SourceData> for SourceSummary {
    fn from(d: &SourceData) -> Self {
        Self {
            path: d.path.display().to_string(),
            kind: d.kind,
            tracker_source: d.tracker_source(),
            videos: d.videos,
            videos_failed: d.videos_failed,
            clips: d.clips(),
        }
    }
}

/// Result of `fvmd compute`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FvmdReport {
    pub schema: String,
    pub value: f64,
    pub raw_value: f64,
    pub d: usize,
    pub n_gen: usize,
    pub n_ref: usize,
    pub eps: f64,
    pub numerical_warning: bool,
    pub feature_config: FeatureConfig,
    pub library_version: String,
    pub gen: SourceSummary,
    pub reference: SourceSummary,
    pub timings: StageTimings,
    pub wall_s: f64,
    pub config: RunConfig,
}

impl FvmdReport {
    pub fn new(
        score: &FvmdScore64,
        gen: &SourceData,
        reference: &SourceData,
        timings: StageTimings,
        wall_s: f64,
        config: &RunConfig,
    ) -> Self {
        Self {
            schema: REPORT_SCHEMA.to_string(),
            value: score.value,
            raw_value: score.raw_value,
            d: score.dim,
            n_gen: score.n_gen,
            n_ref: score.n_ref,
            eps: score.eps,
            numerical_warning: score.numerical_warning,
            feature_config: config.feature_config(),
            library_version: VERSION.to_string(),
            gen: gen.into(),
            reference: reference.into(),
            timings,
            wall_s,
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// CSV with a leading `#schema=<name>` line ahead of the header row.
pub fn write_csv<W: Write, R: Serialize>(mut out: W, schema: &str, rows: &[R]) -> Result<(), CliError> {
    let fail = |e: &dyn std::fmt::Display| CliError::Output { path: "<csv>".into(), message: e.to_string() };
    writeln!(out, "#schema={schema}").map_err(|e| fail(&e))?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| fail(&e))?;
    }
    w.flush().map_err(|e| fail(&e))?;
    Ok(())
}

/// Reads rows written by [`write_csv`], checking the schema line.
pub fn read_csv<R: for<'de> Deserialize<'de>>(text: &str, schema: &str) -> Result<Vec<R>, CliError> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim_end() != format!("#schema={schema}") {
        return Err(CliError::Input(format!("expected schema {schema}, found `{first}`")));
    }
    csv::Reader::from_reader(rest.as_bytes())
        .deserialize()
        .collect::<Result<Vec<R>, _>>()
        .map_err(|e| CliError::Input(e.to_string()))
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(text: &[u8], path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| CliError::output(parent, e))?;
            }
            fs::write(p, text).map_err(|e| CliError::output(p, e))
        }
        None => std::io::stdout().write_all(text).map_err(|e| CliError::output("<stdout>", e)),
    }
}
