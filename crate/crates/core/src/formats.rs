//! On-disk formats: task-set files, schedule traces and attack summaries.
//!
//! Task sets and attack summaries are pretty-printed JSON documents. Traces
//! are JSON Lines: one header record followed by one record per slice and
//! one per job. A batch of generated task sets is described by a manifest
//! listing each file with the seed and constraint that produced it.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::attack::AttackSummary;
use crate::edf_sim::{ScheduleTrace, Slice, TieBreak, VariationConfig};
use crate::error::FormatError;
use crate::task_model::{JobRecord, TaskSet, Tick};

pub fn write_taskset<W: Write>(ts: &TaskSet, mut w: W) -> Result<(), FormatError> {
    serde_json::to_writer_pretty(&mut w, ts)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_taskset<R: std::io::Read>(r: R) -> Result<TaskSet, FormatError> {
    Ok(serde_json::from_reader(r)?)
}

pub fn write_attack_summary<W: Write>(s: &AttackSummary, mut w: W) -> Result<(), FormatError> {
    serde_json::to_writer_pretty(&mut w, s)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_attack_summary<R: std::io::Read>(r: R) -> Result<AttackSummary, FormatError> {
    Ok(serde_json::from_reader(r)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub set_id: usize,
    pub file: String,
    pub seed: u64,
    pub constraint: String,
    pub utilization: f64,
    pub coverage_dyps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub sets: Vec<ManifestEntry>,
}

pub fn write_manifest<W: Write>(m: &Manifest, mut w: W) -> Result<(), FormatError> {
    serde_json::to_writer_pretty(&mut w, m)?;
    writeln!(w)?;
    Ok(())
}

pub fn read_manifest<R: std::io::Read>(r: R) -> Result<Manifest, FormatError> {
    Ok(serde_json::from_reader(r)?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceRecord {
    Header {
        format: String,
        horizon: Tick,
        tasks: usize,
        seed: u64,
        tie_break: TieBreak,
        variation: VariationConfig,
    },
    Slice(Slice),
    Job(JobRecord),
}

const TRACE_FORMAT: &str = "edfscope-trace/1";

pub fn write_trace<W: Write>(trace: &ScheduleTrace, mut w: W) -> Result<(), FormatError> {
    let header = TraceRecord::Header {
        format: TRACE_FORMAT.into(),
        horizon: trace.horizon,
        tasks: trace.jobs.len(),
        seed: trace.variation.rng_seed,
        tie_break: trace.tie_break,
        variation: trace.variation,
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for s in &trace.slices {
        serde_json::to_writer(&mut w, &TraceRecord::Slice(*s))?;
        writeln!(w)?;
    }
    for j in trace.jobs.iter().flatten() {
        serde_json::to_writer(&mut w, &TraceRecord::Job(j.clone()))?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<ScheduleTrace, FormatError> {
    let mut trace: Option<ScheduleTrace> = None;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| FormatError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let err = |msg: &str| FormatError::Parse {
            line: i + 1,
            msg: msg.into(),
        };
        match (rec, trace.as_mut()) {
            (
                TraceRecord::Header {
                    format,
                    horizon,
                    tasks,
                    tie_break,
                    variation,
                    ..
                },
                None,
            ) => {
                if format != TRACE_FORMAT {
                    return Err(err(&format!("unsupported trace format {format:?}")));
                }
                trace = Some(ScheduleTrace {
                    slices: Vec::new(),
                    jobs: vec![Vec::new(); tasks],
                    horizon,
                    tie_break,
                    variation,
                });
            }
            (TraceRecord::Header { .. }, Some(_)) => return Err(err("duplicate header")),
            (_, None) => return Err(err("missing header")),
            (TraceRecord::Slice(s), Some(t)) => t.slices.push(s),
            (TraceRecord::Job(j), Some(t)) => {
                let jobs = t.jobs.get_mut(j.task_id).ok_or_else(|| err("task id out of range"))?;
                if j.job_index as usize != jobs.len() {
                    return Err(err("job records out of order"));
                }
                jobs.push(j);
            }
        }
    }
    trace.ok_or(FormatError::Parse {
        line: 0,
        msg: "empty trace".into(),
    })
}
