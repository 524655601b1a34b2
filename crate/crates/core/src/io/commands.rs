//! The `calibrate`, `monitor`, `simulate` and `experiment` commands.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::stream::{read_source, source_records, write_stream, StreamReader};
use super::trace_csv;
use crate::error::{Error, Result};
use crate::harness::{method_config, run_experiment_with, ExperimentSummary, Method};
use crate::monitors::{
    calibrate_source, Monitor, RiskMonitor, SourceBoundMethod, SourceCalibration, UrmCalibration,
    UrmMonitor,
};
use crate::simulator::{generate_source, generate_stream};

/// Exit status of `monitor` when the stream ended without an alarm.
pub const EXIT_CENSORED: i32 = 0;
/// Exit status for any error.
pub const EXIT_ERROR: i32 = 1;
/// Exit status of `monitor` when an alarm was raised.
pub const EXIT_ALARM: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    Hoeffding,
    Betting,
    Urm,
}

impl std::str::FromStr for CalibrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hoeffding" => Ok(Self::Hoeffding),
            "betting" => Ok(Self::Betting),
            "urm" => Ok(Self::Urm),
            other => Err(Error::Config(format!(
                "unknown calibration method '{other}'"
            ))),
        }
    }
}

/// Contents of a calibration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CalibrationRecord {
    Source(SourceCalibration),
    Urm(UrmCalibration),
}

impl CalibrationRecord {
    pub fn upper_bound(&self) -> f64 {
        match self {
            CalibrationRecord::Source(c) => c.upper_bound,
            CalibrationRecord::Urm(c) => c.upper_bound,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        Ok(Box::new(BufReader::new(std::io::stdin().lock())))
    } else {
        Ok(Box::new(BufReader::new(File::open(path)?)))
    }
}

/// Computes a source calibration from a source file.
pub fn cmd_calibrate(
    source: &Path,
    config: &RunConfig,
    method: CalibrationMethod,
) -> Result<CalibrationRecord> {
    let data = read_source(open_input(source)?)?;
    let mut mc = config.monitor_config();
    Ok(match method {
        CalibrationMethod::Hoeffding | CalibrationMethod::Betting => {
            mc.source_bound_method = if method == CalibrationMethod::Hoeffding {
                SourceBoundMethod::HoeffdingLabeledOnly
            } else {
                SourceBoundMethod::BettingPpi
            };
            CalibrationRecord::Source(calibrate_source(&data, &mc)?)
        }
        CalibrationMethod::Urm => CalibrationRecord::Urm(UrmCalibration::from_source(
            &data,
            &mc,
            config.monitor.urm_quantile_levels,
        )?),
    })
}

/// Final state of a `monitor` run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorOutcome {
    pub method: Method,
    pub steps: u64,
    pub alarm: bool,
    pub alarm_time: Option<u64>,
    pub censored: bool,
    pub final_lower_bound: Option<f64>,
    pub upper_bound_source: f64,
}

impl MonitorOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.alarm {
            EXIT_ALARM
        } else {
            EXIT_CENSORED
        }
    }
}

/// Runs one monitor over a stream file (`-` for stdin), writing one CSV row
/// per step to `trace` as it goes.
pub fn cmd_monitor(
    stream: &Path,
    calibration: &CalibrationRecord,
    config: &RunConfig,
    method: Method,
    trace: impl Write,
) -> Result<MonitorOutcome> {
    let mc = method_config(method, &config.monitor_config());
    let mut monitor: Box<dyn Monitor> = match (method, calibration) {
        (Method::Urm, CalibrationRecord::Urm(c)) => Box::new(UrmMonitor::new(mc, *c)?),
        (Method::Srm, CalibrationRecord::Source(c)) => Box::new(RiskMonitor::supervised(mc, *c)?),
        (Method::PprmFixed | Method::PprmAdaptive, CalibrationRecord::Source(c)) => {
            Box::new(RiskMonitor::prediction_powered(mc, *c)?)
        }
        (Method::PprmIdeal, _) => {
            return Err(Error::Config(
                "pprm_ideal needs true labels and is only available in experiments".into(),
            ))
        }
        (m, _) => {
            return Err(Error::Config(format!(
                "calibration file does not match method {m}"
            )))
        }
    };
    let mut out = BufWriter::new(trace);
    trace_csv::write_header(&mut out)?;
    let mut outcome = MonitorOutcome {
        method,
        steps: 0,
        alarm: false,
        alarm_time: None,
        censored: true,
        final_lower_bound: None,
        upper_bound_source: calibration.upper_bound(),
    };
    for batch in StreamReader::new(open_input(stream)?) {
        let batch = batch?;
        let row = monitor.step(&batch)?;
        trace_csv::write_row(&mut out, &row)?;
        outcome.steps += 1;
        outcome.final_lower_bound = Some(row.lower_bound);
        if row.alarm && outcome.alarm_time.is_none() {
            outcome.alarm_time = Some(row.t);
        }
    }
    out.flush()?;
    outcome.alarm = outcome.alarm_time.is_some();
    outcome.censored = !outcome.alarm;
    Ok(outcome)
}

/// Paths written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub stream: PathBuf,
    pub source: PathBuf,
}

/// Writes `stream.jsonl` and `source.jsonl` for the configured scenario.
pub fn cmd_simulate(config: &RunConfig, output_dir: &Path) -> Result<SimulateOutput> {
    fs::create_dir_all(output_dir)?;
    let stream = output_dir.join("stream.jsonl");
    let source = output_dir.join("source.jsonl");
    let batches = generate_stream(&config.scenario)?;
    write_stream(BufWriter::new(File::create(&stream)?), &batches)?;
    let src = generate_source(&config.scenario)?;
    write_stream(
        BufWriter::new(File::create(&source)?),
        &source_records(&src.data),
    )?;
    Ok(SimulateOutput { stream, source })
}

/// Runs the configured experiment; with an output directory, writes
/// `summary.json` and one trace per replication and method under
/// `traces/rep{r}_{method}.csv`.
pub fn cmd_experiment(config: &RunConfig, output_dir: Option<&Path>) -> Result<ExperimentSummary> {
    let plan = config.experiment_plan();
    let trace_dir = output_dir.map(|d| d.join("traces"));
    if let Some(dir) = &trace_dir {
        fs::create_dir_all(dir)?;
    }
    let summary = run_experiment_with(&plan, |res| {
        if let Some(dir) = &trace_dir {
            for run in &res.runs {
                let path = dir.join(format!("rep{}_{}.csv", res.replication, run.method));
                trace_csv::write_trace(BufWriter::new(File::create(path)?), &run.trace)?;
            }
        }
        Ok(())
    })?;
    if let Some(dir) = output_dir {
        let mut f = BufWriter::new(File::create(dir.join("summary.json"))?);
        serde_json::to_writer_pretty(&mut f, &summary)?;
        writeln!(f)?;
        f.flush()?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::stream::read_stream;
    use crate::simulator::Schedule;

    fn small_config() -> RunConfig {
        let mut c = RunConfig::default();
        c.scenario.horizon = 100;
        c.scenario.schedule = Schedule::Constant { p: 0.3 };
        c.scenario.source_labeled = 100;
        c.scenario.source_unlabeled = 1500;
        c
    }

    #[test]
    fn calibration_record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = cmd_simulate(&small_config(), dir.path()).unwrap();
        for m in [
            CalibrationMethod::Hoeffding,
            CalibrationMethod::Betting,
            CalibrationMethod::Urm,
        ] {
            let rec = cmd_calibrate(&out.source, &small_config(), m).unwrap();
            let text = serde_json::to_string(&rec).unwrap();
            let back: CalibrationRecord = serde_json::from_str(&text).unwrap();
            assert_eq!(back, rec);
            assert_eq!(
                matches!(back, CalibrationRecord::Urm(_)),
                m == CalibrationMethod::Urm
            );
        }
    }

    #[test]
    fn simulate_shape_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = small_config();
        let oa = cmd_simulate(&c, a.path()).unwrap();
        let ob = cmd_simulate(&c, b.path()).unwrap();
        assert_eq!(fs::read(&oa.stream).unwrap(), fs::read(&ob.stream).unwrap());
        assert_eq!(fs::read(&oa.source).unwrap(), fs::read(&ob.source).unwrap());
        let batches = read_stream(BufReader::new(File::open(&oa.stream).unwrap())).unwrap();
        assert_eq!(batches.len(), 100);
        assert!(batches
            .iter()
            .all(|b| b.labeled.len() == 1 && b.unlabeled_synth.len() == 15));
    }

    #[test]
    fn mismatched_calibration_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let out = cmd_simulate(&small_config(), dir.path()).unwrap();
        let rec =
            cmd_calibrate(&out.source, &small_config(), CalibrationMethod::Hoeffding).unwrap();
        let err =
            cmd_monitor(&out.stream, &rec, &small_config(), Method::Urm, Vec::new()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn empty_stream_is_censored() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.jsonl");
        fs::write(&empty, "").unwrap();
        let rec = CalibrationRecord::Source(SourceCalibration {
            method: SourceBoundMethod::HoeffdingLabeledOnly,
            estimate: 0.3,
            upper_bound: 0.4,
            n0: 10,
            big_n0: 0,
            eta0: 0.0,
        });
        let mut buf = Vec::new();
        let o = cmd_monitor(&empty, &rec, &small_config(), Method::Srm, &mut buf).unwrap();
        assert!(o.censored && o.steps == 0);
        assert_eq!(o.exit_code(), EXIT_CENSORED);
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{}\n", trace_csv::HEADER)
        );
    }
}
