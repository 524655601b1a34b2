//! Line-delimited JSON stream files.
//!
//! One record per line:
//!
//! ```text
//! {"t":1,"labeled":[{"true":0.0,"synth":1.0}],"unlabeled":[0.0,1.0],"proxies":[0.2,0.7,0.3]}
//! ```
//!
//! `proxies` is omitted when absent. Blank lines are skipped.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{LabeledLossPair, StepBatch};
use crate::monitors::SourceData;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledRecord {
    #[serde(rename = "true")]
    pub true_loss: f64,
    #[serde(rename = "synth")]
    pub synth_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamRecord {
    pub t: u64,
    pub labeled: Vec<LabeledRecord>,
    pub unlabeled: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proxies: Option<Vec<f64>>,
}

impl From<&StepBatch> for StreamRecord {
    fn from(b: &StepBatch) -> Self {
        Self {
            t: b.t,
            labeled: b
                .labeled
                .iter()
                .map(|p| LabeledRecord {
                    true_loss: p.true_loss,
                    synth_loss: p.synth_loss,
                })
                .collect(),
            unlabeled: b.unlabeled_synth.clone(),
            proxies: (!b.proxies.is_empty()).then(|| b.proxies.clone()),
        }
    }
}

impl StreamRecord {
    pub fn into_batch(self) -> Result<StepBatch> {
        let batch = StepBatch {
            t: self.t,
            labeled: self
                .labeled
                .into_iter()
                .map(|r| LabeledLossPair {
                    true_loss: r.true_loss,
                    synth_loss: r.synth_loss,
                })
                .collect(),
            unlabeled_synth: self.unlabeled,
            proxies: self.proxies.unwrap_or_default(),
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Parses one line (1-based `line` for error messages).
pub fn parse_record(text: &str, line: usize) -> Result<StepBatch> {
    let record: StreamRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    record.into_batch().map_err(|e| e.at_line(line))
}

/// Iterates over the batches of a stream file, one per nonblank line,
/// checking that `t` strictly increases.
pub struct StreamReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
    last_t: u64,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
            last_t: 0,
        }
    }

    /// Line number of the most recently returned record.
    pub fn line(&self) -> usize {
        self.line
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<StepBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(text) => text,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            let batch = match parse_record(&text, self.line) {
                Ok(b) => b,
                Err(e) => return Some(Err(e)),
            };
            if batch.t <= self.last_t {
                return Some(Err(Error::Sequencing {
                    expected: self.last_t + 1,
                    got: batch.t,
                }));
            }
            self.last_t = batch.t;
            return Some(Ok(batch));
        }
    }
}

pub fn read_stream(reader: impl BufRead) -> Result<Vec<StepBatch>> {
    StreamReader::new(reader).collect()
}

pub fn write_stream<'a>(
    mut writer: impl Write,
    batches: impl IntoIterator<Item = &'a StepBatch>,
) -> Result<()> {
    for b in batches {
        writeln!(writer, "{}", StreamRecord::from(b).to_line()?)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a source file: a stream file whose records are pooled. The proxies
/// of each record's labeled inputs (the first `labeled.len()` proxy values)
/// become `labeled_proxies` when every record carries them.
pub fn read_source(reader: impl BufRead) -> Result<SourceData> {
    let mut data = SourceData::default();
    let mut all_proxies = true;
    for batch in StreamReader::new(reader) {
        let batch = batch?;
        let n = batch.labeled.len();
        if batch.proxies.len() >= n && all_proxies {
            data.labeled_proxies.extend_from_slice(&batch.proxies[..n]);
        } else {
            all_proxies = false;
        }
        data.labeled.extend(batch.labeled);
        data.unlabeled_synth.extend(batch.unlabeled_synth);
    }
    if !all_proxies {
        data.labeled_proxies.clear();
    }
    if data.labeled.is_empty() {
        return Err(Error::Calibration(
            "source file has no labeled samples".into(),
        ));
    }
    Ok(data)
}

/// Splits source data into one record per labeled sample, each carrying a
/// contiguous block of the unlabeled samples (block sizes differ by at most
/// one) and, when present, its labeled proxy.
pub fn source_records(data: &SourceData) -> Vec<StepBatch> {
    let n = data.labeled.len();
    let big_n = data.unlabeled_synth.len();
    (0..n)
        .map(|i| StepBatch {
            t: i as u64 + 1,
            labeled: vec![data.labeled[i]],
            unlabeled_synth: data.unlabeled_synth[i * big_n / n..(i + 1) * big_n / n].to_vec(),
            proxies: data
                .labeled_proxies
                .get(i)
                .map(|&p| vec![p])
                .unwrap_or_default(),
        })
        .collect()
}
