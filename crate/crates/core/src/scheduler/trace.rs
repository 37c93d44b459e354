use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EpochReport, SchedulerHyperparams};
use crate::jsonl::{read_jsonl, write_jsonl, JsonlError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    /// Which loop produced the trace, e.g. `toy` or `simulate`.
    pub source: String,
    pub seed: u64,
    pub epochs: u32,
    pub batch_size: usize,
    pub hyperparams: SchedulerHyperparams,
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Epoch(EpochReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub header: TraceHeader,
    pub epochs: Vec<EpochReport>,
}

impl TrainingTrace {
    pub fn new(header: TraceHeader) -> Self {
        Self {
            header,
            epochs: Vec::new(),
        }
    }

    pub fn records(&self) -> Vec<TraceRecord> {
        std::iter::once(TraceRecord::Header(self.header.clone()))
            .chain(self.epochs.iter().cloned().map(TraceRecord::Epoch))
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<(), JsonlError> {
        write_jsonl(writer, &self.records())
    }

    pub fn to_jsonl_string(&self) -> Result<String, JsonlError> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }

    /// Parses a trace: one header line followed by epochs numbered 1, 2, ….
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, JsonlError> {
        let mut lines = read_jsonl::<TraceRecord, _>(reader)?.into_iter();
        let header = match lines.next() {
            Some((_, TraceRecord::Header(h))) => h,
            Some((line, _)) => {
                return Err(JsonlError::Parse {
                    line,
                    message: "first record must be the header".into(),
                })
            }
            None => {
                return Err(JsonlError::Parse {
                    line: 1,
                    message: "empty trace".into(),
                })
            }
        };
        let mut trace = TrainingTrace::new(header);
        for (line, record) in lines {
            match record {
                TraceRecord::Epoch(r) if r.epoch as usize == trace.epochs.len() + 1 => trace.epochs.push(r),
                TraceRecord::Epoch(r) => {
                    return Err(JsonlError::Parse {
                        line,
                        message: format!("epoch {} out of sequence", r.epoch),
                    })
                }
                TraceRecord::Header(_) => {
                    return Err(JsonlError::Parse {
                        line,
                        message: "duplicate header".into(),
                    })
                }
            }
        }
        Ok(trace)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{DomainKey, Modality};
    use crate::losses::Stage;
    use crate::scheduler::{CurriculumScheduler, EpochAccumulator};

    fn sample_trace(n: u32) -> TrainingTrace {
        let hp = SchedulerHyperparams::default();
        let mut s = CurriculumScheduler::new(hp).unwrap();
        let d = DomainKey {
            lesion_class: "nodule".into(),
            modality: Modality::CT,
        };
        let mut trace = TrainingTrace::new(TraceHeader {
            source: "test".into(),
            seed: 9,
            epochs: n,
            batch_size: 4,
            hyperparams: hp,
        });
        for e in 1..=n {
            let mut acc = EpochAccumulator::new(e);
            acc.record(&d, Stage::Easy, 1.0 / f64::from(e), Some(0.3));
            trace.epochs.push(s.end_of_epoch(&acc).unwrap());
        }
        trace
    }

    #[test]
    fn round_trip_is_lossless() {
        let trace = sample_trace(4);
        let text = trace.to_jsonl_string().unwrap();
        assert!(text.starts_with(r#"{"kind":"header""#));
        assert!(text.contains(r#""gap_cot":null"#));
        let back = TrainingTrace::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, trace);
        assert_eq!(back.to_jsonl_string().unwrap(), text);
    }

    #[test]
    fn header_only_trace_is_valid() {
        let trace = sample_trace(0);
        let text = trace.to_jsonl_string().unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(TrainingTrace::read_jsonl(text.as_bytes()).unwrap().epochs.is_empty());
    }

    #[test]
    fn out_of_order_epochs_are_rejected() {
        let text = sample_trace(3).to_jsonl_string().unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(1, 2);
        let err = TrainingTrace::read_jsonl(lines.join("\n").as_bytes()).unwrap_err();
        assert!(matches!(err, JsonlError::Parse { line: 2, .. }), "{err:?}");
        let err = TrainingTrace::read_jsonl(&b""[..]).unwrap_err();
        assert!(matches!(err, JsonlError::Parse { .. }));
    }
}
