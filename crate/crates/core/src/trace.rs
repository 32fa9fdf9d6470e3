//! Pre-collected model responses, one JSON object per line:
//!
//! ```text
//! {"id":"q1","true":"B","answers":["B","A","B"],"keep":[1,0,1]}
//! ```
//!
//! `keep` is optional and holds the filter verdict for each answer. An
//! optional positive `weight` sets the record's share of the aggregate.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: String,
    #[serde(rename = "true")]
    pub true_answer: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl TraceRecord {
    fn validate(&self) -> Result<()> {
        if self.answers.is_empty() {
            return Err(Error::input(format!("record {:?} has no answers", self.id)));
        }
        if let Some(keep) = &self.keep {
            if keep.len() != self.answers.len() {
                return Err(Error::input(format!(
                    "record {:?}: {} keep flags for {} answers",
                    self.id,
                    keep.len(),
                    self.answers.len()
                )));
            }
            if keep.iter().any(|&f| f > 1) {
                return Err(Error::input(format!("record {:?}: keep flags must be 0 or 1", self.id)));
            }
        }
        if let Some(w) = self.weight {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::input(format!("record {:?}: weight must be positive", self.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResponseTrace {
    records: Vec<TraceRecord>,
}

impl ResponseTrace {
    pub fn new(records: Vec<TraceRecord>) -> Result<Self> {
        let mut ids = HashSet::with_capacity(records.len());
        for r in &records {
            r.validate()?;
            if !ids.insert(r.id.as_str()) {
                return Err(Error::input(format!("duplicate record id {:?}", r.id)));
            }
        }
        if records.iter().any(|r| r.weight.is_some()) && records.iter().any(|r| r.weight.is_none()) {
            return Err(Error::input("either every record carries a weight or none does"));
        }
        Ok(ResponseTrace { records })
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Normalised record weights; uniform when the trace has none.
    pub fn weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = self.records.iter().map(|r| r.weight.unwrap_or(1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord = serde_json::from_str(&line)
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            records.push(record);
        }
        ResponseTrace::new(records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        ResponseTrace::read_jsonl(std::io::BufReader::new(file))
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut writer, r)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines() {
        let text = "{\"id\":\"a\",\"true\":\"B\",\"answers\":[\"B\",\"C\"],\"keep\":[1,0]}\n\n\
                    {\"id\":\"b\",\"true\":\"x\",\"answers\":[\"y\"]}\n";
        let trace = ResponseTrace::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(trace.records().len(), 2);
        assert_eq!(trace.records()[0].keep, Some(vec![1, 0]));
        assert_eq!(trace.records()[1].true_answer, "x");
        assert_eq!(trace.weights(), vec![0.5, 0.5]);
    }

    #[test]
    fn rejects_bad_records() {
        let bad = [
            "{\"id\":\"a\",\"true\":\"B\",\"answers\":[\"B\"],\"keep\":[1,0]}",
            "{\"id\":\"a\",\"true\":\"B\",\"answers\":[\"B\"],\"keep\":[2]}",
            "{\"id\":\"a\",\"true\":\"B\",\"answers\":[]}",
            "{\"id\":\"a\",\"true\":\"B\",\"answers\":[\"B\"]}\n{\"id\":\"a\",\"true\":\"B\",\"answers\":[\"B\"]}",
            "{\"id\":\"a\",\"answers\":[\"B\"]}",
        ];
        for text in bad {
            assert!(ResponseTrace::read_jsonl(text.as_bytes()).is_err(), "{text}");
        }
        match ResponseTrace::read_jsonl("\n{oops".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn writes_what_it_reads() {
        let trace = ResponseTrace::new(vec![TraceRecord {
            id: "q".into(),
            true_answer: "A".into(),
            answers: vec!["A".into(), "B".into()],
            keep: Some(vec![0, 1]),
            weight: None,
        }])
        .unwrap();
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"id\":\"q\",\"true\":\"A\",\"answers\":[\"A\",\"B\"],\"keep\":[0,1]}\n"
        );
        assert_eq!(ResponseTrace::read_jsonl(buf.as_slice()).unwrap(), trace);
    }
}
