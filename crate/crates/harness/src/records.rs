//! Record CSV input (`confidence,correct`) and reliability CSV output.

use std::io::Read;

use dcpo_core::calibration::{CalibrationRecord, ReliabilityBins};
use serde::Deserialize;

use crate::error::{HarnessError, Result};

pub const RELIABILITY_HEADER: [&str; 5] = ["bin_lo", "bin_hi", "count", "mean_conf", "accuracy"];

#[derive(Debug, Deserialize)]
struct RawRecord {
    confidence: f64,
    correct: String,
}

fn parse_correct(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "true" | "True" | "TRUE" => Some(true),
        "0" | "false" | "False" | "FALSE" => Some(false),
        _ => None,
    }
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<CalibrationRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["confidence", "correct"] {
        return Err(HarnessError::usage(format!(
            "expected header `confidence,correct`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RawRecord>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| HarnessError::usage(format!("line {line}: {e}")))?;
        let correct = parse_correct(&row.correct)
            .ok_or_else(|| HarnessError::usage(format!("line {line}: correct must be 0/1 or true/false")))?;
        out.push(CalibrationRecord::new(row.confidence, correct).map_err(|e| HarnessError::usage(format!("line {line}: {e}")))?);
    }
    if out.is_empty() {
        return Err(HarnessError::usage("record file has no rows"));
    }
    Ok(out)
}

pub fn read_records_file(path: &std::path::Path) -> Result<Vec<CalibrationRecord>> {
    let file = std::fs::File::open(path).map_err(crate::error::io_err(path))?;
    read_records(file)
}

pub fn reliability_csv(bins: &ReliabilityBins) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RELIABILITY_HEADER)?;
    for b in &bins.bins {
        w.write_record([
            b.lo.to_string(),
            b.hi.to_string(),
            b.count.to_string(),
            b.mean_confidence.to_string(),
            b.accuracy.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use dcpo_core::calibration::bin_records;

    #[test]
    fn reads_both_label_spellings() {
        let r = read_records("confidence,correct\n0.9,1\n0.2,false\n 0.5 , true \n".as_bytes()).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r[0].correct && !r[1].correct && r[2].correct);
        assert_eq!(r[2].confidence, 0.5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_records("conf,correct\n0.9,1\n".as_bytes()).is_err());
        assert!(read_records("confidence,correct\n1.5,1\n".as_bytes()).is_err());
        assert!(read_records("confidence,correct\n0.5,maybe\n".as_bytes()).is_err());
        assert!(read_records("confidence,correct\n".as_bytes()).is_err());
        assert!(read_records("confidence,correct\nx,1\n".as_bytes()).is_err());
    }

    #[test]
    fn reliability_layout() {
        let r = read_records("confidence,correct\n0.95,1\n0.95,0\n0.45,1\n0.45,0\n".as_bytes()).unwrap();
        let text = reliability_csv(&bin_records(&r, 10).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "bin_lo,bin_hi,count,mean_conf,accuracy");
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[5], "0.4,0.5,2,0.45,0.5");
        assert_eq!(lines[1], "0,0.1,0,0,0");
    }
}
