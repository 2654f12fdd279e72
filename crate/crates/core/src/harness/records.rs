use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const RECORD_HEADER: [&str; 19] = [
    "factor",
    "value",
    "seed",
    "epoch",
    "sample_size",
    "noise_rate",
    "regularizers",
    "redundancy_train",
    "redundancy_test",
    "kmeans_train",
    "kmeans_test",
    "knn_train",
    "knn_test",
    "logreg_train",
    "logreg_test",
    "raw_test_acc",
    "mean_diameter",
    "bounded_count",
    "status",
];

pub const STATUS_OK: &str = "ok";

/// One row of `records.csv`: probe results for one checkpoint of one run.
/// Metrics not requested, or not computable, are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub factor: String,
    pub value: String,
    pub seed: u64,
    pub epoch: usize,
    pub sample_size: usize,
    pub noise_rate: f64,
    pub regularizers: String,
    pub redundancy_train: Option<f64>,
    pub redundancy_test: Option<f64>,
    pub kmeans_train: Option<f64>,
    pub kmeans_test: Option<f64>,
    pub knn_train: Option<f64>,
    pub knn_test: Option<f64>,
    pub logreg_train: Option<f64>,
    pub logreg_test: Option<f64>,
    pub raw_test_acc: Option<f64>,
    pub mean_diameter: Option<f64>,
    pub bounded_count: Option<usize>,
    pub status: String,
}

impl ExperimentRecord {
    pub fn blank(factor: &str, value: &str, seed: u64, epoch: usize) -> Self {
        Self {
            factor: factor.to_string(),
            value: value.to_string(),
            seed,
            epoch,
            sample_size: 0,
            noise_rate: 0.0,
            regularizers: "none".into(),
            redundancy_train: None,
            redundancy_test: None,
            kmeans_train: None,
            kmeans_test: None,
            knn_train: None,
            knn_test: None,
            logreg_train: None,
            logreg_test: None,
            raw_test_acc: None,
            mean_diameter: None,
            bounded_count: None,
            status: STATUS_OK.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    /// Named numeric metrics in header order.
    pub fn metrics(&self) -> [(&'static str, Option<f64>); 11] {
        [
            ("redundancy_train", self.redundancy_train),
            ("redundancy_test", self.redundancy_test),
            ("kmeans_train", self.kmeans_train),
            ("kmeans_test", self.kmeans_test),
            ("knn_train", self.knn_train),
            ("knn_test", self.knn_test),
            ("logreg_train", self.logreg_train),
            ("logreg_test", self.logreg_test),
            ("raw_test_acc", self.raw_test_acc),
            ("mean_diameter", self.mean_diameter),
            ("bounded_count", self.bounded_count.map(|c| c as f64)),
        ]
    }
}

/// Wall time spent on one checkpoint, kept apart from the records so that
/// `records.csv` stays byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub factor: String,
    pub value: String,
    pub seed: u64,
    pub epoch: usize,
    pub seconds: f64,
}

pub fn write_records<W: Write>(records: &[ExperimentRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<ExperimentRecord>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RECORD_HEADER {
        return Err(HarnessError::Format(format!(
            "unexpected records header {}",
            header.join(",")
        )));
    }
    rdr.deserialize()
        .map(|r| r.map_err(HarnessError::from))
        .collect()
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<ExperimentRecord>, HarnessError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))?;
    read_records(std::io::BufReader::new(file))
}

pub fn save_records(records: &[ExperimentRecord], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path)?;
    write_records(records, std::io::BufWriter::new(file))
}

/// Appends rows to a CSV file, writing the header first if the file is new.
pub(crate) struct Appender {
    writer: csv::Writer<std::fs::File>,
}

impl Appender {
    pub(crate) fn open(path: &Path, header: &[&str]) -> Result<Self, HarnessError> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            writer.write_record(header)?;
            writer.flush()?;
        }
        Ok(Self { writer })
    }

    pub(crate) fn append<T: Serialize>(&mut self, row: &T) -> Result<(), HarnessError> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_keeps_every_field() {
        let a = ExperimentRecord {
            sample_size: 1000,
            noise_rate: 0.1,
            redundancy_train: Some(0.1 + 0.2),
            knn_test: Some(1.0 / 3.0),
            mean_diameter: Some(1.234e-7),
            bounded_count: Some(598),
            ..ExperimentRecord::blank("width", "5", 2, 20)
        };
        let b = ExperimentRecord {
            status: "diverged@3".into(),
            regularizers: "batch_norm+weight_decay".into(),
            ..ExperimentRecord::blank("layer_ablation", "1+2", 0, 0)
        };
        let mut buf = Vec::new();
        write_records(&[a.clone(), b.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(&RECORD_HEADER.join(",")));
        assert_eq!(read_records(&buf[..]).unwrap(), vec![a, b]);
    }

    #[test]
    fn empty_file_writes_header_only() {
        let mut buf = Vec::new();
        write_records(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), RECORD_HEADER.join(","));
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(read_records("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn appender_writes_header_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let r = ExperimentRecord::blank("width", "5", 0, 1);
        for _ in 0..2 {
            let mut a = Appender::open(&path, &RECORD_HEADER).unwrap();
            a.append(&r).unwrap();
        }
        assert_eq!(load_records(&path).unwrap(), vec![r.clone(), r]);
    }
}
