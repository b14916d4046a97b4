//! Per-round run records and their on-disk forms: a JSON-lines log with
//! one record per round, and a flat metrics CSV.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ParameterStore;
use crate::window::Window;

/// One client's slice of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRoundRecord {
    pub client_id: usize,
    pub window: Window,
    /// Selection bits, one per backbone tensor.
    pub mask: Vec<u8>,
    pub compute_seconds: f64,
    pub loss: f64,
    pub gamma: Option<f64>,
    /// The selector was handed a negative budget this round.
    pub negative_budget: bool,
    pub importance_local: Vec<f64>,
    pub importance_global: Vec<f64>,
    pub importance_blended: Vec<f64>,
}

/// One synchronous round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub wall_clock_seconds: f64,
    pub accuracy: f64,
    pub eval_loss: f64,
    pub checksum: String,
    pub o1: f64,
    pub o1_param_weighted: f64,
    pub mean_gamma: Option<f64>,
    pub clients: Vec<ClientRoundRecord>,
}

/// Writes one record per line as JSON.
pub fn write_jsonl(records: &[RoundRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut file, record)?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<RoundRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Metrics CSV: `round, wall_clock_s, accuracy, o1, mean_gamma,
/// o1_param_weighted` with one row per round.
pub fn write_metrics_csv(records: &[RoundRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "round",
        "wall_clock_s",
        "accuracy",
        "o1",
        "mean_gamma",
        "o1_param_weighted",
    ])?;
    for r in records {
        writer.write_record([
            r.round.to_string(),
            format_f64(r.wall_clock_seconds),
            format_f64(r.accuracy),
            format_f64(r.o1),
            r.mean_gamma.map(format_f64).unwrap_or_default(),
            format_f64(r.o1_param_weighted),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn format_f64(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json's float formatting (shortest round-trip representation),
    // reused so CSV and JSONL agree byte-for-byte on the same values.
    serde_json::to_string(&v).expect("finite float")
}

/// FNV-1a over the bit patterns of every parameter, backbone then heads.
pub fn checksum(store: &ParameterStore) -> String {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut hash = OFFSET;
    let mut eat = |v: f64| {
        for byte in v.to_bits().to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(PRIME);
        }
    };
    for tensor in &store.tensors {
        for &v in tensor {
            eat(v);
        }
    }
    for head in &store.heads {
        for &v in head {
            eat(v);
        }
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(round: usize) -> RoundRecord {
        RoundRecord {
            round,
            wall_clock_seconds: 0.125 * round as f64,
            accuracy: 0.5,
            eval_loss: 1.25,
            checksum: "deadbeef".into(),
            o1: 2.5,
            o1_param_weighted: 120.0,
            mean_gamma: if round % 2 == 0 { Some(0.25) } else { None },
            clients: vec![ClientRoundRecord {
                client_id: 0,
                window: Window::new(0, 1),
                mask: vec![1, 0, 1],
                compute_seconds: 0.01,
                loss: 2.0,
                gamma: Some(0.5),
                negative_budget: false,
                importance_local: vec![0.1, 0.2, 0.3],
                importance_global: vec![0.0, 0.0, 0.0],
                importance_blended: vec![0.06, 0.12, 0.18],
            }],
        }
    }

    #[test]
    fn jsonl_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let records = vec![record(1), record(2)];
        write_jsonl(&records, &path).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), records);
    }

    #[test]
    fn metrics_csv_has_one_row_per_round() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_metrics_csv(&[record(1), record(2), record(3)], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("round,wall_clock_s,accuracy,o1"));
        assert!(lines[1].starts_with("1,0.125,0.5,2.5"));
        // Missing mean_gamma becomes an empty cell.
        assert_eq!(lines[1].split(',').count(), 6);
    }

    #[test]
    fn checksum_is_sensitive_to_any_value() {
        let store = ParameterStore {
            tensors: vec![vec![1.0, 2.0], vec![3.0]],
            heads: vec![vec![0.5]],
        };
        let base = checksum(&store);
        let mut changed = store.clone();
        changed.heads[0][0] = 0.5000000001;
        assert_ne!(base, checksum(&changed));
        assert_eq!(base, checksum(&store));
    }
}
