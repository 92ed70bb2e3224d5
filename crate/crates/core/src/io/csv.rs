use std::path::Path;

use crate::error::{Error, Result};
use crate::simulation::{SimulationResult, Termination};

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

pub fn header(n_plants: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "pilot_v".to_string(), "dq_ref".to_string()];
    for i in 1..=n_plants {
        h.extend([format!("q_ref_{i}"), format!("q_poi_{i}"), format!("v_ref_{i}")]);
    }
    h
}

/// Renders the result table. A final `#termination` row records the verdict.
pub fn timeseries_csv(result: &SimulationResult) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    let n = result.plant_names.len();
    let to_bytes = "writing to memory cannot fail";
    w.write_record(header(n)).expect(to_bytes);
    for s in &result.samples {
        let mut row = vec![fmt(s.t), fmt(s.pilot_v), fmt(s.dq_ref)];
        for p in &s.plants {
            row.extend([fmt(p.q_ref), fmt(p.q_poi), fmt(p.v_ref)]);
        }
        w.write_record(&row).expect(to_bytes);
    }
    let verdict = match result.termination {
        Termination::Completed => vec!["#termination".to_string(), "completed".to_string()],
        Termination::Collapsed { t } => vec!["#termination".to_string(), "collapsed".to_string(), fmt(t)],
    };
    w.write_record(&verdict).expect(to_bytes);
    w.into_inner().expect(to_bytes)
}

pub fn write_timeseries_csv(result: &SimulationResult, path: &Path) -> Result<()> {
    std::fs::write(path, timeseries_csv(result)).map_err(|e| io_error(path, e))
}
