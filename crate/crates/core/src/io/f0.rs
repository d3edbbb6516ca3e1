use std::io::Read;
use std::path::Path;

use crate::error::{format_err, Result};
use crate::prior::F0Contour;

const HEADER: [&str; 2] = ["frame_index", "f0_hz"];

/// Parse `frame_index,f0_hz` rows. Indices must run 0, 1, 2, … in order.
pub fn parse_f0_csv<R: Read>(reader: R, hop: usize, sample_rate: u32) -> Result<F0Contour> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| format_err("F0 CSV", e.to_string()))?
        .clone();
    if headers.len() != 2 || headers.iter().zip(HEADER).any(|(a, b)| a != b) {
        return Err(format_err(
            "F0 CSV",
            format!("expected header `frame_index,f0_hz`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format_err("F0 CSV", e.to_string()))?;
        if rec.len() != 2 {
            return Err(format_err("F0 CSV", format!("row {row} has {} fields", rec.len())));
        }
        let idx: usize = rec[0]
            .parse()
            .map_err(|_| format_err("F0 CSV", format!("row {row}: bad frame index `{}`", &rec[0])))?;
        if idx != row {
            return Err(format_err(
                "F0 CSV",
                format!("row {row}: frame index {idx} out of sequence"),
            ));
        }
        let f: f64 = rec[1]
            .parse()
            .map_err(|_| format_err("F0 CSV", format!("row {row}: bad F0 value `{}`", &rec[1])))?;
        values.push(f);
    }
    F0Contour::new(values, hop, sample_rate)
}

pub fn read_f0_csv(path: &Path, hop: usize, sample_rate: u32) -> Result<F0Contour> {
    parse_f0_csv(std::fs::File::open(path)?, hop, sample_rate)
}

pub fn render_f0_csv(f0: &F0Contour) -> String {
    let mut s = String::from("frame_index,f0_hz\n");
    for (i, v) in f0.values().iter().enumerate() {
        s.push_str(&format!("{i},{v}\n"));
    }
    s
}

pub fn write_f0_csv(path: &Path, f0: &F0Contour) -> Result<()> {
    super::atomic_write(path, render_f0_csv(f0).as_bytes())
}
