//! On-disk trajectory format: `trajectory.json` (metadata),
//! `trajectory.bin` (iterates) and `records.csv` (per-step records).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::map::StepRecord;
use super::trajectory::{Trajectory, TrajectoryMetadata};
use crate::error::{Error, Result};
use crate::numeric::format_float;

/// Header of the iterate file.
pub const MAGIC: &[u8; 8] = b"ERGDYN01";

pub const METADATA_FILE: &str = "trajectory.json";
pub const ITERATES_FILE: &str = "trajectory.bin";
pub const RECORDS_FILE: &str = "records.csv";

/// Magic header followed by every value as a little-endian `f64`.
pub fn write_iterates<W: Write>(mut w: W, iterates: &[Vec<f64>]) -> Result<()> {
    w.write_all(MAGIC)?;
    for it in iterates {
        for v in it {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_iterates<R: Read>(mut r: R, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::config("iterate file does not start with the ERGDYN01 header"));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if dim == 0 || bytes.len() % (8 * dim) != 0 {
        return Err(Error::config(format!(
            "iterate payload of {} bytes is not a whole number of {dim}-vectors",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(values.chunks(dim).map(<[f64]>::to_vec).collect())
}

/// Columns `step,eta,loss,batch`; the batch is space-separated indices or
/// `full`.
pub fn write_records_csv<W: Write>(w: W, records: &[StepRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "eta", "loss", "batch"])?;
    for r in records {
        let batch = match &r.batch {
            None => "full".to_string(),
            Some(b) => b.iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
        };
        out.write_record([r.step.to_string(), format_float(r.eta), format_float(r.loss), batch])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<StepRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let parse_err = |what: &str, v: &str| Error::config(format!("bad {what} `{v}` in records"));
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.len() != 4 {
            return Err(Error::config("records rows need 4 fields"));
        }
        let step = row[0].parse().map_err(|_| parse_err("step", &row[0]))?;
        let eta = row[1].parse().map_err(|_| parse_err("eta", &row[1]))?;
        let loss = row[2].parse().map_err(|_| parse_err("loss", &row[2]))?;
        let batch = match &row[3] {
            "full" => None,
            s => Some(
                s.split_whitespace()
                    .map(|i| i.parse().map_err(|_| parse_err("batch index", i)))
                    .collect::<Result<Vec<usize>>>()?,
            ),
        };
        out.push(StepRecord { step, eta, batch, loss });
    }
    Ok(out)
}

impl Trajectory {
    /// Writes the three trajectory files into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = serde_json::to_string_pretty(self.metadata())?;
        std::fs::write(dir.join(METADATA_FILE), meta + "\n")?;
        write_iterates(BufWriter::new(File::create(dir.join(ITERATES_FILE))?), self.iterates())?;
        write_records_csv(BufWriter::new(File::create(dir.join(RECORDS_FILE))?), self.records())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: TrajectoryMetadata =
            serde_json::from_reader(BufReader::new(File::open(dir.join(METADATA_FILE))?))?;
        let dim = crate::objectives::total_len(&meta.blocks);
        let iterates = read_iterates(BufReader::new(File::open(dir.join(ITERATES_FILE))?), dim)?;
        let records = read_records_csv(BufReader::new(File::open(dir.join(RECORDS_FILE))?))?;
        Trajectory::from_parts(meta, iterates, records)
    }
}
