//! The RD-point CSV exchange format: one row per (profile, sequence, QP).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{BdError, RdCurve, RdPoint};

pub const HEADER: [&str; 11] = [
    "profile_id",
    "config",
    "sequence",
    "qp",
    "rate_kbps",
    "psnr_y",
    "psnr_u",
    "psnr_v",
    "vmaf",
    "energy_j",
    "time_s",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdRow {
    pub profile_id: String,
    pub config: String,
    pub sequence: String,
    pub qp: i32,
    pub rate_kbps: f64,
    pub psnr_y: f64,
    pub psnr_u: f64,
    pub psnr_v: f64,
    pub vmaf: Option<f64>,
    pub energy_j: Option<f64>,
    pub time_s: Option<f64>,
}

impl RdRow {
    pub fn from_point(profile_id: &str, config: &str, sequence: &str, p: &RdPoint) -> Self {
        RdRow {
            profile_id: profile_id.to_string(),
            config: config.to_string(),
            sequence: sequence.to_string(),
            qp: p.qp,
            rate_kbps: p.rate_kbps,
            psnr_y: p.psnr_y,
            psnr_u: p.psnr_u,
            psnr_v: p.psnr_v,
            vmaf: p.vmaf,
            energy_j: p.energy_j,
            time_s: p.time_s,
        }
    }

    pub fn point(&self) -> RdPoint {
        RdPoint {
            qp: self.qp,
            rate_kbps: self.rate_kbps,
            psnr_y: self.psnr_y,
            psnr_u: self.psnr_u,
            psnr_v: self.psnr_v,
            vmaf: self.vmaf,
            energy_j: self.energy_j,
            time_s: self.time_s,
        }
    }
}

fn csv_err(e: csv::Error) -> BdError {
    BdError::Csv(e.to_string())
}

/// Reads all rows; the header must match [`HEADER`] exactly.
pub fn read_rows<R: Read>(reader: R) -> Result<Vec<RdRow>, BdError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(BdError::Csv(format!(
            "unexpected header `{}`, expected `{}`",
            headers.iter().collect::<Vec<_>>().join(","),
            HEADER.join(",")
        )));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| BdError::Csv(format!("row {}: {e}", i + 2))))
        .collect()
}

pub fn write_rows<W: Write>(writer: W, rows: &[RdRow]) -> Result<(), BdError> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    wtr.write_record(HEADER).map_err(csv_err)?;
    for row in rows {
        wtr.serialize(row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| BdError::Csv(e.to_string()))
}

/// Groups rows into validated curves keyed by `(profile_id, sequence)`.
pub fn curves_from_rows(rows: &[RdRow]) -> Result<BTreeMap<(String, String), RdCurve>, BdError> {
    let mut grouped: BTreeMap<(String, String), Vec<RdPoint>> = BTreeMap::new();
    for row in rows {
        grouped
            .entry((row.profile_id.clone(), row.sequence.clone()))
            .or_default()
            .push(row.point());
    }
    grouped
        .into_iter()
        .map(|((id, seq), points)| {
            let curve = RdCurve::new(id.clone(), seq.clone(), points)?;
            Ok(((id, seq), curve))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "profile_id,config,sequence,qp,rate_kbps,psnr_y,psnr_u,psnr_v,vmaf,energy_j,time_s
a,RA,s,22,4000,40,42,42,95,12.5,
a,RA,s,27,2000,38,40,40,90,10.0,1.5
a,RA,s,32,1000,36,38,38,,8.0,
a,RA,s,37,500,34,36,36,70,6.0,
";

    #[test]
    fn reads_optional_columns() {
        let rows = read_rows(SAMPLE.as_bytes()).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].time_s, None);
        assert_eq!(rows[1].time_s, Some(1.5));
        assert_eq!(rows[2].vmaf, None);
        let curves = curves_from_rows(&rows).unwrap();
        let c = &curves[&("a".to_string(), "s".to_string())];
        assert_eq!(c.points.len(), 4);
        assert!(!c.has(super::super::CostAxis::Rate, super::super::QualityAxis::Vmaf));
    }

    #[test]
    fn rejects_wrong_header() {
        let bad = SAMPLE.replacen("rate_kbps", "rate", 1);
        assert!(matches!(read_rows(bad.as_bytes()), Err(BdError::Csv(_))));
    }

    #[test]
    fn write_then_read() {
        let rows = read_rows(SAMPLE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with(&HEADER.join(",")));
        assert_eq!(read_rows(buf.as_slice()).unwrap(), rows);
    }
}
