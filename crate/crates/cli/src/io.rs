//! CSV ingestion and surface serialization.

use std::io::{Read, Write};
use std::path::Path;

use dmq_core::quantile::{QuantileSurface, SurfacePoint};
use dmq_core::Sample;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Reads a rectangular numeric table. Rows are numbered from 1 in the file,
/// header included.
pub fn parse_csv_reader<R: Read>(reader: R, has_header: bool) -> CliResult<Sample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1 + has_header as usize);
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(CliError::data(format!(
                    "ragged row {row}: {} fields, expected {w}",
                    rec.len()
                )))
            }
            _ => {}
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                CliError::data(format!(
                    "non-numeric cell '{field}' at row {row}, column {}",
                    c + 1
                ))
            })?;
            data.push(v);
        }
    }
    let d = width.ok_or_else(|| CliError::data("input has no data rows"))?;
    Ok(Sample::from_flat(data, d)?)
}

pub fn parse_csv(path: &Path, has_header: bool) -> CliResult<Sample> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    parse_csv_reader(std::io::BufReader::new(file), has_header)
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_sample_csv<W: Write>(w: W, sample: &Sample) -> CliResult<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in sample.rows() {
        wtr.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Serialized surface: the schema shared by estimated and oracle outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDoc {
    pub alpha: f64,
    pub direction: Vec<f64>,
    pub k: usize,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub points: Vec<PointDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDoc {
    pub theta: Vec<f64>,
    pub x_rotated: Vec<f64>,
    pub x_original: Vec<f64>,
    pub rho: f64,
    pub floored: bool,
}

impl From<&SurfacePoint> for PointDoc {
    fn from(p: &SurfacePoint) -> Self {
        Self {
            theta: p.theta.clone(),
            x_rotated: p.x_rotated.clone(),
            x_original: p.x_original.clone(),
            rho: p.rho,
            floored: p.floored,
        }
    }
}

impl From<&QuantileSurface> for SurfaceDoc {
    fn from(s: &QuantileSurface) -> Self {
        Self {
            alpha: s.alpha,
            direction: s.direction.components().to_vec(),
            k: s.k,
            gamma: s.fit.gamma,
            source: None,
            points: s.points.iter().map(PointDoc::from).collect(),
        }
    }
}

impl SurfaceDoc {
    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn to_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Scalar metadata goes into `# key=value` comment lines; one row per point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> CliResult<()> {
        writeln!(w, "# alpha={}", fmt_f64(self.alpha))?;
        let dir: Vec<String> = self.direction.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "# direction={}", dir.join(";"))?;
        writeln!(w, "# k={}", self.k)?;
        writeln!(w, "# gamma={}", fmt_f64(self.gamma))?;
        if let Some(src) = &self.source {
            writeln!(w, "# source={src}")?;
        }
        let d = self.dim();
        let mut header = Vec::new();
        for prefix in ["theta", "x_rotated", "x_original"] {
            header.extend((1..=d).map(|j| format!("{prefix}_{j}")));
        }
        header.push("rho".into());
        header.push("floored".into());
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&header)?;
        for p in &self.points {
            let mut rec: Vec<String> = p
                .theta
                .iter()
                .chain(&p.x_rotated)
                .chain(&p.x_original)
                .map(|v| fmt_f64(*v))
                .collect();
            rec.push(fmt_f64(p.rho));
            rec.push(p.floored.to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mut r: R) -> CliResult<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut meta = std::collections::BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
        }
        let get = |key: &str| {
            meta.get(key)
                .ok_or_else(|| CliError::data(format!("surface csv lacks '{key}' metadata")))
        };
        let num = |key: &str| -> CliResult<f64> {
            get(key)?
                .parse()
                .map_err(|_| CliError::data(format!("bad '{key}' metadata")))
        };
        let alpha = num("alpha")?;
        let gamma = num("gamma")?;
        let k = get("k")?
            .parse()
            .map_err(|_| CliError::data("bad 'k' metadata"))?;
        let direction = get("direction")?
            .split(';')
            .map(|v| v.parse().map_err(|_| CliError::data("bad 'direction' metadata")))
            .collect::<CliResult<Vec<f64>>>()?;
        let source = meta.get("source").cloned();
        let d = direction.len();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut points = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 * d + 2 {
                return Err(CliError::data(format!("surface row {} has {} fields", i + 1, rec.len())));
            }
            let vals: Vec<f64> = rec
                .iter()
                .take(3 * d + 1)
                .map(|f| f.parse().map_err(|_| CliError::data(format!("bad value '{f}' in surface row {}", i + 1))))
                .collect::<CliResult<_>>()?;
            let floored = rec[3 * d + 1]
                .parse()
                .map_err(|_| CliError::data(format!("bad floored flag in surface row {}", i + 1)))?;
            points.push(PointDoc {
                theta: vals[..d].to_vec(),
                x_rotated: vals[d..2 * d].to_vec(),
                x_original: vals[2 * d..3 * d].to_vec(),
                rho: vals[3 * d],
                floored,
            });
        }
        Ok(Self {
            alpha,
            direction,
            k,
            gamma,
            source,
            points,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_table() {
        let s = parse_csv_reader("1,2\n3,4\n".as_bytes(), false).unwrap();
        assert_eq!(s.to_rows(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn skips_header() {
        let s = parse_csv_reader("a,b\n1,2\n3,4\n".as_bytes(), true).unwrap();
        assert_eq!(s.nrows(), 2);
        assert!(parse_csv_reader("a,b\n1,2\n".as_bytes(), false).is_err());
    }

    #[test]
    fn ragged_row_named() {
        let err = parse_csv_reader("1,2\n3\n".as_bytes(), false).unwrap_err();
        assert!(err.message.contains("row 2"), "{}", err.message);
        assert_eq!(err.exit_code, crate::error::EXIT_DATA);
    }

    #[test]
    fn non_numeric_cell_named() {
        let err = parse_csv_reader("x,y\n1,2\n3,abc\n".as_bytes(), true).unwrap_err();
        assert!(err.message.contains("row 3, column 2"), "{}", err.message);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(parse_csv_reader("".as_bytes(), false).is_err());
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123_456_789.123_456_79, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
