use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Equidistant observations `Y(h), …, Y(nh)`; row `k-1` holds `Y(kh)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    h: f64,
    values: DMatrix<f64>,
}

impl Sample {
    pub fn new(h: f64, values: DMatrix<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("grid spacing must be positive, got {h}")));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput("sample is empty".into()));
        }
        if let Some(row) = (0..values.nrows()).find(|&k| values.row(k).iter().any(|v| !v.is_finite())) {
            return Err(Error::MalformedData {
                line: row + 2,
                reason: "non-finite observation".into(),
            });
        }
        Ok(Self { h, values })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    #[inline]
    pub(crate) fn get(&self, k: usize, j: usize) -> f64 {
        self.values[(k, j)]
    }

    /// First `n` observations.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Sample::new(self.h, self.values.rows(0, n).into_owned())
    }

    /// Writes `t,y1,…,yd` with one row per observation time `kh`, numbers in
    /// 17-significant-digit scientific notation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|j| format!("y{j}")));
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec = vec![fmt_num((k + 1) as f64 * self.h)];
            rec.extend(self.values.row(k).iter().map(|&v| fmt_num(v)));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is ascii"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parses the CSV layout written by [`Sample::write_csv`]. The grid
    /// spacing is taken from the time column, which must be equidistant.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = r.headers()?.clone();
        if header.is_empty() {
            return Err(Error::InvalidInput("CSV is empty".into()));
        }
        if header.get(0).map(str::trim) != Some("t") {
            return Err(Error::MalformedData {
                line: 1,
                reason: "header must start with column 't'".into(),
            });
        }
        let d = header.len() - 1;
        if d == 0 {
            return Err(Error::MalformedData { line: 1, reason: "no observation columns".into() });
        }
        let mut times = Vec::new();
        let mut data = Vec::new();
        for (idx, rec) in r.records().enumerate() {
            let line = idx + 2;
            let rec = rec.map_err(|e| Error::MalformedData { line, reason: e.to_string() })?;
            if rec.len() != d + 1 {
                return Err(Error::MalformedData {
                    line,
                    reason: format!("expected {} fields, found {}", d + 1, rec.len()),
                });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| Error::MalformedData {
                    line,
                    reason: format!("cannot parse '{field}' as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::MalformedData { line, reason: format!("non-finite value '{field}'") });
                }
                if j == 0 {
                    times.push(v);
                } else {
                    data.push(v);
                }
            }
        }
        if times.is_empty() {
            return Err(Error::InvalidInput("CSV contains no observations".into()));
        }
        let h = if times.len() == 1 { times[0] } else { times[1] - times[0] };
        for (k, pair) in times.windows(2).enumerate() {
            if ((pair[1] - pair[0]) - h).abs() > 1e-9 * h.abs().max(1.0) {
                return Err(Error::MalformedData {
                    line: k + 3,
                    reason: "time column is not equidistant".into(),
                });
            }
        }
        let n = times.len();
        Sample::new(h, DMatrix::from_row_slice(n, d, &data))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}
