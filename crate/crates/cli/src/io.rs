//! File formats: long-format observation CSV, measure CSV, number output.

use std::collections::HashMap;
use std::io::{Read, Write};

use gwr_core::matrix::SymMatrix;
use gwr_core::GaussianMeasure;
use nalgebra::{DMatrix, DVector};

use crate::error::CliError;

/// Formats a float with 9 significant digits, switching to exponent notation
/// for very large or small magnitudes.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed)
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Predictor,
    Response,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Predictor => "predictor",
            Role::Response => "response",
        }
    }
}

/// Observations of one unit, rows are draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: String,
    pub predictor: Option<DMatrix<f64>>,
    pub response: Option<DMatrix<f64>>,
}

/// Parsed `unit_id,role,c1,...,cD` file; units in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct LongDataset {
    pub units: Vec<Unit>,
    pub d_predictor: Option<usize>,
    pub d_response: Option<usize>,
}

impl LongDataset {
    pub fn unit_ids(&self) -> Vec<&str> {
        self.units.iter().map(|u| u.id.as_str()).collect()
    }

    /// Keeps the units at the given positions.
    pub fn select(&self, keep: &[usize]) -> LongDataset {
        LongDataset {
            units: keep.iter().map(|&i| self.units[i].clone()).collect(),
            d_predictor: self.d_predictor,
            d_response: self.d_response,
        }
    }
}

/// Reads a long-format CSV. Rows may leave trailing coordinate cells empty
/// when the two roles have different dimensions, but every row of a role
/// must carry the same number of values.
pub fn read_long<R: Read>(reader: R) -> Result<LongDataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::input(format!("CSV header: {e}")))?.clone();
    if headers.len() < 3 || &headers[0] != "unit_id" || &headers[1] != "role" {
        return Err(CliError::input("CSV header must start with unit_id,role followed by c1,...,cd".to_string()));
    }
    for (i, h) in headers.iter().skip(2).enumerate() {
        if h != format!("c{}", i + 1) {
            return Err(CliError::input(format!("CSV header column {} must be c{}, found {h:?}", i + 3, i + 1)));
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, (Vec<Vec<f64>>, Vec<Vec<f64>>)> = HashMap::new();
    let mut dims: [Option<usize>; 2] = [None, None];
    for (k, record) in rdr.records().enumerate() {
        // header is line 1
        let line = k + 2;
        let record = record.map_err(|e| CliError::input(format!("CSV row {line}: {e}")))?;
        let id = record.get(0).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(CliError::input(format!("CSV row {line}: empty unit_id")));
        }
        let role = match record.get(1).map(str::trim) {
            Some("predictor") => Role::Predictor,
            Some("response") => Role::Response,
            other => {
                return Err(CliError::input(format!(
                    "CSV row {line}: role must be predictor or response, found {:?}",
                    other.unwrap_or("")
                )))
            }
        };
        let cells: Vec<&str> = record.iter().skip(2).map(str::trim).collect();
        let width = cells.iter().rposition(|c| !c.is_empty()).map_or(0, |p| p + 1);
        if width == 0 {
            return Err(CliError::input(format!("CSV row {line}: no coordinates")));
        }
        let mut values = Vec::with_capacity(width);
        for (j, cell) in cells[..width].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| CliError::input(format!("CSV row {line}, column c{}: cannot parse {cell:?}", j + 1)))?;
            if !v.is_finite() {
                return Err(CliError::input(format!("CSV row {line}, column c{}: non-finite value {cell}", j + 1)));
            }
            values.push(v);
        }
        let slot = &mut dims[role as usize];
        match *slot {
            None => *slot = Some(width),
            Some(d) if d != width => {
                return Err(CliError::input(format!(
                    "CSV row {line}: {} rows have {d} coordinates, this row has {width}",
                    role.as_str()
                )))
            }
            Some(_) => {}
        }
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (Vec::new(), Vec::new())
        });
        match role {
            Role::Predictor => entry.0.push(values),
            Role::Response => entry.1.push(values),
        }
    }
    if order.is_empty() {
        return Err(CliError::input("CSV has no data rows".to_string()));
    }
    let to_matrix = |r: Vec<Vec<f64>>| -> Option<DMatrix<f64>> {
        if r.is_empty() {
            return None;
        }
        let cols = r[0].len();
        Some(DMatrix::from_row_iterator(r.len(), cols, r.into_iter().flatten()))
    };
    let units = order
        .into_iter()
        .map(|id| {
            let (p, q) = rows.remove(&id).expect("unit recorded");
            Unit { id, predictor: to_matrix(p), response: to_matrix(q) }
        })
        .collect();
    Ok(LongDataset { units, d_predictor: dims[0], d_response: dims[1] })
}

/// Writes rows `unit_id,role,c1..cD` for the given observation blocks.
pub fn write_long<W: Write>(writer: W, units: &[Unit]) -> Result<(), CliError> {
    let width = units
        .iter()
        .flat_map(|u| [u.predictor.as_ref(), u.response.as_ref()])
        .flatten()
        .map(|m| m.ncols())
        .max()
        .unwrap_or(0);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header = vec!["unit_id".to_string(), "role".to_string()];
    header.extend((1..=width).map(|j| format!("c{j}")));
    w.write_record(&header)?;
    for u in units {
        for (role, block) in [(Role::Predictor, &u.predictor), (Role::Response, &u.response)] {
            if let Some(m) = block {
                for row in m.row_iter() {
                    let mut rec = vec![u.id.clone(), role.as_str().to_string()];
                    rec.extend(row.iter().map(|&v| fmt_num(v)));
                    rec.resize(width + 2, String::new());
                    w.write_record(&rec)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One Gaussian per unit, optionally with prediction flags.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureRow {
    pub unit_id: String,
    pub projected: Option<bool>,
    pub eta: Option<f64>,
    pub measure: GaussianMeasure,
}

fn measure_header(d: usize, with_flags: bool) -> Vec<String> {
    let mut h = vec!["unit_id".to_string()];
    if with_flags {
        h.push("projected".into());
        h.push("eta".into());
    }
    h.extend((1..=d).map(|i| format!("m{i}")));
    for i in 1..=d {
        for j in 1..=d {
            h.push(format!("cov_{i}_{j}"));
        }
    }
    h
}

/// Writes `unit_id[,projected,eta],m1..md,cov_1_1..cov_d_d` (covariance row-major).
pub fn write_measures<W: Write>(writer: W, rows: &[MeasureRow]) -> Result<(), CliError> {
    let d = rows.first().map_or(0, |r| r.measure.dim());
    let with_flags = rows.first().is_some_and(|r| r.projected.is_some());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(measure_header(d, with_flags))?;
    for r in rows {
        let mut rec = vec![r.unit_id.clone()];
        if with_flags {
            rec.push(r.projected.unwrap_or(false).to_string());
            rec.push(fmt_num(r.eta.unwrap_or(1.0)));
        }
        rec.extend(r.measure.mean().iter().map(|&v| fmt_num(v)));
        let cov = r.measure.cov().as_matrix();
        for i in 0..d {
            for j in 0..d {
                rec.push(fmt_num(cov[(i, j)]));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the measure CSV written by [`write_measures`], with or without the
/// prediction flag columns.
pub fn read_measures<R: Read>(reader: R) -> Result<Vec<MeasureRow>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> =
        rdr.headers().map_err(|e| CliError::input(format!("CSV header: {e}")))?.iter().map(String::from).collect();
    let with_flags = headers.get(1).map(String::as_str) == Some("projected");
    let offset = if with_flags { 3 } else { 1 };
    let rest = headers.len().saturating_sub(offset);
    // d means plus d² covariance entries
    let d = (1..=rest).find(|d| d + d * d == rest).ok_or_else(|| {
        CliError::input(format!("measure CSV has {rest} value columns, expected d + d² for some d"))
    })?;
    if headers != measure_header(d, with_flags) {
        return Err(CliError::input(format!("measure CSV header must be {}", measure_header(d, with_flags).join(","))));
    }
    let mut out = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| CliError::input(format!("CSV row {line}: {e}")))?;
        let num = |j: usize| -> Result<f64, CliError> {
            let cell = record.get(j).unwrap_or("").trim();
            let v: f64 =
                cell.parse().map_err(|_| CliError::input(format!("CSV row {line}, column {}: cannot parse {cell:?}", j + 1)))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::input(format!("CSV row {line}, column {}: non-finite value", j + 1)))
            }
        };
        let (projected, eta) = if with_flags {
            let p = match record.get(1).map(str::trim) {
                Some("true") => true,
                Some("false") => false,
                other => return Err(CliError::input(format!("CSV row {line}: projected must be true or false, found {other:?}"))),
            };
            (Some(p), Some(num(2)?))
        } else {
            (None, None)
        };
        let mean = DVector::from_iterator(d, (0..d).map(|i| num(offset + i)).collect::<Result<Vec<_>, _>>()?);
        let cov: Vec<f64> = (0..d * d).map(|i| num(offset + d + i)).collect::<Result<_, _>>()?;
        let cov = DMatrix::from_row_slice(d, d, &cov);
        if (&cov - cov.transpose()).amax() > 1e-9 * cov.amax().max(1.0) {
            return Err(CliError::input(format!("CSV row {line}: covariance is not symmetric")));
        }
        let measure = GaussianMeasure::new(mean, SymMatrix::new(cov))
            .map_err(|e| CliError::input(format!("CSV row {line}: {e}")))?;
        out.push(MeasureRow { unit_id: record.get(0).unwrap_or("").to_string(), projected, eta, measure });
    }
    Ok(out)
}
