//! Table interchange formats.
//!
//! * JSON: `{kernel, n_max, precision_bits, values, residuals, residual_max}`
//!   with values as doubles (shortest round-trip form, at most 17 digits).
//! * CSV: columns `n,p,residual`, optionally preceded by one
//!   `# kernel=... n_max=... precision_bits=... residual_max=...` line.
//! * Native dump: JSON with every value as an MPFR hex string at full
//!   precision, plus residuals and the precision policy. Used for
//!   checkpoint/resume and exact comparisons.
//!
//! The parsers accept untrusted bytes: they return [`Error::Format`] instead
//! of panicking and cap sizes before allocating.

use std::fmt::Write as _;
use std::str::FromStr;

use rug::Float;
use serde::{Deserialize, Serialize};

use super::{RowResidual, SequenceTable};
use crate::error::{Error, Result};
use crate::precision::{PrecisionConfig, MIN_BITS};

/// Largest `n_max` a parsed table may declare.
pub const MAX_TABLE_LEN: u64 = 1 << 24;
/// Largest precision a native dump may declare.
pub const MAX_DUMP_BITS: u32 = 1 << 16;

pub const NATIVE_FORMAT: &str = "selfavg-native-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Json,
    Csv,
    Native,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "native" => Ok(Self::Native),
            other => Err(Error::Config(format!(
                "unknown format `{other}` (expected json, csv or native)"
            ))),
        }
    }
}

impl TableFormat {
    /// Guesses the format from a file name.
    pub fn from_path(path: &std::path::Path) -> Self {
        let name = path.to_string_lossy();
        if name.ends_with(".csv") {
            Self::Csv
        } else if name.ends_with(".native.json") || name.ends_with(".native") {
            Self::Native
        } else {
            Self::Json
        }
    }
}

/// Double-precision view of a table; the form consumed by the envelope code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableData {
    pub kernel: String,
    pub n_max: u64,
    /// Tables written by other tools may omit this; they are taken as doubles.
    #[serde(default = "double_bits")]
    pub precision_bits: u32,
    pub values: Vec<f64>,
    #[serde(default)]
    pub residuals: Vec<f64>,
    #[serde(default)]
    pub residual_max: f64,
}

fn double_bits() -> u32 {
    53
}

impl From<&SequenceTable> for TableData {
    fn from(t: &SequenceTable) -> Self {
        Self {
            kernel: t.kernel_name.clone(),
            n_max: t.len().saturating_sub(1) as u64,
            precision_bits: t.precision_bits,
            values: t.to_f64(),
            residuals: t.residuals.iter().map(RowResidual::max).collect(),
            residual_max: t.residual_max(),
        }
    }
}

impl TableData {
    /// Synthetic table, mostly for tests and examples.
    pub fn from_values(kernel: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let t = Self {
            kernel: kernel.into(),
            n_max: values.len().saturating_sub(1) as u64,
            precision_bits: 53,
            residuals: vec![0.0; values.len()],
            residual_max: 0.0,
            values,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Format("table has no values".into()));
        }
        if self.n_max > MAX_TABLE_LEN || self.values.len() as u64 != self.n_max + 1 {
            return Err(Error::Format(format!(
                "n_max = {} but {} values",
                self.n_max,
                self.values.len()
            )));
        }
        if !self.residuals.is_empty() && self.residuals.len() != self.values.len() {
            return Err(Error::Format(format!(
                "{} residuals for {} values",
                self.residuals.len(),
                self.values.len()
            )));
        }
        if let Some(n) = self.values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format(format!(
                "p({n}) = {} is not in [0, 1]",
                self.values[n]
            )));
        }
        if self.residuals.iter().any(|r| !(r.is_finite() && *r >= 0.0))
            || !(self.residual_max.is_finite() && self.residual_max >= 0.0)
        {
            return Err(Error::Format(
                "residuals must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let t: Self = serde_json::from_slice(bytes)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# kernel={} n_max={} precision_bits={} residual_max={:e}",
            self.kernel, self.n_max, self.precision_bits, self.residual_max
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "p", "residual"])?;
        for (n, v) in self.values.iter().enumerate() {
            let r = self.residuals.get(n).copied().unwrap_or(0.0);
            w.write_record([n.to_string(), format_f64(*v), format_f64(r)])?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        out.push_str(&String::from_utf8(body).map_err(|e| Error::Format(e.to_string()))?);
        Ok(out)
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?;
        let (meta, body) = match text.strip_prefix('#') {
            Some(rest) => match rest.split_once('\n') {
                Some((line, body)) => (Some(line), body),
                None => (Some(rest), ""),
            },
            None => (None, text),
        };
        let mut kernel = "unknown".to_string();
        let mut precision_bits = 53;
        if let Some(line) = meta {
            for field in line.split_whitespace() {
                let Some((key, val)) = field.split_once('=') else {
                    continue;
                };
                match key {
                    "kernel" => kernel = val.to_string(),
                    "precision_bits" => {
                        precision_bits = val
                            .parse()
                            .map_err(|_| Error::Format(format!("bad precision_bits `{val}`")))?
                    }
                    _ => {}
                }
            }
        }

        let mut rd = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(body.as_bytes());
        let headers = rd.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(cn), Some(cp)) = (col("n"), col("p")) else {
            return Err(Error::Format("CSV needs columns n and p".into()));
        };
        let cr = col("residual");
        let mut values = Vec::new();
        let mut residuals = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let n: u64 = field(cn)
                .parse()
                .map_err(|_| Error::Format(format!("bad n `{}`", field(cn))))?;
            if n != values.len() as u64 {
                return Err(Error::Format(format!(
                    "rows must list n = 0, 1, 2, ... in order; found n = {n} at row {}",
                    values.len()
                )));
            }
            if n > MAX_TABLE_LEN {
                return Err(Error::Format("table too long".into()));
            }
            let p: f64 = field(cp)
                .parse()
                .map_err(|_| Error::Format(format!("bad p `{}` at n = {n}", field(cp))))?;
            values.push(p);
            if let Some(cr) = cr {
                let r: f64 = field(cr)
                    .parse()
                    .map_err(|_| Error::Format(format!("bad residual at n = {n}")))?;
                residuals.push(r);
            }
        }
        let residual_max = residuals.iter().copied().fold(0.0, f64::max);
        let t = Self {
            kernel,
            n_max: values.len().saturating_sub(1) as u64,
            precision_bits,
            values,
            residuals,
            residual_max,
        };
        t.validate()?;
        Ok(t)
    }

    /// Parses JSON or CSV, choosing by the first non-blank byte.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        match bytes.iter().find(|b| !b.is_ascii_whitespace()) {
            Some(b'{') => {
                let v: serde_json::Value = serde_json::from_slice(bytes)?;
                if v.get("format").and_then(|f| f.as_str()) == Some(NATIVE_FORMAT) {
                    Ok(TableData::from(
                        &NativeDump::from_json(bytes)?.into_table()?,
                    ))
                } else {
                    Self::from_json(bytes)
                }
            }
            Some(_) => Self::from_csv(bytes),
            None => Err(Error::Format("empty table file".into())),
        }
    }
}

impl SequenceTable {
    /// Table from its double-precision view; values are exact copies of the
    /// doubles and residual components are not recoverable.
    pub fn from_data(data: &TableData) -> Self {
        let bits = data.precision_bits.clamp(MIN_BITS, MAX_DUMP_BITS);
        Self {
            kernel_name: data.kernel.clone(),
            n_max: data.n_max,
            precision_bits: bits,
            config: PrecisionConfig::default(),
            values: data
                .values
                .iter()
                .map(|&v| Float::with_val(bits, v))
                .collect(),
            residuals: data
                .residuals
                .iter()
                .map(|&r| RowResidual {
                    normalization: r,
                    ..RowResidual::default()
                })
                .collect(),
            support_violations: Vec::new(),
        }
    }
}

/// Shortest decimal that round-trips to the same double.
pub fn format_f64(v: f64) -> String {
    let s = format!("{v:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

/// One row of a native dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NativeRow {
    pub n: u64,
    /// `Float::to_string_radix(16, None)` of `p(n)`.
    pub value: String,
    pub residual: RowResidual,
}

/// Full-precision table dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NativeDump {
    pub format: String,
    pub kernel: String,
    pub n_max: u64,
    pub precision_bits: u32,
    pub config: PrecisionConfig,
    #[serde(default)]
    pub support_violations: Vec<u64>,
    pub rows: Vec<NativeRow>,
}

impl From<&SequenceTable> for NativeDump {
    fn from(t: &SequenceTable) -> Self {
        Self {
            format: NATIVE_FORMAT.to_string(),
            kernel: t.kernel_name.clone(),
            n_max: t.n_max,
            precision_bits: t.precision_bits,
            config: t.config,
            support_violations: t.support_violations.clone(),
            rows: t
                .values
                .iter()
                .zip(&t.residuals)
                .enumerate()
                .map(|(n, (v, r))| NativeRow {
                    n: n as u64,
                    value: v.to_string_radix(16, None),
                    residual: *r,
                })
                .collect(),
        }
    }
}

impl NativeDump {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let d: Self = serde_json::from_slice(bytes)?;
        if d.format != NATIVE_FORMAT {
            return Err(Error::Format(format!(
                "expected format `{NATIVE_FORMAT}`, got `{}`",
                d.format
            )));
        }
        if !(MIN_BITS..=MAX_DUMP_BITS).contains(&d.precision_bits) {
            return Err(Error::Format(format!(
                "precision_bits = {} outside {MIN_BITS}..={MAX_DUMP_BITS}",
                d.precision_bits
            )));
        }
        if d.n_max > MAX_TABLE_LEN || d.rows.len() as u64 > d.n_max + 1 {
            return Err(Error::Format(format!(
                "{} rows for n_max = {}",
                d.rows.len(),
                d.n_max
            )));
        }
        Ok(d)
    }

    /// Rebuilds the (possibly partial) table. Values keep their full precision.
    pub fn into_table(self) -> Result<SequenceTable> {
        let mut values = Vec::with_capacity(self.rows.len());
        let mut residuals = Vec::with_capacity(self.rows.len());
        for (i, row) in self.rows.into_iter().enumerate() {
            if row.n != i as u64 {
                return Err(Error::Format(format!("row {i} is labelled n = {}", row.n)));
            }
            let parsed = Float::parse_radix(row.value.as_bytes(), 16)
                .map_err(|e| Error::Format(format!("bad value at n = {i}: {e}")))?;
            let v = Float::with_val(self.precision_bits, parsed);
            if !(0u32..=1u32).contains(&v) {
                return Err(Error::Format(format!("p({i}) is not in [0, 1]")));
            }
            values.push(v);
            residuals.push(row.residual);
        }
        Ok(SequenceTable {
            kernel_name: self.kernel,
            n_max: self.n_max,
            precision_bits: self.precision_bits,
            config: self.config,
            values,
            residuals,
            support_violations: self.support_violations,
        })
    }
}
