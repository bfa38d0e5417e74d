//! Dataset ingestion: CSV files, IDX (MNIST-style) files and seeded
//! synthetic generators.

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;
use sphereflow::datasets;

use crate::error::{CliError, Result};
use crate::output::{blob_hash, read};

const IDX_UBYTE: u8 = 0x08;

/// A loaded data matrix with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    pub data: Array2<f64>,
    pub labels: Option<Vec<usize>>,
    pub provenance: String,
    /// Smallest and largest value in `data`; `(0, 0)` when empty.
    pub value_range: (f64, f64),
    /// Set for IDX image files.
    pub image_shape: Option<(usize, usize)>,
    /// Content hash of every file read.
    pub inputs: Vec<InputFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputFile {
    pub path: String,
    pub hash: String,
}

impl DatasetHandle {
    fn new(data: Array2<f64>, labels: Option<Vec<usize>>, provenance: String) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != data.nrows() {
                return Err(CliError::Validation(format!(
                    "{provenance}: {} labels for {} rows",
                    l.len(),
                    data.nrows()
                )));
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Validation(format!(
                "{provenance}: non-finite values"
            )));
        }
        let value_range = if data.is_empty() {
            (0.0, 0.0)
        } else {
            data.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
        };
        Ok(DatasetHandle {
            data,
            labels,
            provenance,
            value_range,
            image_shape: None,
            inputs: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// IDX when the file starts with an IDX magic, CSV otherwise.
    Auto,
    Csv,
    Idx,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Format::Auto),
            "csv" => Ok(Format::Csv),
            "idx" => Ok(Format::Idx),
            _ => Err(CliError::Validation(format!(
                "unknown dataset format {s:?} (auto, csv, idx)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    TwoMoons,
    Rings { radii: Vec<f64> },
    GaussianMixture { centers: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinSpec {
    pub kind: Builtin,
    pub n: usize,
    /// Noise standard deviation (the component spread for mixtures).
    pub noise: f64,
    pub seed: u64,
}

impl BuiltinSpec {
    pub const NAMES: [&'static str; 3] = ["two_moons", "rings", "gaussian_mixture"];

    pub fn default_for(name: &str) -> Option<Builtin> {
        match name {
            "two_moons" => Some(Builtin::TwoMoons),
            "rings" => Some(Builtin::Rings {
                radii: vec![1.0, 2.0],
            }),
            "gaussian_mixture" => Some(Builtin::GaussianMixture {
                centers: vec![vec![-2.0, 0.0], vec![2.0, 0.0]],
            }),
            _ => None,
        }
    }

    /// Parses `name[:key=value,...]` with keys `n`, `noise`, `seed`,
    /// `radii` (`1;2;3`) and `centers` (`0/0;3/3`).
    pub fn parse(s: &str) -> Result<Self> {
        let bad = |msg: String| CliError::Validation(format!("builtin dataset {s:?}: {msg}"));
        let (name, params) = s.split_once(':').unwrap_or((s, ""));
        let mut kind = Self::default_for(name)
            .ok_or_else(|| bad(format!("unknown name, expected one of {:?}", Self::NAMES)))?;
        let mut spec = BuiltinSpec {
            kind: Builtin::TwoMoons,
            n: 2000,
            noise: 0.05,
            seed: 0,
        };
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("{v:?} is not a number")))
        };
        for kv in params.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {kv:?}")))?;
            match (k.trim(), &mut kind) {
                ("n", _) => spec.n = v.trim().parse().map_err(|_| bad(format!("bad n {v:?}")))?,
                ("noise", _) => spec.noise = num(v)?,
                ("seed", _) => {
                    spec.seed = v
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("bad seed {v:?}")))?
                }
                ("radii", Builtin::Rings { radii }) => {
                    *radii = v.split(';').map(num).collect::<Result<_>>()?;
                }
                ("centers", Builtin::GaussianMixture { centers }) => {
                    *centers = v
                        .split(';')
                        .map(|c| c.split('/').map(num).collect::<Result<Vec<_>>>())
                        .collect::<Result<_>>()?;
                }
                (k, _) => return Err(bad(format!("unknown key {k:?} for {name}"))),
            }
        }
        spec.kind = kind;
        Ok(spec)
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            Builtin::TwoMoons => "two_moons",
            Builtin::Rings { .. } => "rings",
            Builtin::GaussianMixture { .. } => "gaussian_mixture",
        }
    }

    pub fn generate(&self) -> Result<DatasetHandle> {
        let l = match &self.kind {
            Builtin::TwoMoons => datasets::two_moons(self.n, self.noise, self.seed)?,
            Builtin::Rings { radii } => datasets::rings(self.n, radii, self.noise, self.seed)?,
            Builtin::GaussianMixture { centers } => {
                datasets::gaussian_mixture(self.n, centers, self.noise, self.seed)?
            }
        };
        DatasetHandle::new(l.data, Some(l.labels), self.to_string())
    }
}

impl fmt::Display for BuiltinSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "builtin:{}:n={},noise={},seed={}",
            self.name(),
            self.n,
            self.noise,
            self.seed
        )?;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        match &self.kind {
            Builtin::TwoMoons => Ok(()),
            Builtin::Rings { radii } => write!(f, ",radii={}", list(radii).join(";")),
            Builtin::GaussianMixture { centers } => {
                let c: Vec<String> = centers.iter().map(|c| list(c).join("/")).collect();
                write!(f, ",centers={}", c.join(";"))
            }
        }
    }
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Builtin(BuiltinSpec),
    File {
        path: PathBuf,
        format: Format,
        /// Separate IDX label file.
        labels: Option<PathBuf>,
        /// Force the last CSV column to be (or not be) a label column; by
        /// default it is one exactly when the header names it `label`.
        label_column: Option<bool>,
    },
}

impl DatasetSource {
    /// `builtin:<spec>` or a file path, as accepted on the command line.
    pub fn from_arg(arg: &str, labels: Option<&Path>) -> Result<Self> {
        match arg.strip_prefix("builtin:") {
            Some(spec) => {
                if labels.is_some() {
                    return Err(CliError::Validation(
                        "builtin datasets carry their own labels".into(),
                    ));
                }
                Ok(DatasetSource::Builtin(BuiltinSpec::parse(spec)?))
            }
            None => Ok(DatasetSource::File {
                path: PathBuf::from(arg),
                format: Format::Auto,
                labels: labels.map(Path::to_path_buf),
                label_column: None,
            }),
        }
    }

    pub fn load(&self) -> Result<DatasetHandle> {
        match self {
            DatasetSource::Builtin(spec) => spec.generate(),
            DatasetSource::File {
                path,
                format,
                labels,
                label_column,
            } => {
                let bytes = read(path)?;
                let mut inputs = vec![InputFile {
                    path: path.display().to_string(),
                    hash: blob_hash(&bytes),
                }];
                let name = path.display().to_string();
                let is_idx = match format {
                    Format::Idx => true,
                    Format::Csv => false,
                    Format::Auto => bytes.len() >= 3 && bytes[..3] == [0, 0, IDX_UBYTE],
                };
                let mut handle = if is_idx {
                    let (data, shape) = parse_idx_images(&bytes, &name)?;
                    let mut h = DatasetHandle::new(data, None, format!("idx:{name}"))?;
                    h.image_shape = Some(shape);
                    h
                } else {
                    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Format {
                        path: name.clone(),
                        offset: e.valid_up_to() as u64,
                        msg: "CSV is not valid UTF-8".into(),
                    })?;
                    let (data, labels) = parse_csv(text, &name, *label_column)?;
                    DatasetHandle::new(data, labels, format!("csv:{name}"))?
                };
                if let Some(lp) = labels {
                    let lbytes = read(lp)?;
                    inputs.push(InputFile {
                        path: lp.display().to_string(),
                        hash: blob_hash(&lbytes),
                    });
                    let l = parse_idx_labels(&lbytes, &lp.display().to_string())?;
                    if handle.labels.is_some() {
                        return Err(CliError::Validation(format!(
                            "{name} already has a label column"
                        )));
                    }
                    if l.len() != handle.data.nrows() {
                        return Err(CliError::Validation(format!(
                            "{}: {} labels for {} rows of {name}",
                            lp.display(),
                            l.len(),
                            handle.data.nrows()
                        )));
                    }
                    handle.labels = Some(l);
                }
                handle.inputs = inputs;
                Ok(handle)
            }
        }
    }
}

/// Comma-separated floats, one row per line. A first line that does not parse
/// as numbers is a header. Blank lines are skipped.
pub fn parse_csv(
    text: &str,
    path: &str,
    label_column: Option<bool>,
) -> Result<(Array2<f64>, Option<Vec<usize>>)> {
    let err = |line: usize, msg: String| CliError::Parse {
        path: path.to_string(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();

    let mut header_label = false;
    if let Some(&(_, first)) = lines.peek() {
        if first.split(',').any(|f| f.trim().parse::<f64>().is_err()) {
            let last = first
                .rsplit(',')
                .next()
                .unwrap_or("")
                .trim()
                .to_ascii_lowercase();
            header_label = last == "label" || last == "labels";
            lines.next();
        }
    }
    let has_labels = label_column.unwrap_or(header_label);

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if *width.get_or_insert(fields.len()) != fields.len() {
            return Err(err(
                lineno,
                format!(
                    "expected {} fields, found {}",
                    width.unwrap_or(0),
                    fields.len()
                ),
            ));
        }
        let (feat, lab) = if has_labels {
            if fields.len() < 2 {
                return Err(err(
                    lineno,
                    "a label column needs at least one feature column".into(),
                ));
            }
            (&fields[..fields.len() - 1], Some(fields[fields.len() - 1]))
        } else {
            (&fields[..], None)
        };
        for (col, f) in feat.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| err(lineno, format!("column {}: {f:?} is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(err(
                    lineno,
                    format!("column {}: non-finite value {f}", col + 1),
                ));
            }
            values.push(v);
        }
        if let Some(l) = lab {
            let v: f64 = l
                .parse()
                .map_err(|_| err(lineno, format!("label {l:?} is not a number")))?;
            if !(v >= 0.0) || v.fract() != 0.0 || v > u32::MAX as f64 {
                return Err(err(
                    lineno,
                    format!("label {l:?} is not a nonnegative integer"),
                ));
            }
            labels.push(v as usize);
        }
    }
    let Some(w) = width else {
        return Err(err(0, "no data rows".into()));
    };
    let d = if has_labels { w - 1 } else { w };
    let n = values.len() / d;
    let data = Array2::from_shape_vec((n, d), values).expect("row widths checked");
    Ok((data, has_labels.then_some(labels)))
}

struct Idx<'a> {
    dims: Vec<usize>,
    payload: &'a [u8],
}

fn parse_idx<'a>(bytes: &'a [u8], path: &str, magic_dims: u8) -> Result<Idx<'a>> {
    let err = |offset: usize, msg: String| CliError::Format {
        path: path.to_string(),
        offset: offset as u64,
        msg,
    };
    if bytes.len() < 4 {
        return Err(err(bytes.len(), "truncated magic number".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(err(
            0,
            format!("bad magic {:02x}{:02x}, expected 0000", bytes[0], bytes[1]),
        ));
    }
    if bytes[2] != IDX_UBYTE {
        return Err(err(
            2,
            format!("element type {:#04x} is not unsigned byte (0x08)", bytes[2]),
        ));
    }
    if bytes[3] != magic_dims {
        return Err(err(
            3,
            format!("{} dimensions, expected {magic_dims}", bytes[3]),
        ));
    }
    let header = 4 + 4 * magic_dims as usize;
    if bytes.len() < header {
        return Err(err(
            bytes.len(),
            format!("truncated header, expected {header} bytes"),
        ));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| err(4, "dimension product overflows".into()))?;
    let payload = &bytes[header..];
    if payload.len() < total {
        return Err(err(
            bytes.len(),
            format!(
                "payload truncated: dims {dims:?} need {total} bytes, found {}",
                payload.len()
            ),
        ));
    }
    if payload.len() > total {
        return Err(err(
            header + total,
            format!("{} trailing bytes", payload.len() - total),
        ));
    }
    Ok(Idx { dims, payload })
}

/// IDX image file (magic `0x00000803`): `n x rows x cols` unsigned bytes,
/// returned as `n` flattened vectors scaled to [0, 1].
pub fn parse_idx_images(bytes: &[u8], path: &str) -> Result<(Array2<f64>, (usize, usize))> {
    let idx = parse_idx(bytes, path, 3)?;
    let (n, rows, cols) = (idx.dims[0], idx.dims[1], idx.dims[2]);
    if rows == 0 || cols == 0 {
        return Err(CliError::Format {
            path: path.to_string(),
            offset: 8,
            msg: format!("empty image shape {rows}x{cols}"),
        });
    }
    let data = Array2::from_shape_vec(
        (n, rows * cols),
        idx.payload.iter().map(|&b| b as f64 / 255.0).collect(),
    )
    .expect("payload length checked");
    Ok((data, (rows, cols)))
}

/// IDX label file (magic `0x00000801`).
pub fn parse_idx_labels(bytes: &[u8], path: &str) -> Result<Vec<usize>> {
    let idx = parse_idx(bytes, path, 1)?;
    debug_assert_eq!(idx.dims.len(), 1);
    Ok(idx.payload.iter().map(|&b| b as usize).collect())
}
