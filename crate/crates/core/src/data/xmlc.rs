//! Reader and writer for the XMLC repository text format.
//!
//! ```text
//! num_examples num_features num_labels
//! l1,l2,...,lk f1:v1 f2:v2 ...
//! ```
//!
//! A line that starts with whitespace (or is empty) has no labels. Both LF
//! and CRLF endings are accepted; files are always written with LF, sorted
//! indices and single spaces, which is the canonical form.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{SparseDataset, SparseExample};
use crate::codec::GlobalLabel;
use crate::error::{MheError, Result};

/// Loads a dataset file; the dataset is named after the file stem.
pub fn load_xmlc(path: &Path) -> Result<SparseDataset> {
    let bytes = fs::read(path)?;
    let text = String::from_utf8(bytes).map_err(|_| MheError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "file is not valid UTF-8".into(),
    })?;
    let mut ds = parse_xmlc(&text, path)?;
    ds.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(ds)
}

/// Parses dataset text; `path` is only used in error locations.
pub fn parse_xmlc(text: &str, path: &Path) -> Result<SparseDataset> {
    let parse_err = |line: usize, message: String| MheError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let invalid = |line: usize, message: String| MheError::Validation {
        path: path.to_path_buf(),
        line,
        message,
    };

    let body = text
        .strip_suffix('\n')
        .map(|t| t.strip_suffix('\r').unwrap_or(t))
        .unwrap_or(text);
    let mut lines = body.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    let header = lines.next().unwrap_or("");
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(1, format!("header must be three integers, got '{header}'")))?;
    let [n, d, c] = dims[..] else {
        return Err(parse_err(1, format!("header must be three integers, got '{header}'")));
    };

    let mut examples = Vec::with_capacity(n);
    for (offset, line) in lines.enumerate() {
        let lineno = offset + 2;
        if examples.len() == n {
            if line.trim().is_empty() {
                continue;
            }
            return Err(invalid(lineno, format!("more examples than the {n} declared in the header")));
        }
        examples.push(parse_line(line, lineno, d, c, &parse_err, &invalid)?);
    }
    if examples.len() != n {
        return Err(invalid(
            examples.len() + 2,
            format!("header declares {n} examples but the file has {}", examples.len()),
        ));
    }
    Ok(SparseDataset {
        name: String::new(),
        num_features: d,
        num_labels: c,
        examples,
    })
}

fn parse_line(
    line: &str,
    lineno: usize,
    num_features: usize,
    num_labels: usize,
    parse_err: &impl Fn(usize, String) -> MheError,
    invalid: &impl Fn(usize, String) -> MheError,
) -> Result<SparseExample> {
    let mut tokens = line.split_whitespace().peekable();
    let mut labels = Vec::new();
    let starts_with_labels = !line.starts_with(char::is_whitespace)
        && tokens.peek().is_some_and(|t| !t.contains(':'));
    if starts_with_labels {
        for part in tokens.next().unwrap_or("").split(',') {
            let l: usize = part
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad label '{part}'")))?;
            if l >= num_labels {
                return Err(invalid(lineno, format!("label {l} is not below {num_labels}")));
            }
            labels.push(GlobalLabel::new(l));
        }
        labels.sort_unstable();
        labels.dedup();
    }
    let mut features = Vec::new();
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(lineno, format!("feature '{tok}' is not index:value")))?;
        let j: usize = idx
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad feature index '{idx}'")))?;
        let v: f64 = val
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad feature value '{val}'")))?;
        if !v.is_finite() {
            return Err(invalid(lineno, format!("feature {j} has non-finite value {val}")));
        }
        if j >= num_features {
            return Err(invalid(lineno, format!("feature {j} is not below {num_features}")));
        }
        features.push((j, v));
    }
    features.sort_by_key(|&(j, _)| j);
    if let Some(w) = features.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(invalid(lineno, format!("feature {} appears twice", w[0].0)));
    }
    Ok(SparseExample { features, labels })
}

/// Writes the canonical form of `ds`.
pub fn write_xmlc(ds: &SparseDataset, writer: &mut impl Write) -> Result<()> {
    let mut out = String::with_capacity(64 * ds.examples.len() + 32);
    let _ = writeln!(out, "{} {} {}", ds.examples.len(), ds.num_features, ds.num_labels);
    for e in &ds.examples {
        let mut labels: Vec<usize> = e.labels.iter().map(|l| l.index()).collect();
        labels.sort_unstable();
        labels.dedup();
        for (i, l) in labels.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{l}");
        }
        let mut features = e.features.clone();
        features.sort_by_key(|&(j, _)| j);
        for (j, v) in features {
            let _ = write!(out, " {j}:{v}");
        }
        out.push('\n');
    }
    writer.write_all(out.as_bytes())?;
    Ok(())
}

/// Writes the canonical form to a file.
pub fn save_xmlc(ds: &SparseDataset, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path)?;
    write_xmlc(ds, &mut file)
}

fn mem_path() -> PathBuf {
    PathBuf::from("<memory>")
}

impl std::str::FromStr for SparseDataset {
    type Err = MheError;

    fn from_str(s: &str) -> Result<Self> {
        parse_xmlc(s, &mem_path())
    }
}
