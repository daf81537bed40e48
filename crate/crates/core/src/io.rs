//! File formats: dense labeled CSV, sparse bag-of-words documents, plain-text
//! model files, and metrics reports.
//!
//! All formats are line-oriented text. Numbers are written with 17
//! significant digits, which round-trips every finite f64 exactly. Parsers
//! are strict and report 1-based line numbers.

use ndarray::{Array1, Array2};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{MarError, Result};
use crate::linalg::ComponentMatrix;
use crate::nn::MlpParams;
use crate::rbm::{Doc, DocBatch, RsmParams};

/// Dense labeled points: one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDataset {
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
}

impl DenseDataset {
    pub fn new(x: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if x.nrows() != labels.len() {
            return Err(MarError::ShapeMismatch(format!(
                "{} rows against {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MarError::InvalidArgument(
                "dataset contains non-finite features".into(),
            ));
        }
        Ok(Self { x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Number of distinct labels.
    pub fn classes(&self) -> usize {
        let mut l = self.labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    }

    /// Splits off the first `n_train` rows (callers shuffle beforehand if
    /// they need randomized splits).
    pub fn split_at(&self, n_train: usize) -> Result<(DenseDataset, DenseDataset)> {
        if n_train == 0 || n_train >= self.len() {
            return Err(MarError::InvalidArgument(format!(
                "split point {n_train} outside (0, {})",
                self.len()
            )));
        }
        let d = self.dim();
        let head = Array2::from_shape_fn((n_train, d), |(i, j)| self.x[[i, j]]);
        let tail = Array2::from_shape_fn((self.len() - n_train, d), |(i, j)| {
            self.x[[n_train + i, j]]
        });
        Ok((
            DenseDataset::new(head, self.labels[..n_train].to_vec())?,
            DenseDataset::new(tail, self.labels[n_train..].to_vec())?,
        ))
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> MarError {
    MarError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Reads `label,f0,f1,...` CSV with a mandatory header.
pub fn load_dense_csv(path: impl AsRef<Path>) -> Result<DenseDataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected a header"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"label") {
        return Err(parse_err(1, "header must start with 'label'"));
    }
    let dim = cols.len() - 1;
    if dim == 0 {
        return Err(parse_err(1, "header lists no feature columns"));
    }
    let mut rows: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(parse_err(
                lineno,
                format!("expected {} fields, found {}", dim + 1, fields.len()),
            ));
        }
        let label: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad label '{}'", fields[0])))?;
        labels.push(label);
        for (c, f) in fields[1..].iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|_| {
                parse_err(lineno, format!("bad number '{}' in column {}", f, c + 1))
            })?;
            rows.push(v);
        }
    }
    if labels.is_empty() {
        return Err(parse_err(2, "no data rows"));
    }
    let x = Array2::from_shape_vec((labels.len(), dim), rows)
        .map_err(|e| MarError::ShapeMismatch(e.to_string()))?;
    DenseDataset::new(x, labels)
}

pub fn save_dense_csv(path: impl AsRef<Path>, ds: &DenseDataset) -> Result<()> {
    let mut out = String::from("label");
    for j in 0..ds.dim() {
        write!(out, ",f{j}").unwrap();
    }
    out.push('\n');
    for (i, &label) in ds.labels.iter().enumerate() {
        write!(out, "{label}").unwrap();
        for j in 0..ds.dim() {
            write!(out, ",{:.16e}", ds.x[[i, j]]).unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads documents as `label<TAB>wordid:count[ wordid:count...]` lines. With
/// `vocab = None` the vocabulary size is inferred as max word id + 1;
/// otherwise out-of-range ids are parse errors.
pub fn load_sparse_docs(path: impl AsRef<Path>, vocab: Option<usize>) -> Result<DocBatch> {
    let text = fs::read_to_string(path)?;
    let mut docs = Vec::new();
    let mut max_word = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (label_str, rest) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(lineno, "expected '<label>\\t<entries>'"))?;
        let label: i64 = label_str
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad label '{label_str}'")))?;
        let mut counts = Vec::new();
        for entry in rest.split_whitespace() {
            let (w, c) = entry
                .split_once(':')
                .ok_or_else(|| parse_err(lineno, format!("bad entry '{entry}'")))?;
            let w: usize = w
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad word id '{w}'")))?;
            let c: u32 = c
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad count '{c}'")))?;
            if let Some(j) = vocab {
                if w >= j {
                    return Err(parse_err(
                        lineno,
                        format!("word id {w} outside vocabulary of {j}"),
                    ));
                }
            }
            max_word = max_word.max(w);
            counts.push((w, c));
        }
        let doc = Doc::new(Some(label), counts)
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(parse_err(1, "no documents"));
    }
    DocBatch::new(vocab.unwrap_or(max_word + 1), docs)
}

pub fn save_sparse_docs(path: impl AsRef<Path>, batch: &DocBatch) -> Result<()> {
    let mut out = String::new();
    for doc in &batch.docs {
        write!(out, "{}\t", doc.label.unwrap_or(-1)).unwrap();
        let mut first = true;
        for &(w, c) in &doc.counts {
            if !first {
                out.push(' ');
            }
            write!(out, "{w}:{c}").unwrap();
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// A trained model of any of the three families.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Dml(ComponentMatrix),
    Rbm(RsmParams),
    Nn(MlpParams),
}

impl ModelFile {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelFile::Dml(_) => "dml",
            ModelFile::Rbm(_) => "rbm",
            ModelFile::Nn(_) => "nn",
        }
    }
}

fn write_matrix(out: &mut String, name: &str, m: &Array2<f64>) {
    writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols()).unwrap();
    for row in m.rows() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(' ');
            }
            write!(out, "{v:.16e}").unwrap();
            first = false;
        }
        out.push('\n');
    }
}

fn write_vector(out: &mut String, name: &str, v: &Array1<f64>) {
    writeln!(out, "vector {name} {}", v.len()).unwrap();
    let mut first = true;
    for x in v.iter() {
        if !first {
            out.push(' ');
        }
        write!(out, "{x:.16e}").unwrap();
        first = false;
    }
    out.push('\n');
}

/// Writes a model as a structured text document: a version line, the model
/// kind, then named matrix/vector blocks with explicit shapes.
pub fn save_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    let mut out = String::from("mar model v1\n");
    writeln!(out, "kind {}", model.kind()).unwrap();
    match model {
        ModelFile::Dml(a) => write_matrix(&mut out, "a", a.data()),
        ModelFile::Rbm(p) => {
            write_matrix(&mut out, "weights", &p.weights);
            write_vector(&mut out, "vis_bias", &p.vis_bias);
            write_vector(&mut out, "hid_bias", &p.hid_bias);
        }
        ModelFile::Nn(p) => {
            write_matrix(&mut out, "hidden_w", &p.hidden_w);
            write_vector(&mut out, "hidden_b", &p.hidden_b);
            write_matrix(&mut out, "out_w", &p.out_w);
            write_vector(&mut out, "out_b", &p.out_b);
        }
    }
    out.push_str("end\n");
    fs::write(path, out)?;
    Ok(())
}

struct BlockReader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> BlockReader<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.lines
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| parse_err(0, "unexpected end of file"))
    }

    fn read_numbers(&mut self, expect: usize) -> Result<Vec<f64>> {
        let (lineno, line) = self.next_line()?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("bad number '{t}'")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != expect {
            return Err(parse_err(
                lineno,
                format!("expected {expect} numbers, found {}", vals.len()),
            ));
        }
        Ok(vals)
    }

    fn read_matrix(&mut self, name: &str) -> Result<Array2<f64>> {
        let (lineno, line) = self.next_line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "matrix" || parts[1] != name {
            return Err(parse_err(lineno, format!("expected 'matrix {name} <r> <c>'")));
        }
        let rows: usize = parts[2]
            .parse()
            .map_err(|_| parse_err(lineno, "bad row count"))?;
        let cols: usize = parts[3]
            .parse()
            .map_err(|_| parse_err(lineno, "bad column count"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.read_numbers(cols)?);
        }
        Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| MarError::ShapeMismatch(e.to_string()))
    }

    fn read_vector(&mut self, name: &str) -> Result<Array1<f64>> {
        let (lineno, line) = self.next_line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "vector" || parts[1] != name {
            return Err(parse_err(lineno, format!("expected 'vector {name} <len>'")));
        }
        let len: usize = parts[2]
            .parse()
            .map_err(|_| parse_err(lineno, "bad length"))?;
        Ok(Array1::from_vec(self.read_numbers(len)?))
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let text = fs::read_to_string(path)?;
    let mut r = BlockReader {
        lines: text.lines().enumerate().peekable(),
    };
    let (lineno, magic) = r.next_line()?;
    if magic != "mar model v1" {
        return Err(parse_err(lineno, "not a model file (bad magic line)"));
    }
    let (lineno, kind_line) = r.next_line()?;
    let kind = kind_line
        .strip_prefix("kind ")
        .ok_or_else(|| parse_err(lineno, "expected 'kind <dml|rbm|nn>'"))?;
    let model = match kind {
        "dml" => ModelFile::Dml(ComponentMatrix::new(r.read_matrix("a")?)?),
        "rbm" => ModelFile::Rbm(RsmParams {
            weights: r.read_matrix("weights")?,
            vis_bias: r.read_vector("vis_bias")?,
            hid_bias: r.read_vector("hid_bias")?,
        }),
        "nn" => ModelFile::Nn(MlpParams {
            hidden_w: r.read_matrix("hidden_w")?,
            hidden_b: r.read_vector("hidden_b")?,
            out_w: r.read_matrix("out_w")?,
            out_b: r.read_vector("out_b")?,
        }),
        other => return Err(parse_err(lineno, format!("unknown model kind '{other}'"))),
    };
    let (lineno, end) = r.next_line()?;
    if end != "end" {
        return Err(parse_err(lineno, "expected 'end'"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::tempdir;

    #[test]
    fn dense_csv_pinned_literal() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pinned.csv");
        fs::write(&path, "label,f0,f1\n0,1.5,2.5\n3,-0.25,4.0\n").unwrap();
        let ds = load_dense_csv(&path).unwrap();
        assert_eq!(ds.labels, vec![0, 3]);
        assert_eq!(ds.x, array![[1.5, 2.5], [-0.25, 4.0]]);
    }

    #[test]
    fn dense_csv_round_trip_and_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let ds = DenseDataset::new(
            array![[1.5, -0.25], [0.1234567890123456, 3.0]],
            vec![0, 2],
        )
        .unwrap();
        save_dense_csv(&path, &ds).unwrap();
        let back = load_dense_csv(&path).unwrap();
        assert_eq!(ds, back);

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "label,f0\n0,1.0\n1,notanumber\n").unwrap();
        match load_dense_csv(&bad) {
            Err(MarError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::write(&bad, "f0,f1\n").unwrap();
        assert!(matches!(load_dense_csv(&bad), Err(MarError::Parse { line: 1, .. })));
    }

    #[test]
    fn sparse_docs_round_trip_and_errors() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("docs.txt");
        fs::write(&path, "3\t0:2 4:1\n1\t2:5\n").unwrap();
        let batch = load_sparse_docs(&path, None).unwrap();
        assert_eq!(batch.vocab, 5);
        assert_eq!(batch.docs[0].label, Some(3));
        assert_eq!(batch.docs[0].counts, vec![(0, 2), (4, 1)]);
        assert_eq!(batch.docs[0].len, 3);

        let out = dir.path().join("docs2.txt");
        save_sparse_docs(&out, &batch).unwrap();
        let back = load_sparse_docs(&out, Some(5)).unwrap();
        assert_eq!(batch, back);

        // Out-of-range id with an explicit vocabulary.
        match load_sparse_docs(&path, Some(3)) {
            Err(MarError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn model_files_round_trip_exactly() {
        let dir = tempdir().unwrap();

        let a = ComponentMatrix::from_rows(&[
            vec![0.1234567890123456, -1e-300],
            vec![std::f64::consts::PI, 1e300],
        ])
        .unwrap();
        let path = dir.path().join("m.dml");
        save_model(&path, &ModelFile::Dml(a.clone())).unwrap();
        match load_model(&path).unwrap() {
            ModelFile::Dml(b) => assert_eq!(a.data(), b.data()),
            other => panic!("wrong kind {other:?}"),
        }

        let mut rbm = RsmParams::zeros(3, 2);
        rbm.weights[[1, 0]] = -0.75;
        rbm.vis_bias[2] = 1.0 / 3.0;
        rbm.hid_bias[1] = 2.0f64.sqrt();
        let path = dir.path().join("m.rbm");
        save_model(&path, &ModelFile::Rbm(rbm.clone())).unwrap();
        match load_model(&path).unwrap() {
            ModelFile::Rbm(b) => assert_eq!(rbm, b),
            other => panic!("wrong kind {other:?}"),
        }

        let mut nn = MlpParams::zeros(3, 2, 2);
        nn.hidden_w[[0, 1]] = 0.5;
        nn.out_b[1] = -0.125;
        let path = dir.path().join("m.nn");
        save_model(&path, &ModelFile::Nn(nn.clone())).unwrap();
        match load_model(&path).unwrap() {
            ModelFile::Nn(b) => assert_eq!(nn, b),
            other => panic!("wrong kind {other:?}"),
        }

        let bad = dir.path().join("bad.model");
        fs::write(&bad, "something else\n").unwrap();
        assert!(matches!(load_model(&bad), Err(MarError::Parse { .. })));
    }

    #[test]
    fn split_respects_boundaries() {
        let ds = DenseDataset::new(array![[0.0], [1.0], [2.0], [3.0]], vec![0, 0, 1, 1]).unwrap();
        let (train, test) = ds.split_at(3).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(test.len(), 1);
        assert_eq!(test.x[[0, 0]], 3.0);
        assert!(ds.split_at(0).is_err());
        assert!(ds.split_at(4).is_err());
    }
}
