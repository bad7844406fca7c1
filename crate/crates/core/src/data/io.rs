//! CSV datasets and JSON model files.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, LogisticModel};
use crate::error::{Error, Result};

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a dataset with header `a,y,x1,...,xd`.
///
/// With `expected_dim = None` the dimension is the number of feature columns.
pub fn load_csv(path: &Path, expected_dim: Option<usize>) -> Result<Dataset<f64>> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    read_csv(file, &path.display().to_string(), expected_dim)
}

/// [`load_csv`] from any reader; `name` labels error messages.
pub fn read_csv<R: Read>(input: R, name: &str, expected_dim: Option<usize>) -> Result<Dataset<f64>> {
    let parse = |row: usize, message: String| Error::Parse {
        path: name.to_string(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers().map_err(|e| parse(0, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.first() != Some(&"a") {
        return Err(parse(0, "missing column 'a' (expected header a,y,x1,...,xd)".into()));
    }
    if cols.get(1) != Some(&"y") {
        return Err(parse(0, "missing column 'y' (expected header a,y,x1,...,xd)".into()));
    }
    let dim = cols.len() - 2;
    for (j, c) in cols[2..].iter().enumerate() {
        if *c != format!("x{}", j + 1) {
            return Err(parse(0, format!("column {} is '{c}', expected 'x{}'", j + 3, j + 1)));
        }
    }
    if dim == 0 {
        return Err(parse(0, "missing feature columns x1,...,xd".into()));
    }
    if let Some(d) = expected_dim {
        if d != dim {
            return Err(parse(0, format!("expected {d} feature columns, found {dim}")));
        }
    }
    let mut features = Vec::new();
    let mut sensitive = Vec::new();
    let mut labels = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| parse(row, e.to_string()))?;
        if rec.len() != dim + 2 {
            return Err(parse(row, format!("ragged row: {} fields, expected {}", rec.len(), dim + 2)));
        }
        let binary = |field: &str, col: &str| match field {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            other => Err(parse(row, format!("{col} must be 0 or 1, found '{other}'"))),
        };
        sensitive.push(binary(&rec[0], "a")?);
        labels.push(binary(&rec[1], "y")?);
        for j in 0..dim {
            let v: f64 = rec[j + 2]
                .parse()
                .map_err(|_| parse(row, format!("x{} is not a number: '{}'", j + 1, &rec[j + 2])))?;
            if !v.is_finite() {
                return Err(parse(row, format!("x{} is not finite: '{}'", j + 1, &rec[j + 2])));
            }
            features.push(v);
        }
    }
    if labels.is_empty() {
        return Err(parse(1, "no data rows".into()));
    }
    Dataset::from_flat(features, dim, sensitive, labels)
}

/// Writes a dataset in the format read by [`load_csv`].
///
/// Numbers use the shortest decimal that parses back to the same value.
pub fn save_csv(data: &Dataset<f64>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    write_csv(data, BufWriter::new(file)).map_err(|e| io_error(path, e))
}

pub fn write_csv<W: Write>(data: &Dataset<f64>, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["a".to_string(), "y".to_string()];
    header.extend((1..=data.dim()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec = vec![data.sensitive()[i].to_string(), data.labels()[i].to_string()];
        rec.extend(data.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    beta: Vec<f64>,
    #[serde(default)]
    intercept: f64,
}

/// Reads `{"beta": [...], "intercept": b}`; a missing intercept is zero.
pub fn load_model(path: &Path) -> Result<LogisticModel<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let m: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    LogisticModel::new(m.beta, m.intercept)
}

pub fn model_to_json(model: &LogisticModel<f64>) -> String {
    let m = ModelFile {
        beta: model.beta().to_vec(),
        intercept: model.intercept(),
    };
    serde_json::to_string_pretty(&m).expect("model is serializable")
}

pub fn save_model(model: &LogisticModel<f64>, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model) + "\n").map_err(|e| io_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset<f64>> {
        read_csv(text.as_bytes(), "t.csv", None)
    }

    fn row_of(err: Error) -> usize {
        match err {
            Error::Parse { row, .. } => row,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_rows() {
        let d = parse("a,y,x1,x2\n1,0,0.5,-1\n0,1,2e-3,4\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.row(1), &[0.002, 4.0]);
        assert_eq!(d.sensitive(), &[1, 0]);
    }

    #[test]
    fn bad_a_cites_row() {
        let mut text = String::from("a,y,x1\n");
        for i in 0..10 {
            text += &format!("{},1,0.{i}\n", if i == 6 { 2 } else { i % 2 });
        }
        let err = parse(&text).unwrap_err();
        assert!(err.to_string().contains("row 7"), "{err}");
        assert_eq!(row_of(err), 7);
    }

    #[test]
    fn distinct_errors() {
        assert!(parse("y,a,x1\n1,1,0\n").unwrap_err().to_string().contains("missing column 'a'"));
        assert!(parse("a,x1\n1,0\n").unwrap_err().to_string().contains("missing column 'y'"));
        assert!(parse("a,y\n1,0\n").unwrap_err().to_string().contains("feature"));
        let e = parse("a,y,x1,x2\n1,0,1,2\n1,0,1\n").unwrap_err();
        assert!(e.to_string().contains("ragged"));
        assert_eq!(row_of(e), 2);
        let e = parse("a,y,x1\n1,0,1\n1,0,inf\n").unwrap_err();
        assert!(e.to_string().contains("not finite"));
        assert!(parse("a,y,x1\n1,0,abc\n").unwrap_err().to_string().contains("not a number"));
        assert!(parse("a,y,x1\n1,3,1\n").unwrap_err().to_string().contains("y must be 0 or 1"));
        assert!(read_csv("a,y,x1\n1,0,1\n".as_bytes(), "t", Some(2)).is_err());
        assert!(parse("a,y,x1\n").is_err());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, -0.0];
        let d = Dataset::from_flat(vals.to_vec(), 2, vec![1, 0, 1], vec![0, 1, 1]).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "t", None).unwrap();
        for (a, b) in d.features().iter().zip(back.features()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, d);
    }

    #[test]
    fn model_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = LogisticModel::new(vec![0.1, -3.0], 1.0 / 3.0).unwrap();
        save_model(&m, &p).unwrap();
        assert_eq!(load_model(&p).unwrap(), m);
        std::fs::write(&p, r#"{"beta": [1, 2]}"#).unwrap();
        assert_eq!(load_model(&p).unwrap().intercept(), 0.0);
        std::fs::write(&p, r#"{"beta": "x"}"#).unwrap();
        assert!(matches!(load_model(&p), Err(Error::Format { .. })));
    }
}
