//! Dataset CSV files (`f0..f{d-1},label[,superclass]`, label -1 = unlabeled) and `DACT`
//! activation dumps (magic, version u32, rows u32, cols u32, tap u8, row-major f32 LE).

use std::io::{Read, Write};
use std::path::Path;

use crate::binio::{expect_magic, read_f32s, read_u32, read_u8, write_atomic, write_f32s, write_u32};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::TapPoint;

pub const ACTIVATION_MAGIC: &[u8; 4] = b"DACT";
pub const ACTIVATION_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetFile {
    pub features: Matrix,
    /// `None` for unlabeled rows.
    pub labels: Vec<Option<usize>>,
    pub superclasses: Option<Vec<usize>>,
}

impl DatasetFile {
    /// Features and labels of the labeled rows only.
    pub fn labeled(&self) -> (Matrix, Vec<usize>) {
        let idx: Vec<usize> = (0..self.labels.len()).filter(|&i| self.labels[i].is_some()).collect();
        let labels = idx.iter().map(|&i| self.labels[i].unwrap()).collect();
        (self.features.select_rows(&idx), labels)
    }
}

pub fn dataset_to_csv(data: &DatasetFile) -> Result<Vec<u8>> {
    if data.labels.len() != data.features.rows() {
        return Err(Error::Shape("labels and feature rows differ".into()));
    }
    if let Some(s) = &data.superclasses {
        if s.len() != data.labels.len() {
            return Err(Error::Shape("superclasses and labels differ".into()));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..data.features.cols()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    if data.superclasses.is_some() {
        header.push("superclass".into());
    }
    w.write_record(&header)?;
    for (i, row) in data.features.iter_rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(data.labels[i].map_or_else(|| "-1".to_string(), |l| l.to_string()));
        if let Some(s) = &data.superclasses {
            rec.push(s[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_dataset_csv(path: &Path, data: &DatasetFile) -> Result<()> {
    write_atomic(path, &dataset_to_csv(data)?)
}

pub fn parse_dataset_csv(r: impl Read) -> Result<DatasetFile> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let label_col = header
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::Format("missing label column".into()))?;
    for (j, h) in header.iter().take(label_col).enumerate() {
        if h != format!("f{j}") {
            return Err(Error::Format(format!("unexpected feature column {h:?}")));
        }
    }
    let has_super = match header.len() - label_col {
        1 => false,
        2 if &header[label_col + 1] == "superclass" => true,
        _ => return Err(Error::Format("unexpected trailing columns".into())),
    };
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut supers = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse_err = |what: &str| Error::Format(format!("row {}: bad {what}", line + 1));
        for field in rec.iter().take(label_col) {
            let v: f64 = field.trim().parse().map_err(|_| parse_err("feature"))?;
            if !v.is_finite() {
                return Err(parse_err("feature"));
            }
            values.push(v);
        }
        let label: i64 = rec[label_col].trim().parse().map_err(|_| parse_err("label"))?;
        labels.push(match label {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            _ => return Err(parse_err("label")),
        });
        if has_super {
            supers.push(rec[label_col + 1].trim().parse().map_err(|_| parse_err("superclass"))?);
        }
    }
    Ok(DatasetFile {
        features: Matrix::from_vec(labels.len(), label_col, values)?,
        labels,
        superclasses: has_super.then_some(supers),
    })
}

pub fn read_dataset_csv(path: &Path) -> Result<DatasetFile> {
    parse_dataset_csv(std::fs::File::open(path)?)
}

pub fn write_activations(w: &mut impl Write, acts: &Matrix, tap: TapPoint) -> Result<()> {
    w.write_all(ACTIVATION_MAGIC)?;
    write_u32(w, ACTIVATION_VERSION)?;
    write_u32(w, acts.rows() as u32)?;
    write_u32(w, acts.cols() as u32)?;
    w.write_all(&[tap.index() as u8])?;
    write_f32s(w, acts.data())?;
    Ok(())
}

pub fn read_activations(r: &mut impl Read) -> Result<(Matrix, TapPoint)> {
    expect_magic(r, ACTIVATION_MAGIC)?;
    let version = read_u32(r)?;
    if version != ACTIVATION_VERSION {
        return Err(Error::Format(format!("unsupported activation version {version}")));
    }
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    let tap = TapPoint::from_index(read_u8(r)? as usize)?;
    let data = read_f32s(r, rows * cols)?;
    Ok((Matrix::from_vec(rows, cols, data)?, tap))
}

pub fn save_activations(path: &Path, acts: &Matrix, tap: TapPoint) -> Result<()> {
    let mut buf = Vec::new();
    write_activations(&mut buf, acts, tap)?;
    write_atomic(path, &buf)
}

pub fn load_activations(path: &Path) -> Result<(Matrix, TapPoint)> {
    read_activations(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}
