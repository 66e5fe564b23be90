use std::io::{Read, Write};
use std::path::Path;

use super::LabeledRaw;
use crate::preprocess::RawInput;
use crate::{Error, Result};

/// Reads a headed CSV of `label_column` plus feature columns. Every row must
/// have the same number of features.
pub fn read_csv_vectors(reader: impl Read, label_column: &str) -> Result<LabeledRaw> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::InvalidInput(format!("CSV has no `{label_column}` column")))?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let label = record[label_idx]
            .trim()
            .parse::<u32>()
            .map_err(|e| Error::InvalidInput(format!("line {line}: bad label `{}`: {e}", &record[label_idx])))?;
        let values = record
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != label_idx)
            .map(|(i, field)| {
                let v = field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("line {line}, column {}: {e}", &headers[i])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::InvalidInput(format!(
                        "line {line}, column {}: non-finite value",
                        &headers[i]
                    )))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::InvalidInput("CSV has no feature columns".into()));
        }
        labels.push(label);
        inputs.push(RawInput::Vector(values));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidInput("CSV has no data rows".into()));
    }
    Ok(LabeledRaw { inputs, labels })
}

pub fn load_csv_vectors(path: impl AsRef<Path>, label_column: &str) -> Result<LabeledRaw> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_csv_vectors(std::io::BufReader::new(file), label_column)
}

/// Writes `label,f1,...,fL` rows. Images are written as their flattened
/// real-valued pixels.
pub fn write_csv_vectors(writer: impl Write, data: &LabeledRaw) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let width = data.inputs.first().map(raw_len).unwrap_or(0);
    let mut header = vec!["label".to_string()];
    header.extend((1..=width).map(|i| format!("f{i}")));
    wtr.write_record(&header)?;
    for (input, label) in data.inputs.iter().zip(&data.labels) {
        let mut record = vec![label.to_string()];
        match input {
            RawInput::Vector(v) => record.extend(v.iter().map(|x| format!("{x:?}"))),
            RawInput::Image(img) => record.extend(img.real_values().into_iter().map(|x| format!("{x:?}"))),
        }
        if record.len() != width + 1 {
            return Err(Error::InvalidInput("all rows must have the same width".into()));
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

fn raw_len(input: &RawInput) -> usize {
    match input {
        RawInput::Vector(v) => v.len(),
        RawInput::Image(img) => img.height * img.width * img.channels,
    }
}
