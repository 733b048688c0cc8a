//! Headerless CSV datasets: one row per sample, `label,feature1,...,featureN`.

use std::path::Path;

use super::LabeledVector;
use crate::error::{Error, Result};

pub fn load_csv_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledVector>> {
    let path = path.as_ref();
    read_rows(path).map_err(Error::in_file(path))
}

fn read_rows(path: &Path) -> Result<Vec<LabeledVector>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let offset = record.position().map_or(0, |p| p.byte());
        let bad = |message: String| Error::Format { offset, message };
        let mut fields = record.iter();
        let label = fields
            .next()
            .ok_or_else(|| bad("empty row".into()))?
            .parse::<usize>()
            .map_err(|e| bad(format!("label: {e}")))?;
        let features = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| bad(format!("feature {f:?} is not a finite real")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = out.first().map(|s: &LabeledVector| s.features.len()) {
            if first != features.len() {
                return Err(bad(format!(
                    "row has {} features, expected {first}",
                    features.len()
                )));
            }
        }
        out.push(LabeledVector::new(features, label));
    }
    Ok(out)
}

pub fn write_csv_dataset(path: impl AsRef<Path>, samples: &[LabeledVector]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    for s in samples {
        let mut row = Vec::with_capacity(s.features.len() + 1);
        row.push(s.label.to_string());
        row.extend(s.features.iter().map(|f| f.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let samples = vec![
            LabeledVector::new(vec![0.1, -2.5e-7, 1.0 / 3.0], 2),
            LabeledVector::new(vec![0.0, 1.0, f64::MIN_POSITIVE], 0),
        ];
        write_csv_dataset(&path, &samples).unwrap();
        assert_eq!(load_csv_dataset(&path).unwrap(), samples);
    }

    #[test]
    fn rejects_ragged_and_garbage_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "0,1,2\n1,3\n").unwrap();
        match load_csv_dataset(&path) {
            Err(Error::Dataset { path: p, source }) => {
                assert_eq!(p, path);
                assert!(matches!(*source, Error::Format { .. }));
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "x,1,2\n").unwrap();
        assert!(load_csv_dataset(&path).is_err());
        std::fs::write(&path, "0,nan\n").unwrap();
        assert!(load_csv_dataset(&path).is_err());
    }
}
