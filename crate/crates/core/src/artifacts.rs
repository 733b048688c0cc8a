//! CSV emission and parsing for run artifacts: accuracy matrices, confusion
//! matrices (raw and row-normalized) and loss logs. Everything written here
//! can be read back exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{AccuracyMatrix, ConfusionMatrix};
use crate::trainer::LossRecord;

fn parse<T: std::str::FromStr>(field: &str, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field.parse::<T>().map_err(|e| Error::Format {
        offset: 0,
        message: format!("{what} {field:?}: {e}"),
    })
}

/// Header `after_task,1,..,T`; row `i` lists `a[i][1..=i]` and leaves the rest empty.
pub fn write_accuracy_matrix(path: impl AsRef<Path>, mat: &AccuracyMatrix) -> Result<()> {
    let t = mat.num_tasks();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["after_task".to_string()];
    header.extend((1..=t).map(|j| j.to_string()));
    w.write_record(&header)?;
    for (i, row) in mat.rows().iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(row.iter().map(|a| a.to_string()));
        rec.extend(std::iter::repeat_n(String::new(), t - row.len()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_accuracy_matrix(path: impl AsRef<Path>) -> Result<AccuracyMatrix> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .filter(|f| !f.is_empty())
            .map(|f| parse::<f64>(f, "accuracy"))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    AccuracyMatrix::from_rows(rows)
}

/// Header `true_class,<class>...`; one row per true class.
pub fn write_confusion(path: impl AsRef<Path>, conf: &ConfusionMatrix) -> Result<()> {
    write_square(path, conf.classes(), conf.counts(), |c| c.to_string())
}

pub fn write_confusion_normalized(path: impl AsRef<Path>, conf: &ConfusionMatrix) -> Result<()> {
    write_square(path, conf.classes(), &conf.normalized(), |c| c.to_string())
}

fn write_square<T>(
    path: impl AsRef<Path>,
    classes: &[usize],
    rows: &[Vec<T>],
    fmt: impl Fn(&T) -> String,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["true_class".to_string()];
    header.extend(classes.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    for (c, row) in classes.iter().zip(rows) {
        let mut rec = vec![c.to_string()];
        rec.extend(row.iter().map(&fmt));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_confusion(path: impl AsRef<Path>) -> Result<ConfusionMatrix> {
    let mut r = csv::Reader::from_path(path)?;
    let classes = r
        .headers()?
        .iter()
        .skip(1)
        .map(|f| parse::<usize>(f, "class"))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = Vec::new();
    for rec in r.records() {
        counts.push(
            rec?.iter()
                .skip(1)
                .map(|f| parse::<u64>(f, "count"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    ConfusionMatrix::from_counts(classes, counts)
}

/// Row-normalized confusion values, as written by [`write_confusion_normalized`].
pub fn read_confusion_normalized(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let classes = r
        .headers()?
        .iter()
        .skip(1)
        .map(|f| parse::<usize>(f, "class"))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(
            rec?.iter()
                .skip(1)
                .map(|f| parse::<f64>(f, "rate"))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok((classes, rows))
}

/// Columns `step,stage1_loss,stage2_loss`; `stage1_loss` is empty for single-stage runs.
pub fn write_loss_log(path: impl AsRef<Path>, log: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "stage1_loss", "stage2_loss"])?;
    for r in log {
        w.write_record([
            r.step.to_string(),
            r.stage1_loss.map(|v| v.to_string()).unwrap_or_default(),
            r.stage2_loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_log(path: impl AsRef<Path>) -> Result<Vec<LossRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            Ok(LossRecord {
                step: parse(field(0), "step")?,
                stage1_loss: match field(1) {
                    "" => None,
                    f => Some(parse(f, "stage1_loss")?),
                },
                stage2_loss: parse(field(2), "stage2_loss")?,
            })
        })
        .collect()
}
