use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::datasets::Localization;
use crate::error::{Error, Result};
use crate::physics::Activation;

const REQUIRED: [&str; 5] = ["frame", "x_nm", "y_nm", "z_nm", "photons"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocTable {
    pub rows: Vec<Localization>,
    /// Whether the file carried a `score` column.
    pub has_score: bool,
    /// Columns that were present but not recognised.
    pub unknown_columns: Vec<String>,
}

/// Writes `frame,x_nm,y_nm,z_nm,photons[,score]`. The score column is
/// written when every row has a score; mixing scored and unscored rows is
/// an error. Floats use the shortest decimal form that parses back to the
/// same value.
pub fn write_locs(path: &Path, rows: &[Localization]) -> Result<()> {
    let scored = rows.iter().filter(|r| r.score.is_some()).count();
    if scored != 0 && scored != rows.len() {
        return Err(Error::Schema {
            path: path.into(),
            message: "some rows have a score and some do not".into(),
        });
    }
    let with_score = scored > 0;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut out = || -> std::io::Result<()> {
        w.write_all(b"frame,x_nm,y_nm,z_nm,photons")?;
        w.write_all(if with_score { b",score\n" } else { b"\n" })?;
        for r in rows {
            let a = &r.activation;
            write!(w, "{},{},{},{},{}", r.frame, a.x, a.y, a.z, a.photons)?;
            match r.score {
                Some(s) => writeln!(w, ",{s}")?,
                None => writeln!(w)?,
            }
        }
        w.flush()
    };
    out().map_err(|e| Error::io(path, e))
}

pub fn read_locs(path: &Path) -> Result<LocTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = find(name).ok_or_else(|| Error::Schema {
            path: path.into(),
            message: format!("missing column `{name}`"),
        })?;
    }
    let score_idx = find("score");
    let unknown_columns = headers
        .iter()
        .filter(|h| !REQUIRED.contains(h) && *h != "score")
        .map(str::to_owned)
        .collect();

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };
        let field = |k: usize, name: &str| -> Result<f64> {
            let s = rec.get(k).unwrap_or("");
            let v: f64 = s
                .parse()
                .map_err(|_| err(format!("`{name}` value `{s}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(format!("`{name}` value `{s}` is not finite")))
            }
        };
        let frame_s = rec.get(idx[0]).unwrap_or("");
        let frame: u64 = frame_s.parse().map_err(|_| {
            err(format!(
                "`frame` value `{frame_s}` is not a non-negative integer"
            ))
        })?;
        let activation = Activation::new(
            field(idx[1], "x_nm")?,
            field(idx[2], "y_nm")?,
            field(idx[3], "z_nm")?,
            field(idx[4], "photons")?,
        );
        if activation.photons < 0.0 {
            return Err(err("`photons` must be non-negative".into()));
        }
        let score = match score_idx {
            Some(k) => {
                let s = field(k, "score")?;
                if !(0.0..=1.0).contains(&s) {
                    return Err(err(format!("`score` {s} outside [0, 1]")));
                }
                Some(s)
            }
            None => None,
        };
        rows.push(Localization {
            frame,
            activation,
            score,
        });
    }
    Ok(LocTable {
        rows,
        has_score: score_idx.is_some(),
        unknown_columns,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.into(),
            line,
            message: format!("{other:?}"),
        },
    }
}
