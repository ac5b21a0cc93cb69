//! Sample files: one value per line, or `sample_id,value` rows with ids 1 and 2.
//! A non-numeric first row is taken as a header.

use std::path::Path;

use gradtest::ProductSample;

use crate::config::DataSource;
use crate::CliError;

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn bad(path: &Path, line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}:{line}: {msg}", path.display()))
}

fn records(path: &Path) -> Result<Vec<(u64, Vec<String>)>, CliError> {
    let mut out = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields: Vec<String> = rec.iter().map(str::to_owned).collect();
        if fields.iter().all(String::is_empty) {
            continue;
        }
        out.push((line, fields));
    }
    if let Some((_, first)) = out.first() {
        if first.last().is_some_and(|v| v.parse::<f64>().is_err()) {
            out.remove(0);
        }
    }
    Ok(out)
}

fn value(path: &Path, line: u64, text: &str) -> Result<f64, CliError> {
    let v: f64 = text.parse().map_err(|_| bad(path, line, format!("`{text}` is not a number")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad(path, line, "non-finite value"))
    }
}

pub fn read_column(path: &Path) -> Result<Vec<f64>, CliError> {
    records(path)?
        .into_iter()
        .map(|(line, f)| match f.as_slice() {
            [v] => value(path, line, v),
            _ => Err(bad(path, line, format!("expected one column, found {}", f.len()))),
        })
        .collect()
}

pub fn read_two_column(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (line, f) in records(path)? {
        match f.as_slice() {
            [id, v] => match id.as_str() {
                "1" => x.push(value(path, line, v)?),
                "2" => y.push(value(path, line, v)?),
                other => return Err(bad(path, line, format!("sample id must be 1 or 2, got `{other}`"))),
            },
            _ => return Err(bad(path, line, format!("expected two columns, found {}", f.len()))),
        }
    }
    Ok((x, y))
}

pub fn load(source: &DataSource) -> Result<ProductSample<f64>, CliError> {
    let (x, y) = match source {
        DataSource::Split { x, y } => (read_column(x)?, read_column(y)?),
        DataSource::Combined(p) => read_two_column(p)?,
    };
    ProductSample::new(x, y).map_err(|e| CliError::Runtime(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn column_with_header_and_blank_lines() {
        let f = file("value\n1.5\n\n-2\n3e-1\n");
        assert_eq!(read_column(f.path()).unwrap(), vec![1.5, -2.0, 0.3]);
    }

    #[test]
    fn two_column_layout() {
        let f = file("sample_id,value\n1,0.5\n2,1\n1,2\n");
        assert_eq!(read_two_column(f.path()).unwrap(), (vec![0.5, 2.0], vec![1.0]));
    }

    #[test]
    fn errors_point_at_the_line() {
        let f = file("1,0.5\n3,1\n");
        let msg = read_two_column(f.path()).unwrap_err().to_string();
        assert!(msg.contains(":2:"), "{msg}");
        let g = file("0.5\nabc\n");
        assert!(read_column(g.path()).unwrap_err().to_string().contains("not a number"));
    }
}
