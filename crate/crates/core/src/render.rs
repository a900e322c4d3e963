//! Plain-text portable graymap (P2) output for activity matrices and the
//! threat time series.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::linalg::SquareMatrix;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot render an empty matrix")]
    Empty,
    #[error("matrix contains non-finite values")]
    NonFinite,
}

pub const MAX_GRAY: u32 = 255;

/// Maps `value` into `0..=255`: `range.0` → 0, `range.1` → 255, clamped,
/// rounded half away from zero. `invert` flips the scale before rounding.
pub fn gray_level(value: f64, range: (f64, f64), invert: bool) -> u32 {
    let (lo, hi) = range;
    let mut t = if hi > lo {
        ((value - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else if value >= hi {
        1.0
    } else {
        0.0
    };
    if invert {
        t = 1.0 - t;
    }
    (t * MAX_GRAY as f64).round() as u32
}

/// One pixel per matrix cell, row-major. Larger values are brighter unless
/// `invert` is set (used for distances, where closer should be brighter).
pub fn heatmap_pgm(m: &SquareMatrix, range: (f64, f64), invert: bool) -> Result<String, RenderError> {
    let n = m.dim();
    if n == 0 {
        return Err(RenderError::Empty);
    }
    let mut out = format!("P2\n{n} {n}\n{MAX_GRAY}\n");
    for i in 0..n {
        let row = m.row(i);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(RenderError::NonFinite);
        }
        let px: Vec<String> = row.iter().map(|&v| gray_level(v, range, invert).to_string()).collect();
        out.push_str(&px.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn render_heatmap(m: &SquareMatrix, range: (f64, f64), invert: bool, path: &Path) -> Result<(), RenderError> {
    let text = heatmap_pgm(m, range, invert)?;
    write(path, &text)
}

pub(crate) fn write(path: &Path, text: &str) -> Result<(), RenderError> {
    std::fs::write(path, text).map_err(|source| RenderError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Filled area plot of a non-negative series, `height` pixels tall and at
/// most `max_width` columns wide (columns take the bucket maximum).
pub fn series_plot_pgm(values: &[f64], max_width: usize, height: usize) -> String {
    let width = values.len().clamp(1, max_width.max(1));
    let cols: Vec<f64> = (0..width)
        .map(|c| {
            let start = c * values.len() / width;
            let end = ((c + 1) * values.len() / width).max(start + 1).min(values.len());
            values
                .get(start..end)
                .map_or(0.0, |s| s.iter().copied().fold(0.0, f64::max))
        })
        .collect();
    let peak = cols.iter().copied().fold(0.0, f64::max);
    let mut out = format!("P2\n{width} {height}\n{MAX_GRAY}\n");
    for row in 0..height {
        // row 0 is the top; a column is lit where its bar reaches this row
        let level = (height - row) as f64 / height as f64;
        let px: Vec<&str> = cols
            .iter()
            .map(|&v| {
                if peak > 0.0 && v / peak >= level - 0.5 / height as f64 {
                    "255"
                } else {
                    "0"
                }
            })
            .collect();
        let _ = writeln!(out, "{}", px.join(" "));
    }
    out
}

/// Square matrix from comma-separated rows; blank and `#` lines skipped.
pub fn parse_matrix_csv(text: &str) -> Result<SquareMatrix, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| format!("line {}: {e}", idx + 1))?);
    }
    let n = rows.len();
    if let Some(r) = rows.iter().position(|r| r.len() != n) {
        return Err(format!("row {} has {} values, expected {n}", r + 1, rows[r].len()));
    }
    Ok(SquareMatrix::from_fn(n, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_at_max_is_white() {
        let m = SquareMatrix::from_fn(1, |_, _| 10.0);
        assert_eq!(heatmap_pgm(&m, (0.0, 10.0), false).unwrap(), "P2\n1 1\n255\n255\n");
    }

    #[test]
    fn symmetric_matrix_renders_symmetric() {
        let m = SquareMatrix::from_fn(2, |i, j| if i == j { 0.0 } else { 3.0 });
        let text = heatmap_pgm(&m, (0.0, 4.0), false).unwrap();
        let rows: Vec<&str> = text.lines().skip(3).collect();
        assert_eq!(rows, vec!["0 191", "191 0"]);
    }

    #[test]
    fn distance_fixture_inverted() {
        // 3-4-5 distances over [0, 10]: 0 → 255, 5 → 127.5 → 128
        let m = SquareMatrix::from_fn(2, |i, j| if i == j { 0.0 } else { 5.0 });
        let text = heatmap_pgm(&m, (0.0, 10.0), true).unwrap();
        assert_eq!(text, "P2\n2 2\n255\n255 128\n128 255\n");
    }

    #[test]
    fn errors_and_degenerate_range() {
        assert!(matches!(
            heatmap_pgm(&SquareMatrix::zeros(0), (0.0, 1.0), false),
            Err(RenderError::Empty)
        ));
        let nan = SquareMatrix::from_fn(1, |_, _| f64::NAN);
        assert!(matches!(
            heatmap_pgm(&nan, (0.0, 1.0), false),
            Err(RenderError::NonFinite)
        ));
        assert_eq!(gray_level(1.0, (1.0, 1.0), false), 255);
        assert_eq!(gray_level(0.0, (1.0, 1.0), false), 0);
    }

    #[test]
    fn matrix_csv_parsing() {
        let m = parse_matrix_csv("# d\n0,5\n5,0\n").unwrap();
        assert_eq!(m[(0, 1)], 5.0);
        assert!(parse_matrix_csv("0,1\n1\n").is_err());
        assert!(parse_matrix_csv("x\n").is_err());
    }

    #[test]
    fn series_plot_shape() {
        let text = series_plot_pgm(&[0.0, 1.0, 2.0], 1000, 4);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "3 4");
        assert_eq!(lines[3], "0 0 255");
        assert_eq!(lines[6], "0 255 255");
    }
}
