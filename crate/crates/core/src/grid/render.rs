use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ResultTable, ValueKind};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    #[serde(alias = "aligned_text")]
    Text,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "text" | "aligned_text" => Ok(Format::Text),
            _ => Err(format!("unknown format {s:?} (expected csv or text)")),
        }
    }
}

/// CSV cells use the shortest decimal that round-trips; aligned text shows
/// accuracies as percentages with two decimals and NEI values with three.
pub fn render(table: &ResultTable, format: Format) -> String {
    match format {
        Format::Csv => render_csv(table),
        Format::Text => render_text(table),
    }
}

fn render_csv(t: &ResultTable) -> String {
    let mut s = String::new();
    s.push_str(&t.corner);
    for c in &t.col_labels {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for (label, row) in t.row_labels.iter().zip(&t.cells) {
        s.push_str(label);
        for cell in row {
            let _ = write!(s, ",{}", cell.mean);
        }
        s.push('\n');
    }
    s
}

fn render_text(t: &ResultTable) -> String {
    let fmt = |v: f64| match t.kind {
        ValueKind::Accuracy => format!("{:.2}%", v * 100.0),
        ValueKind::Nei => format!("{v:.3}"),
    };
    let body: Vec<Vec<String>> = t
        .cells
        .iter()
        .map(|r| r.iter().map(|c| fmt(c.mean)).collect())
        .collect();
    let first = t
        .row_labels
        .iter()
        .map(String::len)
        .chain([t.corner.len()])
        .max()
        .unwrap_or(0);
    let widths: Vec<usize> = (0..t.col_labels.len())
        .map(|c| {
            body.iter()
                .map(|r| r[c].len())
                .chain([t.col_labels[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut s = String::new();
    let _ = writeln!(s, "{}", t.title);
    let _ = write!(s, "{:<first$}", t.corner);
    for (c, w) in t.col_labels.iter().zip(&widths) {
        let _ = write!(s, "  {c:>w$}");
    }
    s.push('\n');
    for (label, row) in t.row_labels.iter().zip(&body) {
        let _ = write!(s, "{label:<first$}");
        for (v, w) in row.iter().zip(&widths) {
            let _ = write!(s, "  {v:>w$}");
        }
        s.push('\n');
    }
    s
}

/// A table read back from its CSV rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub corner: String,
    pub col_labels: Vec<String>,
    pub row_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn parse_csv(text: &str) -> Result<CsvTable> {
    let mut lines = text.lines().filter(|l| !l.is_empty());
    let header = lines.next().ok_or(Error::Empty("csv table"))?;
    let mut head = header.split(',');
    let corner = head.next().unwrap_or_default().to_string();
    let col_labels: Vec<String> = head.map(str::to_string).collect();
    let mut row_labels = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut fields = line.split(',');
        row_labels.push(fields.next().unwrap_or_default().to_string());
        let row = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::format("csv table", format!("row {}: {e}", i + 1)))?;
        if row.len() != col_labels.len() {
            return Err(Error::format(
                "csv table",
                format!(
                    "row {} has {} cells, header has {}",
                    i + 1,
                    row.len(),
                    col_labels.len()
                ),
            ));
        }
        values.push(row);
    }
    Ok(CsvTable {
        corner,
        col_labels,
        row_labels,
        values,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableFiles {
    pub csv: PathBuf,
    pub text: PathBuf,
    pub json: PathBuf,
}

/// Writes `<axis>_<dataset>_<unix seconds>.{csv,txt,json}` into `dir`.
pub fn write_table(table: &ResultTable, dir: &Path) -> Result<TableFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let stem = format!("{}_{}_{stamp}", table.axis.name(), table.meta.dataset);
    let files = TableFiles {
        csv: dir.join(format!("{stem}.csv")),
        text: dir.join(format!("{stem}.txt")),
        json: dir.join(format!("{stem}.json")),
    };
    let json = serde_json::to_string_pretty(table).expect("table serializes") + "\n";
    for (path, body) in [
        (&files.csv, render(table, Format::Csv)),
        (&files.text, render(table, Format::Text)),
        (&files.json, json),
    ] {
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fedsim::FedConfig;
    use crate::grid::{Axis, Cell, GridSpec, TableMeta};
    use crate::partition::{PartitionSpec, SplitMode};

    fn table(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> ResultTable {
        let grid = GridSpec::new(
            Axis::Nodes,
            vec![1.0],
            FedConfig::new(1, 1, 0),
            PartitionSpec::new(SplitMode::Covariate, 1, 0),
        );
        ResultTable {
            title: "t".into(),
            axis: Axis::Nodes,
            kind: ValueKind::Accuracy,
            corner: "skew".into(),
            row_labels: (0..rows).map(|r| format!("row{r}")).collect(),
            col_labels: (0..cols)
                .map(|c| format!("{} nodes", 5 * (c + 1)))
                .collect(),
            cells: (0..rows)
                .map(|r| {
                    (0..cols)
                        .map(|c| Cell {
                            mean: f(r, c),
                            values: vec![f(r, c)],
                            seeds: vec![0],
                        })
                        .collect()
                })
                .collect(),
            meta: TableMeta {
                dataset: "MNIST".into(),
                grid,
                wall_time_secs: 0.0,
                encoder_fingerprint: None,
                run_config: None,
            },
        }
    }

    #[test]
    fn one_by_one() {
        let csv = render(&table(1, 1, |_, _| 0.5), Format::Csv);
        let body = csv.lines().nth(1).unwrap();
        assert_eq!(body.split(',').nth(1), Some("0.5"));
    }

    #[test]
    fn two_by_four_line_count() {
        let csv = render(&table(2, 4, |r, c| (r * 4 + c) as f64 / 10.0), Format::Csv);
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn csv_round_trip_exact() {
        let t = table(3, 4, |r, c| {
            1.0 / (1.0 + r as f64 * 7.0 + c as f64 * 3.0) + 1e-17 * c as f64
        });
        let back = parse_csv(&render(&t, Format::Csv)).unwrap();
        assert_eq!(back.values, t.means());
        assert_eq!(back.row_labels, t.row_labels);
        assert_eq!(back.col_labels, t.col_labels);
    }

    #[test]
    fn text_uses_percentages() {
        let txt = render(&table(1, 2, |_, c| [0.9255, 0.9721][c]), Format::Text);
        assert!(txt.contains("92.55%") && txt.contains("97.21%"), "{txt}");
    }

    #[test]
    fn malformed_csv_rejected() {
        assert!(parse_csv("a,b\nr,1,2\n").is_err());
        assert!(parse_csv("a,b\nr,x\n").is_err());
        assert!(parse_csv("").is_err());
    }

    #[test]
    fn files_written() {
        let dir = tempfile::tempdir().unwrap();
        let f = write_table(&table(1, 1, |_, _| 0.5), dir.path()).unwrap();
        assert!(f
            .csv
            .file_name()
            .unwrap()
            .to_str()
            .unwrap()
            .starts_with("nodes_MNIST_"));
        for p in [&f.csv, &f.text, &f.json] {
            assert!(p.is_file());
        }
    }
}
