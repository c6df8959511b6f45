//! Experiment-result serialization: RFC-4180 CSV and a line-oriented
//! plot-data format (x y columns per series, blank-line separated).

use std::io::Write;

/// One CSV row: ordered (column, value) pairs sharing a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub fields: Vec<(String, String)>,
}

impl ReportRow {
    pub fn new() -> Self {
        ReportRow { fields: Vec::new() }
    }

    pub fn push(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    /// Full-precision float formatting (shortest round-trip form).
    pub fn push_f64(self, key: &str, value: f64) -> Self {
        self.push(key, format!("{value}"))
    }
}

impl Default for ReportRow {
    fn default() -> Self {
        Self::new()
    }
}

/// Writes rows as CSV with a deterministic header taken from the first row.
/// Rows must share the first row's schema. An empty row set produces nothing
/// unless `header_hint` supplies the column names.
pub fn write_report<W: Write>(
    out: W,
    rows: &[ReportRow],
    header_hint: Option<&[&str]>,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = match rows.first() {
        Some(r) => r.fields.iter().map(|(k, _)| k.clone()).collect(),
        None => match header_hint {
            Some(h) => h.iter().map(|s| s.to_string()).collect(),
            None => return Ok(()),
        },
    };
    w.write_record(&header)?;
    for (i, row) in rows.iter().enumerate() {
        let keys: Vec<&str> = row.fields.iter().map(|(k, _)| k.as_str()).collect();
        if keys != header.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("row {i} does not share the header schema"),
            ));
        }
        w.write_record(row.fields.iter().map(|(_, v)| v.as_str()))?;
    }
    w.flush()
}

/// A named series of (x, y) points for the plot-data format.
#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Line-oriented plot data: `# name` then `x y` lines, series separated by a
/// blank line. Consumable by gnuplot and similar tools.
pub fn write_plot_data<W: Write>(mut out: W, series: &[PlotSeries]) -> std::io::Result<()> {
    for (i, s) in series.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        writeln!(out, "# {}", s.name)?;
        for (x, y) in &s.points {
            writeln!(out, "{x} {y}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_rows_with_hint_yield_header_only() {
        let mut buf = Vec::new();
        write_report(&mut buf, &[], Some(&["eps", "iters"])).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "eps,iters\n");
    }

    #[test]
    fn one_row_yields_two_lines() {
        let rows = vec![ReportRow::new().push_f64("eps", 1e-4).push("iters", 312)];
        let mut buf = Vec::new();
        write_report(&mut buf, &rows, None).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "eps,iters\n0.0001,312\n");
    }

    #[test]
    fn csv_roundtrip_preserves_full_precision() {
        let vals = [1.0 / 3.0, 2.0f64.sqrt(), 6.02214076e23, -1.25e-13];
        let rows: Vec<ReportRow> = vals
            .iter()
            .map(|&v| ReportRow::new().push_f64("v", v))
            .collect();
        let mut buf = Vec::new();
        write_report(&mut buf, &rows, None).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        let back: Vec<f64> = rd
            .records()
            .map(|r| r.unwrap()[0].parse().unwrap())
            .collect();
        assert_eq!(back, vals);
    }

    #[test]
    fn quoting_follows_rfc4180() {
        let rows = vec![ReportRow::new().push("case", "a,b").push("n", 1)];
        let mut buf = Vec::new();
        write_report(&mut buf, &rows, None).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "case,n\n\"a,b\",1\n");
    }

    #[test]
    fn plot_series_are_blank_line_separated() {
        let series = vec![
            PlotSeries {
                name: "a".into(),
                points: vec![(1.0, 2.0)],
            },
            PlotSeries {
                name: "b".into(),
                points: vec![(3.0, 4.0)],
            },
        ];
        let mut buf = Vec::new();
        write_plot_data(&mut buf, &series).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# a\n1 2\n\n# b\n3 4\n"
        );
    }
}
