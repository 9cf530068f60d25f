//! Result tables as CSV or markdown.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::{ExperimentConfig, ReplicationTable, TableRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    /// One row per (estimator, parameter).
    Markdown,
    /// Estimators as columns; Mean, SD and Bias rows per parameter.
    PaperMarkdown,
}

const HEADER: [&str; 9] = ["Estimator", "Param", "Truth", "Mean", "SD", "Bias", "MC_SE", "Failures", "Seconds"];

/// Writes `table`. The CSV form starts with `#` comment lines holding the
/// resolved configuration; floats use the shortest exact representation.
pub fn emit_table<W: Write>(table: &ReplicationTable, format: TableFormat, mut out: W) -> Result<()> {
    match format {
        TableFormat::Csv => {
            for line in table.config.to_toml()?.lines() {
                writeln!(out, "# {line}")?;
            }
            let mut w = csv::Writer::from_writer(out);
            w.write_record(HEADER)?;
            for row in &table.rows {
                let seconds = table.results(&row.estimator).map_or(0.0, |r| r.seconds);
                w.write_record([
                    row.estimator.clone(),
                    row.param.clone(),
                    row.truth.to_string(),
                    row.mean.to_string(),
                    row.sd.to_string(),
                    row.bias.to_string(),
                    row.mc_se.to_string(),
                    row.failures.to_string(),
                    seconds.to_string(),
                ])?;
            }
            w.flush()?;
        }
        TableFormat::Markdown => out.write_all(markdown_long(table).as_bytes())?,
        TableFormat::PaperMarkdown => out.write_all(markdown_paper(table).as_bytes())?,
    }
    Ok(())
}

fn markdown_long(table: &ReplicationTable) -> String {
    let mut s = format!("# {} (R = {}, seed = {})\n\n", table.config.name, table.config.replications, table.config.master_seed);
    s.push_str("| Estimator | Param | Truth | Mean | SD | Bias | MC SE | Failures |\n");
    s.push_str("|---|---|---:|---:|---:|---:|---:|---:|\n");
    for r in &table.rows {
        let _ = writeln!(
            s,
            "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.4} | {} |",
            r.estimator, r.param, r.truth, r.mean, r.sd, r.bias, r.mc_se, r.failures
        );
    }
    s
}

fn markdown_paper(table: &ReplicationTable) -> String {
    let labels: Vec<&str> = table.results.iter().map(|r| r.label.as_str()).collect();
    let mut s = format!("# {} (R = {}, seed = {})\n\n|   |   |", table.config.name, table.config.replications, table.config.master_seed);
    for l in &labels {
        let _ = write!(s, " {l} |");
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---:|".repeat(labels.len()));
    s.push('\n');
    for (j, param) in table.params.iter().enumerate() {
        for (stat, pick) in [("Mean", 0), ("SD", 1), ("Bias", 2)] {
            let head = if pick == 0 { format!("{param} = {}", table.truth[j]) } else { String::new() };
            let _ = write!(s, "| {head} | {stat} |");
            for l in &labels {
                match table.row(l, param) {
                    Some(r) => {
                        let _ = write!(s, " {:.3} |", [r.mean, r.sd, r.bias][pick]);
                    }
                    None => s.push_str(" |"),
                }
            }
            s.push('\n');
        }
    }
    s
}

/// Rows and embedded configuration of a CSV written by [`emit_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTable {
    pub config: ExperimentConfig,
    pub rows: Vec<TableRow>,
}

pub fn read_table_csv<R: BufRead>(input: R) -> Result<ParsedTable> {
    let mut toml = String::new();
    let mut body = String::new();
    for line in input.lines() {
        let line = line?;
        match line.strip_prefix('#') {
            Some(c) => {
                toml.push_str(c.strip_prefix(' ').unwrap_or(c));
                toml.push('\n');
            }
            None => {
                body.push_str(&line);
                body.push('\n');
            }
        }
    }
    let config = ExperimentConfig::from_toml(&toml)?;
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    if reader.headers()?.iter().ne(HEADER) {
        return Err(Error::Io("unexpected table header".into()));
    }
    let bad = |field: &str| Error::Io(format!("malformed {field}"));
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(HEADER[i]));
        rows.push(TableRow {
            estimator: rec[0].to_string(),
            param: rec[1].to_string(),
            truth: num(2)?,
            mean: num(3)?,
            sd: num(4)?,
            bias: num(5)?,
            mc_se: num(6)?,
            failures: rec[7].parse().map_err(|_| bad("Failures"))?,
        });
    }
    Ok(ParsedTable { config, rows })
}
