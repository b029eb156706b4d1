use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::roster::Roster;

pub const PANEL_HEADER: [&str; 4] = ["country", "year", "variable", "value"];

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub country: String,
    pub year: i32,
    /// Panel series name.
    pub variable: String,
    pub value: Option<f64>,
}

/// Long-format country × year × series observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PanelTable {
    pub rows: Vec<Observation>,
}

impl PanelTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Writes the table in the same CSV layout [`load_panel`] reads.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Parse {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(PANEL_HEADER).map_err(to_err)?;
        for r in &self.rows {
            let value = r.value.map(|v| format!("{v}")).unwrap_or_default();
            w.write_record([r.country.as_str(), &r.year.to_string(), &r.variable, &value])
                .map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })
    }
}

/// Reads a panel CSV, rejecting series the roster does not reference.
pub fn load_panel(path: impl AsRef<Path>, roster: &Roster) -> Result<PanelTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file, roster)
}

pub fn read_panel<R: Read>(input: R, roster: &Roster) -> Result<PanelTable> {
    let known = roster.series_names();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != PANEL_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {:?}, got {:?}", PANEL_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Parse { line, message };
        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", record.len())));
        }
        let country = record[0].to_string();
        if country.is_empty() {
            return Err(bad("empty country".into()));
        }
        let year_text = &record[1];
        if year_text.len() != 4 {
            return Err(bad(format!("year {year_text:?} is not a 4-digit integer")));
        }
        let year: i32 = year_text
            .parse()
            .map_err(|_| bad(format!("year {year_text:?} is not a 4-digit integer")))?;
        let variable = record[2].to_string();
        if !known.contains(variable.as_str()) {
            return Err(Error::UnknownVariable(variable));
        }
        let value = match &record[3] {
            "" => None,
            text => Some(
                text.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("value {text:?} is not a finite decimal")))?,
            ),
        };
        if !seen.insert((country.clone(), year, variable.clone())) {
            return Err(Error::DuplicateObservation {
                line,
                country,
                year,
                variable,
            });
        }
        rows.push(Observation {
            country,
            year,
            variable,
            value,
        });
    }
    Ok(PanelTable { rows })
}
