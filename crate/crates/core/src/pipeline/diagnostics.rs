use std::fmt;

use crate::pipeline::cross_section::{pearson, SummaryRow};
use crate::pipeline::design::DesignMatrices;

/// Correlation between an endogenous regressor and its instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentCorrelation {
    pub endogenous: String,
    pub instrument: String,
    /// `None` when either column is constant or there are fewer than 3 rows.
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsReport {
    pub instruments: Vec<InstrumentCorrelation>,
    pub summary: Vec<SummaryRow>,
}

/// Pearson correlation of each `X` column with its `Z` column, sorted by
/// descending correlation (undefined ones last).
pub fn instrument_diagnostics(design: &DesignMatrices) -> Vec<InstrumentCorrelation> {
    let mut out: Vec<InstrumentCorrelation> = (0..design.p())
        .map(|j| {
            let x: Vec<f64> = design.x.column(j).iter().copied().collect();
            let z: Vec<f64> = design.z.column(j).iter().copied().collect();
            let correlation = if design.n() >= 3 { pearson(&x, &z) } else { None };
            if correlation.is_none() {
                log::warn!(
                    "correlation of {} with {} is undefined",
                    design.x_names[j],
                    design.z_names[j]
                );
            }
            InstrumentCorrelation {
                endogenous: design.x_names[j].clone(),
                instrument: design.z_names[j].clone(),
                correlation,
            }
        })
        .collect();
    out.sort_by(|a, b| match (a.correlation, b.correlation) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|c| format!("{c:.2}")).unwrap_or_else(|| "undefined".into())
}

impl fmt::Display for DiagnosticsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.instruments.is_empty() {
            writeln!(f, "Instrument correlations (descending)")?;
            writeln!(f, "{:<32} {:<32} {:>11}", "Endogenous", "Instrument", "Correlation")?;
            for r in &self.instruments {
                writeln!(f, "{:<32} {:<32} {:>11}", r.endogenous, r.instrument, opt(r.correlation))?;
            }
            writeln!(f)?;
        }
        writeln!(f, "Summary statistics")?;
        writeln!(
            f,
            "{:<32} {:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>11}",
            "Variable", "N", "Mean", "Median", "SD", "Min", "Max", "Corr(y)"
        )?;
        for r in &self.summary {
            writeln!(
                f,
                "{:<32} {:>5} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>11}",
                r.variable, r.n, r.mean, r.median, r.sd, r.min, r.max, opt(r.corr_with_outcome)
            )?;
        }
        Ok(())
    }
}
