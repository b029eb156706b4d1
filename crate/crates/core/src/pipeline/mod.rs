//! Panel ingestion and assembly of the averaged cross-section design system.
//!
//! The canonical input is a long-format CSV (`country,year,variable,value`)
//! plus a TOML roster that assigns each variable a role, an averaging window
//! and an optional base-10 log transform.

pub mod cross_section;
pub mod design;
pub mod diagnostics;
pub mod panel;
pub mod roster;

pub use cross_section::{apply_transforms, decade_average, summary_stats, CrossSection, SummaryRow};
pub use design::{build_design, DesignMatrices, DropLog, DroppedCountry};
pub use diagnostics::{instrument_diagnostics, DiagnosticsReport, InstrumentCorrelation};
pub use panel::{load_panel, read_panel, Observation, PanelTable};
pub use roster::{Role, RoleKind, Roster, Transform, VariableSpec, YearWindow};

use crate::error::Result;

/// Output of the full ingestion path.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub cross_section: CrossSection,
    pub design: DesignMatrices,
    pub drop_log: DropLog,
    pub diagnostics: DiagnosticsReport,
}

/// Average, transform, optionally restrict to `subsample`, and assemble.
pub fn prepare(panel: &PanelTable, roster: &Roster, subsample: Option<&[String]>) -> Result<PreparedData> {
    let averaged = apply_transforms(&decade_average(panel, roster), roster)?;
    let cross_section = match subsample {
        Some(keep) => averaged.retain_countries(keep),
        None => averaged,
    };
    let (design, drop_log) = build_design(&cross_section, roster)?;
    let diagnostics = DiagnosticsReport {
        instruments: instrument_diagnostics(&design),
        summary: summary_stats(
            &cross_section.retain_countries(&design.countries),
            &roster.outcome().name,
        ),
    };
    Ok(PreparedData {
        cross_section,
        design,
        drop_log,
        diagnostics,
    })
}
