use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::bma::SingleStage;
use crate::error::{Error, Result};
use crate::linalg::hstack;
use crate::pipeline::cross_section::CrossSection;
use crate::pipeline::roster::{Roster, VariableSpec};

/// The cross-section system `y = Xβ + Wγ + ε`, `X = Zδ + Wτ + η`.
///
/// Column `j` of `z` instruments column `j` of `x`. The intercept is implicit
/// and always included.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub countries: Vec<String>,
    pub outcome_name: String,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub x_names: Vec<String>,
    pub w: DMatrix<f64>,
    pub w_names: Vec<String>,
    pub z: DMatrix<f64>,
    pub z_names: Vec<String>,
}

impl DesignMatrices {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        countries: Vec<String>,
        outcome_name: String,
        y: DVector<f64>,
        x: DMatrix<f64>,
        x_names: Vec<String>,
        w: DMatrix<f64>,
        w_names: Vec<String>,
        z: DMatrix<f64>,
        z_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        let rows_ok = [x.nrows(), w.nrows(), z.nrows()].iter().all(|&r| r == n);
        if !rows_ok || countries.len() != n {
            return Err(Error::Dimension(format!(
                "blocks must all have {n} rows (countries {}, X {}, W {}, Z {})",
                countries.len(),
                x.nrows(),
                w.nrows(),
                z.nrows()
            )));
        }
        if z.ncols() != x.ncols() {
            return Err(Error::Dimension(format!(
                "{} instruments for {} endogenous regressors",
                z.ncols(),
                x.ncols()
            )));
        }
        if x_names.len() != x.ncols() || w_names.len() != w.ncols() || z_names.len() != z.ncols() {
            return Err(Error::Dimension("column names do not match block widths".into()));
        }
        Ok(Self {
            countries,
            outcome_name,
            y,
            x,
            x_names,
            w,
            w_names,
            z,
            z_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of endogenous regressors.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of exogenous regressors.
    pub fn q(&self) -> usize {
        self.w.ncols()
    }

    pub fn check_estimable(&self) -> Result<()> {
        let required = self.p() + self.q() + 1;
        if self.n() <= required {
            return Err(Error::InsufficientData {
                n: self.n(),
                required,
            });
        }
        Ok(())
    }

    /// `[X W]`, the outcome-equation candidates.
    pub fn second_stage_block(&self) -> DMatrix<f64> {
        hstack(&self.x, &self.w)
    }

    pub fn second_stage_names(&self) -> Vec<String> {
        self.x_names.iter().chain(&self.w_names).cloned().collect()
    }

    /// `[Z W]`, the candidate pool of every first-stage equation.
    pub fn first_stage_block(&self) -> DMatrix<f64> {
        hstack(&self.z, &self.w)
    }

    pub fn first_stage_names(&self) -> Vec<String> {
        self.z_names.iter().chain(&self.w_names).cloned().collect()
    }

    /// Plain-BMA view: `y` on `[X W]` with the endogeneity ignored.
    pub fn single_stage(&self) -> SingleStage {
        SingleStage::new(self.y.clone(), self.second_stage_block(), self.second_stage_names())
            .expect("design blocks are consistent")
    }

    /// Rows restricted to `keep` (indices into `countries`).
    pub fn select_rows(&self, keep: &[usize]) -> Self {
        let rows = |m: &DMatrix<f64>| DMatrix::from_fn(keep.len(), m.ncols(), |r, c| m[(keep[r], c)]);
        Self {
            countries: keep.iter().map(|&i| self.countries[i].clone()).collect(),
            outcome_name: self.outcome_name.clone(),
            y: DVector::from_iterator(keep.len(), keep.iter().map(|&i| self.y[i])),
            x: rows(&self.x),
            x_names: self.x_names.clone(),
            w: rows(&self.w),
            w_names: self.w_names.clone(),
            z: rows(&self.z),
            z_names: self.z_names.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedCountry {
    pub country: String,
    pub missing: Vec<String>,
}

/// Countries removed because a used cell was missing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DropLog {
    pub entries: Vec<DroppedCountry>,
}

impl DropLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for DropLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "dropped {}: missing {}", e.country, e.missing.join(", "))?;
        }
        Ok(())
    }
}

/// Assembles the design system from an averaged (and transformed) cross-section.
///
/// Countries with any missing cell among the roster variables are dropped
/// listwise and logged.
pub fn build_design(table: &CrossSection, roster: &Roster) -> Result<(DesignMatrices, DropLog)> {
    let column = |spec: &VariableSpec| -> Result<&[Option<f64>]> {
        table
            .column(&spec.name)
            .ok_or_else(|| Error::Roster(format!("variable {:?} is absent from the cross-section", spec.name)))
    };

    let outcome = roster.outcome();
    let endog: Vec<&VariableSpec> = roster.endogenous().collect();
    let exog: Vec<&VariableSpec> = roster.exogenous().collect();
    let instruments: Vec<&VariableSpec> = endog
        .iter()
        .map(|e| roster.instrument_for(&e.name).expect("validated roster"))
        .collect();

    let used: Vec<&VariableSpec> = std::iter::once(outcome)
        .chain(endog.iter().copied())
        .chain(exog.iter().copied())
        .chain(instruments.iter().copied())
        .collect();
    let cols: Vec<&[Option<f64>]> = used.iter().map(|s| column(s)).collect::<Result<_>>()?;

    let mut keep = Vec::new();
    let mut log = DropLog::default();
    for (i, country) in table.countries.iter().enumerate() {
        let missing: Vec<String> = used
            .iter()
            .zip(&cols)
            .filter(|(_, c)| c[i].is_none())
            .map(|(s, _)| s.name.clone())
            .collect();
        if missing.is_empty() {
            keep.push(i);
        } else {
            log::info!("dropped {country}: missing {}", missing.join(", "));
            log.entries.push(DroppedCountry {
                country: country.clone(),
                missing,
            });
        }
    }

    let n = keep.len();
    let block = |specs: &[&VariableSpec]| -> Result<DMatrix<f64>> {
        let cols: Vec<&[Option<f64>]> = specs.iter().map(|s| column(s)).collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(n, specs.len(), |r, c| {
            cols[c][keep[r]].expect("complete rows only")
        }))
    };
    let names = |specs: &[&VariableSpec]| specs.iter().map(|s| s.name.clone()).collect::<Vec<_>>();

    let y_col = column(outcome)?;
    let design = DesignMatrices::new(
        keep.iter().map(|&i| table.countries[i].clone()).collect(),
        outcome.name.clone(),
        DVector::from_iterator(n, keep.iter().map(|&i| y_col[i].expect("complete rows only"))),
        block(&endog)?,
        names(&endog),
        block(&exog)?,
        names(&exog),
        block(&instruments)?,
        names(&instruments),
    )?;
    design.check_estimable()?;
    Ok((design, log))
}
