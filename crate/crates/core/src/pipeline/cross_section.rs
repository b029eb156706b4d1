use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::pipeline::panel::PanelTable;
use crate::pipeline::roster::{Roster, Transform};

/// Country × roster-variable table of window averages.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub countries: Vec<String>,
    pub variables: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

impl CrossSection {
    pub fn new(
        countries: Vec<String>,
        variables: Vec<String>,
        columns: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        if columns.len() != variables.len() || columns.iter().any(|c| c.len() != countries.len()) {
            return Err(Error::Dimension("cross-section columns do not match its labels".into()));
        }
        Ok(Self {
            countries,
            variables,
            columns,
        })
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn column(&self, variable: &str) -> Option<&[Option<f64>]> {
        let j = self.variables.iter().position(|v| v == variable)?;
        Some(&self.columns[j])
    }

    pub fn get(&self, country: &str, variable: &str) -> Option<f64> {
        let i = self.countries.iter().position(|c| c == country)?;
        self.column(variable)?[i]
    }

    /// Keeps only the listed countries (in the table's own order).
    pub fn retain_countries(&self, keep: &[String]) -> Self {
        let keep: BTreeSet<&str> = keep.iter().map(String::as_str).collect();
        let rows: Vec<usize> = (0..self.countries.len())
            .filter(|&i| keep.contains(self.countries[i].as_str()))
            .collect();
        Self {
            countries: rows.iter().map(|&i| self.countries[i].clone()).collect(),
            variables: self.variables.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }
}

/// Averages each roster variable over its own year window.
///
/// Countries are sorted; a cell is the mean of the non-missing annual values
/// inside the window, or missing if there are none. Values are summed in year
/// order so the result does not depend on the row order of the panel.
pub fn decade_average(panel: &PanelTable, roster: &Roster) -> CrossSection {
    let countries: Vec<String> = panel
        .rows
        .iter()
        .map(|r| r.country.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let country_idx: HashMap<&str, usize> = countries
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    // series -> country -> year -> value
    let mut by_series: HashMap<&str, Vec<BTreeMap<i32, f64>>> = HashMap::new();
    for r in &panel.rows {
        if let Some(v) = r.value {
            by_series
                .entry(r.variable.as_str())
                .or_insert_with(|| vec![BTreeMap::new(); countries.len()])[country_idx[r.country.as_str()]]
                .insert(r.year, v);
        }
    }

    let columns = roster
        .variables
        .iter()
        .map(|spec| {
            let series = by_series.get(spec.series());
            (0..countries.len())
                .map(|i| {
                    let years = series.map(|s| &s[i])?;
                    let (sum, count) = years
                        .range(spec.window.start..=spec.window.end)
                        .fold((0.0, 0usize), |(s, c), (_, v)| (s + v, c + 1));
                    (count > 0).then(|| sum / count as f64)
                })
                .collect()
        })
        .collect();

    CrossSection {
        countries,
        variables: roster.variables.iter().map(|v| v.name.clone()).collect(),
        columns,
    }
}

/// Replaces log-flagged columns by their base-10 logarithm.
pub fn apply_transforms(table: &CrossSection, roster: &Roster) -> Result<CrossSection> {
    let mut out = table.clone();
    for (j, name) in table.variables.iter().enumerate() {
        let Some(spec) = roster.get(name) else { continue };
        if spec.transform == Transform::Log10 {
            for (i, cell) in out.columns[j].iter_mut().enumerate() {
                if let Some(v) = *cell {
                    if !(v > 0.0) {
                        return Err(Error::Domain {
                            country: table.countries[i].clone(),
                            variable: name.clone(),
                            value: v,
                        });
                    }
                    *cell = Some(v.log10());
                }
            }
        }
    }
    Ok(out)
}

/// Descriptive statistics of one variable over the countries where it is observed.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variable: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// Pearson correlation with the outcome; `None` when either side is constant.
    pub corr_with_outcome: Option<f64>,
}

pub fn summary_stats(table: &CrossSection, outcome: &str) -> Vec<SummaryRow> {
    let outcome_col = table.column(outcome);
    table
        .variables
        .iter()
        .zip(&table.columns)
        .map(|(name, col)| {
            let values: Vec<f64> = col.iter().flatten().copied().collect();
            let n = values.len();
            let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
            let sd = if n < 2 {
                f64::NAN
            } else {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let median = match n {
                0 => f64::NAN,
                _ if n % 2 == 1 => sorted[n / 2],
                _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
            };
            let corr_with_outcome = outcome_col.and_then(|oc| {
                let (a, b): (Vec<f64>, Vec<f64>) = col
                    .iter()
                    .zip(oc)
                    .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                    .unzip();
                pearson(&a, &b)
            });
            SummaryRow {
                variable: name.clone(),
                n,
                mean,
                median,
                sd,
                min: sorted.first().copied().unwrap_or(f64::NAN),
                max: sorted.last().copied().unwrap_or(f64::NAN),
                corr_with_outcome,
            }
        })
        .collect()
}

/// Pearson correlation, `None` for fewer than two points or a constant input.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::panel::Observation;
    use crate::pipeline::roster::{Role, VariableSpec, YearWindow};
    use proptest::prelude::*;

    fn obs(country: &str, year: i32, variable: &str, value: Option<f64>) -> Observation {
        Observation {
            country: country.into(),
            year,
            variable: variable.into(),
            value,
        }
    }

    fn roster() -> Roster {
        let decade = YearWindow::new(2001, 2010).unwrap();
        Roster::new(vec![
            VariableSpec::new("democracy", Role::Outcome, decade),
            VariableSpec::new("gdp_pc", Role::Exogenous, decade).with_transform(Transform::Log10),
            VariableSpec::new("state_fragility", Role::Endogenous, decade),
            VariableSpec::new(
                "state_fragility_lag",
                Role::Instrument {
                    target: "state_fragility".into(),
                },
                YearWindow::new(1995, 2000).unwrap(),
            )
            .with_series("state_fragility"),
        ])
        .unwrap()
    }

    #[test]
    fn mean_of_available_years() {
        let panel = PanelTable {
            rows: vec![
                obs("DNK", 2001, "democracy", Some(2.0)),
                obs("DNK", 2002, "democracy", Some(4.0)),
                obs("DNK", 2003, "democracy", None),
                obs("DNK", 1999, "democracy", Some(100.0)),
            ],
        };
        let cs = decade_average(&panel, &roster());
        assert_eq!(cs.get("DNK", "democracy"), Some(3.0));
        assert_eq!(cs.get("DNK", "gdp_pc"), None);
    }

    #[test]
    fn lag_window_uses_its_own_years() {
        let mut rows: Vec<_> = (1995..=2000)
            .map(|y| obs("KEN", y, "state_fragility", Some(1.0)))
            .collect();
        rows.push(obs("KEN", 1994, "state_fragility", Some(50.0)));
        rows.push(obs("KEN", 2004, "state_fragility", Some(9.0)));
        let cs = decade_average(&PanelTable { rows }, &roster());
        assert_eq!(cs.get("KEN", "state_fragility_lag"), Some(1.0));
        assert_eq!(cs.get("KEN", "state_fragility"), Some(9.0));
    }

    #[test]
    fn log10_transform() {
        let panel = PanelTable {
            rows: vec![obs("DNK", 2005, "gdp_pc", Some(10_000.0)), obs("DNK", 2005, "democracy", Some(7.0))],
        };
        let cs = apply_transforms(&decade_average(&panel, &roster()), &roster()).unwrap();
        assert_eq!(cs.get("DNK", "gdp_pc"), Some(4.0));
        assert_eq!(cs.get("DNK", "democracy"), Some(7.0));
    }

    #[test]
    fn log_of_zero_is_a_domain_error() {
        let panel = PanelTable {
            rows: vec![obs("TCD", 2005, "gdp_pc", Some(0.0))],
        };
        match apply_transforms(&decade_average(&panel, &roster()), &roster()) {
            Err(Error::Domain { country, variable, .. }) => {
                assert_eq!(country, "TCD");
                assert_eq!(variable, "gdp_pc");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summary_of_one_two_three() {
        let cs = CrossSection::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["y".into(), "x".into(), "k".into()],
            vec![
                vec![Some(1.0), Some(2.0), Some(3.0)],
                vec![Some(3.0), Some(1.0), Some(2.0)],
                vec![Some(5.0), Some(5.0), Some(5.0)],
            ],
        )
        .unwrap();
        let rows = summary_stats(&cs, "y");
        let y = &rows[0];
        assert_eq!((y.mean, y.median, y.sd, y.min, y.max), (2.0, 2.0, 1.0, 1.0, 3.0));
        assert!((y.corr_with_outcome.unwrap() - 1.0).abs() < 1e-12);
        let k = &rows[2];
        assert_eq!(k.sd, 0.0);
        assert_eq!(k.corr_with_outcome, None);
    }

    proptest! {
        #[test]
        fn averaging_ignores_row_order(values in proptest::collection::vec(-1e3f64..1e3, 1..25), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let rows: Vec<_> = values.iter().enumerate()
                .map(|(i, v)| obs(if i % 2 == 0 { "A" } else { "B" }, 2001 + (i / 2) as i32 % 10, "democracy", Some(*v)))
                .collect::<Vec<_>>();
            // keep keys unique
            let mut seen = std::collections::HashSet::new();
            let rows: Vec<_> = rows.into_iter().filter(|r| seen.insert((r.country.clone(), r.year))).collect();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = decade_average(&PanelTable { rows }, &roster());
            let b = decade_average(&PanelTable { rows: shuffled }, &roster());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn one_year_window_commutes_with_log(v in 1e-3f64..1e6) {
            let one_year = Roster::new(vec![
                VariableSpec::new("y", Role::Outcome, YearWindow::new(2005, 2005).unwrap())
                    .with_transform(Transform::Log10),
            ]).unwrap();
            let panel = PanelTable { rows: vec![obs("A", 2005, "y", Some(v))] };
            let cs = apply_transforms(&decade_average(&panel, &one_year), &one_year).unwrap();
            prop_assert_eq!(cs.get("A", "y"), Some(v.log10()));
        }

        #[test]
        fn sd_matches_sum_of_squares(values in proptest::collection::vec(-1e4f64..1e4, 2..60)) {
            let n = values.len();
            let cs = CrossSection::new(
                (0..n).map(|i| i.to_string()).collect(),
                vec!["v".into()],
                vec![values.iter().map(|v| Some(*v)).collect()],
            ).unwrap();
            let row = &summary_stats(&cs, "v")[0];
            let mean = values.iter().sum::<f64>() / n as f64;
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            let lhs = row.sd * row.sd * (n - 1) as f64;
            prop_assert!((lhs - ss).abs() <= 1e-9 * ss.max(1e-300) + 1e-12);
        }
    }
}
