use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleKind {
    Outcome,
    Exogenous,
    Endogenous,
    Instrument,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Role {
    Outcome,
    Exogenous,
    Endogenous,
    Instrument { target: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    None,
    /// Base-10 logarithm.
    Log10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[i32; 2]", into = "[i32; 2]")]
pub struct YearWindow {
    pub start: i32,
    pub end: i32,
}

impl YearWindow {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::Roster(format!("window start {start} is after end {end}")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }
}

impl TryFrom<[i32; 2]> for YearWindow {
    type Error = Error;

    fn try_from(w: [i32; 2]) -> Result<Self> {
        Self::new(w[0], w[1])
    }
}

impl From<YearWindow> for [i32; 2] {
    fn from(w: YearWindow) -> Self {
        [w.start, w.end]
    }
}

impl fmt::Display for YearWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

/// One roster entry as written in the roster file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub name: String,
    /// Display name for reports; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Panel series the values come from; defaults to `name`. Lagged
    /// instruments point at the series of the variable they instrument.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    pub role: RoleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub transform: Transform,
    pub window: YearWindow,
    #[serde(default)]
    pub category: String,
}

impl VariableSpec {
    pub fn new(name: &str, role: Role, window: YearWindow) -> Self {
        let (role, target) = match role {
            Role::Outcome => (RoleKind::Outcome, None),
            Role::Exogenous => (RoleKind::Exogenous, None),
            Role::Endogenous => (RoleKind::Endogenous, None),
            Role::Instrument { target } => (RoleKind::Instrument, Some(target)),
        };
        Self {
            name: name.to_string(),
            label: None,
            series: None,
            role,
            target,
            transform: Transform::None,
            window,
            category: String::new(),
        }
    }

    pub fn with_series(mut self, series: &str) -> Self {
        self.series = Some(series.to_string());
        self
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn series(&self) -> &str {
        self.series.as_deref().unwrap_or(&self.name)
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }

    pub fn role(&self) -> Role {
        match self.role {
            RoleKind::Outcome => Role::Outcome,
            RoleKind::Exogenous => Role::Exogenous,
            RoleKind::Endogenous => Role::Endogenous,
            RoleKind::Instrument => Role::Instrument {
                target: self.target.clone().unwrap_or_default(),
            },
        }
    }
}

/// The validated variable roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roster {
    #[serde(rename = "variable")]
    pub variables: Vec<VariableSpec>,
}

impl Roster {
    pub fn new(variables: Vec<VariableSpec>) -> Result<Self> {
        let roster = Self { variables };
        roster.validate()?;
        Ok(roster)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let roster: Roster = toml::from_str(text).map_err(|e| Error::Roster(e.to_string()))?;
        roster.validate()?;
        Ok(roster)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("roster serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for v in &self.variables {
            if v.name.is_empty() {
                return Err(Error::Roster("empty variable name".into()));
            }
            if !names.insert(v.name.as_str()) {
                return Err(Error::Roster(format!("duplicate variable {:?}", v.name)));
            }
            YearWindow::new(v.window.start, v.window.end)?;
            match (&v.role, &v.target) {
                (RoleKind::Instrument, None) => {
                    return Err(Error::Roster(format!("instrument {:?} has no target", v.name)))
                }
                (RoleKind::Instrument, Some(_)) => {}
                (_, Some(_)) => {
                    return Err(Error::Roster(format!(
                        "{:?} has a target but is not an instrument",
                        v.name
                    )))
                }
                _ => {}
            }
        }
        let outcomes = self.with_role(RoleKind::Outcome).count();
        if outcomes != 1 {
            return Err(Error::Roster(format!(
                "exactly one outcome variable is required, found {outcomes}"
            )));
        }
        for inst in self.with_role(RoleKind::Instrument) {
            let target = inst.target.as_deref().unwrap_or_default();
            match self.get(target) {
                Some(t) if t.role == RoleKind::Endogenous => {}
                _ => {
                    return Err(Error::Roster(format!(
                        "instrument {:?} targets {:?}, which is not an endogenous variable",
                        inst.name, target
                    )))
                }
            }
        }
        for endo in self.with_role(RoleKind::Endogenous) {
            let count = self
                .with_role(RoleKind::Instrument)
                .filter(|i| i.target.as_deref() == Some(&endo.name))
                .count();
            if count != 1 {
                return Err(Error::Roster(format!(
                    "endogenous variable {:?} needs exactly one instrument, found {count}",
                    endo.name
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn with_role(&self, role: RoleKind) -> impl Iterator<Item = &VariableSpec> + '_ {
        self.variables.iter().filter(move |v| v.role == role)
    }

    pub fn outcome(&self) -> &VariableSpec {
        self.with_role(RoleKind::Outcome)
            .next()
            .expect("validated roster has an outcome")
    }

    pub fn endogenous(&self) -> impl Iterator<Item = &VariableSpec> + '_ {
        self.with_role(RoleKind::Endogenous)
    }

    pub fn exogenous(&self) -> impl Iterator<Item = &VariableSpec> + '_ {
        self.with_role(RoleKind::Exogenous)
    }

    pub fn instrument_for(&self, endogenous: &str) -> Option<&VariableSpec> {
        self.with_role(RoleKind::Instrument)
            .find(|i| i.target.as_deref() == Some(endogenous))
    }

    /// Panel series the roster reads.
    pub fn series_names(&self) -> BTreeSet<&str> {
        self.variables.iter().map(|v| v.series()).collect()
    }
}
