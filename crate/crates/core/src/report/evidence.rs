use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strength of evidence for inclusion, ordered `Weak < Positive < Strong < Decisive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EvidenceClass {
    Weak,
    Positive,
    Strong,
    Decisive,
}

pub const POSITIVE_THRESHOLD: f64 = 0.75;
pub const STRONG_THRESHOLD: f64 = 0.95;
pub const DECISIVE_THRESHOLD: f64 = 0.99;

/// Classifies a PIP. A PIP exactly on a threshold belongs to the lower class.
pub fn classify_evidence(pip: f64) -> Result<EvidenceClass> {
    if !(0.0..=1.0).contains(&pip) {
        return Err(Error::ProbabilityRange(pip));
    }
    Ok(if pip > DECISIVE_THRESHOLD {
        EvidenceClass::Decisive
    } else if pip > STRONG_THRESHOLD {
        EvidenceClass::Strong
    } else if pip > POSITIVE_THRESHOLD {
        EvidenceClass::Positive
    } else {
        EvidenceClass::Weak
    })
}

impl EvidenceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceClass::Weak => "Weak",
            EvidenceClass::Positive => "Positive",
            EvidenceClass::Strong => "Strong",
            EvidenceClass::Decisive => "Decisive",
        }
    }
}

impl fmt::Display for EvidenceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvidenceClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Weak" => Ok(EvidenceClass::Weak),
            "Positive" => Ok(EvidenceClass::Positive),
            "Strong" => Ok(EvidenceClass::Strong),
            "Decisive" => Ok(EvidenceClass::Decisive),
            other => Err(Error::Config(format!("unknown evidence class {other:?}"))),
        }
    }
}
