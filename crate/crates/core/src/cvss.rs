//! CVSS v3.1 base scoring.
//!
//! The pipeline only ever emits vectors where Attack Vector and Availability
//! vary (everything else is pinned by how the exploit works: unauthenticated
//! HTTP request, no user interaction, arbitrary file read). [`CvssVector`]
//! models that constrained shape; the full base-metric domain is still
//! implemented underneath so scores can be checked against the official
//! calculator for arbitrary vectors.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exploit::{AttackVectorKind, ExploitOutcome};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CvssError {
    #[error("malformed CVSS vector: {0}")]
    Malformed(String),
    #[error("candidate was not exploited; refusing to score")]
    NotExploited,
}

/// Attack Vector for the constrained pipeline domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Av {
    Network,
    Local,
}

/// Availability impact for the constrained pipeline domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Avail {
    High,
    None,
}

/// The vector shape produced by this pipeline: only AV and A vary.
///
/// AC:L, PR:N, UI:N, S:U, C:H, I:N are fixed for every confirmed finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvssVector {
    pub av: Av,
    pub a: Avail,
}

impl CvssVector {
    /// Canonical string form, strict metric order.
    pub fn vector_string(&self) -> String {
        format!(
            "CVSS:3.1/AV:{}/AC:L/PR:N/UI:N/S:U/C:H/I:N/A:{}",
            match self.av {
                Av::Network => "N",
                Av::Local => "L",
            },
            match self.a {
                Avail::High => "H",
                Avail::None => "N",
            }
        )
    }

    /// Parse the canonical form back. Rejects lowercase, reordered, or
    /// otherwise non-canonical input.
    pub fn parse(s: &str) -> Result<Self, CvssError> {
        let full = BaseMetricSet::parse(s)?;
        let av = match full.av {
            AvMetric::Network => Av::Network,
            AvMetric::Local => Av::Local,
            _ => return Err(CvssError::Malformed(format!("AV out of domain in {s}"))),
        };
        let a = match full.a {
            Impact::High => Avail::High,
            Impact::None => Avail::None,
            Impact::Low => return Err(CvssError::Malformed(format!("A out of domain in {s}"))),
        };
        let expected = CvssVector { av, a };
        if expected.vector_string() != s {
            return Err(CvssError::Malformed(format!("non-canonical vector: {s}")));
        }
        Ok(expected)
    }

    pub fn base_score(&self) -> CvssScore {
        let metrics = BaseMetricSet {
            av: match self.av {
                Av::Network => AvMetric::Network,
                Av::Local => AvMetric::Local,
            },
            ac: Ac::Low,
            pr: Pr::None,
            ui: Ui::None,
            s: Scope::Unchanged,
            c: Impact::High,
            i: Impact::None,
            a: match self.a {
                Avail::High => Impact::High,
                Avail::None => Impact::None,
            },
        };
        metrics.base_score()
    }
}

impl fmt::Display for CvssVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.vector_string())
    }
}

/// Infer the vector from proven exploit facts.
///
/// AV follows where the exploit actually succeeded; A is High only when the
/// memory-exhaustion probe killed the server.
pub fn infer_metrics(outcome: &ExploitOutcome) -> Result<CvssVector, CvssError> {
    if !outcome.traversal {
        return Err(CvssError::NotExploited);
    }
    let av = match outcome.attack_vector {
        AttackVectorKind::Network => Av::Network,
        AttackVectorKind::Local => Av::Local,
        AttackVectorKind::None => return Err(CvssError::NotExploited),
    };
    Ok(CvssVector {
        av,
        a: if outcome.dos {
            Avail::High
        } else {
            Avail::None
        },
    })
}

/// One-decimal base score held in integer tenths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvssScore {
    tenths: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeverityBand {
    None,
    Low,
    Medium,
    High,
    Critical,
}

impl CvssScore {
    pub fn from_tenths(tenths: u16) -> Self {
        assert!(tenths <= 100, "score out of range");
        Self { tenths }
    }

    pub fn tenths(&self) -> u16 {
        self.tenths
    }

    pub fn value(&self) -> f64 {
        f64::from(self.tenths) / 10.0
    }

    pub fn severity_band(&self) -> SeverityBand {
        match self.tenths {
            0 => SeverityBand::None,
            1..=39 => SeverityBand::Low,
            40..=69 => SeverityBand::Medium,
            70..=89 => SeverityBand::High,
            _ => SeverityBand::Critical,
        }
    }
}

impl fmt::Display for CvssScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.tenths / 10, self.tenths % 10)
    }
}

// --- full v3.1 base metric domain -----------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvMetric {
    Network,
    Adjacent,
    Local,
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ac {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pr {
    None,
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ui {
    None,
    Required,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Unchanged,
    Changed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Impact {
    High,
    Low,
    None,
}

/// A complete CVSS v3.1 base metric set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaseMetricSet {
    pub av: AvMetric,
    pub ac: Ac,
    pub pr: Pr,
    pub ui: Ui,
    pub s: Scope,
    pub c: Impact,
    pub i: Impact,
    pub a: Impact,
}

impl BaseMetricSet {
    /// Strict parser: metrics must appear in specification order.
    pub fn parse(s: &str) -> Result<Self, CvssError> {
        let err = || CvssError::Malformed(s.to_string());
        let rest = s.strip_prefix("CVSS:3.1/").ok_or_else(err)?;
        let parts: Vec<&str> = rest.split('/').collect();
        if parts.len() != 8 {
            return Err(err());
        }
        let field = |idx: usize, key: &str| -> Result<&str, CvssError> {
            parts[idx]
                .strip_prefix(key)
                .and_then(|v| v.strip_prefix(':'))
                .ok_or_else(err)
        };
        let av = match field(0, "AV")? {
            "N" => AvMetric::Network,
            "A" => AvMetric::Adjacent,
            "L" => AvMetric::Local,
            "P" => AvMetric::Physical,
            _ => return Err(err()),
        };
        let ac = match field(1, "AC")? {
            "L" => Ac::Low,
            "H" => Ac::High,
            _ => return Err(err()),
        };
        let pr = match field(2, "PR")? {
            "N" => Pr::None,
            "L" => Pr::Low,
            "H" => Pr::High,
            _ => return Err(err()),
        };
        let ui = match field(3, "UI")? {
            "N" => Ui::None,
            "R" => Ui::Required,
            _ => return Err(err()),
        };
        let scope = match field(4, "S")? {
            "U" => Scope::Unchanged,
            "C" => Scope::Changed,
            _ => return Err(err()),
        };
        let impact = |v: &str| match v {
            "H" => Ok(Impact::High),
            "L" => Ok(Impact::Low),
            "N" => Ok(Impact::None),
            _ => Err(err()),
        };
        Ok(Self {
            av,
            ac,
            pr,
            ui,
            s: scope,
            c: impact(field(5, "C")?)?,
            i: impact(field(6, "I")?)?,
            a: impact(field(7, "A")?)?,
        })
    }

    pub fn base_score(&self) -> CvssScore {
        let av = match self.av {
            AvMetric::Network => 0.85,
            AvMetric::Adjacent => 0.62,
            AvMetric::Local => 0.55,
            AvMetric::Physical => 0.2,
        };
        let ac = match self.ac {
            Ac::Low => 0.77,
            Ac::High => 0.44,
        };
        let pr = match (self.pr, self.s) {
            (Pr::None, _) => 0.85,
            (Pr::Low, Scope::Unchanged) => 0.62,
            (Pr::Low, Scope::Changed) => 0.68,
            (Pr::High, Scope::Unchanged) => 0.27,
            (Pr::High, Scope::Changed) => 0.50,
        };
        let ui = match self.ui {
            Ui::None => 0.85,
            Ui::Required => 0.62,
        };
        let weight = |m: Impact| -> f64 {
            match m {
                Impact::High => 0.56,
                Impact::Low => 0.22,
                Impact::None => 0.0,
            }
        };
        let iss = 1.0 - (1.0 - weight(self.c)) * (1.0 - weight(self.i)) * (1.0 - weight(self.a));
        let impact = match self.s {
            Scope::Unchanged => 6.42 * iss,
            Scope::Changed => 7.52 * (iss - 0.029) - 3.25 * (iss - 0.02).powi(15),
        };
        if impact <= 0.0 {
            return CvssScore::from_tenths(0);
        }
        let exploitability = 8.22 * av * ac * pr * ui;
        let raw = match self.s {
            Scope::Unchanged => (impact + exploitability).min(10.0),
            Scope::Changed => (1.08 * (impact + exploitability)).min(10.0),
        };
        CvssScore::from_tenths(roundup_tenths(raw))
    }
}

/// The v3.1 Roundup: smallest one-decimal value >= input, evaluated on
/// integer hundred-thousandths so 8.6 stays 8.6 and 8.60001 becomes 8.7.
fn roundup_tenths(raw: f64) -> u16 {
    let scaled = (raw * 100_000.0).round() as i64;
    let tenths = if scaled % 10_000 == 0 {
        scaled / 10_000
    } else {
        scaled / 10_000 + 1
    };
    tenths.clamp(0, 100) as u16
}
