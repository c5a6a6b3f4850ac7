use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Learning phase of a single-neuron posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhaseLabel {
    /// Gaussian feature learning: one target-agnostic minimum dominates.
    #[serde(rename = "GFL")]
    Gfl,
    /// Mixed phase: trivial and teacher-aware minima within the window.
    #[serde(rename = "GMFL-I")]
    GmflI,
    /// Teacher-aware minima dominate.
    #[serde(rename = "GMFL-II")]
    GmflII,
}

impl PhaseLabel {
    /// Labels from a signed action gap `S(nontrivial) - S(trivial)`.
    ///
    /// `None` means there is no nontrivial minimum at all.
    pub fn from_gap(gap: Option<f64>, window: f64) -> Self {
        match gap {
            None => PhaseLabel::Gfl,
            Some(g) if g > window => PhaseLabel::Gfl,
            Some(g) if g < -window => PhaseLabel::GmflII,
            Some(_) => PhaseLabel::GmflI,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseLabel::Gfl => "GFL",
            PhaseLabel::GmflI => "GMFL-I",
            PhaseLabel::GmflII => "GMFL-II",
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "GFL" => Ok(PhaseLabel::Gfl),
            "GMFL-I" => Ok(PhaseLabel::GmflI),
            "GMFL-II" => Ok(PhaseLabel::GmflII),
            other => Err(format!("unknown phase label {other:?}")),
        }
    }
}

/// Phase classification together with the quantities it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: PhaseLabel,
    /// Action of the nontrivial minimum relative to the trivial one, in nats.
    /// `None` when no nontrivial minimum exists.
    pub gap: Option<f64>,
    /// Posterior mass carried by the nontrivial minima.
    pub droplet_weight: f64,
    /// Learned target components of the mean predictor, model specific:
    /// `(h1, h3)` for the teacher-student model, `[1 - |a|]` for modular addition.
    pub components: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_thresholds() {
        assert_eq!(PhaseLabel::from_gap(None, 1.0), PhaseLabel::Gfl);
        assert_eq!(PhaseLabel::from_gap(Some(1.5), 1.0), PhaseLabel::Gfl);
        assert_eq!(PhaseLabel::from_gap(Some(0.0), 1.0), PhaseLabel::GmflI);
        assert_eq!(PhaseLabel::from_gap(Some(-1.0), 1.0), PhaseLabel::GmflI);
        assert_eq!(PhaseLabel::from_gap(Some(-10.0), 1.0), PhaseLabel::GmflII);
    }

    #[test]
    fn label_round_trip() {
        for l in [PhaseLabel::Gfl, PhaseLabel::GmflI, PhaseLabel::GmflII] {
            assert_eq!(l.as_str().parse::<PhaseLabel>().unwrap(), l);
        }
        assert!(PhaseLabel::Gfl < PhaseLabel::GmflI && PhaseLabel::GmflI < PhaseLabel::GmflII);
    }
}
