//! Run dimensions shared across modules: country, model and outcome.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Country {
    Guatemala,
    Philippines,
}

impl Country {
    /// Reporting window of the diarrhea recall question, in days.
    pub fn diarrhea_window_days(self) -> u32 {
        match self {
            Country::Guatemala => 15,
            Country::Philippines => 7,
        }
    }

    /// Default number of days between scheduled measurements.
    pub fn days_per_period(self) -> u32 {
        match self {
            Country::Guatemala => 90,
            Country::Philippines => 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Total energy as the single nutrient regressor.
    Energy,
    /// Protein and non-protein energy as separate regressors.
    ProteinSplit,
}

impl Model {
    pub fn nutrient_names(self) -> &'static [&'static str] {
        match self {
            Model::Energy => &["energy"],
            Model::ProteinSplit => &["protein", "nonprotein"],
        }
    }

    /// Endogenous regressors in estimation order: nutrients, then lagged weight and height.
    pub fn endogenous_names(self) -> Vec<String> {
        self.nutrient_names()
            .iter()
            .chain(["lag_weight", "lag_height"].iter())
            .map(|s| s.to_string())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Height,
    Weight,
}

impl Outcome {
    /// Multiplier from natural units (cm or g per kcal) to table display units.
    pub fn display_scale(self) -> f64 {
        match self {
            Outcome::Height => 1000.0,
            Outcome::Weight => 1.0,
        }
    }
}

macro_rules! text_enum {
    ($ty:ty, $what:literal, $($variant:path => $text:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self, Error> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok($variant),)+
                    other => Err(Error::Invalid(format!("unknown {} `{}`", $what, other))),
                }
            }
        }
    };
}

text_enum!(Country, "country", Country::Guatemala => "guatemala", Country::Philippines => "philippines");
text_enum!(Model, "model", Model::Energy => "energy", Model::ProteinSplit => "protein_split");
text_enum!(Outcome, "outcome", Outcome::Height => "height", Outcome::Weight => "weight");
