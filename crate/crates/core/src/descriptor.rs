//! JSON model descriptors.
//!
//! A descriptor names a model family and its parameters. Band densities and height
//! profiles are always re-derived from it and never read back from disk.
//!
//! ```json
//! {
//!   "family": "finite",
//!   "r": 0.26,
//!   "period": 3.141592653589793,
//!   "grid_resolution": 4096,
//!   "a_settings": [0.0, 0.7853981633974483],
//!   "b_settings": [0.19634954084936207, -0.19634954084936207],
//!   "padding": "independent"
//! }
//! ```
//!
//! `r` is required for `nonmaximal-nxn` and `finite`. `a_settings`/`b_settings`
//! are required for `finite`. `height_offset` adds a constant to the column height
//! and exists only to build deliberately non-optimal test fixtures.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LhvError, Result};

pub const DEFAULT_GRID_RESOLUTION: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    MaximalNxn,
    #[serde(rename = "maximal-2x2")]
    Maximal2x2,
    NonmaximalNxn,
    Finite,
    DelayedChoice,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::MaximalNxn,
        Family::Maximal2x2,
        Family::NonmaximalNxn,
        Family::Finite,
        Family::DelayedChoice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::MaximalNxn => "maximal-nxn",
            Family::Maximal2x2 => "maximal-2x2",
            Family::NonmaximalNxn => "nonmaximal-nxn",
            Family::Finite => "finite",
            Family::DelayedChoice => "delayed-choice",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| LhvError::domain(format!("unknown model family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// The bare sample space.
    #[default]
    None,
    /// Joined with its mirror image, no background.
    Symmetric,
    /// Mirror image plus background so that errors at the two detectors are independent.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    pub period: f64,
    pub grid_resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_settings: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_settings: Option<Vec<f64>>,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_offset: Option<f64>,
}

impl ModelDescriptor {
    pub fn new(family: Family) -> Self {
        ModelDescriptor {
            family,
            r: None,
            period: PI,
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            a_settings: None,
            b_settings: None,
            padding: Padding::None,
            height_offset: None,
        }
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = Some(r);
        self
    }

    pub fn with_settings(mut self, a: Vec<f64>, b: Vec<f64>) -> Self {
        self.a_settings = Some(a);
        self.b_settings = Some(b);
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_resolution(mut self, n: usize) -> Self {
        self.grid_resolution = n;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| LhvError::domain(format!("invalid model descriptor: {e}")))
    }

    /// Structural checks that do not require building the model.
    pub fn validate(&self) -> Result<()> {
        if (self.period - PI).abs() > 1e-12 {
            return Err(LhvError::domain(format!("period must be π, got {}", self.period)));
        }
        if self.grid_resolution < 8 || self.grid_resolution % 4 != 0 {
            return Err(LhvError::domain(format!(
                "grid_resolution must be a multiple of 4 and at least 8, got {}",
                self.grid_resolution
            )));
        }
        match self.family {
            Family::NonmaximalNxn | Family::Finite => {
                let r = self.r.ok_or_else(|| {
                    LhvError::domain(format!("family {} requires r", self.family.name()))
                })?;
                crate::quantum::check_ratio(r)?;
            }
            _ => {}
        }
        if self.family == Family::Finite && (self.a_settings.is_none() || self.b_settings.is_none()) {
            return Err(LhvError::domain("family finite requires a_settings and b_settings"));
        }
        if let Some(h) = self.height_offset {
            if !(h.is_finite() && h >= 0.0) {
                return Err(LhvError::domain("height_offset must be finite and non-negative"));
            }
        }
        Ok(())
    }
}
