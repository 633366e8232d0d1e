//! Link budget to transceiver settings.
//!
//! A link with loss `L` is receivable when `tx_power - sensitivity >= L`. Levels
//! are integer dBm, the granularity of the transceiver registers.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default guard in dB.
pub const DEFAULT_GUARD: i32 = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RadioError {
    #[error("beta {beta} is below minimum budget {min} of profile {profile}")]
    BelowRange {
        beta: i32,
        min: i32,
        profile: String,
    },
    #[error("beta {beta} is above maximum budget {max} of profile {profile}")]
    AboveRange {
        beta: i32,
        max: i32,
        profile: String,
    },
    #[error("no level pair of profile {profile} realizes exactly {beta} dB")]
    NoExactSetting { beta: i32, profile: String },
    #[error("guard must be non-negative, got {0}")]
    NegativeGuard(i32),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("{level} dBm is not a {kind} level of profile {profile}")]
    NotALevel {
        level: i32,
        kind: &'static str,
        profile: String,
    },
}

/// Discrete transmit power and sensitivity levels of a transceiver, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransceiverProfile {
    pub name: String,
    pub tx_levels: Vec<i32>,
    pub sensitivity_levels: Vec<i32>,
}

impl Default for TransceiverProfile {
    fn default() -> Self {
        Self::at86rf231()
    }
}

impl TransceiverProfile {
    /// AT86RF231 range (-17..=3 dBm output, -101..=-48 dBm sensitivity).
    ///
    /// Only the endpoints are datasheet values. The interior is a 1 dB
    /// placeholder grid; supply the register table for hardware runs.
    pub fn at86rf231() -> Self {
        TransceiverProfile {
            name: "AT86RF231".to_string(),
            tx_levels: (-17..=3).collect(),
            sensitivity_levels: (-101..=-48).collect(),
        }
    }

    pub fn new(
        name: impl Into<String>,
        tx_levels: Vec<i32>,
        sensitivity_levels: Vec<i32>,
    ) -> Result<Self, RadioError> {
        let p = TransceiverProfile {
            name: name.into(),
            tx_levels,
            sensitivity_levels,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        for (kind, levels) in [
            ("tx", &self.tx_levels),
            ("sensitivity", &self.sensitivity_levels),
        ] {
            if levels.is_empty() {
                return Err(RadioError::InvalidProfile(format!("no {kind} levels")));
            }
            if levels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(RadioError::InvalidProfile(format!(
                    "{kind} levels must be strictly ascending"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, RadioError> {
        let p: TransceiverProfile =
            serde_json::from_str(text).map_err(|e| RadioError::InvalidProfile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("profile serializes");
        s.push('\n');
        s
    }

    pub fn min_budget(&self) -> i32 {
        self.tx_levels[0] - self.sensitivity_levels[self.sensitivity_levels.len() - 1]
    }

    pub fn max_budget(&self) -> i32 {
        self.tx_levels[self.tx_levels.len() - 1] - self.sensitivity_levels[0]
    }

    /// Every budget some level pair realizes exactly.
    pub fn achievable_budgets(&self) -> BTreeSet<i32> {
        self.tx_levels
            .iter()
            .flat_map(|t| self.sensitivity_levels.iter().map(move |s| t - s))
            .collect()
    }

    /// A setting whose values are both profile levels.
    pub fn setting(&self, tx_power: i32, sensitivity: i32) -> Result<RadioSetting, RadioError> {
        let not_level = |level, kind| RadioError::NotALevel {
            level,
            kind,
            profile: self.name.clone(),
        };
        if self.tx_levels.binary_search(&tx_power).is_err() {
            return Err(not_level(tx_power, "tx"));
        }
        if self.sensitivity_levels.binary_search(&sensitivity).is_err() {
            return Err(not_level(sensitivity, "sensitivity"));
        }
        Ok(RadioSetting::new(tx_power, sensitivity))
    }

    /// Largest step between adjacent levels of either list.
    pub fn quantization_step(&self) -> i32 {
        self.tx_levels
            .windows(2)
            .chain(self.sensitivity_levels.windows(2))
            .map(|w| w[1] - w[0])
            .max()
            .unwrap_or(0)
    }
}

/// Transmit power and receiver sensitivity, both in dBm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RadioSetting {
    pub tx_power: i32,
    pub sensitivity: i32,
}

impl RadioSetting {
    pub fn new(tx_power: i32, sensitivity: i32) -> Self {
        RadioSetting {
            tx_power,
            sensitivity,
        }
    }

    /// Tolerable loss in dB.
    pub fn budget(&self) -> i32 {
        self.tx_power - self.sensitivity
    }
}

impl fmt::Display for RadioSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} ({} dB)",
            self.tx_power,
            self.sensitivity,
            self.budget()
        )
    }
}

pub fn budget(setting: &RadioSetting) -> i32 {
    setting.budget()
}

/// The largest loss a setting can bridge; links with loss at or below it are
/// receivable.
pub fn bound_for_settings(setting: &RadioSetting) -> i32 {
    setting.budget()
}

/// An exact setting for a bound plus its guarded variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GuardedSetting {
    /// Realizes the bound exactly.
    pub base: RadioSetting,
    /// Budget raised by about the guard; `None` if no headroom exists at all.
    pub guarded: Option<RadioSetting>,
    /// True when the full guard could not be applied.
    pub saturated: bool,
}

/// All level pairs whose budget equals `beta`, lowest transmit power first,
/// each with a variant raised by `guard` dB. The guard is applied by lowering
/// the sensitivity when possible and raising the transmit power otherwise.
pub fn settings_for_bound(
    beta: i32,
    profile: &TransceiverProfile,
    guard: i32,
) -> Result<Vec<GuardedSetting>, RadioError> {
    if guard < 0 {
        return Err(RadioError::NegativeGuard(guard));
    }
    if beta < profile.min_budget() {
        return Err(RadioError::BelowRange {
            beta,
            min: profile.min_budget(),
            profile: profile.name.clone(),
        });
    }
    if beta > profile.max_budget() {
        return Err(RadioError::AboveRange {
            beta,
            max: profile.max_budget(),
            profile: profile.name.clone(),
        });
    }
    let out: Vec<GuardedSetting> = profile
        .tx_levels
        .iter()
        .filter(|&&tx| {
            profile
                .sensitivity_levels
                .binary_search(&(tx - beta))
                .is_ok()
        })
        .map(|&tx| apply_guard(RadioSetting::new(tx, tx - beta), profile, guard))
        .collect();
    if out.is_empty() {
        return Err(RadioError::NoExactSetting {
            beta,
            profile: profile.name.clone(),
        });
    }
    Ok(out)
}

fn apply_guard(base: RadioSetting, profile: &TransceiverProfile, guard: i32) -> GuardedSetting {
    let target = base.budget() + guard;
    let done = |s: RadioSetting| GuardedSetting {
        base,
        guarded: Some(s),
        saturated: false,
    };
    // Sensitivity first, closest level that reaches the target.
    if let Some(&sens) = profile
        .sensitivity_levels
        .iter()
        .rev()
        .find(|&&s| s <= base.sensitivity && base.tx_power - s >= target)
    {
        return done(RadioSetting::new(base.tx_power, sens));
    }
    let floor = profile.sensitivity_levels[0];
    if let Some(&tx) = profile
        .tx_levels
        .iter()
        .find(|&&t| t >= base.tx_power && t - floor >= target)
    {
        return done(RadioSetting::new(tx, floor));
    }
    let best = RadioSetting::new(profile.tx_levels[profile.tx_levels.len() - 1], floor);
    GuardedSetting {
        base,
        guarded: (best.budget() > base.budget()).then_some(best),
        saturated: true,
    }
}
