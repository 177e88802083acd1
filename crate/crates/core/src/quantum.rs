//! Closed-form quantum detection probabilities for the supported two-partite states.
//!
//! Non-(+,+) probabilities for the two polarization-entangled families are obtained
//! by rotating the corresponding analyzer by π/2: the `-` channel of an analyzer at
//! angle `a` is the `+` channel of an analyzer at `a + π/2`. The sample-space
//! builders in [`crate::models`] use the same convention, so this module is the single
//! place where it is defined.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LhvError, Result};

/// Which entangled state a probability refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum EntangledState {
    /// (|HH> + |VV>)/√2.
    Maximal,
    /// (r|HH> + |VV>)/√(1+r²) with amplitude ratio `r` in (0, 1].
    NonMaximal { r: f64 },
    /// Polarization rotation on one photon, Mach-Zehnder phase on the other.
    DelayedChoice,
}

impl EntangledState {
    pub fn non_maximal(r: f64) -> Result<Self> {
        check_ratio(r)?;
        Ok(EntangledState::NonMaximal { r })
    }

    /// Amplitude ratio; the maximal state reports 1.
    pub fn ratio(&self) -> Option<f64> {
        match *self {
            EntangledState::Maximal => Some(1.0),
            EntangledState::NonMaximal { r } => Some(r),
            EntangledState::DelayedChoice => None,
        }
    }

    fn is_epr(&self) -> bool {
        !matches!(self, EntangledState::DelayedChoice)
    }
}

pub fn check_ratio(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(LhvError::domain(format!("entanglement ratio r must lie in (0, 1], got {r}")))
    }
}

/// An analyzer setting in radians.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Setting(pub f64);

impl Setting {
    pub fn radians(self) -> f64 {
        self.0
    }

    /// Representative in `[0, period)`.
    pub fn canonical(self, period: f64) -> Setting {
        Setting(wrap(self.0, period))
    }
}

impl From<f64> for Setting {
    fn from(v: f64) -> Self {
        Setting(v)
    }
}

/// Reduce `x` into `[0, period)`.
pub fn wrap(x: f64, period: f64) -> f64 {
    let y = x.rem_euclid(period);
    // rem_euclid can return `period` itself for tiny negative inputs
    if y >= period {
        0.0
    } else {
        y
    }
}

/// Signed distance between two angles modulo `period`, in `(-period/2, period/2]`.
pub fn circular_distance(x: f64, y: f64, period: f64) -> f64 {
    let d = wrap(x - y, period);
    if d > period / 2.0 {
        d - period
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Channel {
    pub const BOTH: [Channel; 2] = [Channel::Plus, Channel::Minus];

    pub fn index(self) -> usize {
        match self {
            Channel::Plus => 0,
            Channel::Minus => 1,
        }
    }

    /// Analyzer rotation that maps this channel onto `+`.
    pub fn shift(self) -> f64 {
        match self {
            Channel::Plus => 0.0,
            Channel::Minus => FRAC_PI_2,
        }
    }

    pub fn opposite(self) -> Channel {
        match self {
            Channel::Plus => Channel::Minus,
            Channel::Minus => Channel::Plus,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Plus => f.write_str("+"),
            Channel::Minus => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::A => f.write_str("A"),
            Side::B => f.write_str("B"),
        }
    }
}

/// (+,+) joint probability of the non-maximal state with both analyzers already rotated.
fn epr_plus_plus(r: f64, a: f64, b: f64) -> f64 {
    let amp = r * a.cos() * b.cos() + a.sin() * b.sin();
    amp * amp / (1.0 + r * r)
}

fn epr_plus_single(r: f64, angle: f64) -> f64 {
    let (s, c) = angle.sin_cos();
    (r * r * c * c + s * s) / (1.0 + r * r)
}

/// Joint detection probability `P_xy(a, b)`.
pub fn jdp(state: EntangledState, a: Setting, b: Setting, x: Channel, y: Channel) -> f64 {
    match state {
        EntangledState::Maximal => {
            let d = (a.0 + x.shift()) - (b.0 + y.shift());
            0.5 * d.cos().powi(2)
        }
        EntangledState::NonMaximal { r } => epr_plus_plus(r, a.0 + x.shift(), b.0 + y.shift()),
        EntangledState::DelayedChoice => delayed_first(a, x) + delayed_second(a, b, x, y),
    }
}

/// First (b-independent) group of the delayed-choice joint probabilities.
pub fn delayed_first(a: Setting, x: Channel) -> f64 {
    let (s, c) = a.0.sin_cos();
    match x {
        Channel::Plus => 0.25 * c * c,
        Channel::Minus => 0.25 * s * s,
    }
}

/// Second group of the delayed-choice joint probabilities, a product of local terms.
pub fn delayed_second(a: Setting, b: Setting, x: Channel, y: Channel) -> f64 {
    let (s, c) = a.0.sin_cos();
    let (sh, ch) = (0.5 * b.0).sin_cos();
    let fa = match x {
        Channel::Plus => s * s,
        Channel::Minus => c * c,
    };
    let gb = match y {
        Channel::Plus => ch * ch,
        Channel::Minus => sh * sh,
    };
    0.5 * fa * gb
}

/// Single detection probability at one detector.
pub fn sdp(state: EntangledState, setting: Setting, ch: Channel, side: Side) -> f64 {
    match state {
        EntangledState::Maximal => 0.5,
        EntangledState::NonMaximal { r } => epr_plus_single(r, setting.0 + ch.shift()),
        EntangledState::DelayedChoice => match side {
            Side::A => 0.5,
            Side::B => {
                let half = 0.5 * setting.0;
                match ch {
                    Channel::Plus => 0.25 + 0.5 * half.cos().powi(2),
                    Channel::Minus => 0.25 + 0.5 * half.sin().powi(2),
                }
            }
        },
    }
}

/// Amplitude `P_y(b)` of the detector-B band for channel `y` (equal to the B single).
pub fn band_amplitude(state: EntangledState, b: Setting, y: Channel) -> f64 {
    sdp(state, b, y, Side::B)
}

/// Zero-point angle θ_y(b) of the band for detector-B channel `y`.
///
/// `P_{+,+}(a,b) = P_+(b) cos²(a - θ_+(b))` and `P_{+,-}(a,b) = P_-(b) sin²(a - θ_-(b))`.
/// The branch is continuous in `b` with θ(0) = 0 and θ(b + π) = θ(b) + π.
pub fn theta(state: EntangledState, b: Setting, ch: Channel) -> Result<Setting> {
    let r = match state {
        EntangledState::Maximal => 1.0,
        EntangledState::NonMaximal { r } => r,
        EntangledState::DelayedChoice => {
            return Err(LhvError::domain("theta is defined for polarization-entangled states only"))
        }
    };
    let (s, c) = b.0.sin_cos();
    let principal = match ch {
        Channel::Plus => s.atan2(r * c),
        Channel::Minus => (r * s).atan2(c),
    };
    // principal and b share a quadrant, so the continuous branch is within π/2 of b
    let k = ((b.0 - principal) / (2.0 * PI)).round();
    Ok(Setting(principal + 2.0 * PI * k))
}

/// Magnitude of the derivative of `P_xy(λ, b)` in its first argument.
pub fn pdf_magnitude(
    state: EntangledState,
    lambda: Setting,
    b: Setting,
    _x: Channel,
    y: Channel,
) -> Result<f64> {
    if !state.is_epr() {
        return Err(LhvError::domain("pdf_magnitude is defined for polarization-entangled states only"));
    }
    let amp = band_amplitude(state, b, y);
    let th = theta(state, b, y)?;
    Ok(amp * (2.0 * (lambda.0 - th.0)).sin().abs())
}
