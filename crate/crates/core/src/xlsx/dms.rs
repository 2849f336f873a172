//! Degrees-minutes-seconds conversions.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmsError {
    #[error("{field} {value} outside [0, 60)")]
    Range { field: &'static str, value: f64 },
    #[error("{value} degrees is outside the {axis} range")]
    Axis { value: f64, axis: Axis },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hemisphere {
    N,
    S,
    E,
    W,
}

impl Hemisphere {
    pub fn sign(self) -> f64 {
        match self {
            Hemisphere::N | Hemisphere::E => 1.0,
            Hemisphere::S | Hemisphere::W => -1.0,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Hemisphere::N => "N",
            Hemisphere::S => "S",
            Hemisphere::E => "E",
            Hemisphere::W => "W",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Lat,
    Lon,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Lat => "latitude",
            Axis::Lon => "longitude",
        })
    }
}

/// A coordinate as degrees, minutes and seconds. The sign lives in the
/// hemisphere. Degrees-minutes (DM) notation is the same with zero seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmsInput {
    pub degrees: u32,
    pub minutes: u32,
    pub seconds: f64,
    pub hemisphere: Hemisphere,
}

impl fmt::Display for DmsInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}° {}' {}\" {}",
            self.degrees,
            self.minutes,
            self.seconds,
            self.hemisphere.letter()
        )
    }
}

/// `sign · (degrees + minutes/60 + seconds/3600)`, in that evaluation order.
pub fn dms_to_decimal(d: &DmsInput) -> Result<f64, DmsError> {
    if d.minutes >= 60 {
        return Err(DmsError::Range {
            field: "minutes",
            value: d.minutes as f64,
        });
    }
    if !(d.seconds >= 0.0 && d.seconds < 60.0) {
        return Err(DmsError::Range {
            field: "seconds",
            value: d.seconds,
        });
    }
    Ok(d.hemisphere.sign() * (d.degrees as f64 + d.minutes as f64 / 60.0 + d.seconds / 3600.0))
}

/// Inverse of [`dms_to_decimal`]. Zero maps to the positive hemisphere.
pub fn decimal_to_dms(v: f64, axis: Axis) -> Result<DmsInput, DmsError> {
    let limit = match axis {
        Axis::Lat => 90.0,
        Axis::Lon => 180.0,
    };
    if !(v.is_finite() && v.abs() <= limit) {
        return Err(DmsError::Axis { value: v, axis });
    }
    let hemisphere = match (axis, v < 0.0) {
        (Axis::Lat, false) => Hemisphere::N,
        (Axis::Lat, true) => Hemisphere::S,
        (Axis::Lon, false) => Hemisphere::E,
        (Axis::Lon, true) => Hemisphere::W,
    };
    let a = v.abs();
    let mut degrees = a.floor();
    let total_minutes = (a - degrees) * 60.0;
    let mut minutes = total_minutes.floor();
    let mut seconds = (total_minutes - minutes) * 60.0;
    // rounding can push a component to exactly 60
    if seconds >= 60.0 {
        seconds = 0.0;
        minutes += 1.0;
    }
    if minutes >= 60.0 {
        minutes = 0.0;
        degrees += 1.0;
    }
    Ok(DmsInput {
        degrees: degrees as u32,
        minutes: minutes as u32,
        seconds,
        hemisphere,
    })
}
