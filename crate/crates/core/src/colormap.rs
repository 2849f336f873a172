//! Density → fill color mapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{county_geoid, CountryIndex, CountyNode, StateNode};

/// Default gray-blend weight of the dull green-red palette.
pub const DULL_BLEND: f64 = 0.5;

const UNIT_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ColorError {
    #[error("value {0} is outside the unit interval")]
    Domain(f64),
    #[error("unknown {kind} {name:?}")]
    UnknownName { kind: &'static str, name: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rgb {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl Rgb {
    /// Builds a color, clamping each channel into `[0, 1]`. NaN becomes 0.
    pub fn clamped(r: f64, g: f64, b: f64) -> Self {
        Rgb {
            r: clamp01(r),
            g: clamp01(g),
            b: clamp01(b),
        }
    }

    fn lerp(from: Rgb, to: Rgb, t: f64) -> Rgb {
        Rgb::clamped(
            from.r + (to.r - from.r) * t,
            from.g + (to.g - from.g) * t,
            from.b + (to.b - from.b) * t,
        )
    }
}

fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorScheme {
    RedBlue,
    GreenRed,
    GreenRedDull,
    Jet,
}

impl ColorScheme {
    pub const ALL: [ColorScheme; 4] = [
        ColorScheme::RedBlue,
        ColorScheme::GreenRed,
        ColorScheme::GreenRedDull,
        ColorScheme::Jet,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ColorScheme::RedBlue => "redblue",
            ColorScheme::GreenRed => "greenred",
            ColorScheme::GreenRedDull => "greenreddull",
            ColorScheme::Jet => "jet",
        }
    }
}

impl fmt::Display for ColorScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColorScheme {
    type Err = ColorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ColorScheme::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ColorError::UnknownName {
                kind: "color scheme",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    /// Scaled to the county's own density range.
    Relative,
    /// Scaled to the nationwide density range.
    Absolute,
}

impl NormalizationMode {
    pub const ALL: [NormalizationMode; 2] = [NormalizationMode::Relative, NormalizationMode::Absolute];

    pub fn as_str(&self) -> &'static str {
        match self {
            NormalizationMode::Relative => "relative",
            NormalizationMode::Absolute => "absolute",
        }
    }
}

impl fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormalizationMode {
    type Err = ColorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NormalizationMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ColorError::UnknownName {
                kind: "normalization mode",
                name: s.to_string(),
            })
    }
}

/// Normalization bounds in the transformed (log) density domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityScale {
    pub lo: f64,
    pub hi: f64,
    pub mode: NormalizationMode,
    /// County GEOID for relative scales, `"US"` for absolute ones.
    pub scope_id: String,
}

/// `log10(1 + d)`; densities span several orders of magnitude.
pub fn transform_density(d: f64) -> f64 {
    (1.0 + d).log10()
}

pub fn density_scale(
    index: &CountryIndex,
    state: &StateNode,
    county: &CountyNode,
    mode: NormalizationMode,
) -> DensityScale {
    match mode {
        NormalizationMode::Relative => {
            let (lo, hi) = county
                .blocks
                .iter()
                .map(|b| b.demo.density)
                .fold(None, |acc: Option<(f64, f64)>, d| match acc {
                    None => Some((d, d)),
                    Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
                })
                .unwrap_or((0.0, 0.0));
            DensityScale {
                lo: transform_density(lo),
                hi: transform_density(hi),
                mode,
                scope_id: county_geoid(state.state_fp, county.county_fp),
            }
        }
        NormalizationMode::Absolute => DensityScale {
            lo: transform_density(index.density_bounds_absolute.min),
            hi: transform_density(index.density_bounds_absolute.max),
            mode,
            scope_id: "US".to_string(),
        },
    }
}

/// Position of a density within the scale, clamped to `[0, 1]`.
/// A degenerate scale maps everything to the midpoint.
pub fn normalize(d: f64, scale: &DensityScale) -> f64 {
    if scale.hi <= scale.lo {
        return 0.5;
    }
    ((transform_density(d) - scale.lo) / (scale.hi - scale.lo)).clamp(0.0, 1.0)
}

const RED: Rgb = Rgb { r: 1.0, g: 0.0, b: 0.0 };
const GREEN: Rgb = Rgb { r: 0.0, g: 1.0, b: 0.0 };
const BLUE: Rgb = Rgb { r: 0.0, g: 0.0, b: 1.0 };
const MID_GRAY: Rgb = Rgb { r: 0.5, g: 0.5, b: 0.5 };

pub fn map_color(scheme: ColorScheme, u: f64) -> Result<Rgb, ColorError> {
    map_color_with_blend(scheme, u, DULL_BLEND)
}

/// Like [`map_color`] with an explicit gray-blend weight for
/// [`ColorScheme::GreenRedDull`] (ignored by the other schemes).
pub fn map_color_with_blend(scheme: ColorScheme, u: f64, dull_blend: f64) -> Result<Rgb, ColorError> {
    if !(-UNIT_SLACK..=1.0 + UNIT_SLACK).contains(&u) {
        return Err(ColorError::Domain(u));
    }
    let u = u.clamp(0.0, 1.0);
    Ok(match scheme {
        ColorScheme::Jet => jet(u),
        ColorScheme::RedBlue => Rgb::lerp(BLUE, RED, u),
        ColorScheme::GreenRed => Rgb::lerp(GREEN, RED, u),
        ColorScheme::GreenRedDull => Rgb::lerp(Rgb::lerp(GREEN, RED, u), MID_GRAY, dull_blend),
    })
}

fn jet(u: f64) -> Rgb {
    let ramp = |offset: f64| 1.5 - (4.0 * u - offset).abs();
    Rgb::clamped(ramp(3.0), ramp(2.0), ramp(1.0))
}

fn channel_byte(v: f64) -> u8 {
    (clamp01(v) * 255.0).round() as u8
}

/// KML `aabbggrr` color string.
pub fn rgb_to_kml_hex(c: Rgb, alpha: u8) -> String {
    format!(
        "{:02x}{:02x}{:02x}{:02x}",
        alpha,
        channel_byte(c.b),
        channel_byte(c.g),
        channel_byte(c.r)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_rgb(c: Rgb, r: f64, g: f64, b: f64) {
        assert!(
            (c.r - r).abs() <= 1e-12 && (c.g - g).abs() <= 1e-12 && (c.b - b).abs() <= 1e-12,
            "{c:?} != ({r}, {g}, {b})"
        );
    }

    #[test]
    fn jet_reference_points() {
        assert_rgb(map_color(ColorScheme::Jet, 0.0).unwrap(), 0.0, 0.0, 0.5);
        assert_rgb(map_color(ColorScheme::Jet, 1.0).unwrap(), 0.5, 0.0, 0.0);
        assert_rgb(map_color(ColorScheme::Jet, 0.5).unwrap(), 0.5, 1.0, 0.5);
        assert_rgb(map_color(ColorScheme::Jet, 0.25).unwrap(), 0.0, 0.5, 1.0);
    }

    #[test]
    fn linear_blends() {
        assert_rgb(map_color(ColorScheme::RedBlue, 0.5).unwrap(), 0.5, 0.0, 0.5);
        assert_rgb(map_color(ColorScheme::RedBlue, 0.0).unwrap(), 0.0, 0.0, 1.0);
        assert_rgb(map_color(ColorScheme::GreenRed, 1.0).unwrap(), 1.0, 0.0, 0.0);
        assert_rgb(map_color(ColorScheme::GreenRed, 0.25).unwrap(), 0.25, 0.75, 0.0);
        assert_rgb(map_color(ColorScheme::GreenRedDull, 0.0).unwrap(), 0.25, 0.75, 0.25);
        assert_rgb(
            map_color_with_blend(ColorScheme::GreenRedDull, 1.0, 0.0).unwrap(),
            1.0,
            0.0,
            0.0,
        );
    }

    #[test]
    fn domain_errors() {
        assert!(map_color(ColorScheme::Jet, 1.0 + 1e-13).is_ok());
        assert_eq!(map_color(ColorScheme::Jet, 1.1), Err(ColorError::Domain(1.1)));
        assert!(map_color(ColorScheme::Jet, -1e-9).is_err());
        assert!(map_color(ColorScheme::Jet, f64::NAN).is_err());
    }

    #[test]
    fn kml_hex() {
        assert_eq!(rgb_to_kml_hex(Rgb::clamped(1.0, 0.0, 0.0), 0x99), "990000ff");
        assert_eq!(rgb_to_kml_hex(Rgb::clamped(0.0, 0.0, 0.0), 0xff), "ff000000");
        assert_eq!(rgb_to_kml_hex(Rgb::clamped(0.0, 0.5, 1.0), 0x00), "00ff8000");
    }

    #[test]
    fn normalize_bounds_and_degenerate() {
        let scale = DensityScale {
            lo: transform_density(10.0),
            hi: transform_density(1000.0),
            mode: NormalizationMode::Relative,
            scope_id: "01001".into(),
        };
        assert_eq!(normalize(10.0, &scale), 0.0);
        assert_eq!(normalize(1000.0, &scale), 1.0);
        assert_eq!(normalize(1e9, &scale), 1.0);
        assert_eq!(normalize(0.0, &scale), 0.0);
        let flat = DensityScale {
            lo: transform_density(100.0),
            hi: transform_density(100.0),
            ..scale
        };
        assert_eq!(normalize(100.0, &flat), 0.5);
    }

    #[test]
    fn names_parse() {
        for s in ColorScheme::ALL {
            assert_eq!(s.as_str().parse::<ColorScheme>().unwrap(), s);
        }
        assert_eq!("JET".parse::<ColorScheme>().unwrap(), ColorScheme::Jet);
        assert!("viridis".parse::<ColorScheme>().is_err());
        assert_eq!("absolute".parse::<NormalizationMode>().unwrap(), NormalizationMode::Absolute);
    }

    fn decode(hex: &str) -> (u8, f64, f64, f64) {
        let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).unwrap();
        (byte(0), byte(6) as f64 / 255.0, byte(4) as f64 / 255.0, byte(2) as f64 / 255.0)
    }

    proptest! {
        #[test]
        fn colors_stay_in_unit_cube(u in 0.0..=1.0f64) {
            for s in ColorScheme::ALL {
                let c = map_color(s, u).unwrap();
                for v in [c.r, c.g, c.b] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        #[test]
        fn hex_decodes_within_one_step(r in 0.0..=1.0f64, g in 0.0..=1.0f64, b in 0.0..=1.0f64, a in any::<u8>()) {
            let hex = rgb_to_kml_hex(Rgb::clamped(r, g, b), a);
            prop_assert_eq!(hex.len(), 8);
            prop_assert_eq!(hex.to_lowercase(), hex.clone());
            let (da, dr, dg, db) = decode(&hex);
            prop_assert_eq!(da, a);
            prop_assert!((dr - r).abs() <= 1.0 / 255.0);
            prop_assert!((dg - g).abs() <= 1.0 / 255.0);
            prop_assert!((db - b).abs() <= 1.0 / 255.0);
        }

        #[test]
        fn normalize_monotone(d1 in 0.0..1e6f64, d2 in 0.0..1e6f64, lo in 0.0..100.0f64, span in 0.0..1e5f64) {
            let scale = DensityScale {
                lo: transform_density(lo),
                hi: transform_density(lo + span),
                mode: NormalizationMode::Absolute,
                scope_id: "US".into(),
            };
            let (a, b) = (d1.min(d2), d1.max(d2));
            prop_assert!(normalize(a, &scale) <= normalize(b, &scale));
        }

        #[test]
        fn blend_warmth_monotone(u1 in 0.0..=1.0f64, u2 in 0.0..=1.0f64) {
            let (lo, hi) = (u1.min(u2), u1.max(u2));
            for s in [ColorScheme::RedBlue, ColorScheme::GreenRed, ColorScheme::GreenRedDull] {
                let a = map_color(s, lo).unwrap();
                let b = map_color(s, hi).unwrap();
                prop_assert!(a.r - a.b <= b.r - b.b + 1e-12);
            }
        }
    }

    #[test]
    fn jet_warmth_monotone_between_plateaus() {
        // Jet's red-minus-blue rises on [1/8, 7/8] and dips at both dark tails.
        let steps = 1000;
        let w = |u: f64| {
            let c = map_color(ColorScheme::Jet, u).unwrap();
            c.r - c.b
        };
        for i in 0..steps {
            let a = 0.125 + 0.75 * i as f64 / steps as f64;
            let b = 0.125 + 0.75 * (i + 1) as f64 / steps as f64;
            assert!(w(a) <= w(b) + 1e-12);
        }
        assert!(w(0.0) > w(0.125));
        assert!(w(1.0) < w(0.875));
    }
}
