use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Waypoint mission. Coordinates are `[north, east, altitude]` in meters,
/// altitude positive up, relative to the launch point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mission {
    pub waypoints: Vec<[f64; 3]>,
    pub takeoff_altitude: f64,
    pub acceptance_radius: f64,
    pub land: bool,
}

pub const DEFAULT_TAKEOFF_ALTITUDE: f64 = 10.0;
pub const DEFAULT_ACCEPTANCE_RADIUS: f64 = 2.0;

const BUILTIN_MISSION: &str = "\
# 40 m square with both diagonals flown, 10 m cruise altitude
TAKEOFF 10
WP 40 0 10
WP 40 40 12
WP 0 40 12
WP 0 0 10
WP 40 40 10
WP 0 0 10
LAND
";

impl Mission {
    pub fn new(waypoints: Vec<[f64; 3]>, takeoff_altitude: f64, acceptance_radius: f64) -> Result<Self> {
        let m = Self {
            waypoints,
            takeoff_altitude,
            acceptance_radius,
            land: true,
        };
        m.validate()?;
        Ok(m)
    }

    /// Built-in six-waypoint course used when no mission file is supplied.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_MISSION, "<builtin>").expect("built-in mission is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses `TAKEOFF alt`, `WP x y z`, `RADIUS r` and `LAND` directives.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut mission = Mission {
            waypoints: Vec::new(),
            takeoff_altitude: DEFAULT_TAKEOFF_ALTITUDE,
            acceptance_radius: DEFAULT_ACCEPTANCE_RADIUS,
            land: false,
        };
        for (i, raw) in text.lines().enumerate() {
            let row = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_string(),
                row,
                message,
            };
            let mut tokens = line.split_whitespace();
            let keyword = tokens.next().unwrap_or_default().to_ascii_uppercase();
            let args: Vec<f64> = tokens
                .map(|t| t.parse::<f64>().map_err(|e| err(format!("`{t}`: {e}"))))
                .collect::<Result<_>>()?;
            let expect = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(err(format!("{keyword} takes {n} argument(s), got {}", args.len())))
                }
            };
            match keyword.as_str() {
                "TAKEOFF" => {
                    expect(1)?;
                    mission.takeoff_altitude = args[0];
                }
                "WP" => {
                    expect(3)?;
                    mission.waypoints.push([args[0], args[1], args[2]]);
                }
                "RADIUS" => {
                    expect(1)?;
                    mission.acceptance_radius = args[0];
                }
                "LAND" => {
                    expect(0)?;
                    mission.land = true;
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        mission.validate()?;
        Ok(mission)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("TAKEOFF {}\nRADIUS {}\n", self.takeoff_altitude, self.acceptance_radius);
        for [x, y, z] in &self.waypoints {
            out.push_str(&format!("WP {x} {y} {z}\n"));
        }
        if self.land {
            out.push_str("LAND\n");
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if !(self.takeoff_altitude > 0.0) {
            return Err(Error::Precondition("takeoff altitude must be positive".into()));
        }
        if !(self.acceptance_radius > 0.0) {
            return Err(Error::Precondition("acceptance radius must be positive".into()));
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("waypoint coordinates must be finite".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_six_waypoints() {
        let m = Mission::builtin();
        assert_eq!(m.waypoints.len(), 6);
        assert_eq!(m.takeoff_altitude, 10.0);
        assert!(m.land);
    }

    #[test]
    fn parse_round_trip() {
        let m = Mission::parse("TAKEOFF 5\n# c\n\nWP 1 2 3 # trailing\nLAND\n", "m").unwrap();
        assert_eq!(m.waypoints, vec![[1.0, 2.0, 3.0]]);
        assert_eq!(Mission::parse(&m.to_text(), "m").unwrap(), m);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            Mission::parse("WP 1 2\n", "m"),
            Err(Error::Parse { row: 1, .. })
        ));
        assert!(matches!(
            Mission::parse("\nFLY 1\n", "m"),
            Err(Error::Parse { row: 2, .. })
        ));
        assert!(Mission::parse("TAKEOFF 0\n", "m").is_err());
        assert!(Mission::parse("RADIUS -1\n", "m").is_err());
    }
}
