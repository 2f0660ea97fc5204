//! Control-parameter universe and configuration arithmetic.
//!
//! A [`ParameterTable`] fixes the vector layout used everywhere downstream:
//! coordinate `j` of every [`Configuration`] is the value of `table.specs()[j]`.
//! Values are kept in the flight stack's own units (centidegrees, cm/s, ...).

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Normalized-space resolution used by [`ParameterTable::dedup_key`].
pub const DEDUP_DECIMALS: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Gain,
    Centidegrees,
    CmPerS,
    CmPerS2,
    Meters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleTag {
    Controller,
    Mission,
    Sensor,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Gain => "gain",
            Unit::Centidegrees => "centidegrees",
            Unit::CmPerS => "cm_per_s",
            Unit::CmPerS2 => "cm_per_s2",
            Unit::Meters => "meters",
        }
    }
}

impl FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "gain" => Unit::Gain,
            "centidegrees" => Unit::Centidegrees,
            "cm_per_s" => Unit::CmPerS,
            "cm_per_s2" => Unit::CmPerS2,
            "meters" => Unit::Meters,
            other => return Err(format!("unknown unit `{other}`")),
        })
    }
}

impl ModuleTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModuleTag::Controller => "controller",
            ModuleTag::Mission => "mission",
            ModuleTag::Sensor => "sensor",
        }
    }
}

impl FromStr for ModuleTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "controller" => ModuleTag::Controller,
            "mission" => ModuleTag::Mission,
            "sensor" => ModuleTag::Sensor,
            other => return Err(format!("unknown module tag `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub default: f64,
    pub unit: Unit,
    pub module_tag: ModuleTag,
}

impl ParameterSpec {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.lower..=self.upper).contains(&value)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) {
            return Err(Error::DegenerateRange {
                name: self.name.clone(),
                lower: self.lower,
                upper: self.upper,
            });
        }
        if !self.contains(self.default) {
            return Err(Error::DefaultOutOfRange {
                name: self.name.clone(),
                lower: self.lower,
                upper: self.upper,
                default: self.default,
            });
        }
        Ok(())
    }
}

/// One concrete value assignment, positionally aligned with a [`ParameterTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<f64>);

impl Configuration {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Rounded normalized coordinates; equal keys mean "same configuration".
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DedupKey(Vec<i64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterTable {
    specs: Vec<ParameterSpec>,
}

const CSV_HEADER: [&str; 6] = ["name", "lower", "upper", "default", "unit", "module_tag"];

/// Appendix-style table: 20 attitude/position/mission parameters plus the
/// three IMU lever-arm offsets.
pub const BUILTIN_TABLE_CSV: &str = "\
name,lower,upper,default,unit,module_tag
PSC_POSXY_P,0.50,2.00,1.0,gain,controller
PSC_VELXY_P,0.10,6.00,2.0,gain,controller
PSC_POSZ_P,1.00,3.00,1.0,gain,controller
ATC_ANG_RLL_P,0.00,12.0,4.5,gain,controller
ATC_RAT_RLL_I,0.01,2.00,0.135,gain,controller
ATC_RAT_RLL_D,0.00,0.05,0.0036,gain,controller
ATC_RAT_RLL_P,0.01,0.50,0.135,gain,controller
ATC_ANG_PIT_P,0.00,12.0,4.5,gain,controller
ATC_RAT_PIT_P,0.01,0.50,0.135,gain,controller
ATC_RAT_PIT_I,0.01,2.00,0.135,gain,controller
ATC_RAT_PIT_D,0.00,0.05,0.0036,gain,controller
ATC_ANG_YAW_P,0.00,6.00,4.5,gain,controller
ATC_RAT_YAW_P,0.10,2.50,0.18,gain,controller
ATC_RAT_YAW_I,0.01,1.00,0.018,gain,controller
ATC_RAT_YAW_D,0.00,0.02,0,gain,controller
WPNAV_SPEED,20,2000,500,cm_per_s,mission
WPNAV_SPEED_DN,10,500,150,cm_per_s,mission
WPNAV_SPEED_UP,10,1000,250,cm_per_s,mission
WPNAV_ACCEL,50,500,100,cm_per_s2,mission
ANGLE_MAX,1000,8000,4500,centidegrees,mission
INS_POS1_Z,-5.0,5.0,0.0,meters,sensor
INS_POS2_Z,-5.0,5.0,0.0,meters,sensor
INS_POS3_Z,-5.0,5.0,0.0,meters,sensor
";

#[derive(Debug, Deserialize)]
struct SpecRow {
    name: String,
    lower: f64,
    upper: f64,
    default: f64,
    unit: String,
    module_tag: String,
}

impl ParameterTable {
    pub fn new(specs: Vec<ParameterSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Empty("parameter table".into()));
        }
        let mut seen = HashSet::new();
        for spec in &specs {
            spec.validate()?;
            if !seen.insert(spec.name.as_str()) {
                return Err(Error::DuplicateParameter(spec.name.clone()));
            }
        }
        Ok(Self { specs })
    }

    pub fn builtin() -> Self {
        Self::from_csv_reader(BUILTIN_TABLE_CSV.as_bytes(), "<builtin>").expect("built-in parameter table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    pub fn from_csv_reader(reader: impl Read, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let parse_err = |row: usize, message: String| Error::Parse {
            path: origin.to_string(),
            row,
            message,
        };
        let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(parse_err(1, format!("expected header `{}`", CSV_HEADER.join(","))));
        }
        let mut specs = Vec::new();
        for (i, row) in rdr.deserialize::<SpecRow>().enumerate() {
            // header is row 1
            let row_no = i + 2;
            let row = row.map_err(|e| parse_err(row_no, e.to_string()))?;
            let unit = row.unit.parse().map_err(|e| parse_err(row_no, e))?;
            let module_tag = row.module_tag.parse().map_err(|e| parse_err(row_no, e))?;
            specs.push(ParameterSpec {
                name: row.name,
                lower: row.lower,
                upper: row.upper,
                default: row.default,
                unit,
                module_tag,
            });
        }
        Self::new(specs)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = CSV_HEADER.join(",");
        out.push('\n');
        for s in &self.specs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.name,
                s.lower,
                s.upper,
                s.default,
                s.unit.as_str(),
                s.module_tag.as_str()
            ));
        }
        out
    }

    /// SHA-256 of the canonical CSV serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_string().as_bytes()))
    }

    pub fn specs(&self) -> &[ParameterSpec] {
        &self.specs
    }

    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ParameterSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn default_configuration(&self) -> Configuration {
        Configuration(self.specs.iter().map(|s| s.default).collect())
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        Configuration(self.specs.iter().map(|s| rng.random_range(s.lower..=s.upper)).collect())
    }

    pub fn check_dim(&self, config: &Configuration) -> Result<()> {
        if config.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: config.len(),
            });
        }
        Ok(())
    }

    pub fn clip(&self, config: &Configuration) -> Configuration {
        Configuration(
            self.specs
                .iter()
                .zip(config.values())
                .map(|(s, &v)| s.clamp(v))
                .collect(),
        )
    }

    pub fn contains(&self, config: &Configuration) -> bool {
        config.len() == self.dim() && self.specs.iter().zip(config.values()).all(|(s, &v)| s.contains(v))
    }

    pub fn normalize(&self, config: &Configuration) -> Vec<f64> {
        self.specs
            .iter()
            .zip(config.values())
            .map(|(s, &v)| (v - s.lower) / s.width())
            .collect()
    }

    pub fn denormalize(&self, unit: &[f64]) -> Configuration {
        Configuration(
            self.specs
                .iter()
                .zip(unit)
                .map(|(s, &u)| s.lower + u * s.width())
                .collect(),
        )
    }

    pub fn dedup_key(&self, config: &Configuration) -> DedupKey {
        dedup_key_normalized(&self.normalize(config))
    }

    /// Replaces the named coordinate, returning an error for unknown names.
    pub fn with_value(&self, config: &Configuration, name: &str, value: f64) -> Result<Configuration> {
        let idx = self
            .index_of(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        let mut out = config.clone();
        out.0[idx] = value;
        Ok(out)
    }

    /// Value of `name` in `config`, or `fallback` when the table lacks it.
    pub fn value_or(&self, config: &Configuration, name: &str, fallback: f64) -> f64 {
        self.index_of(name).map_or(fallback, |i| config.0[i])
    }

    pub fn write_configuration(&self, config: &Configuration, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.configuration_to_csv(config)).map_err(|e| Error::io(path, e))
    }

    pub fn configuration_to_csv(&self, config: &Configuration) -> String {
        let header: Vec<&str> = self.names().collect();
        let values: Vec<String> = config.values().iter().map(|v| v.to_string()).collect();
        format!("{}\n{}\n", header.join(","), values.join(","))
    }

    pub fn read_configuration(&self, path: impl AsRef<Path>) -> Result<Configuration> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.parse_configuration(&text, &path.display().to_string())
    }

    /// Parses a two-line CSV (names, values). Columns may appear in any order
    /// but every table parameter must be present exactly once.
    pub fn parse_configuration(&self, text: &str, origin: &str) -> Result<Configuration> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let parse_err = |row: usize, message: String| Error::Parse {
            path: origin.to_string(),
            row,
            message,
        };
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let record = rdr
            .records()
            .next()
            .ok_or_else(|| parse_err(2, "missing value row".into()))?
            .map_err(|e| parse_err(2, e.to_string()))?;
        let mut values = vec![f64::NAN; self.dim()];
        let mut seen = vec![false; self.dim()];
        for (name, field) in header.iter().zip(record.iter()) {
            let idx = self
                .index_of(name)
                .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            if seen[idx] {
                return Err(Error::DuplicateParameter(name.clone()));
            }
            seen[idx] = true;
            values[idx] = field.parse().map_err(|e| parse_err(2, format!("{name}: {e}")))?;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(parse_err(
                2,
                format!("missing parameter `{}`", self.specs[missing].name),
            ));
        }
        Ok(Configuration(values))
    }
}

pub fn dedup_key_normalized(unit: &[f64]) -> DedupKey {
    let scale = 10f64.powi(DEDUP_DECIMALS);
    DedupKey(unit.iter().map(|u| (u * scale).round() as i64).collect())
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v:.4}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn one_param() -> ParameterTable {
        ParameterTable::new(vec![ParameterSpec {
            name: "X".into(),
            lower: 0.0,
            upper: 1.0,
            default: 0.5,
            unit: Unit::Gain,
            module_tag: ModuleTag::Controller,
        }])
        .unwrap()
    }

    #[test]
    fn builtin_rows_match_manufacturer_table() {
        let t = ParameterTable::builtin();
        assert_eq!(t.dim(), 23);
        let roll = t.get("ATC_ANG_RLL_P").unwrap();
        assert_eq!((roll.lower, roll.upper, roll.default), (0.0, 12.0, 4.5));
        let angle = t.get("ANGLE_MAX").unwrap();
        assert_eq!((angle.lower, angle.upper, angle.default), (1000.0, 8000.0, 4500.0));
        assert_eq!(angle.unit, Unit::Centidegrees);
        assert_eq!(angle.module_tag, ModuleTag::Mission);
        let posz = t.get("PSC_POSZ_P").unwrap();
        assert_eq!((posz.lower, posz.upper), (1.0, 3.0));
        assert_eq!(t.get("INS_POS1_Z").unwrap().default, 0.0);
    }

    #[test]
    fn load_single_rows() {
        let csv = "name,lower,upper,default,unit,module_tag\n\
                   ATC_ANG_RLL_P,0.00,12.0,4.5,gain,controller\n\
                   ANGLE_MAX,1000,8000,4500,centidegrees,mission\n";
        let t = ParameterTable::from_csv_reader(csv.as_bytes(), "t").unwrap();
        assert_eq!(t.specs()[0].default, 4.5);
        assert_eq!(t.specs()[1].default, 4500.0);
        assert_eq!(t.names().collect::<Vec<_>>(), ["ATC_ANG_RLL_P", "ANGLE_MAX"]);
    }

    #[test]
    fn load_rejects_bad_rows() {
        let degenerate = "name,lower,upper,default,unit,module_tag\nA,1,1,1,gain,controller\n";
        assert!(matches!(
            ParameterTable::from_csv_reader(degenerate.as_bytes(), "t"),
            Err(Error::DegenerateRange { .. })
        ));

        let dup = "name,lower,upper,default,unit,module_tag\n\
                   A,0,1,0.5,gain,controller\nA,0,2,1,gain,controller\n";
        assert!(matches!(
            ParameterTable::from_csv_reader(dup.as_bytes(), "t"),
            Err(Error::DuplicateParameter(n)) if n == "A"
        ));

        let bad = "name,lower,upper,default,unit,module_tag\n\
                   A,0,1,0.5,gain,controller\nB,zero,1,0.5,gain,controller\n";
        match ParameterTable::from_csv_reader(bad.as_bytes(), "t") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }

        let unit = "name,lower,upper,default,unit,module_tag\nA,0,1,0.5,furlongs,controller\n";
        assert!(matches!(
            ParameterTable::from_csv_reader(unit.as_bytes(), "t"),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn defaults() {
        let t = ParameterTable::builtin();
        let d = t.default_configuration();
        assert_eq!(d.values()[t.index_of("ATC_ANG_RLL_P").unwrap()], 4.5);
        assert_eq!(d, t.default_configuration());
        assert_eq!(one_param().default_configuration().values(), &[0.5]);
    }

    #[test]
    fn uniform_sampling() {
        let t = one_param();
        let a = t.sample_uniform(&mut rng::stream(3, &[]));
        let b = t.sample_uniform(&mut rng::stream(3, &[]));
        assert_eq!(a, b);

        let mut r = rng::stream(11, &[]);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let c = t.sample_uniform(&mut r);
            assert_eq!(t.clip(&c), c);
            sum += c.values()[0];
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn clipping() {
        let t = ParameterTable::builtin();
        let i = t.index_of("ATC_ANG_RLL_P").unwrap();
        let c = t.with_value(&t.default_configuration(), "ATC_ANG_RLL_P", 13.0).unwrap();
        assert_eq!(t.clip(&c).values()[i], 12.0);
        let d = t.default_configuration();
        assert_eq!(t.clip(&d), d);
        assert_eq!(one_param().clip(&Configuration(vec![-1.0])).values(), &[0.0]);
    }

    #[test]
    fn normalization_endpoints() {
        let t = ParameterTable::builtin();
        let i = t.index_of("ANGLE_MAX").unwrap();
        let n = t.normalize(&t.default_configuration());
        assert_eq!(n[i], 0.5);
        let lo = Configuration(t.specs().iter().map(|s| s.lower).collect());
        let hi = Configuration(t.specs().iter().map(|s| s.upper).collect());
        assert!(t.normalize(&lo).iter().all(|&u| u == 0.0));
        assert!(t.normalize(&hi).iter().all(|&u| u == 1.0));
    }

    #[test]
    fn dedup_resolution() {
        let t = ParameterTable::builtin();
        let base = vec![0.2; t.dim()];
        let mut near = base.clone();
        near[3] += 1e-6;
        let mut far = base.clone();
        far[3] += 0.01;
        let k = t.dedup_key(&t.denormalize(&base));
        assert_eq!(k, t.dedup_key(&t.denormalize(&near)));
        assert_ne!(k, t.dedup_key(&t.denormalize(&far)));
        let keys: HashSet<_> = (0..10).map(|_| t.dedup_key(&t.denormalize(&base))).collect();
        assert_eq!(keys.len(), 1);
    }

    #[test]
    fn configuration_file_parsing() {
        let t = ParameterTable::builtin();
        let text = "ATC_ANG_RLL_P\n1.0\n";
        assert!(t.parse_configuration(text, "c").is_err());
        let mut text = t.configuration_to_csv(&t.default_configuration());
        text = text.replace("PSC_POSXY_P", "NOPE");
        assert!(matches!(
            t.parse_configuration(&text, "c"),
            Err(Error::UnknownParameter(_))
        ));
    }

    fn table_and_config() -> impl Strategy<Value = (ParameterTable, Vec<f64>)> {
        let t = ParameterTable::builtin();
        let d = t.dim();
        (Just(t), prop::collection::vec(-1.0f64..2.0, d))
    }

    proptest! {
        #[test]
        fn normalize_round_trip((t, unit) in table_and_config()) {
            let c = t.clip(&t.denormalize(&unit));
            let back = t.denormalize(&t.normalize(&c));
            for ((a, b), s) in c.values().iter().zip(back.values()).zip(t.specs()) {
                let scale = a.abs().max(s.width());
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn clip_is_projection((t, unit) in table_and_config()) {
            let raw = t.denormalize(&unit);
            let once = t.clip(&raw);
            prop_assert_eq!(&t.clip(&once), &once);
            prop_assert_eq!(t.contains(&raw), once == raw);
        }

        #[test]
        fn configuration_csv_is_exact((t, unit) in table_and_config()) {
            let c = t.clip(&t.denormalize(&unit));
            let parsed = t.parse_configuration(&t.configuration_to_csv(&c), "c").unwrap();
            prop_assert_eq!(parsed, c);
        }
    }
}
