//! JSON model and run-configuration files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use metilt::{Grid, LambdaSpec, MEParams, TestFunction};

use crate::error::CliError;

/// On-disk form of `(alpha, T, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub alpha: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
    pub s: Vec<f64>,
}

impl ModelFile {
    pub fn from_params(params: &MEParams, name: Option<String>) -> Self {
        let p = params.dim();
        Self {
            name,
            alpha: params.alpha().iter().copied().collect(),
            t: (0..p)
                .map(|i| (0..p).map(|j| params.t()[(i, j)]).collect())
                .collect(),
            s: params.s().iter().copied().collect(),
        }
    }

    pub fn to_params(&self) -> Result<MEParams, CliError> {
        let p = self.alpha.len();
        if p == 0 {
            return Err(CliError::Parse(
                "model: \"alpha\" must have at least one entry".into(),
            ));
        }
        if self.t.len() != p {
            return Err(CliError::Parse(format!(
                "model: \"T\" has {} rows, expected {p} (length of \"alpha\")",
                self.t.len()
            )));
        }
        if let Some((i, row)) = self.t.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(CliError::Parse(format!(
                "model: \"T\"[{i}] has {} entries, expected {p}",
                row.len()
            )));
        }
        if self.s.len() != p {
            return Err(CliError::Parse(format!(
                "model: \"s\" has {} entries, expected {p}",
                self.s.len()
            )));
        }
        MEParams::from_rows(&self.alpha, &self.t, &self.s)
            .map_err(|e| CliError::Parse(format!("model: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

pub fn parse_model(text: &str, origin: &str) -> Result<MEParams, CliError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| CliError::Parse(format!("{origin}: {e}")))?;
    file.to_params()
}

pub fn load_model(path: &Path) -> Result<MEParams, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    parse_model(&text, &path.display().to_string())
}

/// Tilting rate in a config: a number or the string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaField {
    Value(f64),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl Default for LambdaField {
    fn default() -> Self {
        LambdaField::Keyword(AutoKeyword::Auto)
    }
}

impl LambdaField {
    pub fn spec(self) -> LambdaSpec {
        match self {
            LambdaField::Value(v) => LambdaSpec::Value(v),
            LambdaField::Keyword(AutoKeyword::Auto) => LambdaSpec::auto(),
        }
    }
}

impl std::str::FromStr for LambdaField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LambdaField::Keyword(AutoKeyword::Auto));
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(LambdaField::Value)
            .ok_or_else(|| format!("expected a real number or \"auto\", got {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_bins: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 4.0,
            n_bins: 40,
        }
    }
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.x_min, self.x_max, self.n_bins).map_err(|e| CliError::Usage(e.to_string()))
    }
}

impl std::str::FromStr for GridSpec {
    type Err = String;

    /// `min:max:bins`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || format!("expected min:max:bins, got {s:?}");
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Self {
            x_min: parts[0].parse().map_err(|_| bad())?,
            x_max: parts[1].parse().map_err(|_| bad())?,
            n_bins: parts[2].parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    Beta,
    Qbar,
    Both,
}

impl EstimatorChoice {
    pub fn beta(self) -> bool {
        matches!(self, EstimatorChoice::Beta | EstimatorChoice::Both)
    }

    pub fn qbar(self) -> bool {
        matches!(self, EstimatorChoice::Qbar | EstimatorChoice::Both)
    }
}

/// Structured test function `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum HSpec {
    /// `e^{-c x}`
    #[serde(rename = "exp-decay")]
    ExpDecay { c: f64 },
    /// `x^k e^{-c x}`
    #[serde(rename = "poly-exp-decay")]
    PolyExpDecay { k: u32, c: f64 },
}

impl HSpec {
    pub fn function(self) -> TestFunction {
        match self {
            HSpec::ExpDecay { c } => TestFunction::ExpDecay { c },
            HSpec::PolyExpDecay { k, c } => TestFunction::PolyExpDecay { k, c },
        }
    }
}

impl std::fmt::Display for HSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HSpec::ExpDecay { c } => write!(f, "exp-decay(c={c})"),
            HSpec::PolyExpDecay { k, c } => write!(f, "poly-exp-decay(k={k}, c={c})"),
        }
    }
}

impl std::str::FromStr for HSpec {
    type Err = String;

    /// `exp-decay:C` or `poly-exp-decay:K:C`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || format!("expected exp-decay:C or poly-exp-decay:K:C, got {s:?}");
        match parts.as_slice() {
            ["exp-decay", c] => Ok(HSpec::ExpDecay {
                c: c.parse().map_err(|_| bad())?,
            }),
            ["poly-exp-decay", k, c] => Ok(HSpec::PolyExpDecay {
                k: k.parse().map_err(|_| bad())?,
                c: c.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

pub const DEFAULT_PATHS: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CHUNK: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lambda: LambdaField,
    pub n_paths: usize,
    pub seed: u64,
    pub chunk: usize,
    pub grid: GridSpec,
    pub estimator: EstimatorChoice,
    pub h: Option<HSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lambda: LambdaField::default(),
            n_paths: DEFAULT_PATHS,
            seed: DEFAULT_SEED,
            chunk: DEFAULT_CHUNK,
            grid: GridSpec::default(),
            estimator: EstimatorChoice::Both,
            h: None,
        }
    }
}

impl RunConfig {
    pub fn check(&self) -> Result<(), CliError> {
        if self.n_paths == 0 {
            return Err(CliError::Usage("n_paths must be positive".into()));
        }
        if self.chunk == 0 {
            return Err(CliError::Usage("chunk must be positive".into()));
        }
        self.grid.grid()?;
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trip_is_exact() {
        let p = metilt::example::params();
        let text = ModelFile::from_params(&p, Some("example".into())).to_json();
        let back = parse_model(&text, "mem").unwrap();
        assert_eq!(back, p);
        for (a, b) in back.t().iter().zip(p.t().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn model_errors_are_located() {
        let err = parse_model("{\"alpha\": [1], \"T\": [[-1]], \"s\": [1,", "m.json").unwrap_err();
        assert!(
            matches!(err, CliError::Parse(ref m) if m.contains("m.json") && m.contains("line"))
        );
        let err = parse_model(r#"{"alpha":[1,0],"T":[[-1,0],[0]],"s":[1,1]}"#, "m").unwrap_err();
        assert!(err.to_string().contains("\"T\"[1]"));
        let err = parse_model(r#"{"alpha":[1],"T":[[-1]],"s":[1],"extra":2}"#, "m").unwrap_err();
        assert!(err.to_string().contains("extra"));
    }

    #[test]
    fn config_parsing() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"lambda": "auto", "n_paths": 1000, "seed": 7, "chunk": 100,
                "grid": {"x_min": 0, "x_max": 2, "n_bins": 4},
                "estimator": "qbar", "h": {"type": "exp-decay", "c": 2}}"#,
        )
        .unwrap();
        assert_eq!(cfg.lambda, LambdaField::default());
        assert_eq!(cfg.estimator, EstimatorChoice::Qbar);
        assert_eq!(cfg.h, Some(HSpec::ExpDecay { c: 2.0 }));
        let cfg: RunConfig = serde_json::from_str(r#"{"lambda": 2.5}"#).unwrap();
        assert_eq!(cfg.lambda, LambdaField::Value(2.5));
        assert_eq!(cfg.n_paths, DEFAULT_PATHS);
        assert!(serde_json::from_str::<RunConfig>(r#"{"lambda": "soon"}"#).is_err());
        let zero: RunConfig = serde_json::from_str(r#"{"n_paths": 0}"#).unwrap();
        assert!(matches!(zero.check(), Err(CliError::Usage(_))));
    }

    #[test]
    fn flag_value_parsing() {
        assert_eq!(
            "auto".parse::<LambdaField>().unwrap(),
            LambdaField::default()
        );
        assert_eq!(
            "1.5".parse::<LambdaField>().unwrap(),
            LambdaField::Value(1.5)
        );
        assert!("x".parse::<LambdaField>().is_err());
        assert_eq!(
            "0:4:40".parse::<GridSpec>().unwrap(),
            GridSpec {
                x_min: 0.0,
                x_max: 4.0,
                n_bins: 40
            }
        );
        assert!("0:4".parse::<GridSpec>().is_err());
        assert_eq!(
            "poly-exp-decay:2:1.5".parse::<HSpec>().unwrap(),
            HSpec::PolyExpDecay { k: 2, c: 1.5 }
        );
    }
}
