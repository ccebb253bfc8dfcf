//! Experiment configuration: the flat JSON schema consumed by `qtdg run`
//! and the penalty-selection rules shared by all verbs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Deserialize;

/// What went wrong, split by which exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: unreadable config, unknown problem, inconsistent options.
    Config(String),
    /// The pipeline itself failed; `stage` names the step that broke.
    Numerical { stage: &'static str, message: String },
}

impl CliError {
    pub fn stage(&self) -> &str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical { stage, .. } => stage,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Numerical { message, .. } => write!(f, "{message}"),
        }
    }
}

impl std::error::Error for CliError {}

/// One convergence experiment: a problem, a discrete space, and the
/// degree/level grid to sweep. Deserialized from a flat JSON object.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in problem name (`qtdg convergence --help` lists them).
    pub problem: String,
    /// Scale parameter for the singularly perturbed problems; must be
    /// omitted for problems that do not take one.
    #[serde(default)]
    pub nu: Option<f64>,
    /// "qt" or "full".
    pub space: String,
    /// Polynomial degrees to run, one block of rows per degree.
    pub degrees: Vec<u32>,
    /// Elements per axis for each refinement level; strictly increasing.
    pub levels: Vec<usize>,
    /// Symmetrization switch: -1 (SIPG), 0 (IIPG), +1 (NIPG).
    pub epsilon: f64,
    /// Penalty rule: a number, "8p2", or a {"degree": gamma} table.
    pub gamma: GammaRule,
    /// Override the volume/facet quadrature point count per axis.
    #[serde(default)]
    pub quad_points: Option<usize>,
    /// Directory the results CSV is written into.
    pub out: PathBuf,
}

/// How the jump penalty is chosen for each degree.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum GammaRule {
    Fixed(f64),
    /// Only "8p2" (alias "eight_p_squared") is recognized.
    Named(String),
    Table(BTreeMap<String, f64>),
}

impl GammaRule {
    /// Parse a CLI flag value: a literal number or the rule name.
    pub fn parse_flag(s: &str) -> Result<Self, CliError> {
        if s == "8p2" || s == "eight_p_squared" {
            return Ok(GammaRule::Named(s.to_string()));
        }
        s.parse::<f64>()
            .map(GammaRule::Fixed)
            .map_err(|_| CliError::Config(format!("gamma must be a number or \"8p2\", got {s:?}")))
    }

    /// Resolve the penalty for degree `p`.
    pub fn value_for(&self, p: u32) -> Result<f64, CliError> {
        match self {
            GammaRule::Fixed(x) => {
                if x.is_finite() {
                    Ok(*x)
                } else {
                    Err(CliError::Config(format!("gamma must be finite, got {x}")))
                }
            }
            GammaRule::Named(name) => match name.as_str() {
                "8p2" | "eight_p_squared" => Ok(8.0 * f64::from(p) * f64::from(p)),
                other => Err(CliError::Config(format!(
                    "unknown gamma rule {other:?}; expected a number, \"8p2\", or a degree table"
                ))),
            },
            GammaRule::Table(map) => map.get(&p.to_string()).copied().ok_or_else(|| {
                CliError::Config(format!("gamma table has no entry for degree {p}"))
            }),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks that serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        if qtdg::SpaceKind::parse(&self.space).is_none() {
            return Err(CliError::Config(format!(
                "space must be \"qt\" or \"full\", got {:?}",
                self.space
            )));
        }
        if self.degrees.is_empty() {
            return Err(CliError::Config("degrees must not be empty".into()));
        }
        if self.levels.is_empty() {
            return Err(CliError::Config("levels must not be empty".into()));
        }
        if self.levels.iter().any(|&n| n == 0) {
            return Err(CliError::Config("levels must be positive".into()));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config(format!(
                "levels must be strictly increasing, got {:?}",
                self.levels
            )));
        }
        if !self.epsilon.is_finite() {
            return Err(CliError::Config(format!(
                "epsilon must be finite, got {}",
                self.epsilon
            )));
        }
        // Every degree must resolve so a bad table fails before any solve.
        for &p in &self.degrees {
            self.gamma.value_for(p)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_rule_accepts_all_three_forms() {
        let fixed: GammaRule = serde_json::from_str("32.0").unwrap();
        assert_eq!(fixed.value_for(5).unwrap(), 32.0);

        let named: GammaRule = serde_json::from_str("\"8p2\"").unwrap();
        assert_eq!(named.value_for(3).unwrap(), 72.0);

        let table: GammaRule = serde_json::from_str("{\"2\": 32.0, \"3\": 72.0}").unwrap();
        assert_eq!(table.value_for(2).unwrap(), 32.0);
        assert!(table.value_for(4).is_err());
    }

    #[test]
    fn flag_parsing_rejects_garbage() {
        assert!(GammaRule::parse_flag("1e-2").is_ok());
        assert!(GammaRule::parse_flag("8p2").is_ok());
        assert!(GammaRule::parse_flag("eight").is_err());
    }

    #[test]
    fn validation_catches_unsorted_levels() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"problem": "poly_reaction", "space": "qt", "degrees": [2],
                "levels": [8, 4], "epsilon": -1.0, "gamma": 32.0, "out": "x"}"#,
        )
        .unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("strictly increasing"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let r: Result<ExperimentConfig, _> = serde_json::from_str(
            r#"{"problem": "poly_reaction", "space": "qt", "degrees": [2],
                "levels": [4], "epsilon": -1.0, "gamma": 32.0, "out": "x",
                "typo_field": 1}"#,
        );
        assert!(r.is_err());
    }
}
