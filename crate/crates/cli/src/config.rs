//! Flat `key = value` configuration text. Blank lines and `#` comments are
//! skipped; every key must name an [`EvolutionConfig`] field.

use std::path::Path;

use boxseg_core::EvolutionConfig;

use crate::error::{CliError, Result};

pub const KEYS: [&str; 16] = [
    "gamma",
    "lambda1",
    "lambda2",
    "alpha",
    "mu_lcm",
    "dt",
    "dt_max",
    "max_steps",
    "k",
    "dilation",
    "eta",
    "sigma_tf",
    "tol",
    "threshold",
    "phi_bound",
    "data_on_window",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

pub fn set(config: &mut EvolutionConfig, key: &str, value: &str) -> Result<()> {
    let c = config;
    match key {
        "gamma" => c.gamma = parse(key, value)?,
        "lambda1" => c.lambda1 = parse(key, value)?,
        "lambda2" => c.lambda2 = parse(key, value)?,
        "alpha" => c.alpha = parse(key, value)?,
        "mu_lcm" => c.mu_lcm = parse(key, value)?,
        "dt" => c.dt = parse(key, value)?,
        "dt_max" => c.dt_max = parse(key, value)?,
        "max_steps" => c.max_steps = parse(key, value)?,
        "k" => c.k = parse(key, value)?,
        "dilation" => c.dilation = parse(key, value)?,
        "eta" => c.eta = parse(key, value)?,
        "sigma_tf" => c.sigma_tf = parse(key, value)?,
        "tol" => c.tol = parse(key, value)?,
        "threshold" => c.threshold = parse(key, value)?,
        "phi_bound" => c.phi_bound = parse(key, value)?,
        "data_on_window" => c.data_on_window = parse(key, value)?,
        _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
    }
    Ok(())
}

/// Apply every assignment in `text` on top of `base`.
pub fn apply_text(base: EvolutionConfig, text: &str) -> Result<EvolutionConfig> {
    let mut config = base;
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
        set(&mut config, key.trim(), value.trim()).map_err(|e| {
            CliError::Config(format!(
                "line {}: {}",
                n + 1,
                e.to_string().trim_start_matches("config: ")
            ))
        })?;
    }
    Ok(config)
}

/// `KEY=VALUE` overrides, as given on the command line.
pub fn apply_overrides(base: EvolutionConfig, overrides: &[String]) -> Result<EvolutionConfig> {
    let mut config = base;
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {o:?} is not KEY=VALUE")))?;
        set(&mut config, key.trim(), value.trim())?;
    }
    Ok(config)
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<EvolutionConfig> {
    let mut config = EvolutionConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
        config = apply_text(config, &text)?;
    }
    let config = apply_overrides(config, overrides)?;
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

pub fn snapshot(c: &EvolutionConfig) -> Vec<(&'static str, String)> {
    let values: [String; 16] = [
        c.gamma.to_string(),
        c.lambda1.to_string(),
        c.lambda2.to_string(),
        c.alpha.to_string(),
        c.mu_lcm.to_string(),
        c.dt.to_string(),
        c.dt_max.to_string(),
        c.max_steps.to_string(),
        c.k.to_string(),
        c.dilation.to_string(),
        c.eta.to_string(),
        c.sigma_tf.to_string(),
        c.tol.to_string(),
        c.threshold.to_string(),
        c.phi_bound.to_string(),
        c.data_on_window.to_string(),
    ];
    KEYS.into_iter().zip(values).collect()
}

pub fn render(c: &EvolutionConfig) -> String {
    snapshot(c).into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_then_parse_is_identity() {
        let c = EvolutionConfig {
            gamma: 0.125,
            max_steps: 17,
            data_on_window: true,
            tol: 1e-9,
            ..Default::default()
        };
        assert_eq!(apply_text(EvolutionConfig::default(), &render(&c)).unwrap(), c);
    }

    #[test]
    fn comments_blank_lines_and_overrides() {
        let text = "# weights\nlambda2 = 0   # no features\n\n k=4\n";
        let c = apply_text(EvolutionConfig::default(), text).unwrap();
        assert_eq!((c.lambda2, c.k), (0.0, 4));
        let c = apply_overrides(c, &["k=7".into()]).unwrap();
        assert_eq!(c.k, 7);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        for text in ["beta = 1", "k = -1", "gamma 3", "data_on_window = yes"] {
            let err = apply_text(EvolutionConfig::default(), text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
        assert!(apply_overrides(EvolutionConfig::default(), &["nope".into()]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "dt = 0").unwrap();
        assert_eq!(load(Some(&p), &[]).unwrap_err().exit_code(), 2);
    }
}
