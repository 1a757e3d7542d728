//! Flat `key = value` configuration shared by the CLI subcommands.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Lists are comma-separated. Later assignments win, so command
//! line overrides are applied after the file.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::bench::DEFAULT_DMAX_FRACTION;
use crate::boundary::Connectivity;
use crate::net::{Architecture, TrainConfig};
use crate::synth::{ShapeKind, SynthSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub train: TrainConfig,
    pub arch: Architecture,
    pub connectivity: Connectivity,
    /// Matching radius as a fraction of the image diagonal.
    pub d_max_fraction: f64,
    pub n_thresholds: usize,
    /// Scene template; each scene gets its own seed derived from `seed`.
    pub synth: SynthSpec,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            arch: Architecture::default(),
            connectivity: Connectivity::Four,
            d_max_fraction: DEFAULT_DMAX_FRACTION,
            n_thresholds: 99,
            synth: SynthSpec::default(),
            n_train: 200,
            n_val: 25,
            n_test: 50,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl Config {
    /// Applies one assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.train.seed = parse(key, v)?,
            "beta" => self.train.beta = parse(key, v)?,
            "scales" => {
                self.train.scales = parse_list(key, v)?;
                self.arch.scales = self.train.scales.clone();
            }
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "weight_decay" => self.train.weight_decay = parse(key, v)?,
            "greedy_iterations" => self.train.greedy_iterations = parse(key, v)?,
            "scale_iterations" => self.train.scale_iterations = parse(key, v)?,
            "multiscale_iterations" => self.train.multiscale_iterations = parse(key, v)?,
            "widths" => self.arch.widths = parse_list(key, v)?,
            "convs_per_stage" => self.arch.convs_per_stage = parse(key, v)?,
            "kernel" => self.arch.kernel = parse(key, v)?,
            "connectivity" => self.connectivity = parse(key, v)?,
            "d_max_fraction" => self.d_max_fraction = parse(key, v)?,
            "n_thresholds" => self.n_thresholds = parse(key, v)?,
            "n_train" => self.n_train = parse(key, v)?,
            "n_val" => self.n_val = parse(key, v)?,
            "n_test" => self.n_test = parse(key, v)?,
            "width" => self.synth.width = parse(key, v)?,
            "height" => self.synth.height = parse(key, v)?,
            "n_shapes" => self.synth.n_shapes = parse(key, v)?,
            "n_categories" => self.synth.n_categories = parse(key, v)?,
            "shape_kinds" => {
                self.synth.kinds = v
                    .split(',')
                    .map(|k| match k.trim() {
                        "ellipse" => Ok(ShapeKind::Ellipse),
                        "polygon" => Ok(ShapeKind::Polygon),
                        other => Err(Error::Config(format!("unknown shape kind `{other}`"))),
                    })
                    .collect::<Result<_>>()?
            }
            "min_size" => self.synth.min_size = parse(key, v)?,
            "max_size" => self.synth.max_size = parse(key, v)?,
            "noise" => self.synth.noise = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` string, as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got `{pair}`")))?;
        self.set(k, v)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.arch.validate()?;
        self.synth.validate()?;
        if self.arch.scales != self.train.scales {
            return Err(Error::Config("architecture and training scales differ".into()));
        }
        if !(self.d_max_fraction > 0.0 && self.d_max_fraction.is_finite()) {
            return Err(Error::Config("d_max_fraction must be positive".into()));
        }
        if self.n_thresholds == 0 {
            return Err(Error::Config("n_thresholds must be at least 1".into()));
        }
        Ok(())
    }

    /// Every key with its current value, in a form [`Config::apply_text`]
    /// reads back.
    pub fn dump(&self) -> String {
        let t = &self.train;
        let s = &self.synth;
        let kinds: Vec<&str> = s
            .kinds
            .iter()
            .map(|k| match k {
                ShapeKind::Ellipse => "ellipse",
                ShapeKind::Polygon => "polygon",
            })
            .collect();
        let conn = match self.connectivity {
            Connectivity::Four => "four",
            Connectivity::Eight => "eight",
        };
        let mut out = String::new();
        let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to a String");
        line("seed", t.seed.to_string());
        line("beta", t.beta.to_string());
        line("scales", join(&t.scales));
        line("batch_size", t.batch_size.to_string());
        line("learning_rate", t.learning_rate.to_string());
        line("weight_decay", t.weight_decay.to_string());
        line("greedy_iterations", t.greedy_iterations.to_string());
        line("scale_iterations", t.scale_iterations.to_string());
        line("multiscale_iterations", t.multiscale_iterations.to_string());
        line("widths", join(&self.arch.widths));
        line("convs_per_stage", self.arch.convs_per_stage.to_string());
        line("kernel", self.arch.kernel.to_string());
        line("connectivity", conn.to_string());
        line("d_max_fraction", self.d_max_fraction.to_string());
        line("n_thresholds", self.n_thresholds.to_string());
        line("n_train", self.n_train.to_string());
        line("n_val", self.n_val.to_string());
        line("n_test", self.n_test.to_string());
        line("width", s.width.to_string());
        line("height", s.height.to_string());
        line("n_shapes", s.n_shapes.to_string());
        line("n_categories", s.n_categories.to_string());
        line("shape_kinds", kinds.join(","));
        line("min_size", s.min_size.to_string());
        line("max_size", s.max_size.to_string());
        line("noise", s.noise.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips() {
        let mut c = Config::default();
        c.set_pair("scales=1,0.5").unwrap();
        c.set_pair("connectivity=eight").unwrap();
        c.set_pair("shape_kinds=polygon").unwrap();
        let mut back = Config::default();
        back.apply_text(&c.dump()).unwrap();
        assert_eq!(back, c);
        assert_eq!(Config::default().dump().lines().count(), 26);
    }

    #[test]
    fn later_values_override_and_errors_name_the_line() {
        let mut c = Config::default();
        c.apply_text("# comment\nbeta = 0.7\n\nbeta=0.8\n").unwrap();
        assert_eq!(c.train.beta, 0.8);
        let err = c.apply_text("beta = 0.5\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(c.set("batch_size", "many").is_err());
        assert!(c.set_pair("novalue").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = Config::default();
        assert!(c.validate().is_ok());
        c.set("beta", "1").unwrap();
        assert!(c.validate().is_err());
        let mut c = Config::default();
        c.set("scales", "0.8,0.5").unwrap();
        assert!(c.validate().is_err());
    }
}
