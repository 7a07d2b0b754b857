use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use super::Experiment;
use crate::geometry::{Cube, Point};
use crate::glstar::OperatorParams;
use crate::io::{FunctionDoc, MeasureDoc, Scalar};
use crate::kernels::KernelSpec;
use crate::measure::{AtomicMeasure, ComplexMeasure, SampledFunction};

#[derive(Debug)]
pub struct ConfigError {
    pub file: PathBuf,
    pub line: Option<usize>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.file.display(), l, self.msg),
            None => write!(f, "{}: {}", self.file.display(), self.msg),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum MeasureRef {
    Path(String),
    Uniform { uniform: UniformSpec },
    Inline(MeasureDoc),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformSpec {
    pub dim: usize,
    /// atoms per axis
    pub k: usize,
    #[serde(default = "one")]
    pub mass: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum FunctionRef {
    Path(String),
    Constant { constant: Scalar },
    Inline(FunctionDoc),
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub name: Option<String>,
    pub m: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeSpec {
    pub center: Vec<f64>,
    pub side: f64,
}

impl CubeSpec {
    pub fn cube(&self) -> crate::Result<Cube> {
        Cube::new(Point(self.center.clone()), self.side)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    /// μ (σ for the Tb experiments)
    pub measure: Option<MeasureRef>,
    /// ν; defaults to f dμ or μ itself
    pub source: Option<MeasureRef>,
    pub function: Option<FunctionRef>,
    pub b: Option<FunctionRef>,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub params: OperatorParams,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub settings: Value,
}

pub struct Loaded {
    pub cfg: ExperimentConfig,
    pub text: String,
    pub path: PathBuf,
    pub base: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: path.to_path_buf(),
            line: None,
            msg: format!("cannot read config: {e}"),
        })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| ConfigError {
            file: path.to_path_buf(),
            line: Some(e.line()),
            msg: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Loaded { cfg, text, path: path.to_path_buf(), base })
    }

    /// First line mentioning `"key"`.
    pub fn line_of(&self, key: &str) -> Option<usize> {
        let pat = format!("\"{key}\"");
        self.text.lines().position(|l| l.contains(&pat)).map(|i| i + 1)
    }

    pub fn error_at(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError { file: self.path.clone(), line: self.line_of(key), msg: format!("{key}: {}", msg.into()) }
    }

    pub fn settings<T: DeserializeOwned + Default>(&self) -> Result<T, ConfigError> {
        if self.cfg.settings.is_null() {
            return Ok(T::default());
        }
        serde_json::from_value(self.cfg.settings.clone()).map_err(|e| self.error_at("settings", e.to_string()))
    }

    fn resolve(&self, p: &str) -> PathBuf {
        self.base.join(p)
    }

    fn measure_doc(&self, key: &str, r: &MeasureRef) -> Result<MeasureDoc, ConfigError> {
        match r {
            MeasureRef::Path(p) => {
                let path = self.resolve(p);
                crate::io::read_measure_doc(&path).map_err(|e| self.error_at(key, format!("{}: {e}", path.display())))
            }
            MeasureRef::Uniform { uniform } => {
                if uniform.dim == 0 || uniform.k == 0 || !(uniform.mass > 0.0) {
                    return Err(self.error_at(key, "uniform grid needs dim, k >= 1 and positive mass"));
                }
                Ok(MeasureDoc::from_positive(&AtomicMeasure::uniform_grid(uniform.dim, uniform.k, uniform.mass)))
            }
            MeasureRef::Inline(d) => Ok(d.clone()),
        }
    }

    pub fn mu(&self) -> Result<AtomicMeasure, ConfigError> {
        let r = self.cfg.measure.as_ref().ok_or_else(|| self.error_at("measure", "missing"))?;
        self.measure_doc("measure", r)?.to_positive().map_err(|e| self.error_at("measure", e.to_string()))
    }

    pub fn function_or(&self, key: &str, mu: &AtomicMeasure, fallback: Complex64) -> Result<SampledFunction, ConfigError> {
        let r = if key == "b" { &self.cfg.b } else { &self.cfg.function };
        let f = match r {
            None => SampledFunction::constant(mu.len(), fallback),
            Some(FunctionRef::Constant { constant }) => SampledFunction::constant(mu.len(), constant.value()),
            Some(FunctionRef::Inline(d)) => d.to_function(),
            Some(FunctionRef::Path(p)) => {
                let path = self.resolve(p);
                crate::io::read_function(&path).map_err(|e| self.error_at(key, format!("{}: {e}", path.display())))?
            }
        };
        f.check(mu).map_err(|e| self.error_at(key, e.to_string()))?;
        Ok(f)
    }

    /// ν from `source`, else f dμ when a function is given, else μ.
    pub fn nu(&self, mu: &AtomicMeasure) -> Result<ComplexMeasure, ConfigError> {
        if let Some(r) = &self.cfg.source {
            let nu = self.measure_doc("source", r)?.to_complex().map_err(|e| self.error_at("source", e.to_string()))?;
            if nu.dim != mu.dim() {
                return Err(self.error_at("source", "dimension differs from the measure"));
            }
            return Ok(nu);
        }
        if self.cfg.function.is_some() {
            let f = self.function_or("function", mu, Complex64::new(1.0, 0.0))?;
            return ComplexMeasure::from_density(mu, &f).map_err(|e| self.error_at("function", e.to_string()));
        }
        Ok(ComplexMeasure::from_measure(mu))
    }

    pub fn kernel(&self, dim: usize) -> Result<KernelSpec, ConfigError> {
        let k = &self.cfg.kernel;
        let name = k.name.as_deref().unwrap_or("model");
        let m = k.m.unwrap_or(dim as f64);
        let alpha = k.alpha.unwrap_or(1.0);
        KernelSpec::by_name(name, m, alpha, dim).map_err(|e| self.error_at("kernel", e.to_string()))
    }

    pub fn params(&self) -> Result<OperatorParams, ConfigError> {
        let p = self.cfg.params;
        p.validate().map_err(|e| self.error_at("params", e.to_string()))?;
        Ok(p)
    }

    pub fn points(&self, mu: &AtomicMeasure) -> Result<Vec<Point>, ConfigError> {
        match &self.cfg.points {
            None => Ok(mu.atoms().iter().map(|a| a.x.clone()).collect()),
            Some(ps) => ps
                .iter()
                .map(|p| {
                    if p.len() != mu.dim() {
                        Err(self.error_at("points", format!("point of dimension {} in a {}-dimensional run", p.len(), mu.dim())))
                    } else {
                        Point::new(p.clone()).map_err(|e| self.error_at("points", e.to_string()))
                    }
                })
                .collect(),
        }
    }
}
