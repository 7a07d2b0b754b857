//! JSON documents for measures and sampled functions.
//!
//! Measure: {"dim": n, "atoms": [{"x": [...], "w": real or [re, im]}]}.
//! Function: {"values": [real or [re, im], ...]} aligned with the atoms.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::measure::{Atom, AtomicMeasure, ComplexMeasure, SampledFunction};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Complex([f64; 2]),
}

impl Scalar {
    pub fn value(&self) -> Complex64 {
        match self {
            Scalar::Real(r) => Complex64::new(*r, 0.0),
            Scalar::Complex([a, b]) => Complex64::new(*a, *b),
        }
    }

    fn from_value(z: Complex64) -> Self {
        if z.im == 0.0 {
            Scalar::Real(z.re)
        } else {
            Scalar::Complex([z.re, z.im])
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomDoc {
    pub x: Vec<f64>,
    pub w: Scalar,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureDoc {
    pub dim: usize,
    pub atoms: Vec<AtomDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionDoc {
    pub values: Vec<Scalar>,
}

impl MeasureDoc {
    fn check_dims(&self) -> Result<()> {
        for a in &self.atoms {
            if a.x.len() != self.dim {
                return Err(Error::Dim { expected: self.dim, got: a.x.len() });
            }
        }
        Ok(())
    }

    /// Complex weights are allowed here.
    pub fn to_complex(&self) -> Result<ComplexMeasure> {
        self.check_dims()?;
        ComplexMeasure::new(
            self.dim,
            self.atoms.iter().map(|a| Point(a.x.clone())).collect(),
            self.atoms.iter().map(|a| a.w.value()).collect(),
        )
    }

    /// Weights must be real and nonnegative.
    pub fn to_positive(&self) -> Result<AtomicMeasure> {
        self.check_dims()?;
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let w = a.w.value();
            if w.im != 0.0 {
                return Err(Error::Invalid("positive measure has a complex weight".into()));
            }
            atoms.push(Atom { x: Point(a.x.clone()), w: w.re });
        }
        AtomicMeasure::new(self.dim, atoms)
    }

    pub fn from_positive(mu: &AtomicMeasure) -> Self {
        MeasureDoc {
            dim: mu.dim(),
            atoms: mu.atoms().iter().map(|a| AtomDoc { x: a.x.0.clone(), w: Scalar::Real(a.w) }).collect(),
        }
    }

    pub fn from_complex(nu: &ComplexMeasure) -> Self {
        MeasureDoc {
            dim: nu.dim,
            atoms: nu
                .points
                .iter()
                .zip(&nu.weights)
                .map(|(p, w)| AtomDoc { x: p.0.clone(), w: Scalar::from_value(*w) })
                .collect(),
        }
    }
}

impl FunctionDoc {
    pub fn to_function(&self) -> SampledFunction {
        SampledFunction::new(self.values.iter().map(Scalar::value).collect())
    }

    pub fn from_function(f: &SampledFunction) -> Self {
        FunctionDoc { values: f.values.iter().map(|z| Scalar::from_value(*z)).collect() }
    }
}

pub fn read_measure_doc(path: &Path) -> Result<MeasureDoc> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn read_measure(path: &Path) -> Result<AtomicMeasure> {
    read_measure_doc(path)?.to_positive()
}

pub fn read_complex_measure(path: &Path) -> Result<ComplexMeasure> {
    read_measure_doc(path)?.to_complex()
}

pub fn read_function(path: &Path) -> Result<SampledFunction> {
    let doc: FunctionDoc = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(doc.to_function())
}

pub fn write_measure(path: &Path, mu: &AtomicMeasure) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&MeasureDoc::from_positive(mu))?)?;
    Ok(())
}

pub fn write_complex_measure(path: &Path, nu: &ComplexMeasure) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&MeasureDoc::from_complex(nu))?)?;
    Ok(())
}

pub fn write_function(path: &Path, f: &SampledFunction) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&FunctionDoc::from_function(f))?)?;
    Ok(())
}
