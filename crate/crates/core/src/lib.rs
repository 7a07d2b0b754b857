//! Numerical toolkit for Littlewood–Paley g*-square functions against
//! non-doubling atomic measures: kernels and quadrature, random dyadic grids,
//! Whitney and Calderón–Zygmund decompositions, b-adapted martingales, Tb
//! testing harnesses and an RBMO oscillation functional.

pub mod cli;
pub mod czdecomp;
pub mod dyadic;
pub mod error;
pub mod geometry;
pub mod glstar;
pub mod io;
pub mod kernels;
pub mod measure;
pub mod rbmo;
pub mod tbmart;
pub mod whitney;

pub use error::{Error, Result};
pub use geometry::{Cube, Point};
pub use kernels::KernelSpec;
pub use measure::{AtomicMeasure, ComplexMeasure, SampledFunction};
