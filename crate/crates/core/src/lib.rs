//! Non-rigid image deformation estimation with cubic B-spline free-form
//! deformation (FFD) lattices.
//!
//! The template is split spatially into groups of lattice patches, and each
//! group gets its own intensity-difference objective. The control lattice is
//! then fitted with a simple GA (one group), NSGA-II or NSGA-III, coarse to
//! fine over a Gaussian pyramid. Between levels the lattice is refined by
//! Catmull–Clark subdivision.
//!
//! Module map:
//!
//! * [`image`]: grayscale rasters, bilinear sampling, pyramids, PNG/PGM IO
//! * [`ffd`]: lattice geometry, displacement field, warping
//! * [`objectives`]: patch/group partitioning, objective evaluation
//! * [`evolution`]: genotypes, SBX and polynomial mutation, simple GA
//! * [`moea`]: dominance, sorting, crowding, reference points, NSGA-II/III
//! * [`coarse2fine`]: level planning, subdivision, population inheritance
//! * [`decision`]: best-solution selection and Pareto aggregation
//! * [`synthbench`]: synthetic wavy cases and RMSE/MEDE metrics
//! * [`cli`]: command implementations behind the `ffdreg` binary

pub mod cli;
pub mod coarse2fine;
pub mod decision;
mod error;
pub mod evolution;
pub mod ffd;
pub mod image;
pub mod moea;
pub mod objectives;
pub mod synthbench;

pub use crate::error::{Error, Result};
