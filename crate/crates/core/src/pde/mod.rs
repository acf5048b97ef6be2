//! Classical solvers and samplers that synthesize training data.

pub mod darcy;
pub mod dataset;
pub mod ic;
pub mod parabolic;

pub use darcy::{solve_darcy_2d, solve_darcy_with_forcing, DarcySolution};
pub use dataset::{build_dataset, read_dataset, split_indices, write_dataset, Dataset, Sample, Splits};
pub use ic::{sample_darcy_coefficient, sample_initial_condition_1d};
pub use parabolic::{solve_allen_cahn_1d, solve_diffusion_reaction_1d};

use crate::error::{Error, Result};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeKind {
    DiffusionReaction1d,
    AllenCahn1d,
    Darcy2d,
}

impl PdeKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "diffusion-reaction" | "diffusion_reaction" | "diffusion_reaction_1d" => Some(Self::DiffusionReaction1d),
            "allen-cahn" | "allen_cahn" | "allen_cahn_1d" => Some(Self::AllenCahn1d),
            "darcy" | "darcy_2d" => Some(Self::Darcy2d),
            _ => None,
        }
    }
}

/// Problem definition and physical constants. The defaults per kind are
/// what [`PdeSpec::new`] returns; everything is echoed into dataset
/// metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeSpec {
    pub kind: PdeKind,
    /// Points per axis.
    pub extent: usize,
    /// Final time (parabolic kinds).
    pub t_final: f64,
    /// Stored snapshots including `t = 0` (parabolic kinds).
    pub time_slices: usize,
    /// Target internal step; the actual step divides each output interval
    /// evenly.
    pub dt: f64,
    pub diffusivity: f64,
    /// Reaction coefficient: `ρ` in `ρ u (1 − u)` or `ρ` in `ρ (u − u³)`.
    /// Zero switches the reaction off.
    pub reaction: f64,
    pub forcing: f64,
    pub permeability_high: f64,
    pub permeability_low: f64,
    pub length_scale: f64,
    /// Fourier modes in the random initial conditions.
    pub ic_modes: usize,
}

impl PdeSpec {
    pub fn new(kind: PdeKind, extent: usize) -> Self {
        let base = Self {
            kind,
            extent,
            t_final: 1.0,
            time_slices: 11,
            dt: 1e-4,
            diffusivity: 0.5,
            reaction: 1.0,
            forcing: 1.0,
            permeability_high: 12.0,
            permeability_low: 3.0,
            length_scale: 0.2,
            ic_modes: 5,
        };
        match kind {
            PdeKind::DiffusionReaction1d => base,
            PdeKind::AllenCahn1d => Self {
                diffusivity: 1e-4,
                reaction: 5.0,
                ..base
            },
            PdeKind::Darcy2d => Self {
                time_slices: 1,
                ..base
            },
        }
    }

    /// Diffusion–reaction lives on the periodic unit interval, Allen–Cahn on
    /// `[-1, 1]`, Darcy on the unit square.
    pub fn grid(&self) -> Result<Grid> {
        match self.kind {
            PdeKind::DiffusionReaction1d => Grid::periodic_line(self.extent, 0.0, 1.0),
            PdeKind::AllenCahn1d => Grid::line(self.extent, -1.0, 1.0),
            PdeKind::Darcy2d => Grid::square(self.extent, 0.0, 1.0),
        }
    }

    pub fn in_channels(&self) -> usize {
        1
    }

    /// Time slices of a parabolic solution are output channels.
    pub fn out_channels(&self) -> usize {
        match self.kind {
            PdeKind::Darcy2d => 1,
            _ => self.time_slices,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let min_extent = if self.kind == PdeKind::Darcy2d { 3 } else { 4 };
        if self.extent < min_extent {
            return Err(Error::Config(format!("grid extent must be at least {min_extent}")));
        }
        if self.kind != PdeKind::Darcy2d {
            if self.time_slices < 2 {
                return Err(Error::Config("need at least two stored time slices".into()));
            }
            if !(self.t_final > 0.0) || !(self.dt > 0.0) || !(self.diffusivity >= 0.0) {
                return Err(Error::Config("t_final and dt must be positive, diffusivity non-negative".into()));
            }
        } else if !(self.permeability_low > 0.0 && self.permeability_high > 0.0 && self.length_scale > 0.0) {
            return Err(Error::Config("permeabilities and length scale must be positive".into()));
        }
        Ok(())
    }

    /// Input field and target for one sample seed, both point-major.
    pub fn generate(&self, seed: u64) -> Result<Sample> {
        let grid = self.grid()?;
        match self.kind {
            PdeKind::DiffusionReaction1d | PdeKind::AllenCahn1d => {
                let u0 = sample_initial_condition_1d(&grid, self, seed)?;
                let traj = if self.kind == PdeKind::DiffusionReaction1d {
                    solve_diffusion_reaction_1d(&u0, &grid, self)?
                } else {
                    solve_allen_cahn_1d(&u0, &grid, self)?
                };
                // time-major → point-major
                let (n, s) = (grid.len(), self.time_slices);
                let mut u = vec![0.0; n * s];
                for t in 0..s {
                    for j in 0..n {
                        u[j * s + t] = traj[t * n + j];
                    }
                }
                Ok(Sample { a: u0, u })
            }
            PdeKind::Darcy2d => {
                let a = sample_darcy_coefficient(&grid, self, seed)?;
                let u = solve_darcy_2d(&a, &grid, self)?.u;
                Ok(Sample { a, u })
            }
        }
    }
}
