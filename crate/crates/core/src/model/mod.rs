//! The SVD-NO architecture and its kernel ablations.

pub mod checkpoint;
pub mod kernel;
pub mod nets;
pub mod params;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint};
pub use kernel::{
    apply_dense_kernel, apply_factorized_kernel, apply_mercer_kernel, assemble_kernel, dense_kernel_values,
    factorized_kernel_values,
};
pub use nets::{DenseKernelNet, DenseOperator, Linear, SineMlp, SingularNet};
pub use params::{Bound, Param, ParamId, Params};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::objectives::{gram_matrix, orthogonality_loss, trapezoidal_weights, QuadratureWeights};
use crate::tensor::{Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Svd,
    Mercer,
    DenseMlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularNetKind {
    SineMlp,
    Recurrent1d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SingularNetConfig {
    pub kind: SingularNetKind,
    pub num_layers: usize,
    pub hidden_dim: usize,
}

impl Default for SingularNetConfig {
    fn default() -> Self {
        Self {
            kind: SingularNetKind::SineMlp,
            num_layers: 2,
            hidden_dim: 32,
        }
    }
}

/// Architecture hyperparameters. The kernel acts on the latent field, so the
/// basis functions live in the lifting dimension `d_v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvdNoConfig {
    pub rank: usize,
    pub lifting_dim: usize,
    pub blocks: usize,
    pub singular_net: SingularNetConfig,
    pub kernel_kind: KernelKind,
    pub shared_basis: bool,
    pub pointwise_bias: bool,
    /// Hidden width of the projection; 0 makes it a single affine map.
    pub projection_hidden: usize,
    pub dense_width: usize,
    pub dense_layers: usize,
}

impl Default for SvdNoConfig {
    fn default() -> Self {
        Self {
            rank: 3,
            lifting_dim: 16,
            blocks: 4,
            singular_net: SingularNetConfig::default(),
            kernel_kind: KernelKind::Svd,
            shared_basis: true,
            pointwise_bias: true,
            projection_hidden: 64,
            dense_width: 64,
            dense_layers: 3,
        }
    }
}

impl SvdNoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("rank must be at least 1".into()));
        }
        if self.blocks == 0 {
            return Err(Error::Config("block count must be at least 1".into()));
        }
        if self.lifting_dim == 0 {
            return Err(Error::Config("lifting_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Rows `z_j = (x_j, a(x_j))` in row-major grid order. `a` is point-major
/// with `channels` values per point.
pub fn make_augmented_coordinates(grid: &Grid, a: &[f64], channels: usize) -> Result<Tensor> {
    let n = grid.len();
    if a.len() != n * channels {
        return Err(Error::Shape(format!(
            "input has {} values, grid of {n} points with {channels} channel(s) needs {}",
            a.len(),
            n * channels
        )));
    }
    let dx = grid.dims();
    let coords = grid.coordinates();
    let width = dx + channels;
    let mut out = Vec::with_capacity(n * width);
    for j in 0..n {
        out.extend_from_slice(&coords[j * dx..(j + 1) * dx]);
        out.extend_from_slice(&a[j * channels..(j + 1) * channels]);
    }
    Tensor::new(vec![n, width], out)
}

#[derive(Clone, Debug)]
enum KernelNets {
    Svd { phi: SingularNet, psi: SingularNet },
    Mercer { phi: SingularNet },
    Dense(DenseKernelNet),
}

#[derive(Clone, Copy, Debug)]
enum KernelValues {
    Factors { phi: Var, psi: Var },
    Dense(DenseOperator),
}

#[derive(Clone, Debug)]
struct Block {
    pointwise: Linear,
    spectrum: Option<ParamId>,
}

/// Output of one differentiable forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    /// `[n, out_channels]`
    pub output: Var,
    /// Orthogonality penalty summed over every basis set; absent for the
    /// dense kernel.
    pub ortho: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct SvdNo {
    config: SvdNoConfig,
    grid: Grid,
    in_channels: usize,
    out_channels: usize,
    weights: QuadratureWeights,
    params: Params,
    lift: Linear,
    kernels: Vec<KernelNets>,
    blocks: Vec<Block>,
    projection: Vec<Linear>,
}

impl SvdNo {
    pub fn new(config: SvdNoConfig, grid: Grid, in_channels: usize, out_channels: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        let weights = trapezoidal_weights(&grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::default();
        let dz = grid.dims() + in_channels;
        let dv = config.lifting_dim;
        let rank = config.rank;

        let lift = Linear::default_init(&mut params, "lift", dz, dv, true, &mut rng);

        let kernel_sets = if config.shared_basis { 1 } else { config.blocks };
        let mut kernels = Vec::with_capacity(kernel_sets);
        for k in 0..kernel_sets {
            let name = format!("kernel{k}");
            let sn = &config.singular_net;
            let dims = grid.dims();
            kernels.push(match config.kernel_kind {
                KernelKind::Svd => KernelNets::Svd {
                    phi: SingularNet::new(&mut params, &format!("{name}.phi"), sn, dims, dz, dv, rank, &mut rng)?,
                    psi: SingularNet::new(&mut params, &format!("{name}.psi"), sn, dims, dz, dv, rank, &mut rng)?,
                },
                KernelKind::Mercer => KernelNets::Mercer {
                    phi: SingularNet::new(&mut params, &format!("{name}.phi"), sn, dims, dz, dv, rank, &mut rng)?,
                },
                KernelKind::DenseMlp => KernelNets::Dense(DenseKernelNet::new(
                    &mut params,
                    &format!("{name}.dense"),
                    dz,
                    config.dense_width,
                    config.dense_layers,
                    dv,
                    &mut rng,
                )?),
            });
        }

        let mut blocks = Vec::with_capacity(config.blocks);
        for t in 0..config.blocks {
            let pointwise =
                Linear::default_init(&mut params, &format!("block{t}.w"), dv, dv, config.pointwise_bias, &mut rng);
            let spectrum = match config.kernel_kind {
                KernelKind::Svd => {
                    let s = (1..=rank).map(|l| 1.0 / l as f64).collect();
                    Some(params.add(format!("block{t}.sigma"), Tensor::from_vec(s)))
                }
                KernelKind::Mercer => {
                    let s = (1..=rank).map(|l| (1.0 / l as f64).sqrt()).collect();
                    Some(params.add(format!("block{t}.lambda_root"), Tensor::from_vec(s)))
                }
                KernelKind::DenseMlp => None,
            };
            blocks.push(Block { pointwise, spectrum });
        }

        let projection = if config.projection_hidden > 0 {
            let h = config.projection_hidden;
            vec![
                Linear::default_init(&mut params, "projection.0", dv, h, true, &mut rng),
                Linear::default_init(&mut params, "projection.1", h, out_channels, true, &mut rng),
            ]
        } else {
            vec![Linear::default_init(&mut params, "projection.0", dv, out_channels, true, &mut rng)]
        };

        Ok(Self {
            config,
            grid,
            in_channels,
            out_channels,
            weights,
            params,
            lift,
            kernels,
            blocks,
            projection,
        })
    }

    pub fn config(&self) -> &SvdNoConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weights(&self) -> &QuadratureWeights {
        &self.weights
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Augmented coordinates for input `a` on this model's grid.
    pub fn coordinates(&self, a: &[f64]) -> Result<Tensor> {
        make_augmented_coordinates(&self.grid, a, self.in_channels)
    }

    pub fn lift(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        self.lift.forward(tape, bound, z)
    }

    fn eval_kernel(&self, k: usize, tape: &mut Tape, bound: &Bound, z: Var) -> Result<KernelValues> {
        Ok(match &self.kernels[k] {
            KernelNets::Svd { phi, psi } => KernelValues::Factors {
                phi: phi.eval(tape, bound, z)?,
                psi: psi.eval(tape, bound, z)?,
            },
            KernelNets::Mercer { phi } => {
                let phi = phi.eval(tape, bound, z)?;
                KernelValues::Factors { phi, psi: phi }
            }
            KernelNets::Dense(net) => KernelValues::Dense(net.operator(tape, bound, z)?),
        })
    }

    /// `γ(W v + b + K v)` for block `t`.
    fn block(&self, t: usize, tape: &mut Tape, bound: &Bound, v: Var, kv: &KernelValues) -> Result<Var> {
        let block = &self.blocks[t];
        let local = block.pointwise.forward(tape, bound, v)?;
        let integral = match (*kv, self.config.kernel_kind) {
            (KernelValues::Factors { phi, psi }, KernelKind::Svd) => {
                let sigma = bound.var(block.spectrum.expect("svd blocks carry a spectrum"));
                apply_factorized_kernel(tape, v, phi, psi, sigma, &self.weights)?
            }
            (KernelValues::Factors { phi, .. }, KernelKind::Mercer) => {
                let root = bound.var(block.spectrum.expect("mercer blocks carry a spectrum"));
                let lambda = tape.mul(root, root)?;
                apply_mercer_kernel(tape, v, phi, lambda, &self.weights)?
            }
            (KernelValues::Dense(op), _) => op.apply(tape, v, &self.weights)?,
            _ => unreachable!("kernel values follow the configured kind"),
        };
        let pre = tape.add(local, integral)?;
        Ok(tape.gelu(pre))
    }

    fn project(&self, tape: &mut Tape, bound: &Bound, v: Var) -> Result<Var> {
        let mut h = v;
        let last = self.projection.len() - 1;
        for (i, layer) in self.projection.iter().enumerate() {
            h = layer.forward(tape, bound, h)?;
            if i != last {
                h = tape.gelu(h);
            }
        }
        Ok(h)
    }

    /// Builds the full graph for augmented coordinates `z` (`[n, d_x + d_a]`).
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, z: &Tensor) -> Result<Forward> {
        let n = self.grid.len();
        let width = self.grid.dims() + self.in_channels;
        if z.shape() != [n, width] {
            return Err(Error::dim("forward", z.shape(), &[n, width]));
        }
        let zv = tape.constant(z.clone());
        let values = (0..self.kernels.len())
            .map(|k| self.eval_kernel(k, tape, bound, zv))
            .collect::<Result<Vec<_>>>()?;

        let mut ortho: Option<Var> = None;
        for kv in &values {
            if let KernelValues::Factors { phi, psi } = *kv {
                let g_phi = gram_matrix(tape, phi, &self.weights)?;
                let g_psi = if psi == phi { g_phi } else { gram_matrix(tape, psi, &self.weights)? };
                let term = orthogonality_loss(tape, g_phi, g_psi)?;
                ortho = Some(match ortho {
                    Some(acc) => tape.add(acc, term)?,
                    None => term,
                });
            }
        }

        let mut v = self.lift(tape, bound, zv)?;
        for t in 0..self.blocks.len() {
            let kv = &values[if self.config.shared_basis { 0 } else { t }];
            v = self.block(t, tape, bound, v, kv)?;
        }
        let output = self.project(tape, bound, v)?;
        Ok(Forward { output, ortho })
    }

    /// Evaluated `(Φ, Ψ)`, each `[n, d_v, L]`, for every kernel set; the
    /// Mercer variant repeats `Φ`. Empty for the dense-MLP kernel.
    pub fn kernel_factors(&self, z: &Tensor) -> Result<Vec<(Tensor, Tensor)>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let mut out = Vec::new();
        for k in 0..self.kernels.len() {
            if let KernelValues::Factors { phi, psi } = self.eval_kernel(k, &mut tape, &bound, zv)? {
                out.push((tape.value(phi).clone(), tape.value(psi).clone()));
            }
        }
        Ok(out)
    }

    /// Prediction `[n, out_channels]` for point-major input values `a`.
    pub fn predict(&self, a: &[f64]) -> Result<Tensor> {
        let z = self.coordinates(a)?;
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let f = self.forward(&mut tape, &bound, &z)?;
        Ok(tape.value(f.output).clone())
    }
}
