//! Pointwise layers, singular-function nets and the dense-kernel ablation net.

use super::params::{Bound, ParamId, Params};
use super::{SingularNetConfig, SingularNetKind};
use crate::error::{Error, Result};
use crate::objectives::QuadratureWeights;
use crate::tensor::{Tape, Tensor, Var};
use rand::Rng;

/// Affine map `x·W + b` applied row-wise to `[n, fan_in]` inputs.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Weights and bias uniform in `[-bound, bound]`.
    pub fn new<R: Rng + ?Sized>(
        params: &mut Params,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        bound: f64,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(
            format!("{name}.weight"),
            Tensor::uniform(&[fan_in, fan_out], bound, rng),
        );
        let bias = bias.then(|| params.add(format!("{name}.bias"), Tensor::uniform(&[fan_out], bound, rng)));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    /// The usual `±1/√fan_in` initialization.
    pub fn default_init<R: Rng + ?Sized>(
        params: &mut Params,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        Self::new(params, name, fan_in, fan_out, bias, 1.0 / (fan_in as f64).sqrt(), rng)
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let y = tape.matmul(x, bound.var(self.weight))?;
        match self.bias {
            Some(b) => tape.add(y, bound.var(b)),
            None => Ok(y),
        }
    }
}

/// Linear layers with sine activations, ending in a linear head.
#[derive(Clone, Debug)]
pub struct SineMlp {
    hidden: Vec<Linear>,
    head: Linear,
}

impl SineMlp {
    /// First layer uniform in `±1/fan_in`, later layers in `±√(6/fan_in)`.
    pub fn new<R: Rng + ?Sized>(
        params: &mut Params,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let mut list = Vec::with_capacity(layers);
        let mut fan_in = input;
        for i in 0..layers {
            let bound = if i == 0 {
                1.0 / fan_in as f64
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            list.push(Linear::new(params, &format!("{name}.layer{i}"), fan_in, hidden, true, bound, rng));
            fan_in = hidden;
        }
        let head_bound = (6.0 / fan_in as f64).sqrt();
        let head = Linear::new(params, &format!("{name}.head"), fan_in, output, true, head_bound, rng);
        Self { hidden: list, head }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        let mut h = z;
        for layer in &self.hidden {
            let pre = layer.forward(tape, bound, h)?;
            h = tape.sin(pre);
        }
        self.head.forward(tape, bound, h)
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }
}

#[derive(Clone, Debug)]
struct LstmLayer {
    input: Linear,
    recurrent: ParamId,
}

/// Stacked LSTM run over grid points in ascending coordinate order, with a
/// linear projection of the hidden state at every point. Gate order is
/// input, forget, cell, output.
#[derive(Clone, Debug)]
pub struct Lstm {
    layers: Vec<LstmLayer>,
    head: Linear,
    hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(
        params: &mut Params,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut list = Vec::with_capacity(layers);
        let mut fan_in = input;
        for i in 0..layers {
            let input_map = Linear::new(params, &format!("{name}.lstm{i}.input"), fan_in, 4 * hidden, true, bound, rng);
            let recurrent = params.add(
                format!("{name}.lstm{i}.recurrent"),
                Tensor::uniform(&[hidden, 4 * hidden], bound, rng),
            );
            list.push(LstmLayer {
                input: input_map,
                recurrent,
            });
            fan_in = hidden;
        }
        let head = Linear::new(params, &format!("{name}.head"), hidden, output, true, bound, rng);
        Self {
            layers: list,
            head,
            hidden,
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        let h = self.hidden;
        let steps = tape.shape(z)[0];
        let mut x = z;
        for layer in &self.layers {
            let gates_in = layer.input.forward(tape, bound, x)?;
            let w_hh = bound.var(layer.recurrent);
            let mut outputs = Vec::with_capacity(steps);
            let mut state: Option<(Var, Var)> = None;
            for t in 0..steps {
                let mut gates = tape.slice(gates_in, 0, t, 1)?;
                if let Some((h_prev, _)) = state {
                    let rec = tape.matmul(h_prev, w_hh)?;
                    gates = tape.add(gates, rec)?;
                }
                let i_pre = tape.slice(gates, 1, 0, h)?;
                let f_pre = tape.slice(gates, 1, h, h)?;
                let g_pre = tape.slice(gates, 1, 2 * h, h)?;
                let o_pre = tape.slice(gates, 1, 3 * h, h)?;
                let i_gate = tape.sigmoid(i_pre);
                let g_gate = tape.tanh(g_pre);
                let o_gate = tape.sigmoid(o_pre);
                let mut c = tape.mul(i_gate, g_gate)?;
                if let Some((_, c_prev)) = state {
                    let f_gate = tape.sigmoid(f_pre);
                    let kept = tape.mul(f_gate, c_prev)?;
                    c = tape.add(kept, c)?;
                }
                let c_act = tape.tanh(c);
                let h_new = tape.mul(o_gate, c_act)?;
                outputs.push(h_new);
                state = Some((h_new, c));
            }
            x = tape.concat(&outputs, 0)?;
        }
        self.head.forward(tape, bound, x)
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }
}

/// Network producing `Φ(z)` (or `Ψ(z)`) as a `d × L` matrix per point.
#[derive(Clone, Debug)]
pub struct SingularNet {
    body: SingularBody,
    d: usize,
    rank: usize,
}

#[derive(Clone, Debug)]
enum SingularBody {
    Sine(SineMlp),
    Recurrent(Lstm),
}

impl SingularNet {
    pub fn new<R: Rng + ?Sized>(
        params: &mut Params,
        name: &str,
        cfg: &SingularNetConfig,
        spatial_dims: usize,
        input: usize,
        d: usize,
        rank: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if cfg.hidden_dim == 0 {
            return Err(Error::Config("singular net hidden_dim must be positive".into()));
        }
        let body = match cfg.kind {
            SingularNetKind::SineMlp => SingularBody::Sine(SineMlp::new(
                params,
                name,
                input,
                cfg.hidden_dim,
                cfg.num_layers,
                d * rank,
                rng,
            )),
            SingularNetKind::Recurrent1d => {
                if spatial_dims != 1 {
                    return Err(Error::Config(format!(
                        "recurrent singular nets need a 1D grid (points have no natural order in {spatial_dims}D)"
                    )));
                }
                if cfg.num_layers == 0 {
                    return Err(Error::Config("recurrent singular net needs at least one layer".into()));
                }
                SingularBody::Recurrent(Lstm::new(
                    params,
                    name,
                    input,
                    cfg.hidden_dim,
                    cfg.num_layers,
                    d * rank,
                    rng,
                ))
            }
        };
        Ok(Self { body, d, rank })
    }

    /// Basis values at every row of `z`, shape `[n, d, L]`.
    pub fn eval(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        let n = tape.shape(z)[0];
        let flat = match &self.body {
            SingularBody::Sine(net) => net.forward(tape, bound, z)?,
            SingularBody::Recurrent(net) => net.forward(tape, bound, z)?,
        };
        tape.reshape(flat, &[n, self.d, self.rank])
    }

    pub fn head(&self) -> &Linear {
        match &self.body {
            SingularBody::Sine(net) => net.head(),
            SingularBody::Recurrent(net) => net.head(),
        }
    }
}

/// GELU MLP evaluating a full `d × d` kernel block for every pair of points
/// from the concatenated input `(z, z')`.
#[derive(Clone, Debug)]
pub struct DenseKernelNet {
    first_left: ParamId,
    first_right: ParamId,
    first_bias: ParamId,
    hidden: Vec<Linear>,
    head: Linear,
    width: usize,
    d: usize,
}

impl DenseKernelNet {
    pub fn new<R: Rng + ?Sized>(
        params: &mut Params,
        name: &str,
        input: usize,
        width: usize,
        layers: usize,
        d: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if layers == 0 || width == 0 {
            return Err(Error::Config("dense kernel net needs at least one hidden layer".into()));
        }
        let bound = 1.0 / ((2 * input) as f64).sqrt();
        let first_left = params.add(format!("{name}.layer0.left"), Tensor::uniform(&[input, width], bound, rng));
        let first_right = params.add(format!("{name}.layer0.right"), Tensor::uniform(&[input, width], bound, rng));
        let first_bias = params.add(format!("{name}.layer0.bias"), Tensor::uniform(&[width], bound, rng));
        let hidden = (1..layers)
            .map(|i| Linear::default_init(params, &format!("{name}.layer{i}"), width, width, true, rng))
            .collect();
        let head = Linear::default_init(params, &format!("{name}.head"), width, d * d, true, rng);
        Ok(Self {
            first_left,
            first_right,
            first_bias,
            hidden,
            head,
            width,
            d,
        })
    }

    /// Last hidden layer over all pairs, `[n·n, width]`.
    fn features(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        let n = tape.shape(z)[0];
        let w = self.width;
        // The first layer acting on (z_i, z_j) splits into a per-point term for
        // each side, broadcast over pairs.
        let left = tape.matmul(z, bound.var(self.first_left))?;
        let right = tape.matmul(z, bound.var(self.first_right))?;
        let right = tape.add(right, bound.var(self.first_bias))?;
        let left = tape.reshape(left, &[n, 1, w])?;
        let right = tape.reshape(right, &[1, n, w])?;
        let pre = tape.add(left, right)?;
        let pre = tape.reshape(pre, &[n * n, w])?;
        let mut h = tape.gelu(pre);
        for layer in &self.hidden {
            let pre = layer.forward(tape, bound, h)?;
            h = tape.gelu(pre);
        }
        Ok(h)
    }

    /// Kernel values `κ(z_i, z_j)`, shape `[n, n, d, d]`.
    pub fn eval(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        let n = tape.shape(z)[0];
        let h = self.features(tape, bound, z)?;
        let out = self.head.forward(tape, bound, h)?;
        tape.reshape(out, &[n, n, self.d, self.d])
    }

    /// The same kernel in a form that applies without materializing `κ`:
    /// the head is linear, so it commutes with the quadrature sum.
    pub fn operator(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<DenseOperator> {
        let n = tape.shape(z)[0];
        let (w, d) = (self.width, self.d);
        let h = self.features(tape, bound, z)?;
        let h = tape.reshape(h, &[n, n, w])?;
        let h = tape.permute(h, &[0, 2, 1])?;
        let features = tape.reshape(h, &[n * w, n])?;
        // Head column a·d + b holds κ[a, b]; regroup rows as (k, b).
        let head = tape.reshape(bound.var(self.head.weight), &[w, d, d])?;
        let head = tape.permute(head, &[0, 2, 1])?;
        let head = tape.reshape(head, &[w * d, d])?;
        let bias = match self.head.bias {
            Some(b) => Some(tape.reshape(bound.var(b), &[d, d])?),
            None => None,
        };
        Ok(DenseOperator {
            features,
            head,
            bias,
            n,
            width: w,
            d,
        })
    }
}

/// A dense-MLP kernel prepared by [`DenseKernelNet::operator`].
#[derive(Clone, Copy, Debug)]
pub struct DenseOperator {
    features: Var,
    head: Var,
    bias: Option<Var>,
    n: usize,
    width: usize,
    d: usize,
}

impl DenseOperator {
    /// `out_i = Σ_j w_j κ(z_i, z_j) v_j`, equal to [`apply_dense_kernel`] on
    /// the materialized values.
    ///
    /// [`apply_dense_kernel`]: crate::model::apply_dense_kernel
    pub fn apply(&self, tape: &mut Tape, v: Var, w: &QuadratureWeights) -> Result<Var> {
        let (n, d) = (self.n, self.d);
        if tape.shape(v) != [n, d] {
            return Err(Error::dim("dense operator", tape.shape(v), &[n, d]));
        }
        if w.len() != n {
            return Err(Error::Shape(format!("dense operator: {} quadrature weights for {n} points", w.len())));
        }
        let wcol = tape.constant(w.column());
        let wv = tape.mul(v, wcol)?;
        let m = tape.matmul(self.features, wv)?;
        let m = tape.reshape(m, &[n, self.width * d])?;
        let out = tape.matmul(m, self.head)?;
        match self.bias {
            Some(b) => {
                let s = tape.sum(wv, &[0])?;
                let s = tape.reshape(s, &[d, 1])?;
                let bs = tape.matmul(b, s)?;
                let bs = tape.reshape(bs, &[d])?;
                tape.add(out, bs)
            }
            None => Ok(out),
        }
    }
}
