//! Discrete kernel integral layers `(K v)(z_i) = Σ_j w_j κ(z_i, z_j) v_j`.

use crate::error::{Error, Result};
use crate::objectives::QuadratureWeights;
use crate::tensor::{Tape, Tensor, Var};

fn basis_dims(tape: &Tape, v: Var, basis: Var, w: &QuadratureWeights, op: &'static str) -> Result<(usize, usize, usize)> {
    let bs = tape.shape(basis);
    if bs.len() != 3 {
        return Err(Error::Shape(format!("{op}: basis must be [n, d, L], got {bs:?}")));
    }
    let (n, d, l) = (bs[0], bs[1], bs[2]);
    if tape.shape(v) != [n, d] {
        return Err(Error::dim(op, tape.shape(v), bs));
    }
    if w.len() != n {
        return Err(Error::Shape(format!("{op}: {} quadrature weights for {n} points", w.len())));
    }
    Ok((n, d, l))
}

/// `out_i = Φ(z_i) diag(σ) Σ_j w_j Ψ(z_j)ᵀ v_j`, evaluated right to left so
/// the largest intermediate is `[n·d, L]`.
pub fn apply_factorized_kernel(
    tape: &mut Tape,
    v: Var,
    phi: Var,
    psi: Var,
    sigma: Var,
    w: &QuadratureWeights,
) -> Result<Var> {
    let (n, d, l) = basis_dims(tape, v, phi, w, "apply_factorized_kernel")?;
    if tape.shape(psi) != tape.shape(phi) {
        return Err(Error::dim("apply_factorized_kernel", tape.shape(phi), tape.shape(psi)));
    }
    if tape.shape(sigma) != [l] {
        return Err(Error::dim("apply_factorized_kernel", tape.shape(sigma), &[l]));
    }
    let wcol = tape.constant(w.column());
    let wv = tape.mul(v, wcol)?;
    let row = tape.reshape(wv, &[1, n * d])?;
    let psi_flat = tape.reshape(psi, &[n * d, l])?;
    let q = tape.matmul(row, psi_flat)?;
    let sq = tape.mul(q, sigma)?;
    let sq = tape.reshape(sq, &[l, 1])?;
    let phi_flat = tape.reshape(phi, &[n * d, l])?;
    let out = tape.matmul(phi_flat, sq)?;
    tape.reshape(out, &[n, d])
}

/// Symmetric variant with `Ψ := Φ` and non-negative spectrum `λ`.
pub fn apply_mercer_kernel(tape: &mut Tape, v: Var, phi: Var, lambda: Var, w: &QuadratureWeights) -> Result<Var> {
    apply_factorized_kernel(tape, v, phi, phi, lambda, w)
}

/// Direct quadrature against materialized kernel values `κ` of shape
/// `[n, n, d, d]`.
pub fn apply_dense_kernel(tape: &mut Tape, v: Var, kappa: Var, w: &QuadratureWeights) -> Result<Var> {
    let ks = tape.shape(kappa).to_vec();
    if ks.len() != 4 || ks[0] != ks[1] || ks[2] != ks[3] {
        return Err(Error::Shape(format!("apply_dense_kernel: kernel must be [n, n, d, d], got {ks:?}")));
    }
    let (n, d) = (ks[0], ks[2]);
    if tape.shape(v) != [n, d] {
        return Err(Error::dim("apply_dense_kernel", tape.shape(v), &ks));
    }
    if w.len() != n {
        return Err(Error::Shape(format!("apply_dense_kernel: {} quadrature weights for {n} points", w.len())));
    }
    let wcol = tape.constant(w.column());
    let wv = tape.mul(v, wcol)?;
    let wv = tape.reshape(wv, &[n * d, 1])?;
    let k = tape.permute(kappa, &[0, 2, 1, 3])?;
    let k = tape.reshape(k, &[n * d, n * d])?;
    let out = tape.matmul(k, wv)?;
    tape.reshape(out, &[n, d])
}

pub fn factorized_kernel_values(v: &Tensor, phi: &Tensor, psi: &Tensor, sigma: &[f64], w: &QuadratureWeights) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (v, phi, psi) = (tape.constant(v.clone()), tape.constant(phi.clone()), tape.constant(psi.clone()));
    let s = tape.constant(Tensor::from_vec(sigma.to_vec()));
    let out = apply_factorized_kernel(&mut tape, v, phi, psi, s, w)?;
    Ok(tape.value(out).clone())
}

pub fn dense_kernel_values(v: &Tensor, kappa: &Tensor, w: &QuadratureWeights) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (v, k) = (tape.constant(v.clone()), tape.constant(kappa.clone()));
    let out = apply_dense_kernel(&mut tape, v, k, w)?;
    Ok(tape.value(out).clone())
}

/// `κ(z_i, z_j) = Φ(z_i) diag(σ) Ψ(z_j)ᵀ` for all pairs, `[n, n, d, d]`.
pub fn assemble_kernel(phi: &Tensor, sigma: &[f64], psi: &Tensor) -> Result<Tensor> {
    let s = phi.shape();
    if s.len() != 3 || psi.shape() != s || sigma.len() != s[2] {
        return Err(Error::dim("assemble_kernel", s, psi.shape()));
    }
    let (n, d, l) = (s[0], s[1], s[2]);
    let mut out = vec![0.0; n * n * d * d];
    let (p, q) = (phi.data(), psi.data());
    for i in 0..n {
        for j in 0..n {
            for a in 0..d {
                for b in 0..d {
                    let mut acc = 0.0;
                    for m in 0..l {
                        acc += sigma[m] * (p[(i * d + a) * l + m] * q[(j * d + b) * l + m]);
                    }
                    out[((i * n + j) * d + a) * d + b] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, n, d, d], out)
}
