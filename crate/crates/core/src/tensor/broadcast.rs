//! Index walking for broadcast elementwise ops, reductions and permutations.

use super::contiguous_strides;

/// Output shape of a broadcast between `a` and `b`, aligning trailing axes.
/// Each aligned pair must be equal or contain a 1.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides that read an operand of `shape` while walking `out` in row-major
/// order; broadcast axes get stride 0.
pub(crate) fn strides_in(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let own = contiguous_strides(shape);
    let lead = out.len() - shape.len();
    (0..out.len())
        .map(|i| {
            if i < lead || shape[i - lead] == 1 && out[i] != 1 {
                0
            } else {
                own[i - lead]
            }
        })
        .collect()
}

/// Calls `f(i, off_a, off_b)` for every flat index `i` of `out`, with the
/// matching offsets into two strided operands.
pub(crate) fn walk2(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let numel: usize = out.iter().product();
    if numel == 0 {
        return;
    }
    if out.is_empty() {
        f(0, 0, 0);
        return;
    }
    let rank = out.len();
    let (inner, ia, ib) = (out[rank - 1], sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank - 1];
    let (mut oa, mut ob) = (0usize, 0usize);
    let mut i = 0;
    while i < numel {
        for j in 0..inner {
            f(i + j, oa + j * ia, ob + j * ib);
        }
        i += inner;
        let mut ax = rank - 1;
        while ax > 0 {
            ax -= 1;
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out[ax] {
                break;
            }
            oa -= sa[ax] * out[ax];
            ob -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

/// Strides into a reduced tensor (reduced axes dropped) when walking the
/// unreduced `shape`.
pub(crate) fn reduced_strides(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let kept: Vec<usize> = (0..shape.len())
        .filter(|a| !axes.contains(a))
        .map(|a| shape[a])
        .collect();
    let kept_strides = contiguous_strides(&kept);
    let mut k = 0;
    (0..shape.len())
        .map(|a| {
            if axes.contains(&a) {
                0
            } else {
                let s = kept_strides[k];
                k += 1;
                s
            }
        })
        .collect()
}
