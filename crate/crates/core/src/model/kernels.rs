//! Dense kernels over row-major f64 buffers. Matrix products go through
//! `matrixmultiply`, which is single-threaded and has a fixed reduction order.

pub const LN_EPS: f64 = 1e-5;

/// Strided view for `gemm`: element (i, j) lives at `off + i*rs + j*cs`.
#[derive(Clone, Copy)]
pub struct View {
    pub off: usize,
    pub rs: usize,
    pub cs: usize,
}

impl View {
    pub fn rm(off: usize, cols: usize) -> Self {
        View { off, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn tr(off: usize, cols: usize) -> Self {
        View { off, rs: 1, cs: cols }
    }

    fn check(&self, rows: usize, cols: usize, len: usize) {
        if rows == 0 || cols == 0 {
            return;
        }
        let last = self.off + (rows - 1) * self.rs + (cols - 1) * self.cs;
        assert!(last < len, "gemm view out of bounds: {last} >= {len}");
    }
}

/// `C[m×n] = alpha * A[m×k] · B[k×n] + beta * C`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    av: View,
    b: &[f64],
    bv: View,
    beta: f64,
    c: &mut [f64],
    cv: View,
) {
    av.check(m, k, a.len());
    bv.check(k, n, b.len());
    cv.check(m, n, c.len());
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: every addressed element was bounds-checked above and `c` is
    // exclusively borrowed, so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr().add(av.off),
            av.rs as isize,
            av.cs as isize,
            b.as_ptr().add(bv.off),
            bv.rs as isize,
            bv.cs as isize,
            beta,
            c.as_mut_ptr().add(cv.off),
            cv.rs as isize,
            cv.cs as isize,
        );
    }
}

/// `Y[n×out] = X[n×in] · W[in×out] + bias`.
pub fn linear(x: &[f64], n: usize, d_in: usize, w: &[f64], bias: Option<&[f64]>, d_out: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * d_out];
    if let Some(b) = bias {
        for row in y.chunks_exact_mut(d_out) {
            row.copy_from_slice(b);
        }
    }
    let beta = if bias.is_some() { 1.0 } else { 0.0 };
    gemm(n, d_in, d_out, 1.0, x, View::rm(0, d_in), w, View::rm(0, d_out), beta, &mut y, View::rm(0, d_out));
    y
}

/// Backward of `linear`: accumulates `dW += Xᵀ dY`, `db += Σ dY` and
/// returns `dX = dY Wᵀ`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    x: &[f64],
    dy: &[f64],
    n: usize,
    d_in: usize,
    d_out: usize,
    w: &[f64],
    dw: &mut [f64],
    db: Option<&mut [f64]>,
) -> Vec<f64> {
    gemm(d_in, n, d_out, 1.0, x, View::tr(0, d_in), dy, View::rm(0, d_out), 1.0, dw, View::rm(0, d_out));
    if let Some(db) = db {
        for row in dy.chunks_exact(d_out) {
            for (g, v) in db.iter_mut().zip(row) {
                *g += v;
            }
        }
    }
    let mut dx = vec![0.0; n * d_in];
    gemm(n, d_out, d_in, 1.0, dy, View::rm(0, d_out), w, View::tr(0, d_out), 0.0, &mut dx, View::rm(0, d_in));
    dx
}

pub struct LnCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub fn layer_norm(x: &[f64], d: usize, gain: &[f64], bias: &[f64]) -> (Vec<f64>, LnCache) {
    let n = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = h * gain[j] + bias[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

pub fn layer_norm_backward(dy: &[f64], cache: &LnCache, d: usize, gain: &[f64], dgain: &mut [f64], dbias: &mut [f64]) -> Vec<f64> {
    let n = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let dyr = &dy[i * d..(i + 1) * d];
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..d {
            dgain[j] += dyr[j] * xh[j];
            dbias[j] += dyr[j];
            dxhat[j] = dyr[j] * gain[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        let r = cache.rstd[i];
        for j in 0..d {
            dx[i * d + j] = r * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

/// In-place numerically stable softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Index of the first maximal element.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

pub fn add_in_place(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
