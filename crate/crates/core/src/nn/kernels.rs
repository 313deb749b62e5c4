//! Dense numeric kernels. Reduction order is fixed so results are
//! reproducible bit for bit.

use super::graph::ConvGeom;

/// `a[m x k] * b[k x n]`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a[m x k] * b[n x k]^T`.
pub(crate) fn matmul_a_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a[k x m]^T * b[k x n]`.
pub(crate) fn matmul_at_b(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn logsumexp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_rows(data: &[f64], cols: usize) -> Vec<f64> {
    let mut out = data.to_vec();
    for row in out.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

fn im2col(img: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let p = g.out_h * g.out_w;
    let k = g.ksize;
    for c in 0..g.channels {
        let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        dst[oy * g.out_w + ox] =
                            if iy >= 0 && ix >= 0 && (iy as usize) < g.height && (ix as usize) < g.width {
                                plane[iy as usize * g.width + ix as usize]
                            } else {
                                0.0
                            };
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &ConvGeom, img: &mut [f64]) {
    let p = g.out_h * g.out_w;
    let k = g.ksize;
    for c in 0..g.channels {
        let plane = &mut img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy as usize >= g.height {
                        continue;
                    }
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix < 0 || ix as usize >= g.width {
                            continue;
                        }
                        plane[iy as usize * g.width + ix as usize] += src[oy * g.out_w + ox];
                    }
                }
            }
        }
    }
}

/// Returns the output and the unfolded input columns kept for backward.
pub(crate) fn conv2d_forward(input: &[f64], kernel: &[f64], bias: &[f64], g: &ConvGeom) -> (Vec<f64>, Vec<f64>) {
    let ck = g.channels * g.ksize * g.ksize;
    let p = g.out_h * g.out_w;
    let in_len = g.channels * g.height * g.width;
    let mut cols = vec![0.0; g.batch * ck * p];
    let mut out = Vec::with_capacity(g.batch * g.kernels * p);
    for b in 0..g.batch {
        let bcols = &mut cols[b * ck * p..(b + 1) * ck * p];
        im2col(&input[b * in_len..(b + 1) * in_len], g, bcols);
        let mut ob = matmul(kernel, bcols, g.kernels, ck, p);
        for (row, &bv) in ob.chunks_mut(p).zip(bias) {
            row.iter_mut().for_each(|v| *v += bv);
        }
        out.extend(ob);
    }
    (out, cols)
}

/// Gradients with respect to input, kernel and bias.
pub(crate) fn conv2d_backward(
    grad_out: &[f64],
    kernel: &[f64],
    cols: &[f64],
    g: &ConvGeom,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let ck = g.channels * g.ksize * g.ksize;
    let p = g.out_h * g.out_w;
    let in_len = g.channels * g.height * g.width;
    let mut dx = vec![0.0; g.batch * in_len];
    let mut dk = vec![0.0; g.kernels * ck];
    let mut db = vec![0.0; g.kernels];
    for b in 0..g.batch {
        let gb = &grad_out[b * g.kernels * p..(b + 1) * g.kernels * p];
        let bcols = &cols[b * ck * p..(b + 1) * ck * p];
        for (d, row) in db.iter_mut().zip(gb.chunks(p)) {
            *d += row.iter().sum::<f64>();
        }
        let dkb = matmul_a_bt(gb, bcols, g.kernels, p, ck);
        for (a, v) in dk.iter_mut().zip(dkb) {
            *a += v;
        }
        let dcols = matmul_at_b(kernel, gb, g.kernels, ck, p);
        col2im(&dcols, g, &mut dx[b * in_len..(b + 1) * in_len]);
    }
    (dx, dk, db)
}
