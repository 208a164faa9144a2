//! Separable 1D convolution passes over dense 3D buffers.
//!
//! The forward pass renormalizes the kernel over the in-bounds support at
//! borders, so constants are preserved exactly. Because of that border
//! handling the smoothing operator is not symmetric; gradient code that
//! needs the adjoint must use [`ConvMode::Transpose`], which divides by the
//! border weight sums first and then applies the plain correlation.

use rayon::prelude::*;

/// Symmetric 1D kernel, interior-normalized to unit sum.
#[derive(Debug, Clone)]
pub struct Kernel1D {
    pub weights: Vec<f64>,
    pub radius: usize,
}

/// Gaussian kernel truncated at 3 sigma (sigma in samples). Returns `None`
/// for sigma <= 0, meaning identity along that axis.
pub fn gaussian_kernel(sigma: f64) -> Option<Kernel1D> {
    if sigma <= 0.0 {
        return None;
    }
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut weights: Vec<f64> = (0..=2 * radius)
        .map(|t| {
            let d = t as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Some(Kernel1D { weights, radius })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvMode {
    /// out[c] = sum_t w[t] in[c+t] / N(c)
    Forward,
    /// out[c] = sum_t w[t] in[c+t] / N(c+t)  — the adjoint of `Forward`.
    Transpose,
}

/// In-bounds weight sums N(c) along one axis of length `n`.
fn border_sums(k: &Kernel1D, n: usize) -> Vec<f64> {
    let r = k.radius as isize;
    (0..n as isize)
        .map(|c| {
            let lo = (-r).max(-c);
            let hi = r.min(n as isize - 1 - c);
            (lo..=hi).map(|t| k.weights[(t + r) as usize]).sum()
        })
        .collect()
}

/// One separable pass along `axis`, reading `src` and writing `dst`.
/// Output planes along z are computed independently, so the result does not
/// depend on the thread count.
pub fn conv_axis(src: &[f64], dst: &mut [f64], dims: [usize; 3], axis: usize, k: &Kernel1D, mode: ConvMode) {
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    debug_assert_eq!(src.len(), nx * ny * nz);
    debug_assert_eq!(dst.len(), nx * ny * nz);
    let n = dims[axis];
    let sums = border_sums(k, n);
    let r = k.radius as isize;
    let w = &k.weights;
    let plane = nx * ny;

    // For the transpose we fold the 1/N factor into a per-coordinate view of
    // the source line: src_eff[c] = src[c] / N(c).
    let line = |dst_line: &mut [f64], get: &dyn Fn(isize) -> f64| {
        for c in 0..n as isize {
            let lo = (-r).max(-c);
            let hi = r.min(n as isize - 1 - c);
            let mut acc = 0.0;
            match mode {
                ConvMode::Forward => {
                    for t in lo..=hi {
                        acc += w[(t + r) as usize] * get(c + t);
                    }
                    acc /= sums[c as usize];
                }
                ConvMode::Transpose => {
                    for t in lo..=hi {
                        acc += w[(t + r) as usize] * get(c + t) / sums[(c + t) as usize];
                    }
                }
            }
            dst_line[c as usize] = acc;
        }
    };

    match axis {
        0 => {
            dst.par_chunks_mut(nx).enumerate().for_each(|(row, out)| {
                let base = row * nx;
                let mut buf = vec![0.0f64; nx];
                line(&mut buf, &|c| src[base + c as usize]);
                out.copy_from_slice(&buf);
            });
        }
        1 => {
            dst.par_chunks_mut(plane).enumerate().for_each(|(kz, out)| {
                let base = kz * plane;
                let mut buf = vec![0.0f64; ny];
                for i in 0..nx {
                    line(&mut buf, &|c| src[base + i + nx * c as usize]);
                    for (j, &v) in buf.iter().enumerate() {
                        out[i + nx * j] = v;
                    }
                }
            });
        }
        2 => {
            dst.par_chunks_mut(plane).enumerate().for_each(|(kz, out)| {
                let c = kz as isize;
                let lo = (-r).max(-c);
                let hi = r.min(nz as isize - 1 - c);
                for v in out.iter_mut() {
                    *v = 0.0;
                }
                for t in lo..=hi {
                    let (wt, div) = match mode {
                        ConvMode::Forward => (w[(t + r) as usize], sums[kz]),
                        ConvMode::Transpose => (w[(t + r) as usize], sums[(c + t) as usize]),
                    };
                    let scale = wt / div;
                    let src_plane = &src[(c + t) as usize * plane..(c + t + 1) as usize * plane];
                    for (v, &s) in out.iter_mut().zip(src_plane) {
                        *v += scale * s;
                    }
                }
            });
        }
        _ => unreachable!("axis must be 0..3"),
    }
}

/// Full separable smoothing, axes applied in order x, y, z.
pub fn smooth3(buf: &mut Vec<f64>, scratch: &mut Vec<f64>, dims: [usize; 3], k: &Kernel1D) {
    for axis in 0..3 {
        conv_axis(buf, scratch, dims, axis, k, ConvMode::Forward);
        std::mem::swap(buf, scratch);
    }
}

/// Adjoint of [`smooth3`]: transposed passes in reverse axis order z, y, x.
pub fn smooth3_transpose(buf: &mut Vec<f64>, scratch: &mut Vec<f64>, dims: [usize; 3], k: &Kernel1D) {
    for axis in (0..3).rev() {
        conv_axis(buf, scratch, dims, axis, k, ConvMode::Transpose);
        std::mem::swap(buf, scratch);
    }
}
