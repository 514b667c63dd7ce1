//! Raw loops behind the graph ops. Everything here is single-image, CHW, row-major.

use super::Real;

/// Unfold 3×3 neighbourhoods (zero padding 1) into a `(c·9) × (h·w)` matrix.
pub(crate) fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let plane = h * w;
    for ch in 0..c {
        let src = &x[ch * plane..(ch + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ch * 3 + ky) * 3 + kx) * plane..][..plane];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = &src[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src_row[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src_row),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src_row[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add columns back onto the image.
pub(crate) fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let plane = h * w;
    for ch in 0..c {
        let dst = &mut dx[ch * plane..(ch + 1) * plane];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ch * 3 + ky) * 3 + kx) * plane..][..plane];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let out = &mut dst[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for x in 1..w {
                                out[x - 1] = out[x - 1] + src[x];
                            }
                        }
                        1 => {
                            for x in 0..w {
                                out[x] = out[x] + src[x];
                            }
                        }
                        _ => {
                            for x in 0..w - 1 {
                                out[x + 1] = out[x + 1] + src[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv3x3_forward<T: Real>(
    x: &[T],
    (c, h, w): (usize, usize, usize),
    weight: &[T],
    bias: &[T],
    out_ch: usize,
) -> Vec<T> {
    let plane = h * w;
    let k = c * 9;
    let mut cols = vec![T::zero(); k * plane];
    im2col(x, c, h, w, &mut cols);
    let mut out = vec![T::zero(); out_ch * plane];
    for (o, b) in bias.iter().enumerate() {
        out[o * plane..(o + 1) * plane].fill(*b);
    }
    T::gemm(out_ch, k, plane, weight, (k as isize, 1), &cols, (plane as isize, 1), &mut out, true);
    out
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Vec<T>>,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

pub(crate) fn conv3x3_backward<T: Real>(
    x: &[T],
    (c, h, w): (usize, usize, usize),
    weight: &[T],
    out_ch: usize,
    dout: &[T],
    want_dx: bool,
) -> ConvGrads<T> {
    let plane = h * w;
    let k = c * 9;
    let mut cols = vec![T::zero(); k * plane];
    im2col(x, c, h, w, &mut cols);

    // dW = dOut · colsᵀ
    let mut dw = vec![T::zero(); out_ch * k];
    T::gemm(out_ch, plane, k, dout, (plane as isize, 1), &cols, (1, plane as isize), &mut dw, false);

    let db = dout.chunks(plane).map(|row| row.iter().copied().sum()).collect();

    let dx = want_dx.then(|| {
        // dcols = Wᵀ · dOut, reusing the column buffer
        T::gemm(k, out_ch, plane, weight, (1, k as isize), dout, (plane as isize, 1), &mut cols, false);
        let mut dx = vec![T::zero(); c * plane];
        col2im(&cols, c, h, w, &mut dx);
        dx
    });
    ConvGrads { dx, dw, db }
}

/// Per-channel correlation with a fixed odd-sized square kernel, zero padding.
pub(crate) fn depthwise_filter<T: Real>(x: &[T], (c, h, w): (usize, usize, usize), kernel: &[T], size: usize) -> Vec<T> {
    let r = (size / 2) as isize;
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for y in 0..h as isize {
            for xx in 0..w as isize {
                let mut acc = T::zero();
                for ky in 0..size as isize {
                    let sy = y + ky - r;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..size as isize {
                        let sx = xx + kx - r;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        acc = acc + kernel[(ky * size as isize + kx) as usize] * src[(sy * w as isize + sx) as usize];
                    }
                }
                dst[(y * w as isize + xx) as usize] = acc;
            }
        }
    }
    out
}

/// Adjoint of [`depthwise_filter`].
pub(crate) fn depthwise_filter_adjoint<T: Real>(
    dout: &[T],
    (c, h, w): (usize, usize, usize),
    kernel: &[T],
    size: usize,
) -> Vec<T> {
    let flipped: Vec<T> = kernel.iter().rev().copied().collect();
    depthwise_filter(dout, (c, h, w), &flipped, size)
}
