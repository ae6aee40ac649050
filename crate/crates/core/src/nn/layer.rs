use serde::{Deserialize, Serialize};

use super::{axpy, Scalar};
use crate::error::{Error, Result};

/// One layer of a sequential network.
///
/// Parameter storage, per layer:
/// * `Conv2d`: weights `[out_ch][in_ch][kernel][kernel]`, then `out_ch` biases;
/// * `Dense`: weights `[inputs][outputs]` (input-major), then `outputs` biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Relu,
    Sigmoid,
    #[serde(rename = "upsample2x_nearest")]
    Upsample2x,
    Flatten,
}

impl LayerSpec {
    pub fn conv(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
        }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        LayerSpec::Dense { inputs, outputs }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Upsample2x => "upsample2x_nearest",
            LayerSpec::Flatten => "flatten",
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => out_ch * in_ch * kernel * kernel + out_ch,
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            _ => 0,
        }
    }

    /// `(fan_in, fan_out)` for weight initialization.
    pub(crate) fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some((in_ch * kernel * kernel, out_ch * kernel * kernel)),
            LayerSpec::Dense { inputs, outputs } => Some((inputs, outputs)),
            _ => None,
        }
    }

    pub(crate) fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { out_ch, .. } => self.param_count() - out_ch,
            LayerSpec::Dense { outputs, .. } => self.param_count() - outputs,
            _ => 0,
        }
    }

    /// Output shape for a single (unbatched) input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                if kernel == 0 || stride == 0 || in_ch == 0 || out_ch == 0 {
                    return Err(Error::Shape(format!("invalid conv {self:?}")));
                }
                let [c, h, w] = chw(input, self)?;
                if c != in_ch {
                    return Err(Error::Shape(format!(
                        "conv expects {in_ch} channels, got {c}"
                    )));
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(Error::Shape(format!(
                        "kernel {kernel} larger than padded {h}x{w}"
                    )));
                }
                let ho = (h + 2 * padding - kernel) / stride + 1;
                let wo = (w + 2 * padding - kernel) / stride + 1;
                Ok(vec![out_ch, ho, wo])
            }
            LayerSpec::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return Err(Error::Shape(format!("invalid dense {self:?}")));
                }
                if input != [inputs] {
                    return Err(Error::Shape(format!(
                        "dense expects [{inputs}], got {input:?}"
                    )));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Upsample2x => {
                let [c, h, w] = chw(input, self)?;
                Ok(vec![c, 2 * h, 2 * w])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    pub(crate) fn forward<T: Scalar>(
        &self,
        params: &[T],
        in_shape: &[usize],
        x: &[T],
        out: &mut Vec<T>,
    ) {
        out.clear();
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                let geo = ConvGeometry::new(in_shape, kernel, stride, padding);
                let cols = geo.im2col(x);
                let q = in_ch * kernel * kernel;
                let p = geo.out_positions();
                let (w, b) = params.split_at(out_ch * q);
                out.resize(out_ch * p, T::zero());
                for o in 0..out_ch {
                    let row = &mut out[o * p..(o + 1) * p];
                    row.fill(b[o]);
                    for (qi, &wv) in w[o * q..(o + 1) * q].iter().enumerate() {
                        axpy(wv, &cols[qi * p..(qi + 1) * p], row);
                    }
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                let (w, b) = params.split_at(inputs * outputs);
                out.extend_from_slice(b);
                for (i, &xi) in x.iter().enumerate() {
                    if xi != T::zero() {
                        axpy(xi, &w[i * outputs..(i + 1) * outputs], out);
                    }
                }
            }
            LayerSpec::Relu => {
                out.extend(x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }))
            }
            LayerSpec::Sigmoid => out.extend(x.iter().map(|&v| sigmoid(v))),
            LayerSpec::Upsample2x => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                out.reserve(c * 4 * h * w);
                for ch in 0..c {
                    for y in 0..2 * h {
                        let src = &x[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
                        for &v in src {
                            out.push(v);
                            out.push(v);
                        }
                    }
                }
            }
            LayerSpec::Flatten => out.extend_from_slice(x),
        }
    }

    /// Accumulates parameter gradients into `dparams` and, when `dx` is given,
    /// writes the input gradient there.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward<T: Scalar>(
        &self,
        params: &[T],
        in_shape: &[usize],
        x: &[T],
        y: &[T],
        dy: &[T],
        dparams: &mut [T],
        dx: Option<&mut Vec<T>>,
    ) {
        match *self {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
            } => {
                let geo = ConvGeometry::new(in_shape, kernel, stride, padding);
                let cols = geo.im2col(x);
                let q = in_ch * kernel * kernel;
                let p = geo.out_positions();
                let (dw, db) = dparams.split_at_mut(out_ch * q);
                // colsT lets the weight gradient run as row updates.
                let mut cols_t = vec![T::zero(); p * q];
                for qi in 0..q {
                    for pi in 0..p {
                        cols_t[pi * q + qi] = cols[qi * p + pi];
                    }
                }
                for pi in 0..p {
                    let patch = &cols_t[pi * q..(pi + 1) * q];
                    for o in 0..out_ch {
                        let d = dy[o * p + pi];
                        if d != T::zero() {
                            axpy(d, patch, &mut dw[o * q..(o + 1) * q]);
                        }
                    }
                }
                for o in 0..out_ch {
                    let mut acc = db[o];
                    for &d in &dy[o * p..(o + 1) * p] {
                        acc += d;
                    }
                    db[o] = acc;
                }
                if let Some(dx) = dx {
                    let w = &params[..out_ch * q];
                    let mut dcols = vec![T::zero(); q * p];
                    for o in 0..out_ch {
                        let drow = &dy[o * p..(o + 1) * p];
                        for qi in 0..q {
                            axpy(w[o * q + qi], drow, &mut dcols[qi * p..(qi + 1) * p]);
                        }
                    }
                    dx.clear();
                    dx.resize(x.len(), T::zero());
                    geo.col2im(&dcols, dx);
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                let (dw, db) = dparams.split_at_mut(inputs * outputs);
                for (i, &xi) in x.iter().enumerate() {
                    if xi != T::zero() {
                        axpy(xi, dy, &mut dw[i * outputs..(i + 1) * outputs]);
                    }
                }
                for (b, &d) in db.iter_mut().zip(dy) {
                    *b += d;
                }
                if let Some(dx) = dx {
                    let w = &params[..inputs * outputs];
                    dx.clear();
                    dx.extend((0..inputs).map(|i| {
                        let mut acc = T::zero();
                        for (&wv, &d) in w[i * outputs..(i + 1) * outputs].iter().zip(dy) {
                            acc += wv * d;
                        }
                        acc
                    }));
                }
            }
            LayerSpec::Relu => {
                if let Some(dx) = dx {
                    dx.clear();
                    dx.extend(
                        x.iter()
                            .zip(dy)
                            .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() }),
                    );
                }
            }
            LayerSpec::Sigmoid => {
                if let Some(dx) = dx {
                    dx.clear();
                    dx.extend(y.iter().zip(dy).map(|(&s, &d)| d * s * (T::one() - s)));
                }
            }
            LayerSpec::Upsample2x => {
                if let Some(dx) = dx {
                    let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                    let (h2, w2) = (2 * h, 2 * w);
                    dx.clear();
                    dx.resize(c * h * w, T::zero());
                    for ch in 0..c {
                        for yy in 0..h {
                            for xx in 0..w {
                                let base = ch * h2 * w2;
                                let r0 = base + 2 * yy * w2 + 2 * xx;
                                let r1 = r0 + w2;
                                dx[(ch * h + yy) * w + xx] =
                                    dy[r0] + dy[r0 + 1] + dy[r1] + dy[r1 + 1];
                            }
                        }
                    }
                }
            }
            LayerSpec::Flatten => {
                if let Some(dx) = dx {
                    dx.clear();
                    dx.extend_from_slice(dy);
                }
            }
        }
    }
}

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

fn chw(input: &[usize], layer: &LayerSpec) -> Result<[usize; 3]> {
    match *input {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(Error::Shape(format!(
            "{} expects a [C, H, W] input, got {input:?}",
            layer.name()
        ))),
    }
}

struct ConvGeometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeometry {
    fn new(in_shape: &[usize], k: usize, s: usize, pad: usize) -> Self {
        let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
        ConvGeometry {
            c,
            h,
            w,
            k,
            s,
            pad,
            ho: (h + 2 * pad - k) / s + 1,
            wo: (w + 2 * pad - k) / s + 1,
        }
    }

    fn out_positions(&self) -> usize {
        self.ho * self.wo
    }

    /// `cols[(c*k + ky)*k + kx][oy*wo + ox]`, zero where the patch hits padding.
    fn im2col<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let p = self.out_positions();
        let mut cols = vec![T::zero(); self.c * self.k * self.k * p];
        for c in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = ((c * self.k + ky) * self.k + kx) * p;
                    for oy in 0..self.ho {
                        let iy = (oy * self.s + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src = &x[(c * self.h + iy as usize) * self.w..][..self.w];
                        let dst = &mut cols[row + oy * self.wo..row + (oy + 1) * self.wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.s + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.out_positions();
        for c in 0..self.c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = ((c * self.k + ky) * self.k + kx) * p;
                    for oy in 0..self.ho {
                        let iy = (oy * self.s + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut dx[(c * self.h + iy as usize) * self.w..][..self.w];
                        for ox in 0..self.wo {
                            let ix = (ox * self.s + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += cols[row + oy * self.wo + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}
