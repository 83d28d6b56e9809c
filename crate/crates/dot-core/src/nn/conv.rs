//! Convolution, transposed convolution and max pooling.
//!
//! Convolutions run per sample through im2col/col2im and one GEMM; the
//! transposed convolution is implemented as the exact adjoint of a
//! convolution with the same geometry. Batch items are independent, so
//! forward activations and input gradients parallelize over the batch;
//! weight-gradient reductions merge per-block buffers in a fixed order to
//! stay deterministic under any thread count.

use super::layers::{Layer, LayerSpec, Param};
use super::{Elem, Tensor};
use crate::par;
use crate::{DotError, Result};

#[derive(Clone, Copy)]
struct Geometry {
    ch_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn cols_rows(&self) -> usize {
        self.ch_in * self.kh * self.kw
    }

    fn cols_len(&self) -> usize {
        self.cols_rows() * self.oh * self.ow
    }
}

/// Unrolls conv patches: `cols[(c kh + ky) kw + kx, oy ow + ox] =
/// x[c, oy sh + ky - ph, ox sw + kx - pw]` (zero outside).
fn im2col<T: Elem>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let patch = g.oh * g.ow;
    for c in 0..g.ch_in {
        let chan = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let out = &mut cols[row * patch..(row + 1) * patch];
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        out[oy * g.ow..(oy + 1) * g.ow].fill(T::zero());
                        continue;
                    }
                    let src_row = &chan[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.sw + kx) as isize - g.pw as isize;
                        out[oy * g.ow + ox] = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add adjoint of `im2col`.
fn col2im<T: Elem>(cols: &[T], g: &Geometry, x: &mut [T]) {
    let patch = g.oh * g.ow;
    for c in 0..g.ch_in {
        let chan = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * patch..(row + 1) * patch];
                for oy in 0..g.oh {
                    let iy = (oy * g.sh + ky) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst_row = &mut chan[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.sw + kx) as isize - g.pw as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

pub struct Conv2d<T> {
    pub w: Param<T>,
    pub b: Param<T>,
    stride: [usize; 2],
    padding: [usize; 2],
    cache: Option<Tensor<T>>,
}

impl<T: Elem> Conv2d<T> {
    pub fn new(w: Param<T>, b: Param<T>, stride: [usize; 2], padding: [usize; 2]) -> Self {
        Conv2d {
            w,
            b,
            stride,
            padding,
            cache: None,
        }
    }

    fn geometry(&self, shape: &[usize]) -> Result<Geometry> {
        let spec = Layer::<T>::spec(self);
        let out = spec.out_shape(shape)?;
        let k = &self.w.value.shape;
        Ok(Geometry {
            ch_in: shape[1],
            h: shape[2],
            w: shape[3],
            kh: k[2],
            kw: k[3],
            sh: self.stride[0],
            sw: self.stride[1],
            ph: self.padding[0],
            pw: self.padding[1],
            oh: out[2],
            ow: out[3],
        })
    }
}

impl<T: Elem> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.geometry(&x.shape)?;
        let out_ch = self.w.value.shape[0];
        let n = x.shape[0];
        let item_in = x.item_len();
        let item_out = out_ch * g.oh * g.ow;
        let mut y = Tensor::zeros(&[n, out_ch, g.oh, g.ow]);
        let w = &self.w.value.data;
        let b = &self.b.value.data;
        let xd = &x.data;
        par::for_each_chunk(&mut y.data, item_out, |start, out| {
            let s = start / item_out;
            let mut cols = vec![T::zero(); g.cols_len()];
            im2col(&xd[s * item_in..(s + 1) * item_in], &g, &mut cols);
            let patch = g.oh * g.ow;
            for (c, bias) in b.iter().enumerate() {
                out[c * patch..(c + 1) * patch].fill(*bias);
            }
            unsafe {
                T::gemm(
                    out_ch,
                    g.cols_rows(),
                    patch,
                    T::one(),
                    w.as_ptr(),
                    g.cols_rows() as isize,
                    1,
                    cols.as_ptr(),
                    patch as isize,
                    1,
                    T::one(),
                    out.as_mut_ptr(),
                    patch as isize,
                    1,
                );
            }
        });
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, gout: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| DotError::Config("conv backward before forward".into()))?
            .clone();
        let g = self.geometry(&x.shape)?;
        let out_ch = self.w.value.shape[0];
        let n = x.shape[0];
        let item_in = x.item_len();
        let item_out = gout.item_len();
        let patch = g.oh * g.ow;
        let rows = g.cols_rows();

        // input gradient: disjoint per sample
        let mut gx = Tensor::zeros(&x.shape);
        {
            let w = &self.w.value.data;
            let gd = &gout.data;
            par::for_each_chunk(&mut gx.data, item_in, |start, dst| {
                let s = start / item_in;
                let mut cols = vec![T::zero(); g.cols_len()];
                unsafe {
                    T::gemm(
                        rows,
                        out_ch,
                        patch,
                        T::one(),
                        w.as_ptr(),
                        1,
                        rows as isize,
                        gd[s * item_out..].as_ptr(),
                        patch as isize,
                        1,
                        T::zero(),
                        cols.as_mut_ptr(),
                        patch as isize,
                        1,
                    );
                }
                dst.fill(T::zero());
                col2im(&cols, &g, dst);
            });
        }

        // weight/bias gradients: per-block accumulators merged in order
        let wlen = self.w.value.data.len();
        let (wacc, bacc) = par::block_accumulate(
            n,
            par::threads(),
            || (vec![T::zero(); wlen], vec![T::zero(); out_ch]),
            |range, acc| {
                let mut cols = vec![T::zero(); g.cols_len()];
                for s in range {
                    im2col(&x.data[s * item_in..(s + 1) * item_in], &g, &mut cols);
                    let gs = &gout.data[s * item_out..(s + 1) * item_out];
                    unsafe {
                        T::gemm(
                            out_ch,
                            patch,
                            rows,
                            T::one(),
                            gs.as_ptr(),
                            patch as isize,
                            1,
                            cols.as_ptr(),
                            1,
                            patch as isize,
                            T::one(),
                            acc.0.as_mut_ptr(),
                            rows as isize,
                            1,
                        );
                    }
                    for c in 0..out_ch {
                        let mut sum = T::zero();
                        for v in &gs[c * patch..(c + 1) * patch] {
                            sum = sum + *v;
                        }
                        acc.1[c] = acc.1[c] + sum;
                    }
                }
            },
            |mut a, b| {
                for (x, y) in a.0.iter_mut().zip(&b.0) {
                    *x = *x + *y;
                }
                for (x, y) in a.1.iter_mut().zip(&b.1) {
                    *x = *x + *y;
                }
                a
            },
        );
        for (gw, a) in self.w.grad.data.iter_mut().zip(&wacc) {
            *gw = *gw + *a;
        }
        for (gb, a) in self.b.grad.data.iter_mut().zip(&bacc) {
            *gb = *gb + *a;
        }
        Ok(gx)
    }

    fn params(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w, &mut self.b]
    }

    fn spec(&self) -> LayerSpec {
        let k = &self.w.value.shape;
        LayerSpec::Conv2d {
            in_ch: k[1],
            out_ch: k[0],
            kernel: [k[2], k[3]],
            stride: self.stride,
            padding: self.padding,
        }
    }
}

/// Transposed convolution: the exact adjoint of `Conv2d` with the same
/// kernel/stride/padding, mapping `[in_ch, h, w]` to
/// `[out_ch, (h-1) s + k - 2p, ...]`. Weights are stored `[in_ch, out_ch,
/// kh, kw]` with one bias per output channel.
pub struct ConvTranspose2d<T> {
    pub w: Param<T>,
    pub b: Param<T>,
    stride: [usize; 2],
    padding: [usize; 2],
    cache: Option<Tensor<T>>,
}

impl<T: Elem> ConvTranspose2d<T> {
    pub fn new(w: Param<T>, b: Param<T>, stride: [usize; 2], padding: [usize; 2]) -> Self {
        ConvTranspose2d {
            w,
            b,
            stride,
            padding,
            cache: None,
        }
    }

    /// Geometry of the adjoint convolution (maps output back to input).
    fn geometry(&self, in_shape: &[usize], out_shape: &[usize]) -> Geometry {
        let k = &self.w.value.shape;
        Geometry {
            ch_in: out_shape[1],
            h: out_shape[2],
            w: out_shape[3],
            kh: k[2],
            kw: k[3],
            sh: self.stride[0],
            sw: self.stride[1],
            ph: self.padding[0],
            pw: self.padding[1],
            oh: in_shape[2],
            ow: in_shape[3],
        }
    }
}

impl<T: Elem> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let spec = Layer::<T>::spec(self);
        let out_shape = spec.out_shape(&x.shape)?;
        let g = self.geometry(&x.shape, &out_shape);
        let in_ch = self.w.value.shape[0];
        let item_in = x.item_len();
        let item_out: usize = out_shape[1..].iter().product();
        let patch = g.oh * g.ow; // input spatial size
        let rows = g.cols_rows(); // out_ch * kh * kw
        let mut y = Tensor::zeros(&out_shape);
        let w = &self.w.value.data;
        let b = &self.b.value.data;
        let xd = &x.data;
        par::for_each_chunk(&mut y.data, item_out, |start, out| {
            let s = start / item_out;
            // cols = W^T x, scattered back through the adjoint geometry
            let mut cols = vec![T::zero(); rows * patch];
            unsafe {
                T::gemm(
                    rows,
                    in_ch,
                    patch,
                    T::one(),
                    w.as_ptr(),
                    1,
                    rows as isize,
                    xd[s * item_in..].as_ptr(),
                    patch as isize,
                    1,
                    T::zero(),
                    cols.as_mut_ptr(),
                    patch as isize,
                    1,
                );
            }
            let spatial = g.h * g.w;
            for (c, bias) in b.iter().enumerate() {
                out[c * spatial..(c + 1) * spatial].fill(*bias);
            }
            col2im(&cols, &g, out);
        });
        self.cache = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, gout: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .as_ref()
            .ok_or_else(|| DotError::Config("conv-transpose backward before forward".into()))?
            .clone();
        let spec = Layer::<T>::spec(self);
        let out_shape = spec.out_shape(&x.shape)?;
        let g = self.geometry(&x.shape, &out_shape);
        let (in_ch, out_ch) = (self.w.value.shape[0], self.w.value.shape[1]);
        let n = x.shape[0];
        let item_in = x.item_len();
        let item_out = gout.item_len();
        let patch = g.oh * g.ow;
        let rows = g.cols_rows();

        // dx = conv(gout) with the adjoint geometry
        let mut gx = Tensor::zeros(&x.shape);
        {
            let w = &self.w.value.data;
            let gd = &gout.data;
            par::for_each_chunk(&mut gx.data, item_in, |start, dst| {
                let s = start / item_in;
                let mut cols = vec![T::zero(); rows * patch];
                im2col(&gd[s * item_out..(s + 1) * item_out], &g, &mut cols);
                unsafe {
                    T::gemm(
                        in_ch,
                        rows,
                        patch,
                        T::one(),
                        w.as_ptr(),
                        rows as isize,
                        1,
                        cols.as_ptr(),
                        patch as isize,
                        1,
                        T::zero(),
                        dst.as_mut_ptr(),
                        patch as isize,
                        1,
                    );
                }
            });
        }

        let wlen = self.w.value.data.len();
        let spatial = g.h * g.w;
        let (wacc, bacc) = par::block_accumulate(
            n,
            par::threads(),
            || (vec![T::zero(); wlen], vec![T::zero(); out_ch]),
            |range, acc| {
                let mut cols = vec![T::zero(); rows * patch];
                for s in range {
                    let gs = &gout.data[s * item_out..(s + 1) * item_out];
                    im2col(gs, &g, &mut cols);
                    unsafe {
                        T::gemm(
                            in_ch,
                            patch,
                            rows,
                            T::one(),
                            x.data[s * item_in..].as_ptr(),
                            patch as isize,
                            1,
                            cols.as_ptr(),
                            1,
                            patch as isize,
                            T::one(),
                            acc.0.as_mut_ptr(),
                            rows as isize,
                            1,
                        );
                    }
                    for c in 0..out_ch {
                        let mut sum = T::zero();
                        for v in &gs[c * spatial..(c + 1) * spatial] {
                            sum = sum + *v;
                        }
                        acc.1[c] = acc.1[c] + sum;
                    }
                }
            },
            |mut a, b| {
                for (x, y) in a.0.iter_mut().zip(&b.0) {
                    *x = *x + *y;
                }
                for (x, y) in a.1.iter_mut().zip(&b.1) {
                    *x = *x + *y;
                }
                a
            },
        );
        for (gw, a) in self.w.grad.data.iter_mut().zip(&wacc) {
            *gw = *gw + *a;
        }
        for (gb, a) in self.b.grad.data.iter_mut().zip(&bacc) {
            *gb = *gb + *a;
        }
        Ok(gx)
    }

    fn params(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w, &mut self.b]
    }

    fn spec(&self) -> LayerSpec {
        let k = &self.w.value.shape;
        LayerSpec::ConvTranspose2d {
            in_ch: k[0],
            out_ch: k[1],
            kernel: [k[2], k[3]],
            stride: self.stride,
            padding: self.padding,
        }
    }
}

pub struct MaxPool2d<T> {
    kernel: usize,
    stride: usize,
    /// Flat input index of each output's argmax.
    argmax: Vec<u32>,
    input_shape: Vec<usize>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Elem> MaxPool2d<T> {
    pub fn new(kernel: usize, stride: usize) -> Self {
        MaxPool2d {
            kernel,
            stride,
            argmax: Vec::new(),
            input_shape: Vec::new(),
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T: Elem> Layer<T> for MaxPool2d<T> {
    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let spec = Layer::<T>::spec(self);
        let out_shape = spec.out_shape(&x.shape)?;
        let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (oh, ow) = (out_shape[2], out_shape[3]);
        let mut y = Tensor::zeros(&out_shape);
        self.argmax = vec![0u32; y.numel()];
        self.input_shape = x.shape.clone();
        let k = self.kernel;
        let s = self.stride;
        for img in 0..n * c {
            let src = &x.data[img * h * w..(img + 1) * h * w];
            let base_out = img * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0usize;
                    for ky in 0..k {
                        for kx in 0..k {
                            let idx = (oy * s + ky) * w + ox * s + kx;
                            if src[idx] > best {
                                best = src[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    y.data[base_out + oy * ow + ox] = best;
                    self.argmax[base_out + oy * ow + ox] = (img * h * w + best_idx) as u32;
                }
            }
        }
        Ok(y)
    }

    fn backward(&mut self, gout: &Tensor<T>) -> Result<Tensor<T>> {
        if self.argmax.len() != gout.numel() {
            return Err(DotError::Config("pool backward before forward".into()));
        }
        let mut gx = Tensor::zeros(&self.input_shape);
        for (gi, &idx) in gout.data.iter().zip(&self.argmax) {
            let slot = &mut gx.data[idx as usize];
            *slot = *slot + *gi;
        }
        Ok(gx)
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::MaxPool2d {
            kernel: self.kernel,
            stride: self.stride,
            dilation: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), c> == <x, col2im(c)> for random x, c
        let g = Geometry {
            ch_in: 2,
            h: 5,
            w: 4,
            kh: 3,
            kw: 3,
            sh: 2,
            sw: 1,
            ph: 1,
            pw: 1,
            oh: 3,
            ow: 4,
        };
        let x: Vec<f64> = (0..2 * 5 * 4).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let c: Vec<f64> = (0..g.cols_len()).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let mut cols = vec![0.0; g.cols_len()];
        im2col(&x, &g, &mut cols);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&c, &g, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn maxpool_halves_and_routes_gradient() {
        let x = Tensor::from_vec(
            &[1, 1, 2, 4],
            vec![1.0, 2.0, 5.0, 3.0, 4.0, 0.0, -1.0, 2.0f64],
        )
        .unwrap();
        let mut pool: MaxPool2d<f64> = MaxPool2d::new(2, 2);
        let y = pool.forward(&x).unwrap();
        assert_eq!(y.shape, vec![1, 1, 1, 2]);
        assert_eq!(y.data, vec![4.0, 5.0]);
        let g = Tensor::from_vec(&[1, 1, 1, 2], vec![10.0, 20.0]).unwrap();
        let gx = pool.backward(&g).unwrap();
        assert_eq!(gx.data, vec![0.0, 0.0, 20.0, 0.0, 10.0, 0.0, 0.0, 0.0]);
    }
}
