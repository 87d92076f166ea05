//! Forward kernels and their adjoints on plain tensors.
//!
//! Convolutions lower to `im2col` plus a matrix product. Transposed
//! convolution reuses the same geometry with the roles of input and output
//! swapped, which makes it the exact adjoint of `conv2d`.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Geometry of a strided, zero-padded 2-D convolution over one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        channels: usize,
        (height, width): (usize, usize),
        (kernel_h, kernel_w): (usize, usize),
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidShape("stride must be at least 1".into()));
        }
        if kernel_h == 0 || kernel_w == 0 {
            return Err(Error::InvalidShape("kernel extents must be at least 1".into()));
        }
        let (ph, pw) = (height + 2 * padding, width + 2 * padding);
        if kernel_h > ph || kernel_w > pw {
            return Err(Error::InvalidShape(format!(
                "kernel {kernel_h}x{kernel_w} larger than padded input {ph}x{pw}"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            kernel_h,
            kernel_w,
            stride,
            padding,
            out_h: (ph - kernel_h) / stride + 1,
            out_w: (pw - kernel_w) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Unfold one `[channels, height, width]` image into a
    /// `[channels * kh * kw, out_h * out_w]` patch matrix.
    fn im2col<T: Scalar>(&self, image: &[T], cols: &mut [T]) {
        let n = self.col_cols();
        let mut row = 0;
        for c in 0..self.channels {
            let plane = &image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..self.kernel_h {
                for kj in 0..self.kernel_w {
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if iy < 0 || iy >= self.height as isize {
                            line.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        for (ox, d) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            *d = if ix < 0 || ix >= self.width as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Scatter-add a patch matrix back onto an image (adjoint of `im2col`).
    fn col2im<T: Scalar>(&self, cols: &[T], image: &mut [T]) {
        let n = self.col_cols();
        let mut row = 0;
        for c in 0..self.channels {
            let plane =
                &mut image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..self.kernel_h {
                for kj in 0..self.kernel_w {
                    let src = &cols[row * n..(row + 1) * n];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            if ix >= 0 && (ix as usize) < self.width {
                                dst[ix as usize] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn check_bias<T: Scalar>(bias: Option<&Tensor<T>>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [channels] {
            return Err(Error::Shape(format!(
                "bias shape {:?} does not match {channels} output channels",
                b.shape()
            )));
        }
    }
    Ok(())
}

fn add_bias<T: Scalar>(out: &mut [T], bias: Option<&Tensor<T>>, plane: usize) {
    if let Some(b) = bias {
        for (chunk, &bv) in out.chunks_mut(plane).zip(b.data().iter().cycle()) {
            for v in chunk {
                *v += bv;
            }
        }
    }
}

fn bias_grad<T: Scalar>(grad_out: &[T], channels: usize, plane: usize) -> Tensor<T> {
    let mut g = vec![T::zero(); channels];
    for (i, chunk) in grad_out.chunks(plane).enumerate() {
        g[i % channels] += chunk.iter().fold(T::zero(), |a, &v| a + v);
    }
    Tensor::from_vec(&[channels], g).expect("nonzero channel count")
}

/// Geometry shared by `conv2d` and its gradients.
pub fn conv2d_geometry<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGeometry> {
    let [_, cin, h, w] = input.dims4()?;
    let [_, kcin, kh, kw] = kernel.dims4()?;
    if kcin != cin {
        return Err(Error::Shape(format!(
            "conv2d: input has {cin} channels, kernel expects {kcin}"
        )));
    }
    ConvGeometry::new(cin, (h, w), (kh, kw), stride, padding)
}

/// `input [B,Cin,H,W] * kernel [Cout,Cin,Kh,Kw] + bias [Cout]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let geo = conv2d_geometry(input, kernel, stride, padding)?;
    let [batch, ..] = input.dims4()?;
    let cout = kernel.shape()[0];
    check_bias(bias, cout)?;
    let (rows, n) = (geo.col_rows(), geo.col_cols());
    let in_len = geo.channels * geo.height * geo.width;
    let mut cols = vec![T::zero(); rows * n];
    let mut out = vec![T::zero(); batch * cout * n];
    for b in 0..batch {
        geo.im2col(&input.data()[b * in_len..(b + 1) * in_len], &mut cols);
        T::gemm(
            cout,
            rows,
            n,
            kernel.data(),
            false,
            &cols,
            false,
            &mut out[b * cout * n..(b + 1) * cout * n],
            false,
        );
    }
    add_bias(&mut out, bias, n);
    Tensor::from_vec(&[batch, cout, geo.out_h, geo.out_w], out)
}

/// Gradients of `conv2d` with respect to input, kernel and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let geo = conv2d_geometry(input, kernel, stride, padding)?;
    let [batch, ..] = input.dims4()?;
    let cout = kernel.shape()[0];
    let (rows, n) = (geo.col_rows(), geo.col_cols());
    let in_len = geo.channels * geo.height * geo.width;
    let mut cols = vec![T::zero(); rows * n];
    let mut dcols = vec![T::zero(); rows * n];
    let mut dinput = vec![T::zero(); input.len()];
    let mut dkernel = vec![T::zero(); kernel.len()];
    for b in 0..batch {
        let g = &grad_out.data()[b * cout * n..(b + 1) * cout * n];
        geo.im2col(&input.data()[b * in_len..(b + 1) * in_len], &mut cols);
        T::gemm(cout, n, rows, g, false, &cols, true, &mut dkernel, true);
        T::gemm(rows, cout, n, kernel.data(), true, g, false, &mut dcols, false);
        geo.col2im(&dcols, &mut dinput[b * in_len..(b + 1) * in_len]);
    }
    Ok((
        Tensor::from_vec(input.shape(), dinput)?,
        Tensor::from_vec(kernel.shape(), dkernel)?,
        bias_grad(grad_out.data(), cout, n),
    ))
}

/// Geometry of the convolution whose adjoint `conv2d_transpose` computes.
/// Its "input" is the transposed convolution's output.
pub fn conv2d_transpose_geometry<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGeometry> {
    let [_, cin, h, w] = input.dims4()?;
    let [kcin, cout, kh, kw] = kernel.dims4()?;
    if kcin != cin {
        return Err(Error::Shape(format!(
            "conv2d_transpose: input has {cin} channels, kernel expects {kcin}"
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidShape("stride must be at least 1".into()));
    }
    let oh = ((h - 1) * stride + kh) as isize - 2 * padding as isize;
    let ow = ((w - 1) * stride + kw) as isize - 2 * padding as isize;
    if oh < 1 || ow < 1 {
        return Err(Error::InvalidShape(format!(
            "conv2d_transpose output would be {oh}x{ow}"
        )));
    }
    let geo = ConvGeometry::new(cout, (oh as usize, ow as usize), (kh, kw), stride, padding)?;
    debug_assert_eq!((geo.out_h, geo.out_w), (h, w));
    Ok(geo)
}

/// Transposed convolution: `input [B,Cin,H,W]`, `kernel [Cin,Cout,Kh,Kw]`,
/// output `[B,Cout,(H-1)*stride-2*padding+Kh, ...]`.
pub fn conv2d_transpose<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let geo = conv2d_transpose_geometry(input, kernel, stride, padding)?;
    let [batch, cin, ..] = input.dims4()?;
    let cout = geo.channels;
    check_bias(bias, cout)?;
    let (rows, n) = (geo.col_rows(), geo.col_cols());
    let out_len = cout * geo.height * geo.width;
    let mut cols = vec![T::zero(); rows * n];
    let mut out = vec![T::zero(); batch * out_len];
    for b in 0..batch {
        let x = &input.data()[b * cin * n..(b + 1) * cin * n];
        T::gemm(rows, cin, n, kernel.data(), true, x, false, &mut cols, false);
        geo.col2im(&cols, &mut out[b * out_len..(b + 1) * out_len]);
    }
    add_bias(&mut out, bias, geo.height * geo.width);
    Tensor::from_vec(&[batch, cout, geo.height, geo.width], out)
}

pub fn conv2d_transpose_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let geo = conv2d_transpose_geometry(input, kernel, stride, padding)?;
    let [batch, cin, ..] = input.dims4()?;
    let cout = geo.channels;
    let (rows, n) = (geo.col_rows(), geo.col_cols());
    let out_len = cout * geo.height * geo.width;
    let mut dcols = vec![T::zero(); rows * n];
    let mut dinput = vec![T::zero(); input.len()];
    let mut dkernel = vec![T::zero(); kernel.len()];
    for b in 0..batch {
        geo.im2col(&grad_out.data()[b * out_len..(b + 1) * out_len], &mut dcols);
        let x = &input.data()[b * cin * n..(b + 1) * cin * n];
        T::gemm(
            cin,
            rows,
            n,
            kernel.data(),
            false,
            &dcols,
            false,
            &mut dinput[b * cin * n..(b + 1) * cin * n],
            false,
        );
        T::gemm(cin, n, rows, x, false, &dcols, true, &mut dkernel, true);
    }
    Ok((
        Tensor::from_vec(input.shape(), dinput)?,
        Tensor::from_vec(kernel.shape(), dkernel)?,
        bias_grad(grad_out.data(), cout, geo.height * geo.width),
    ))
}

/// Nearest-neighbour 2x upsampling: every pixel becomes a 2x2 block.
pub fn up2_nearest<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = input.dims4()?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); b * c * oh * ow];
    for (plane, src) in out.chunks_mut(oh * ow).zip(input.data().chunks(h * w)) {
        for y in 0..oh {
            let row = &src[(y / 2) * w..(y / 2 + 1) * w];
            for (x, v) in plane[y * ow..(y + 1) * ow].iter_mut().enumerate() {
                *v = row[x / 2];
            }
        }
    }
    Tensor::from_vec(&[b, c, oh, ow], out)
}

/// Adjoint of `up2_nearest`: sums each 2x2 block.
pub fn up2_nearest_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, oh, ow] = grad_out.dims4()?;
    let (h, w) = (oh / 2, ow / 2);
    let mut out = vec![T::zero(); b * c * h * w];
    for (plane, src) in out.chunks_mut(h * w).zip(grad_out.data().chunks(oh * ow)) {
        for y in 0..oh {
            for x in 0..ow {
                plane[(y / 2) * w + x / 2] += src[y * ow + x];
            }
        }
    }
    Tensor::from_vec(&[b, c, h, w], out)
}

/// Average each disjoint 2x2 block. Requires even spatial extents.
pub fn down2_average<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidShape(format!(
            "down2_average needs even extents, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let mut out = vec![T::zero(); b * c * oh * ow];
    for (plane, src) in out.chunks_mut(oh * ow).zip(input.data().chunks(h * w)) {
        for y in 0..oh {
            for x in 0..ow {
                let (r0, r1) = (2 * y * w, (2 * y + 1) * w);
                let s = src[r0 + 2 * x] + src[r0 + 2 * x + 1] + src[r1 + 2 * x] + src[r1 + 2 * x + 1];
                plane[y * ow + x] = s * quarter;
            }
        }
    }
    Tensor::from_vec(&[b, c, oh, ow], out)
}

/// Adjoint of `down2_average`: spreads a quarter of each gradient over its
/// block.
pub fn down2_average_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, oh, ow] = grad_out.dims4()?;
    let (h, w) = (2 * oh, 2 * ow);
    let quarter = T::from_f64(0.25);
    let mut out = vec![T::zero(); b * c * h * w];
    for (plane, src) in out.chunks_mut(h * w).zip(grad_out.data().chunks(oh * ow)) {
        for y in 0..h {
            for x in 0..w {
                plane[y * w + x] = src[(y / 2) * ow + x / 2] * quarter;
            }
        }
    }
    Tensor::from_vec(&[b, c, h, w], out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn validate(self) -> Result<Self> {
        match self {
            Activation::LeakyRelu(s) if !(s > 0.0 && s < 1.0) => Err(Error::Contract(format!(
                "leaky_relu slope must lie in (0,1), got {s}"
            ))),
            other => Ok(other),
        }
    }

    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::LeakyRelu(s) => {
                if x >= T::zero() {
                    x
                } else {
                    x * T::from_f64(s)
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::LeakyRelu(s) => {
                if x >= T::zero() {
                    T::one()
                } else {
                    T::from_f64(s)
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    // Evaluate on the side where exp cannot overflow.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn activation<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Result<Tensor<T>> {
    let kind = kind.validate()?;
    Ok(input.map(|v| kind.apply(v)))
}

/// Concatenate `a [B,Ca,H,W]` and `b [B,Cb,H,W]` along channels.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [ba, ca, ha, wa] = a.dims4()?;
    let [bb, cb, hb, wb] = b.dims4()?;
    if (ba, ha, wa) != (bb, hb, wb) {
        return Err(Error::Shape(format!(
            "concat_channels: {:?} and {:?} differ outside the channel axis",
            a.shape(),
            b.shape()
        )));
    }
    let plane = ha * wa;
    let mut out = Vec::with_capacity(a.len() + b.len());
    for i in 0..ba {
        out.extend_from_slice(&a.data()[i * ca * plane..(i + 1) * ca * plane]);
        out.extend_from_slice(&b.data()[i * cb * plane..(i + 1) * cb * plane]);
    }
    Tensor::from_vec(&[ba, ca + cb, ha, wa], out)
}
