//! Define-by-run reverse-mode tape over real and complex grids.
//!
//! Forward builders append one node per op, eagerly computing values into
//! flat buffers; `backward` replays the node list once in reverse. Complex
//! cotangents follow the conjugate convention (`zbar = dL/dRe(z) + i dL/dIm(z)`
//! for real-valued `L`), which is why the multiplicative VJPs conjugate the
//! untouched factor and the FFT adjoints are the opposite-direction
//! unnormalized transforms.

use num_complex::Complex;

use super::conv;
use super::conv::GroupNormCache;
use super::fft;
use super::scalar::{lit, Scalar};
use super::tensor::{batch_hw, ComplexTensor, Tensor};
use super::NumericsError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Clone, Debug)]
pub enum Value<T> {
    Real(Tensor<T>),
    Complex(ComplexTensor<T>),
}

impl<T: Scalar> Value<T> {
    pub fn shape(&self) -> &[usize] {
        match self {
            Value::Real(t) => t.shape(),
            Value::Complex(t) => t.shape(),
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            Value::Real(t) => t.all_finite(),
            Value::Complex(t) => t.all_finite(),
        }
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    ScalarMul(NodeId, T),
    Gelu { x: NodeId, tanh_u: Vec<T> },
    Relu(NodeId),
    Mean(NodeId),
    ConcatChan(Vec<NodeId>),
    SliceChan { x: NodeId, start: usize },
    Pointwise { x: NodeId, w: NodeId, b: NodeId },
    Conv2d { x: NodeId, w: NodeId, b: NodeId, stride: usize },
    ConvTranspose2d { x: NodeId, w: NodeId, b: NodeId },
    GroupNorm { x: NodeId, gamma: NodeId, beta: NodeId, groups: usize, cache: GroupNormCache<T> },
    ToComplex(NodeId),
    RealPart(NodeId),
    Fft2(NodeId),
    Ifft2(NodeId),
    ComplexMul(NodeId, NodeId),
    GatherCorner(NodeId),
    HermitianScatter(NodeId),
    SpectralContract { x: NodeId, w: NodeId },
}

struct Node<T> {
    value: Value<T>,
    op: Op<T>,
    needs_grad: bool,
}

enum GradBuf<T> {
    Real(Vec<T>),
    Complex(Vec<Complex<T>>),
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<GradBuf<T>>>,
}

fn err_shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn err_invalid(op: &'static str, msg: impl Into<String>) -> NumericsError {
    NumericsError::Invalid { op, msg: msg.into() }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, value: Value<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    /// Non-differentiable real input: backward never reaches its subtree.
    pub fn constant(&mut self, t: Tensor<T>) -> NodeId {
        self.push(Value::Real(t), Op::Leaf, false)
    }

    pub fn constant_complex(&mut self, t: ComplexTensor<T>) -> NodeId {
        self.push(Value::Complex(t), Op::Leaf, false)
    }

    /// Differentiable real leaf (parameter or probed input).
    pub fn leaf(&mut self, t: Tensor<T>) -> NodeId {
        self.push(Value::Real(t), Op::Leaf, true)
    }

    pub fn leaf_complex(&mut self, t: ComplexTensor<T>) -> NodeId {
        self.push(Value::Complex(t), Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Value<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Real value of a node. Panics if the node is complex-valued; ops check
    /// kinds at construction so hitting that panic means a bug in the caller.
    pub fn real(&self, id: NodeId) -> &Tensor<T> {
        match &self.nodes[id.0].value {
            Value::Real(t) => t,
            Value::Complex(_) => panic!("node {:?} is complex-valued", id),
        }
    }

    pub fn complex(&self, id: NodeId) -> &ComplexTensor<T> {
        match &self.nodes[id.0].value {
            Value::Complex(t) => t,
            Value::Real(_) => panic!("node {:?} is real-valued", id),
        }
    }

    fn want_real(&self, op: &'static str, id: NodeId) -> Result<&Tensor<T>, NumericsError> {
        match &self.nodes[id.0].value {
            Value::Real(t) => Ok(t),
            Value::Complex(t) => Err(err_invalid(
                op,
                format!("expected real operand, got complex with shape {:?}", t.shape()),
            )),
        }
    }

    fn want_complex(&self, op: &'static str, id: NodeId) -> Result<&ComplexTensor<T>, NumericsError> {
        match &self.nodes[id.0].value {
            Value::Complex(t) => Ok(t),
            Value::Real(t) => Err(err_invalid(
                op,
                format!("expected complex operand, got real with shape {:?}", t.shape()),
            )),
        }
    }

    fn any_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let ng = self.any_grad(&[a, b]);
        match (&self.nodes[a.0].value, &self.nodes[b.0].value) {
            (Value::Real(x), Value::Real(y)) => {
                if x.shape() != y.shape() {
                    return Err(err_shape("add", x.shape(), y.shape()));
                }
                let data = x.data().iter().zip(y.data()).map(|(&u, &v)| u + v).collect();
                let t = Tensor::from_vec(x.shape(), data);
                Ok(self.push(Value::Real(t), Op::Add(a, b), ng))
            }
            (Value::Complex(x), Value::Complex(y)) => {
                if x.shape() != y.shape() {
                    return Err(err_shape("add", x.shape(), y.shape()));
                }
                let data = x.data().iter().zip(y.data()).map(|(&u, &v)| u + v).collect();
                let t = ComplexTensor::from_vec(x.shape(), data);
                Ok(self.push(Value::Complex(t), Op::Add(a, b), ng))
            }
            _ => Err(err_invalid("add", "operands mix real and complex")),
        }
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let ng = self.any_grad(&[a, b]);
        match (&self.nodes[a.0].value, &self.nodes[b.0].value) {
            (Value::Real(x), Value::Real(y)) => {
                if x.shape() != y.shape() {
                    return Err(err_shape("sub", x.shape(), y.shape()));
                }
                let data = x.data().iter().zip(y.data()).map(|(&u, &v)| u - v).collect();
                let t = Tensor::from_vec(x.shape(), data);
                Ok(self.push(Value::Real(t), Op::Sub(a, b), ng))
            }
            (Value::Complex(x), Value::Complex(y)) => {
                if x.shape() != y.shape() {
                    return Err(err_shape("sub", x.shape(), y.shape()));
                }
                let data = x.data().iter().zip(y.data()).map(|(&u, &v)| u - v).collect();
                let t = ComplexTensor::from_vec(x.shape(), data);
                Ok(self.push(Value::Complex(t), Op::Sub(a, b), ng))
            }
            _ => Err(err_invalid("sub", "operands mix real and complex")),
        }
    }

    /// Elementwise product of two real grids.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let x = self.want_real("mul", a)?;
        let y = self.want_real("mul", b)?;
        if x.shape() != y.shape() {
            return Err(err_shape("mul", x.shape(), y.shape()));
        }
        let data: Vec<T> = x.data().iter().zip(y.data()).map(|(&u, &v)| u * v).collect();
        let t = Tensor::from_vec(x.shape(), data);
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(Value::Real(t), Op::Mul(a, b), ng))
    }

    /// Elementwise product of two complex grids.
    pub fn complex_mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let x = self.want_complex("complex_mul", a)?;
        let y = self.want_complex("complex_mul", b)?;
        if x.shape() != y.shape() {
            return Err(err_shape("complex_mul", x.shape(), y.shape()));
        }
        let data: Vec<Complex<T>> = x.data().iter().zip(y.data()).map(|(&u, &v)| u * v).collect();
        let t = ComplexTensor::from_vec(x.shape(), data);
        let ng = self.any_grad(&[a, b]);
        Ok(self.push(Value::Complex(t), Op::ComplexMul(a, b), ng))
    }

    /// Multiply by a real constant (works on both kinds).
    pub fn scalar_mul(&mut self, a: NodeId, c: T) -> Result<NodeId, NumericsError> {
        let ng = self.nodes[a.0].needs_grad;
        match &self.nodes[a.0].value {
            Value::Real(x) => {
                let t = x.map(|v| v * c);
                Ok(self.push(Value::Real(t), Op::ScalarMul(a, c), ng))
            }
            Value::Complex(x) => {
                let data = x.data().iter().map(|z| Complex::new(z.re * c, z.im * c)).collect();
                let t = ComplexTensor::from_vec(x.shape(), data);
                Ok(self.push(Value::Complex(t), Op::ScalarMul(a, c), ng))
            }
        }
    }

    /// GELU in its tanh form:
    /// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
    /// The backward pass differentiates this same expression, not the exact
    /// Gaussian CDF, so gradient checks close to machine precision.
    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let x = self.want_real("gelu", a)?;
        let c = lit::<T>(0.7978845608028654); // sqrt(2/pi)
        let k = lit::<T>(0.044715);
        let half = lit::<T>(0.5);
        let mut tanh_u = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        for &v in x.data() {
            let t = (c * (v + k * v * v * v)).tanh();
            tanh_u.push(t);
            out.push(half * v * (T::one() + t));
        }
        let t = Tensor::from_vec(x.shape(), out);
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Value::Real(t), Op::Gelu { x: a, tanh_u }, ng))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let x = self.want_real("relu", a)?;
        let t = x.map(|v| if v > T::zero() { v } else { T::zero() });
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Value::Real(t), Op::Relu(a), ng))
    }

    /// Mean over all elements; the output is a rank-0 grid holding one value.
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let x = self.want_real("mean", a)?;
        if x.is_empty() {
            return Err(err_invalid("mean", "empty input"));
        }
        let mut acc = T::zero();
        for &v in x.data() {
            acc = acc + v;
        }
        let n = T::from_usize(x.len()).unwrap();
        let t = Tensor::scalar(acc / n);
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Value::Real(t), Op::Mean(a), ng))
    }

    // ---- channel plumbing ----

    /// Stack rank-3 real grids along the channel axis.
    pub fn concat_chan(&mut self, parts: &[NodeId]) -> Result<NodeId, NumericsError> {
        if parts.is_empty() {
            return Err(err_invalid("concat_chan", "no inputs"));
        }
        let first = self.want_real("concat_chan", parts[0])?;
        if first.shape().len() != 3 {
            return Err(err_invalid(
                "concat_chan",
                format!("inputs must be rank 3 (C,H,W), got {:?}", first.shape()),
            ));
        }
        let (h, w) = (first.shape()[1], first.shape()[2]);
        let mut c_total = 0usize;
        for &p in parts {
            let t = self.want_real("concat_chan", p)?;
            if t.shape().len() != 3 || t.shape()[1] != h || t.shape()[2] != w {
                return Err(err_shape("concat_chan", first.shape(), t.shape()));
            }
            c_total += t.shape()[0];
        }
        let mut data = Vec::with_capacity(c_total * h * w);
        for &p in parts {
            data.extend_from_slice(self.real(p).data());
        }
        let t = Tensor::from_vec(&[c_total, h, w], data);
        let ng = self.any_grad(parts);
        Ok(self.push(Value::Real(t), Op::ConcatChan(parts.to_vec()), ng))
    }

    /// Contiguous channel slice `[start, start+len)` of a rank-3 real grid.
    pub fn slice_chan(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, NumericsError> {
        let x = self.want_real("slice_chan", a)?;
        if x.shape().len() != 3 {
            return Err(err_invalid(
                "slice_chan",
                format!("input must be rank 3 (C,H,W), got {:?}", x.shape()),
            ));
        }
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if len == 0 || start + len > c {
            return Err(err_invalid(
                "slice_chan",
                format!("slice [{start}, {}) out of range for {c} channels", start + len),
            ));
        }
        let data = x.data()[start * h * w..(start + len) * h * w].to_vec();
        let t = Tensor::from_vec(&[len, h, w], data);
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Value::Real(t), Op::SliceChan { x: a, start }, ng))
    }

    // ---- linear layers ----

    /// Per-pixel channel contraction: x (Ci,H,W) * w (Ci,Co) + b (Co).
    pub fn pointwise(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let xv = self.want_real("pointwise", x)?;
        let wv = self.want_real("pointwise", w)?;
        let bv = self.want_real("pointwise", b)?;
        if xv.shape().len() != 3 {
            return Err(err_invalid(
                "pointwise",
                format!("input must be rank 3 (C,H,W), got {:?}", xv.shape()),
            ));
        }
        let (ci, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if wv.shape().len() != 2 || wv.shape()[0] != ci {
            return Err(err_shape("pointwise", xv.shape(), wv.shape()));
        }
        let co = wv.shape()[1];
        if bv.shape() != [co] {
            return Err(err_shape("pointwise", wv.shape(), bv.shape()));
        }
        let mut out = vec![T::zero(); co * h * wd];
        conv::pointwise_forward(xv.data(), ci, h * wd, wv.data(), co, bv.data(), &mut out);
        let t = Tensor::from_vec(&[co, h, wd], out);
        let ng = self.any_grad(&[x, w, b]);
        Ok(self.push(Value::Real(t), Op::Pointwise { x, w, b }, ng))
    }

    /// Periodic 2D convolution: x (Ci,H,W), w (Co,Ci,kh,kw) with odd kernel
    /// sides, stride 1 or 2. Wrap indexing in both axes, no zero padding.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> Result<NodeId, NumericsError> {
        let xv = self.want_real("conv2d", x)?;
        let wv = self.want_real("conv2d", w)?;
        let bv = self.want_real("conv2d", b)?;
        if xv.shape().len() != 3 {
            return Err(err_invalid(
                "conv2d",
                format!("input must be rank 3 (C,H,W), got {:?}", xv.shape()),
            ));
        }
        if wv.shape().len() != 4 {
            return Err(err_invalid(
                "conv2d",
                format!("weight must be rank 4 (Co,Ci,kh,kw), got {:?}", wv.shape()),
            ));
        }
        let (ci, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let (co, wci, kh, kw) = (wv.shape()[0], wv.shape()[1], wv.shape()[2], wv.shape()[3]);
        if wci != ci {
            return Err(err_shape("conv2d", xv.shape(), wv.shape()));
        }
        if kh % 2 == 0 || kw % 2 == 0 || kh > h || kw > wd {
            return Err(err_invalid(
                "conv2d",
                format!("kernel {kh}x{kw} must be odd-sided and fit a {h}x{wd} grid"),
            ));
        }
        if stride != 1 && stride != 2 {
            return Err(err_invalid("conv2d", format!("stride must be 1 or 2, got {stride}")));
        }
        if stride == 2 && (h % 2 != 0 || wd % 2 != 0) {
            return Err(err_invalid(
                "conv2d",
                format!("stride 2 requires even grid, got {h}x{wd}"),
            ));
        }
        if bv.shape() != [co] {
            return Err(err_shape("conv2d", wv.shape(), bv.shape()));
        }
        let (oh, ow) = (h / stride, wd / stride);
        let mut out = vec![T::zero(); co * oh * ow];
        conv::conv2d_forward(
            xv.data(),
            ci,
            h,
            wd,
            wv.data(),
            co,
            kh,
            kw,
            bv.data(),
            stride,
            &mut out,
        );
        let t = Tensor::from_vec(&[co, oh, ow], out);
        let ng = self.any_grad(&[x, w, b]);
        Ok(self.push(Value::Real(t), Op::Conv2d { x, w, b, stride }, ng))
    }

    /// 2x2 stride-2 transposed convolution: x (Ci,H,W), w (Ci,Co,2,2),
    /// output (Co,2H,2W).
    pub fn conv_transpose2d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let xv = self.want_real("conv_transpose2d", x)?;
        let wv = self.want_real("conv_transpose2d", w)?;
        let bv = self.want_real("conv_transpose2d", b)?;
        if xv.shape().len() != 3 {
            return Err(err_invalid(
                "conv_transpose2d",
                format!("input must be rank 3 (C,H,W), got {:?}", xv.shape()),
            ));
        }
        let (ci, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if wv.shape().len() != 4 || wv.shape()[0] != ci || wv.shape()[2] != 2 || wv.shape()[3] != 2 {
            return Err(err_shape("conv_transpose2d", xv.shape(), wv.shape()));
        }
        let co = wv.shape()[1];
        if bv.shape() != [co] {
            return Err(err_shape("conv_transpose2d", wv.shape(), bv.shape()));
        }
        let mut out = vec![T::zero(); co * 4 * h * wd];
        conv::conv_transpose2d_forward(xv.data(), ci, h, wd, wv.data(), co, bv.data(), &mut out);
        let t = Tensor::from_vec(&[co, 2 * h, 2 * wd], out);
        let ng = self.any_grad(&[x, w, b]);
        Ok(self.push(Value::Real(t), Op::ConvTranspose2d { x, w, b }, ng))
    }

    /// Group normalization over (C/groups, H, W) blocks with affine params.
    pub fn group_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
        eps: T,
    ) -> Result<NodeId, NumericsError> {
        let xv = self.want_real("group_norm", x)?;
        let gv = self.want_real("group_norm", gamma)?;
        let bv = self.want_real("group_norm", beta)?;
        if xv.shape().len() != 3 {
            return Err(err_invalid(
                "group_norm",
                format!("input must be rank 3 (C,H,W), got {:?}", xv.shape()),
            ));
        }
        let (c, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if groups == 0 || c % groups != 0 {
            return Err(err_invalid(
                "group_norm",
                format!("groups {groups} must divide {c} channels"),
            ));
        }
        if gv.shape() != [c] || bv.shape() != [c] {
            return Err(err_shape("group_norm", xv.shape(), gv.shape()));
        }
        let mut out = vec![T::zero(); c * h * wd];
        let cache = conv::group_norm_forward(
            xv.data(),
            c,
            h * wd,
            groups,
            gv.data(),
            bv.data(),
            eps,
            &mut out,
        );
        let t = Tensor::from_vec(&[c, h, wd], out);
        let ng = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            Value::Real(t),
            Op::GroupNorm { x, gamma, beta, groups, cache },
            ng,
        ))
    }

    // ---- spectral path ----

    pub fn to_complex(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let x = self.want_real("to_complex", a)?;
        let t = x.to_complex();
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Value::Complex(t), Op::ToComplex(a), ng))
    }

    pub fn real_part(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let x = self.want_complex("real_part", a)?;
        let t = x.re();
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Value::Real(t), Op::RealPart(a), ng))
    }

    /// Unnormalized forward 2D DFT over the last two axes.
    pub fn fft2(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let x = self.want_complex("fft2", a)?;
        if x.shape().len() < 2 {
            return Err(err_invalid("fft2", format!("need rank >= 2, got {:?}", x.shape())));
        }
        let t = fft::fft2(x);
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Value::Complex(t), Op::Fft2(a), ng))
    }

    /// Inverse 2D DFT over the last two axes, carrying the 1/(H*W) factor.
    pub fn ifft2(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let x = self.want_complex("ifft2", a)?;
        if x.shape().len() < 2 {
            return Err(err_invalid("ifft2", format!("need rank >= 2, got {:?}", x.shape())));
        }
        let t = fft::ifft2(x);
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Value::Complex(t), Op::Ifft2(a), ng))
    }

    /// Copy the low-frequency corner block `[0..mx, 0..my]` of each channel.
    pub fn gather_corner(&mut self, a: NodeId, mx: usize, my: usize) -> Result<NodeId, NumericsError> {
        let x = self.want_complex("gather_corner", a)?;
        if x.shape().len() != 3 {
            return Err(err_invalid(
                "gather_corner",
                format!("input must be rank 3 (C,H,W), got {:?}", x.shape()),
            ));
        }
        let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if mx == 0 || my == 0 || mx > h || my > w {
            return Err(err_invalid(
                "gather_corner",
                format!("corner {mx}x{my} out of range for {h}x{w} grid"),
            ));
        }
        let mut data = Vec::with_capacity(c * mx * my);
        for ch in 0..c {
            for i in 0..mx {
                let base = (ch * h + i) * w;
                data.extend_from_slice(&x.data()[base..base + my]);
            }
        }
        let t = ComplexTensor::from_vec(&[c, mx, my], data);
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Value::Complex(t), Op::GatherCorner(a), ng))
    }

    /// Embed a (C,mx,my) low-frequency block into a full (C,H,W) spectrum with
    /// Hermitian symmetry: every written mode also writes its conjugate at the
    /// mirrored index, and the (0,0) mode keeps only its real part, so the
    /// inverse transform of the result is real up to roundoff.
    pub fn hermitian_scatter(&mut self, a: NodeId, h: usize, w: usize) -> Result<NodeId, NumericsError> {
        let x = self.want_complex("hermitian_scatter", a)?;
        if x.shape().len() != 3 {
            return Err(err_invalid(
                "hermitian_scatter",
                format!("input must be rank 3 (C,mx,my), got {:?}", x.shape()),
            ));
        }
        let (c, mx, my) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if mx == 0 || my == 0 || 2 * mx > h || 2 * my > w {
            return Err(err_invalid(
                "hermitian_scatter",
                format!("corner {mx}x{my} must satisfy mx <= H/2, my <= W/2 for a {h}x{w} grid"),
            ));
        }
        let zero = Complex::new(T::zero(), T::zero());
        let mut data = vec![zero; c * h * w];
        for ch in 0..c {
            for i in 0..mx {
                for j in 0..my {
                    let v = x.data()[(ch * mx + i) * my + j];
                    if i == 0 && j == 0 {
                        data[ch * h * w] = Complex::new(v.re, T::zero());
                    } else {
                        let (mi, mj) = ((h - i) % h, (w - j) % w);
                        data[(ch * h + i) * w + j] = v;
                        data[(ch * h + mi) * w + mj] = v.conj();
                    }
                }
            }
        }
        let t = ComplexTensor::from_vec(&[c, h, w], data);
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Value::Complex(t), Op::HermitianScatter(a), ng))
    }

    /// Per-mode channel contraction in the spectral corner:
    /// y[co,m] = sum_ci x[ci,m] * w[ci,co,m], x (Ci,mx,my), w (Ci,Co,mx,my).
    pub fn spectral_contract(&mut self, x: NodeId, w: NodeId) -> Result<NodeId, NumericsError> {
        let xv = self.want_complex("spectral_contract", x)?;
        let wv = self.want_complex("spectral_contract", w)?;
        if xv.shape().len() != 3 || wv.shape().len() != 4 {
            return Err(err_shape("spectral_contract", xv.shape(), wv.shape()));
        }
        let (ci, mx, my) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if wv.shape()[0] != ci || wv.shape()[2] != mx || wv.shape()[3] != my {
            return Err(err_shape("spectral_contract", xv.shape(), wv.shape()));
        }
        let co = wv.shape()[1];
        let mm = mx * my;
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = vec![zero; co * mm];
        for c_in in 0..ci {
            let xs = &xv.data()[c_in * mm..(c_in + 1) * mm];
            for c_out in 0..co {
                let ws = &wv.data()[(c_in * co + c_out) * mm..(c_in * co + c_out + 1) * mm];
                let os = &mut out[c_out * mm..(c_out + 1) * mm];
                for ((o, &xc), &wc) in os.iter_mut().zip(xs).zip(ws) {
                    *o += xc * wc;
                }
            }
        }
        let t = ComplexTensor::from_vec(&[co, mx, my], out);
        let ng = self.any_grad(&[x, w]);
        Ok(self.push(Value::Complex(t), Op::SpectralContract { x, w }, ng))
    }

    // ---- backward ----

    /// Reverse sweep from a real single-element loss node. Clears previous
    /// gradients first, so it can be called repeatedly on one tape. Gradients
    /// of interior nodes are dropped as soon as they are consumed; leaves keep
    /// theirs for reading via `grad_real` / `grad_complex`.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), NumericsError> {
        {
            let lv = self.want_real("backward", loss)?;
            if lv.len() != 1 {
                return Err(err_invalid(
                    "backward",
                    format!("loss must hold a single value, got shape {:?}", lv.shape()),
                ));
            }
        }
        if !self.nodes[loss.0].needs_grad {
            return Err(err_invalid(
                "backward",
                "loss does not depend on any differentiable leaf",
            ));
        }
        let n = self.nodes.len();
        self.grads.clear();
        self.grads.resize_with(n, || None);
        self.grads[loss.0] = Some(GradBuf::Real(vec![T::one()]));

        for i in (0..n).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let (lo, hi) = self.grads.split_at_mut(i);
            let slot = &mut hi[0];
            let Some(g) = (if matches!(self.nodes[i].op, Op::Leaf) {
                None // leaves keep their gradient for the caller
            } else {
                slot.take()
            }) else {
                continue;
            };
            backprop_one(&self.nodes, i, g, lo);
        }
        Ok(())
    }

    /// Gradient of a real leaf after `backward`; `None` if it never received
    /// a contribution (i.e. the loss does not depend on it).
    pub fn grad_real(&self, id: NodeId) -> Option<&[T]> {
        match self.grads.get(id.0)? {
            Some(GradBuf::Real(v)) => Some(v),
            _ => None,
        }
    }

    pub fn grad_complex(&self, id: NodeId) -> Option<&[Complex<T>]> {
        match self.grads.get(id.0)? {
            Some(GradBuf::Complex(v)) => Some(v),
            _ => None,
        }
    }
}

fn acc_real<'a, T: Scalar>(slot: &'a mut Option<GradBuf<T>>, len: usize) -> &'a mut [T] {
    if slot.is_none() {
        *slot = Some(GradBuf::Real(vec![T::zero(); len]));
    }
    match slot.as_mut().unwrap() {
        GradBuf::Real(v) => v,
        GradBuf::Complex(_) => panic!("gradient kind mismatch: wanted real"),
    }
}

fn acc_complex<'a, T: Scalar>(slot: &'a mut Option<GradBuf<T>>, len: usize) -> &'a mut [Complex<T>] {
    if slot.is_none() {
        *slot = Some(GradBuf::Complex(vec![Complex::new(T::zero(), T::zero()); len]));
    }
    match slot.as_mut().unwrap() {
        GradBuf::Complex(v) => v,
        GradBuf::Real(_) => panic!("gradient kind mismatch: wanted complex"),
    }
}

fn real_of<T: Scalar>(nodes: &[Node<T>], id: NodeId) -> &Tensor<T> {
    match &nodes[id.0].value {
        Value::Real(t) => t,
        Value::Complex(_) => unreachable!("kind checked at op construction"),
    }
}

fn complex_of<T: Scalar>(nodes: &[Node<T>], id: NodeId) -> &ComplexTensor<T> {
    match &nodes[id.0].value {
        Value::Complex(t) => t,
        Value::Real(_) => unreachable!("kind checked at op construction"),
    }
}

/// Dispatch one node's VJP, accumulating into the gradient slots of its
/// inputs (all of which have smaller indices, hence live in `lo`).
fn backprop_one<T: Scalar>(nodes: &[Node<T>], i: usize, g: GradBuf<T>, lo: &mut [Option<GradBuf<T>>]) {
    let needs = |id: NodeId| nodes[id.0].needs_grad;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Add(a, b) => match &g {
            GradBuf::Real(gv) => {
                for id in [*a, *b].into_iter().filter(|&id| needs(id)) {
                    let d = acc_real(&mut lo[id.0], gv.len());
                    for (o, &v) in d.iter_mut().zip(gv) {
                        *o = *o + v;
                    }
                }
            }
            GradBuf::Complex(gv) => {
                for id in [*a, *b].into_iter().filter(|&id| needs(id)) {
                    let d = acc_complex(&mut lo[id.0], gv.len());
                    for (o, &v) in d.iter_mut().zip(gv) {
                        *o += v;
                    }
                }
            }
        },
        Op::Sub(a, b) => match &g {
            GradBuf::Real(gv) => {
                if needs(*a) {
                    let d = acc_real(&mut lo[a.0], gv.len());
                    for (o, &v) in d.iter_mut().zip(gv) {
                        *o = *o + v;
                    }
                }
                if needs(*b) {
                    let d = acc_real(&mut lo[b.0], gv.len());
                    for (o, &v) in d.iter_mut().zip(gv) {
                        *o = *o - v;
                    }
                }
            }
            GradBuf::Complex(gv) => {
                if needs(*a) {
                    let d = acc_complex(&mut lo[a.0], gv.len());
                    for (o, &v) in d.iter_mut().zip(gv) {
                        *o += v;
                    }
                }
                if needs(*b) {
                    let d = acc_complex(&mut lo[b.0], gv.len());
                    for (o, &v) in d.iter_mut().zip(gv) {
                        *o -= v;
                    }
                }
            }
        },
        Op::Mul(a, b) => {
            let GradBuf::Real(gv) = &g else { unreachable!() };
            if needs(*a) {
                let bv = real_of(nodes, *b).data();
                let d = acc_real(&mut lo[a.0], gv.len());
                for ((o, &gg), &vv) in d.iter_mut().zip(gv).zip(bv) {
                    *o = *o + gg * vv;
                }
            }
            if needs(*b) {
                let av = real_of(nodes, *a).data();
                let d = acc_real(&mut lo[b.0], gv.len());
                for ((o, &gg), &vv) in d.iter_mut().zip(gv).zip(av) {
                    *o = *o + gg * vv;
                }
            }
        }
        Op::ComplexMul(a, b) => {
            let GradBuf::Complex(gv) = &g else { unreachable!() };
            if needs(*a) {
                let bv = complex_of(nodes, *b).data();
                let d = acc_complex(&mut lo[a.0], gv.len());
                for ((o, &gg), &vv) in d.iter_mut().zip(gv).zip(bv) {
                    *o += vv.conj() * gg;
                }
            }
            if needs(*b) {
                let av = complex_of(nodes, *a).data();
                let d = acc_complex(&mut lo[b.0], gv.len());
                for ((o, &gg), &vv) in d.iter_mut().zip(gv).zip(av) {
                    *o += vv.conj() * gg;
                }
            }
        }
        Op::ScalarMul(a, c) => {
            if !needs(*a) {
                return;
            }
            match &g {
                GradBuf::Real(gv) => {
                    let d = acc_real(&mut lo[a.0], gv.len());
                    for (o, &v) in d.iter_mut().zip(gv) {
                        *o = *o + v * *c;
                    }
                }
                GradBuf::Complex(gv) => {
                    let d = acc_complex(&mut lo[a.0], gv.len());
                    for (o, &v) in d.iter_mut().zip(gv) {
                        *o += Complex::new(v.re * *c, v.im * *c);
                    }
                }
            }
        }
        Op::Gelu { x, tanh_u } => {
            if !needs(*x) {
                return;
            }
            let GradBuf::Real(gv) = &g else { unreachable!() };
            let xv = real_of(nodes, *x).data();
            let c = lit::<T>(0.7978845608028654);
            let k3 = lit::<T>(3.0 * 0.044715);
            let half = lit::<T>(0.5);
            let d = acc_real(&mut lo[x.0], gv.len());
            for i in 0..gv.len() {
                let (v, t) = (xv[i], tanh_u[i]);
                let sech2 = T::one() - t * t;
                let du = c * (T::one() + k3 * v * v);
                let dy = half * (T::one() + t) + half * v * sech2 * du;
                d[i] = d[i] + gv[i] * dy;
            }
        }
        Op::Relu(x) => {
            if !needs(*x) {
                return;
            }
            let GradBuf::Real(gv) = &g else { unreachable!() };
            let xv = real_of(nodes, *x).data();
            let d = acc_real(&mut lo[x.0], gv.len());
            for i in 0..gv.len() {
                if xv[i] > T::zero() {
                    d[i] = d[i] + gv[i];
                }
            }
        }
        Op::Mean(x) => {
            if !needs(*x) {
                return;
            }
            let GradBuf::Real(gv) = &g else { unreachable!() };
            let n = real_of(nodes, *x).len();
            let scale = gv[0] / T::from_usize(n).unwrap();
            let d = acc_real(&mut lo[x.0], n);
            for o in d.iter_mut() {
                *o = *o + scale;
            }
        }
        Op::ConcatChan(parts) => {
            let GradBuf::Real(gv) = &g else { unreachable!() };
            let mut offset = 0usize;
            for &p in parts {
                let len = real_of(nodes, p).len();
                if needs(p) {
                    let d = acc_real(&mut lo[p.0], len);
                    for (o, &v) in d.iter_mut().zip(&gv[offset..offset + len]) {
                        *o = *o + v;
                    }
                }
                offset += len;
            }
        }
        Op::SliceChan { x, start } => {
            if !needs(*x) {
                return;
            }
            let GradBuf::Real(gv) = &g else { unreachable!() };
            let xt = real_of(nodes, *x);
            let (h, w) = (xt.shape()[1], xt.shape()[2]);
            let d = acc_real(&mut lo[x.0], xt.len());
            let base = start * h * w;
            for (o, &v) in d[base..base + gv.len()].iter_mut().zip(gv) {
                *o = *o + v;
            }
        }
        Op::Pointwise { x, w, b } => {
            let GradBuf::Real(gv) = &g else { unreachable!() };
            let xt = real_of(nodes, *x);
            let wt = real_of(nodes, *w);
            let (ci, co) = (wt.shape()[0], wt.shape()[1]);
            let pix = xt.shape()[1] * xt.shape()[2];
            let mut dx = vec![T::zero(); xt.len()];
            let mut dw = vec![T::zero(); wt.len()];
            let mut db = vec![T::zero(); co];
            conv::pointwise_backward(
                xt.data(),
                ci,
                pix,
                wt.data(),
                co,
                gv,
                &mut dx,
                &mut dw,
                &mut db,
            );
            scatter_real(lo, nodes, *x, dx);
            scatter_real(lo, nodes, *w, dw);
            scatter_real(lo, nodes, *b, db);
        }
        Op::Conv2d { x, w, b, stride } => {
            let GradBuf::Real(gv) = &g else { unreachable!() };
            let xt = real_of(nodes, *x);
            let wt = real_of(nodes, *w);
            let (ci, h, wd) = (xt.shape()[0], xt.shape()[1], xt.shape()[2]);
            let (co, kh, kw) = (wt.shape()[0], wt.shape()[2], wt.shape()[3]);
            let mut dx = vec![T::zero(); xt.len()];
            let mut dw = vec![T::zero(); wt.len()];
            let mut db = vec![T::zero(); co];
            conv::conv2d_backward(
                xt.data(),
                ci,
                h,
                wd,
                wt.data(),
                co,
                kh,
                kw,
                *stride,
                gv,
                &mut dx,
                &mut dw,
                &mut db,
            );
            scatter_real(lo, nodes, *x, dx);
            scatter_real(lo, nodes, *w, dw);
            scatter_real(lo, nodes, *b, db);
        }
        Op::ConvTranspose2d { x, w, b } => {
            let GradBuf::Real(gv) = &g else { unreachable!() };
            let xt = real_of(nodes, *x);
            let wt = real_of(nodes, *w);
            let (ci, h, wd) = (xt.shape()[0], xt.shape()[1], xt.shape()[2]);
            let co = wt.shape()[1];
            let mut dx = vec![T::zero(); xt.len()];
            let mut dw = vec![T::zero(); wt.len()];
            let mut db = vec![T::zero(); co];
            conv::conv_transpose2d_backward(
                xt.data(),
                ci,
                h,
                wd,
                wt.data(),
                co,
                gv,
                &mut dx,
                &mut dw,
                &mut db,
            );
            scatter_real(lo, nodes, *x, dx);
            scatter_real(lo, nodes, *w, dw);
            scatter_real(lo, nodes, *b, db);
        }
        Op::GroupNorm { x, gamma, beta, groups, cache } => {
            let GradBuf::Real(gv) = &g else { unreachable!() };
            let xt = real_of(nodes, *x);
            let gt = real_of(nodes, *gamma);
            let (c, h, wd) = (xt.shape()[0], xt.shape()[1], xt.shape()[2]);
            let mut dx = vec![T::zero(); xt.len()];
            let mut dgamma = vec![T::zero(); c];
            let mut dbeta = vec![T::zero(); c];
            conv::group_norm_backward(
                xt.data(),
                c,
                h * wd,
                *groups,
                gt.data(),
                cache,
                gv,
                &mut dx,
                &mut dgamma,
                &mut dbeta,
            );
            scatter_real(lo, nodes, *x, dx);
            scatter_real(lo, nodes, *gamma, dgamma);
            scatter_real(lo, nodes, *beta, dbeta);
        }
        Op::ToComplex(x) => {
            if !needs(*x) {
                return;
            }
            let GradBuf::Complex(gv) = &g else { unreachable!() };
            let d = acc_real(&mut lo[x.0], gv.len());
            for (o, v) in d.iter_mut().zip(gv) {
                *o = *o + v.re;
            }
        }
        Op::RealPart(x) => {
            if !needs(*x) {
                return;
            }
            let GradBuf::Real(gv) = &g else { unreachable!() };
            let d = acc_complex(&mut lo[x.0], gv.len());
            for (o, &v) in d.iter_mut().zip(gv) {
                *o += Complex::new(v, T::zero());
            }
        }
        Op::Fft2(x) | Op::Ifft2(x) => {
            if !needs(*x) {
                return;
            }
            let GradBuf::Complex(gv) = &g else { unreachable!() };
            let shape = nodes[i].value.shape();
            let (_, h, w) = batch_hw(shape);
            let mut buf = gv.clone();
            // Adjoint of the unnormalized forward DFT is the unnormalized
            // inverse; adjoint of the 1/(HW)-scaled inverse is the forward
            // scaled by the same 1/(HW).
            let forward_op = matches!(nodes[i].op, Op::Fft2(_));
            fft::transform2_inplace(&mut buf, h, w, !forward_op);
            if !forward_op {
                let s = T::one() / T::from_usize(h * w).unwrap();
                for v in buf.iter_mut() {
                    *v = Complex::new(v.re * s, v.im * s);
                }
            }
            let d = acc_complex(&mut lo[x.0], buf.len());
            for (o, &v) in d.iter_mut().zip(&buf) {
                *o += v;
            }
        }
        Op::GatherCorner(x) => {
            if !needs(*x) {
                return;
            }
            let GradBuf::Complex(gv) = &g else { unreachable!() };
            let xt = complex_of(nodes, *x);
            let (c, h, w) = (xt.shape()[0], xt.shape()[1], xt.shape()[2]);
            let out_shape = nodes[i].value.shape();
            let (mx, my) = (out_shape[1], out_shape[2]);
            let d = acc_complex(&mut lo[x.0], xt.len());
            for ch in 0..c {
                for ii in 0..mx {
                    for jj in 0..my {
                        d[(ch * h + ii) * w + jj] += gv[(ch * mx + ii) * my + jj];
                    }
                }
            }
        }
        Op::HermitianScatter(x) => {
            if !needs(*x) {
                return;
            }
            let GradBuf::Complex(gv) = &g else { unreachable!() };
            let xt = complex_of(nodes, *x);
            let (c, mx, my) = (xt.shape()[0], xt.shape()[1], xt.shape()[2]);
            let out_shape = nodes[i].value.shape();
            let (h, w) = (out_shape[1], out_shape[2]);
            let d = acc_complex(&mut lo[x.0], xt.len());
            for ch in 0..c {
                for ii in 0..mx {
                    for jj in 0..my {
                        let gi = gv[(ch * h + ii) * w + jj];
                        let tgt = &mut d[(ch * mx + ii) * my + jj];
                        if ii == 0 && jj == 0 {
                            *tgt += Complex::new(gi.re, T::zero());
                        } else {
                            let (mi, mj) = ((h - ii) % h, (w - jj) % w);
                            *tgt += gi + gv[(ch * h + mi) * w + mj].conj();
                        }
                    }
                }
            }
        }
        Op::SpectralContract { x, w } => {
            let GradBuf::Complex(gv) = &g else { unreachable!() };
            let xt = complex_of(nodes, *x);
            let wt = complex_of(nodes, *w);
            let (ci, mx, my) = (xt.shape()[0], xt.shape()[1], xt.shape()[2]);
            let co = wt.shape()[1];
            let mm = mx * my;
            if needs(*x) {
                let mut dx = vec![Complex::new(T::zero(), T::zero()); xt.len()];
                for c_in in 0..ci {
                    let ds = &mut dx[c_in * mm..(c_in + 1) * mm];
                    for c_out in 0..co {
                        let ws = &wt.data()[(c_in * co + c_out) * mm..(c_in * co + c_out + 1) * mm];
                        let gs = &gv[c_out * mm..(c_out + 1) * mm];
                        for ((o, &wc), &gc) in ds.iter_mut().zip(ws).zip(gs) {
                            *o += wc.conj() * gc;
                        }
                    }
                }
                let d = acc_complex(&mut lo[x.0], xt.len());
                for (o, &v) in d.iter_mut().zip(&dx) {
                    *o += v;
                }
            }
            if needs(*w) {
                let mut dw = vec![Complex::new(T::zero(), T::zero()); wt.len()];
                for c_in in 0..ci {
                    let xs = &xt.data()[c_in * mm..(c_in + 1) * mm];
                    for c_out in 0..co {
                        let ds = &mut dw[(c_in * co + c_out) * mm..(c_in * co + c_out + 1) * mm];
                        let gs = &gv[c_out * mm..(c_out + 1) * mm];
                        for ((o, &xc), &gc) in ds.iter_mut().zip(xs).zip(gs) {
                            *o += xc.conj() * gc;
                        }
                    }
                }
                let d = acc_complex(&mut lo[w.0], wt.len());
                for (o, &v) in d.iter_mut().zip(&dw) {
                    *o += v;
                }
            }
        }
    }
}

fn scatter_real<T: Scalar>(
    lo: &mut [Option<GradBuf<T>>],
    nodes: &[Node<T>],
    id: NodeId,
    contribution: Vec<T>,
) {
    if !nodes[id.0].needs_grad {
        return;
    }
    let d = acc_real(&mut lo[id.0], contribution.len());
    for (o, v) in d.iter_mut().zip(contribution) {
        *o = *o + v;
    }
}
