//! Camera and radar image stream.
//!
//! Radar scans are resampled from polar to Cartesian, broadcast from one to
//! three channels and then share the camera topology: a residual conv stack
//! reducing by 8, and a finetuning stage reducing by a further 4, adding a
//! learnable positional encoding and emitting one token per cell.

mod io;
mod polar;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::init::{normal, xavier_uniform};
use crate::numerics::nn::Linear;
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var};

pub use io::{decode_unri, encode_unri, read_unri, write_unri};
pub use polar::{polar_to_cartesian, CartesianGrid, RadarPolarScan};

/// `C×H×W` pixels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFrame {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    /// Channel-planar, row-major within a channel.
    pub data: Vec<f64>,
}

impl ImageFrame {
    pub fn new(channels: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if channels * rows * cols == 0 || data.len() != channels * rows * cols {
            return Err(Error::dim(format!(
                "image {channels}×{rows}×{cols} with {} values",
                data.len()
            )));
        }
        Ok(ImageFrame {
            channels,
            rows,
            cols,
            data,
        })
    }

    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        ImageFrame {
            channels,
            rows,
            cols,
            data: vec![0.0; channels * rows * cols],
        }
    }

    pub fn at(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.rows + i) * self.cols + j]
    }

    /// `1×C×H×W` tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts_unchecked(vec![1, self.channels, self.rows, self.cols], self.data.clone())
    }
}

/// 2D convolution layer with Xavier-uniform kernel and zero bias.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let kernel = store.register(
            format!("{name}.kernel"),
            xavier_uniform(&[c_out, c_in, k, k], c_in * k * k, c_out * k * k, rng),
        )?;
        let bias = store.register(format!("{name}.bias"), Tensor::zeros([c_out]))?;
        Ok(Conv2d {
            kernel,
            bias,
            stride,
            padding,
            c_in,
            c_out,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let k = g.param(self.kernel);
        let b = g.param(self.bias);
        g.conv2d(x, k, Some(b), self.stride, self.padding)
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let f = |n: usize| (n + 2 * self.padding - 3) / self.stride + 1;
        (f(h), f(w))
    }
}

fn conv3(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, stride: usize, rng: &mut impl Rng) -> Result<Conv2d> {
    Conv2d::new(store, name, c_in, c_out, 3, stride, 1, rng)
}

/// Learnable `1 → 3` channel broadcast for radar images.
#[derive(Clone, Debug)]
pub struct RadarBroadcast {
    pub conv: Conv2d,
}

impl RadarBroadcast {
    pub fn new(store: &mut ParamStore, name: &str, rng: &mut impl Rng) -> Result<Self> {
        Ok(RadarBroadcast {
            conv: conv3(store, name, 1, 3, 1, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        if g.shape(x).get(1) != Some(&1) {
            return Err(Error::dim(format!(
                "radar broadcast expects one channel, got shape {:?}",
                g.shape(x)
            )));
        }
        self.conv.forward(g, x)
    }
}

impl Graph<'_> {
    /// Keeps every second row and column and zero-pads channels up to `c_out`.
    pub fn subsample_pad(&mut self, x: Var, c_out: usize) -> Result<Var> {
        let (b, c, h, w) = match self.shape(x) {
            &[b, c, h, w] => (b, c, h, w),
            s => return Err(Error::dim(format!("subsample_pad expects B×C×H×W, got {s:?}"))),
        };
        if c_out < c {
            return Err(Error::dim("subsample_pad cannot drop channels"));
        }
        let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
        let src = self.value(x).data();
        let mut out = vec![0.0; b * c_out * ho * wo];
        for bi in 0..b {
            for ci in 0..c {
                for i in 0..ho {
                    for j in 0..wo {
                        out[((bi * c_out + ci) * ho + i) * wo + j] = src[((bi * c + ci) * h + 2 * i) * w + 2 * j];
                    }
                }
            }
        }
        let value = Tensor::from_parts_unchecked(vec![b, c_out, ho, wo], out);
        Ok(self.custom(
            &[x],
            value,
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut dx = vec![0.0; b * c * h * w];
                for bi in 0..b {
                    for ci in 0..c {
                        for i in 0..ho {
                            for j in 0..wo {
                                dx[((bi * c + ci) * h + 2 * i) * w + 2 * j] = g[((bi * c_out + ci) * ho + i) * wo + j];
                            }
                        }
                    }
                }
                vec![Some(Tensor::from_parts_unchecked(vec![b, c, h, w], dx))]
            }),
        ))
    }
}

/// `y = relu(shortcut(x) + conv2(relu(conv1(x))))`.
///
/// With stride 2 the shortcut is the parameter-free [`Graph::subsample_pad`].
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

impl ResidualBlock {
    pub fn new(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, stride: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(ResidualBlock {
            conv1: conv3(store, &format!("{name}.conv1"), c_in, c_out, stride, rng)?,
            conv2: conv3(store, &format!("{name}.conv2"), c_out, c_out, 1, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(g, x)?;
        let h = g.relu(h);
        let h = self.conv2.forward(g, h)?;
        let skip = if self.conv1.stride == 1 && self.conv1.c_in == self.conv1.c_out {
            x
        } else {
            g.subsample_pad(x, self.conv1.c_out)?
        };
        let y = g.add(skip, h)?;
        Ok(g.relu(y))
    }
}

/// Stem convolution plus three stages of two residual blocks: `3×H×W → C×H/8×W/8`.
#[derive(Clone, Debug)]
pub struct ResidualStack {
    pub stem: Conv2d,
    pub blocks: Vec<ResidualBlock>,
    pub c_feat: usize,
}

impl ResidualStack {
    pub fn new(store: &mut ParamStore, name: &str, c_feat: usize, rng: &mut impl Rng) -> Result<Self> {
        if c_feat < 4 || c_feat % 4 != 0 {
            return Err(Error::Config(format!("feature channels {c_feat} must be a positive multiple of 4")));
        }
        let widths = [c_feat / 4, c_feat / 2, c_feat];
        let stem = conv3(store, &format!("{name}.stem"), 3, widths[0], 2, rng)?;
        let mut blocks = Vec::new();
        let mut c_in = widths[0];
        for (s, &c) in widths.iter().enumerate() {
            for b in 0..2 {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                blocks.push(ResidualBlock::new(store, &format!("{name}.s{s}b{b}"), c_in, c, stride, rng)?);
                c_in = c;
            }
        }
        Ok(ResidualStack { stem, blocks, c_feat })
    }

    /// Output `(C, H, W)` for a 3-channel input of the given size.
    pub fn output_shape(&self, rows: usize, cols: usize) -> Result<[usize; 3]> {
        if rows % 8 != 0 || cols % 8 != 0 || rows == 0 || cols == 0 {
            return Err(Error::dim(format!("image {rows}×{cols} is not divisible by 8")));
        }
        let (mut h, mut w) = self.stem.out_hw(rows, cols);
        for b in &self.blocks {
            (h, w) = b.conv1.out_hw(h, w);
        }
        Ok([self.c_feat, h, w])
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 4 || shape[1] != 3 {
            return Err(Error::dim(format!("residual stack expects 1×3×H×W, got {shape:?}")));
        }
        self.output_shape(shape[2], shape[3])?;
        let y = self.stem.forward(g, x)?;
        let mut y = g.relu(y);
        for b in &self.blocks {
            y = b.forward(g, y)?;
        }
        Ok(y)
    }
}

/// Two stride-2 convolutions, additive positional encoding and a per-token linear map.
#[derive(Clone, Debug)]
pub struct Finetune {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    /// `(H/32)×(W/32)×D_tok`.
    pub pe: ParamId,
    pub proj: Linear,
    pub grid: (usize, usize),
    pub d_tok: usize,
}

/// Standard deviation of the positional-encoding initialization.
pub const PE_INIT_STD: f64 = 0.02;

impl Finetune {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_feat: usize,
        d_tok: usize,
        image: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if image.0 % 32 != 0 || image.1 % 32 != 0 || image.0 == 0 || image.1 == 0 {
            return Err(Error::Config(format!("image {}×{} is not divisible by 32", image.0, image.1)));
        }
        let grid = (image.0 / 32, image.1 / 32);
        Ok(Finetune {
            conv1: conv3(store, &format!("{name}.conv1"), c_feat, d_tok, 2, rng)?,
            conv2: conv3(store, &format!("{name}.conv2"), d_tok, d_tok, 2, rng)?,
            pe: store.register(format!("{name}.pe"), normal(&[grid.0, grid.1, d_tok], PE_INIT_STD, rng))?,
            proj: Linear::new(store, &format!("{name}.proj"), d_tok, d_tok, rng)?,
            grid,
            d_tok,
        })
    }

    pub fn tokens(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    /// `1×C×H/8×W/8 → N_tok×D_tok`.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let y = self.conv1.forward(g, x)?;
        let y = g.relu(y);
        let y = self.conv2.forward(g, y)?;
        let shape = g.shape(y).to_vec();
        if shape[2..] != [self.grid.0, self.grid.1] {
            return Err(Error::dim(format!(
                "positional encoding is {}×{}, features are {}×{}",
                self.grid.0, self.grid.1, shape[2], shape[3]
            )));
        }
        let n = self.tokens();
        let y = g.reshape(y, &[self.d_tok, n])?;
        let tokens = g.transpose(y)?;
        let pe = g.param(self.pe);
        let pe = g.reshape(pe, &[n, self.d_tok])?;
        let tokens = g.add(tokens, pe)?;
        self.proj.forward(g, tokens)
    }
}

/// Residual stack followed by the finetuning stage.
#[derive(Clone, Debug)]
pub struct ImageStream {
    pub stack: ResidualStack,
    pub finetune: Finetune,
    pub image: (usize, usize),
}

impl ImageStream {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_feat: usize,
        d_tok: usize,
        image: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let stack = ResidualStack::new(store, &format!("{name}.stack"), c_feat, rng)?;
        let finetune = Finetune::new(store, &format!("{name}.finetune"), c_feat, d_tok, image, rng)?;
        Ok(ImageStream { stack, finetune, image })
    }

    /// Token matrix shape `(N_tok, D_tok)` and intermediate feature shape.
    pub fn shape_trace(&self) -> Result<([usize; 3], [usize; 2])> {
        let feat = self.stack.output_shape(self.image.0, self.image.1)?;
        Ok((feat, [self.finetune.tokens(), self.finetune.d_tok]))
    }

    /// `1×3×H×W → N_tok×D_tok`.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 4 || (s[2], s[3]) != self.image {
            return Err(Error::dim(format!(
                "image stream configured for {}×{}, got {:?}",
                self.image.0, self.image.1, s
            )));
        }
        let f = self.stack.forward(g, x)?;
        self.finetune.forward(g, f)
    }
}

/// Radar broadcast in front of an image stream with its own weights.
#[derive(Clone, Debug)]
pub struct RadarStream {
    pub broadcast: RadarBroadcast,
    pub stream: ImageStream,
}

impl RadarStream {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_feat: usize,
        d_tok: usize,
        image: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(RadarStream {
            broadcast: RadarBroadcast::new(store, &format!("{name}.broadcast"), rng)?,
            stream: ImageStream::new(store, name, c_feat, d_tok, image, rng)?,
        })
    }

    /// `1×1×H×W` Cartesian radar image to tokens.
    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let y = self.broadcast.forward(g, x)?;
        self.stream.forward(g, y)
    }
}
