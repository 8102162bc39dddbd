//! Flat binary network checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  b"FFN1"
//! version u32      1
//! layers  u32      layer count, then per layer:
//!   tag u8: 0 affine   -> u32 d_in, u32 d_out
//!           1 relu
//!           2 dropout  -> u8 mode (0 standard, 1 uniform-multinomial,
//!                          2 evolutional), f64 delta, u64 trials
//!           3 softmax cross-entropy
//! params  for each affine layer in order: weights row-major
//!         (d_in x d_out) then biases (d_out), as little-endian f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::deep::{AffineLayer, DeepDropoutMode, FeedForwardNet, Layer};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"FFN1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(net: &FeedForwardNet, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&CHECKPOINT_MAGIC)?;
    out.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    out.write_u32::<LittleEndian>(net.layers().len() as u32)?;
    for layer in net.layers() {
        match layer {
            Layer::Affine(a) => {
                out.write_u8(0)?;
                out.write_u32::<LittleEndian>(a.d_in() as u32)?;
                out.write_u32::<LittleEndian>(a.d_out() as u32)?;
            }
            Layer::Relu => out.write_u8(1)?,
            Layer::Dropout(mode) => {
                out.write_u8(2)?;
                let (tag, delta, trials) = match mode {
                    DeepDropoutMode::Standard { delta } => (0u8, *delta, 0u64),
                    DeepDropoutMode::UniformMultinomial { trials } => (1, 0.0, *trials),
                    DeepDropoutMode::Evolutional { trials } => (2, 0.0, *trials),
                };
                out.write_u8(tag)?;
                out.write_f64::<LittleEndian>(delta)?;
                out.write_u64::<LittleEndian>(trials)?;
            }
            Layer::SoftmaxXent => out.write_u8(3)?,
        }
    }
    for layer in net.layers() {
        if let Layer::Affine(a) = layer {
            for row in a.weights.rows() {
                for &w in row {
                    out.write_f64::<LittleEndian>(w)?;
                }
            }
            for &b in &a.biases {
                out.write_f64::<LittleEndian>(b)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<FeedForwardNet> {
    let display = path.display().to_string();
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: display,
            got: u32::from_be_bytes(magic),
            expected: u32::from_be_bytes(CHECKPOINT_MAGIC),
        });
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "{display}: unsupported checkpoint version {version}"
        )));
    }
    let count = input.read_u32::<LittleEndian>()? as usize;
    // First pass: the layer spec, with affine shapes but no parameters yet.
    enum Spec {
        Affine(usize, usize),
        Relu,
        Dropout(DeepDropoutMode),
        SoftmaxXent,
    }
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        let tag = input.read_u8()?;
        specs.push(match tag {
            0 => {
                let d_in = input.read_u32::<LittleEndian>()? as usize;
                let d_out = input.read_u32::<LittleEndian>()? as usize;
                Spec::Affine(d_in, d_out)
            }
            1 => Spec::Relu,
            2 => {
                let mode_tag = input.read_u8()?;
                let delta = input.read_f64::<LittleEndian>()?;
                let trials = input.read_u64::<LittleEndian>()?;
                let mode = match mode_tag {
                    0 => DeepDropoutMode::Standard { delta },
                    1 => DeepDropoutMode::UniformMultinomial { trials },
                    2 => DeepDropoutMode::Evolutional { trials },
                    other => {
                        return Err(Error::Format(format!(
                            "{display}: unknown dropout mode tag {other}"
                        )))
                    }
                };
                Spec::Dropout(mode)
            }
            3 => Spec::SoftmaxXent,
            other => {
                return Err(Error::Format(format!(
                    "{display}: unknown layer tag {other}"
                )))
            }
        });
    }
    // Second pass: parameters in layer order.
    let mut layers = Vec::with_capacity(count);
    for spec in specs {
        layers.push(match spec {
            Spec::Affine(d_in, d_out) => {
                let mut weights = Array2::zeros((d_in, d_out));
                for i in 0..d_in {
                    for j in 0..d_out {
                        weights[(i, j)] = input.read_f64::<LittleEndian>().map_err(|_| {
                            Error::Format(format!("{display}: truncated weight data"))
                        })?;
                    }
                }
                let mut biases = Array1::zeros(d_out);
                for j in 0..d_out {
                    biases[j] = input.read_f64::<LittleEndian>().map_err(|_| {
                        Error::Format(format!("{display}: truncated bias data"))
                    })?;
                }
                Layer::Affine(AffineLayer { weights, biases })
            }
            Spec::Relu => Layer::Relu,
            Spec::Dropout(mode) => Layer::Dropout(mode),
            Spec::SoftmaxXent => Layer::SoftmaxXent,
        });
    }
    FeedForwardNet::new(layers)
}
