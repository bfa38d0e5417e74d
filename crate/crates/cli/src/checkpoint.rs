//! Binary checkpoint format.
//!
//! All integers are little-endian. Layout:
//!
//! ```text
//! "SFLW"  u32 version  u32 dim  u32 levels  u32 steps
//! base:   u8 tag  u32 count  f64 * count
//! u32 layer count, then per layer:
//!         u8 tag  u32 aux count  u64 * aux  u32 shape count  (u32 rank  u64 * rank) * shapes
//! u64 payload length (in f64s)  f64 * length
//! u32 CRC-32 of every preceding byte
//! ```
//!
//! Base values: Gaussian `[std]`, vMF `[kappa, mu...]`, Dirichlet `alpha`.
//! Layer aux values: ActNorm `[initialized]`, permutation indices, coupling
//! `[parity, bound.to_bits()]`.

use std::path::Path;

use sphereflow::flow::{
    ActNormLayer, AffineCouplingLayer, Architecture, CouplingNet, Dense, Layer, PermutationLayer,
};
use sphereflow::{BaseDistribution, DirichletBase, FlowModel, GaussianBase, VmfBase};

use crate::error::{CliError, Result};
use crate::output::{atomic_write, read};

pub const MAGIC: &[u8; 4] = b"SFLW";
pub const VERSION: u32 = 1;

const BASE_GAUSSIAN: u8 = 0;
const BASE_VMF: u8 = 1;
const BASE_DIRICHLET: u8 = 2;

const LAYER_ACTNORM: u8 = 0;
const LAYER_PERMUTATION: u8 = 1;
const LAYER_COUPLING: u8 = 2;

pub fn encode(model: &FlowModel) -> Vec<u8> {
    let mut out = Vec::new();
    let arch = model.architecture();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, model.dim() as u32);
    put_u32(&mut out, arch.levels as u32);
    put_u32(&mut out, arch.steps as u32);

    let (tag, vals): (u8, Vec<f64>) = match model.base() {
        BaseDistribution::Gaussian(g) => (BASE_GAUSSIAN, vec![g.std()]),
        BaseDistribution::Vmf(v) => (
            BASE_VMF,
            std::iter::once(v.kappa())
                .chain(v.mu().iter().copied())
                .collect(),
        ),
        BaseDistribution::Dirichlet(b) => (BASE_DIRICHLET, b.alpha().to_vec()),
    };
    out.push(tag);
    put_u32(&mut out, vals.len() as u32);
    vals.iter()
        .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));

    put_u32(&mut out, model.layers().len() as u32);
    for layer in model.layers() {
        let (tag, aux): (u8, Vec<u64>) = match layer {
            Layer::ActNorm(a) => (LAYER_ACTNORM, vec![a.is_initialized() as u64]),
            Layer::Permutation(p) => (
                LAYER_PERMUTATION,
                p.perm().iter().map(|&i| i as u64).collect(),
            ),
            Layer::AffineCoupling(c) => {
                (LAYER_COUPLING, vec![c.parity() as u64, c.bound().to_bits()])
            }
        };
        out.push(tag);
        put_u32(&mut out, aux.len() as u32);
        aux.iter()
            .for_each(|a| out.extend_from_slice(&a.to_le_bytes()));
        let shapes = layer.param_shapes();
        put_u32(&mut out, shapes.len() as u32);
        for s in shapes {
            put_u32(&mut out, s.len() as u32);
            s.iter()
                .for_each(|&d| out.extend_from_slice(&(d as u64).to_le_bytes()));
        }
    }

    let params = model.params();
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    params
        .iter()
        .for_each(|p| out.extend_from_slice(&p.to_le_bytes()));
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl std::fmt::Display) -> CliError {
        CliError::Checkpoint {
            path: self.path.to_string(),
            msg: format!("at byte {}: {msg}", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated, need {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    /// Count field guarded against lengths the remaining bytes cannot hold.
    fn count(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem_size) > self.bytes.len() - self.pos {
            return Err(self.err(format!("count {n} exceeds remaining bytes")));
        }
        Ok(n)
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.err(format!("value {v} out of range")))
    }
}

pub fn decode(bytes: &[u8], path: &str) -> Result<FlowModel> {
    let bad = |msg: String| CliError::Checkpoint {
        path: path.to_string(),
        msg,
    };
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("missing SFLW magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(bad(format!(
            "CRC mismatch (stored {stored:08x}, computed {actual:08x})"
        )));
    }

    let mut r = Reader {
        bytes: body,
        pos: 8,
        path,
    };
    let dim = r.u32()? as usize;
    let levels = r.u32()? as usize;
    let steps = r.u32()? as usize;

    let base_tag = r.u8()?;
    let n = r.count(8)?;
    let vals = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let base = match base_tag {
        BASE_GAUSSIAN if n == 1 => {
            BaseDistribution::Gaussian(GaussianBase::with_std(dim, vals[0])?)
        }
        BASE_VMF if n == dim + 2 => {
            BaseDistribution::Vmf(VmfBase::new(dim, vals[1..].to_vec(), vals[0])?)
        }
        BASE_DIRICHLET if n == dim + 1 => BaseDistribution::Dirichlet(DirichletBase::new(vals)?),
        t => {
            return Err(r.err(format!(
                "bad base record (tag {t}, {n} values) for dimension {dim}"
            )))
        }
    };

    let num_layers = r.count(9)?;
    let mut manifest = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let tag = r.u8()?;
        let na = r.count(8)?;
        let aux = (0..na).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let ns = r.count(4)?;
        let mut shapes = Vec::with_capacity(ns);
        for _ in 0..ns {
            let rank = r.count(8)?;
            shapes.push((0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?);
        }
        manifest.push((tag, aux, shapes));
    }

    let total = r.usize()?;
    let expected: usize = manifest
        .iter()
        .flat_map(|(_, _, s)| s.iter().map(|s| s.iter().product::<usize>()))
        .sum();
    if total != expected {
        return Err(r.err(format!(
            "manifest shapes sum to {expected} parameters, payload holds {total}"
        )));
    }
    if total.saturating_mul(8) != body.len() - r.pos {
        return Err(r.err(format!(
            "payload of {total} floats does not match the {} remaining bytes",
            body.len() - r.pos
        )));
    }
    let mut payload = (0..total)
        .map(|_| r.f64())
        .collect::<Result<Vec<_>>>()?
        .into_iter();

    let mut layers = Vec::with_capacity(num_layers);
    for (i, (tag, aux, shapes)) in manifest.into_iter().enumerate() {
        let layer_err = |msg: String| bad(format!("layer {i}: {msg}"));
        let mut take = |n: usize| payload.by_ref().take(n).collect::<Vec<f64>>();
        let layer = match tag {
            LAYER_ACTNORM => {
                if aux.len() != 1 || aux[0] > 1 || shapes != [vec![dim], vec![dim]] {
                    return Err(layer_err("malformed actnorm record".into()));
                }
                let scale = take(dim);
                let bias = take(dim);
                Layer::ActNorm(ActNormLayer::from_params(scale, bias, aux[0] == 1)?)
            }
            LAYER_PERMUTATION => {
                if !shapes.is_empty() || aux.len() != dim {
                    return Err(layer_err("malformed permutation record".into()));
                }
                let perm = aux.iter().map(|&p| p as usize).collect();
                Layer::Permutation(PermutationLayer::new(perm)?)
            }
            LAYER_COUPLING => {
                if aux.len() != 2 || aux[0] > 1 || shapes.is_empty() || shapes.len() % 2 != 0 {
                    return Err(layer_err("malformed coupling record".into()));
                }
                let mut dense = Vec::with_capacity(shapes.len() / 2);
                for pair in shapes.chunks_exact(2) {
                    let (w, b) = (&pair[0], &pair[1]);
                    if w.len() != 2 || b.len() != 1 || b[0] != w[0] {
                        return Err(layer_err(format!("bad dense shapes {w:?} / {b:?}")));
                    }
                    dense.push(Dense {
                        inputs: w[1],
                        outputs: w[0],
                        weight: take(w[0] * w[1]),
                        bias: take(b[0]),
                    });
                }
                let net = CouplingNet::from_layers(dense)?;
                Layer::AffineCoupling(AffineCouplingLayer::with_net(
                    dim,
                    aux[0] as u8,
                    net,
                    f64::from_bits(aux[1]),
                )?)
            }
            t => return Err(layer_err(format!("unknown layer tag {t}"))),
        };
        layers.push(layer);
    }
    Ok(FlowModel::new(layers, base)?.with_architecture(Architecture { levels, steps }))
}

pub fn save(model: &FlowModel, path: &Path) -> Result<()> {
    atomic_write(path, &encode(model))
}

pub fn load(path: &Path) -> Result<FlowModel> {
    decode(&read(path)?, &path.display().to_string())
}
