//! The `CBCT` container: a 4-byte magic, a little-endian `u32` header length,
//! a JSON header and a raw little-endian payload in C order.
//!
//! `dims` lists axes slowest first, so a volume is `[N_z, N_y, N_x]` and a
//! projection stack `[M, N_s, N_v]`. `spacing_mm` follows `dims` for volumes
//! and holds `[Δs, Δv]` for projections. Volumes and projections are stored
//! as `f32le`; model checkpoints use `f64le` so that parameters survive a
//! save/load cycle unchanged.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wsfdk_core::model::{FdkModel, ModelOptions, SparseWaveletParams};
use wsfdk_core::{Geometry, Matrix, ProjectionStack, Volume};

pub const MAGIC: [u8; 4] = *b"CBCT";

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("not a CBCT container")]
    NotContainer,
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("expected a {expected} container, found {found}")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("{0}")]
    Core(#[from] wsfdk_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ContainerError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Volume,
    Projections,
    Model,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Volume => "volume",
            Kind::Projections => "projections",
            Kind::Model => "model",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32Le,
    F64Le,
}

impl Dtype {
    pub fn as_str(&self) -> &'static str {
        match self {
            Dtype::F32Le => "f32le",
            Dtype::F64Le => "f64le",
        }
    }

    pub fn parse(s: &str) -> Result<Dtype> {
        match s {
            "f32le" => Ok(Dtype::F32Le),
            "f64le" => Ok(Dtype::F64Le),
            other => Err(ContainerError::UnsupportedEncoding(other.to_string())),
        }
    }

    fn width(&self) -> usize {
        match self {
            Dtype::F32Le => 4,
            Dtype::F64Le => 8,
        }
    }
}

/// Checkpoint metadata: the two coefficient blocks are concatenated in the
/// payload, `w_train` first, both row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub w_shape: [usize; 2],
    pub h_shape: [usize; 2],
    pub plain_backprojection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: Kind,
    pub dims: Vec<usize>,
    pub spacing_mm: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelMeta>,
}

impl Header {
    fn payload_len(&self) -> usize {
        self.dims.iter().product()
    }

    fn check(&self) -> Result<Dtype> {
        let dtype = Dtype::parse(&self.dtype)?;
        if dtype == Dtype::F64Le && self.kind != Kind::Model {
            return Err(ContainerError::UnsupportedEncoding(format!(
                "f64le is only used for model checkpoints, not {}",
                self.kind.as_str()
            )));
        }
        if self.dims.is_empty() || self.dims.iter().any(|&d| d < 4) {
            return Err(ContainerError::InvalidHeader(format!(
                "every dimension must be at least 4, got {:?}",
                self.dims
            )));
        }
        Ok(dtype)
    }
}

/// Serializes `header` and `payload`; refuses payloads whose length does
/// not match `dims`.
pub fn encode(header: &Header, payload: &[f64]) -> Result<Vec<u8>> {
    let dtype = header.check()?;
    if payload.len() != header.payload_len() {
        return Err(ContainerError::InvalidHeader(format!(
            "dims {:?} describe {} values but the payload has {}",
            header.dims,
            header.payload_len(),
            payload.len()
        )));
    }
    let json =
        serde_json::to_vec(header).map_err(|e| ContainerError::InvalidHeader(e.to_string()))?;
    let header_len = u32::try_from(json.len())
        .map_err(|_| ContainerError::InvalidHeader("header too large".into()))?;
    let mut out = Vec::with_capacity(8 + json.len() + payload.len() * dtype.width());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    match dtype {
        Dtype::F32Le => payload
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64Le => payload
            .iter()
            .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Header, Vec<f64>)> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(ContainerError::NotContainer);
    }
    let len_bytes: [u8; 4] = bytes
        .get(4..8)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| ContainerError::CorruptPayload("truncated header length".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let json = bytes
        .get(8..8 + header_len)
        .ok_or_else(|| ContainerError::CorruptPayload("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(json).map_err(|e| ContainerError::InvalidHeader(e.to_string()))?;
    let dtype = header.check()?;
    let body = &bytes[8 + header_len..];
    let expected = header.payload_len() * dtype.width();
    if body.len() != expected {
        return Err(ContainerError::CorruptPayload(format!(
            "expected {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let payload: Vec<f64> = match dtype {
        Dtype::F32Le => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64Le => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(i) = payload.iter().position(|v| !v.is_finite()) {
        return Err(ContainerError::CorruptPayload(format!(
            "non-finite value at index {i}"
        )));
    }
    Ok((header, payload))
}

pub fn write_container(path: &Path, header: &Header, payload: &[f64]) -> Result<()> {
    let bytes = encode(header, payload)?;
    fs::write(path, bytes).map_err(|source| ContainerError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_container(path: &Path) -> Result<(Header, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|source| ContainerError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

fn expect_kind(header: &Header, kind: Kind) -> Result<()> {
    if header.kind != kind {
        return Err(ContainerError::WrongKind {
            expected: kind.as_str(),
            found: header.kind.as_str(),
        });
    }
    Ok(())
}

pub fn volume_header(vol: &Volume) -> Header {
    let [nx, ny, nz] = vol.shape();
    let [dx, dy, dz] = vol.spacing();
    Header {
        kind: Kind::Volume,
        dims: vec![nz, ny, nx],
        spacing_mm: vec![dz, dy, dx],
        geometry: None,
        dtype: Dtype::F32Le.as_str().into(),
        model: None,
    }
}

pub fn write_volume(path: &Path, vol: &Volume) -> Result<()> {
    write_container(path, &volume_header(vol), vol.as_slice())
}

pub fn volume_from_parts(header: &Header, payload: Vec<f64>) -> Result<Volume> {
    expect_kind(header, Kind::Volume)?;
    let (dims, sp) = (&header.dims, &header.spacing_mm);
    if dims.len() != 3 || sp.len() != 3 {
        return Err(ContainerError::InvalidHeader(
            "a volume needs three dims and three spacings".into(),
        ));
    }
    Ok(Volume::from_vec(
        [dims[2], dims[1], dims[0]],
        [sp[2], sp[1], sp[0]],
        payload,
    )?)
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let (header, payload) = read_container(path)?;
    volume_from_parts(&header, payload)
}

pub fn write_projections(path: &Path, stack: &ProjectionStack) -> Result<()> {
    let g = stack.geometry();
    let header = Header {
        kind: Kind::Projections,
        dims: stack.shape().to_vec(),
        spacing_mm: g.det_spacing.to_vec(),
        geometry: Some(g.clone()),
        dtype: Dtype::F32Le.as_str().into(),
        model: None,
    };
    write_container(path, &header, stack.as_slice())
}

pub fn read_projections(path: &Path) -> Result<ProjectionStack> {
    let (header, payload) = read_container(path)?;
    expect_kind(&header, Kind::Projections)?;
    let geom = header
        .geometry
        .ok_or_else(|| ContainerError::InvalidHeader("projections need a geometry".into()))?;
    geom.validate()?;
    if header.dims != [geom.n_angles, geom.det_shape[0], geom.det_shape[1]] {
        return Err(ContainerError::InvalidHeader(format!(
            "dims {:?} disagree with the embedded geometry",
            header.dims
        )));
    }
    Ok(ProjectionStack::from_vec(&geom, payload)?)
}

pub fn write_model(path: &Path, model: &FdkModel) -> Result<()> {
    let p = &model.params;
    let mut payload = p.w_train.as_slice().to_vec();
    payload.extend_from_slice(p.h_train.as_slice());
    let header = Header {
        kind: Kind::Model,
        dims: vec![payload.len()],
        spacing_mm: Vec::new(),
        geometry: Some(model.geom.clone()),
        dtype: Dtype::F64Le.as_str().into(),
        model: Some(ModelMeta {
            w_shape: [p.w_train.rows(), p.w_train.cols()],
            h_shape: [p.h_train.rows(), p.h_train.cols()],
            plain_backprojection: model.options.plain_backprojection,
        }),
    };
    write_container(path, &header, &payload)
}

pub fn read_model(path: &Path) -> Result<FdkModel> {
    let (header, mut payload) = read_container(path)?;
    expect_kind(&header, Kind::Model)?;
    let missing =
        |what: &str| ContainerError::InvalidHeader(format!("model checkpoint without {what}"));
    let geom = header.geometry.ok_or_else(|| missing("geometry"))?;
    let meta = header.model.ok_or_else(|| missing("model metadata"))?;
    let w_len = meta.w_shape[0] * meta.w_shape[1];
    if w_len + meta.h_shape[0] * meta.h_shape[1] != payload.len() {
        return Err(ContainerError::InvalidHeader(format!(
            "shapes {:?} + {:?} do not match {} parameters",
            meta.w_shape,
            meta.h_shape,
            payload.len()
        )));
    }
    let h = payload.split_off(w_len);
    let params = SparseWaveletParams {
        w_train: Matrix::from_vec(meta.w_shape[0], meta.w_shape[1], payload)?,
        h_train: Matrix::from_vec(meta.h_shape[0], meta.h_shape[1], h)?,
    };
    let options = ModelOptions {
        plain_backprojection: meta.plain_backprojection,
    };
    Ok(FdkModel::new(geom, params, options)?)
}
