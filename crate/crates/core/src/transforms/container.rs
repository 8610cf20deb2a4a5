//! Binary container for [`ShTensor`]s.
//!
//! Layout: the 8-byte magic `SHTC\0\0\0\x01`, a little-endian `u64` header
//! length, a UTF-8 JSON header, then every coefficient as a pair of
//! little-endian `f64` (real, imaginary) in bin-major, frame, `n² + n + m`
//! order.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BandPlan, ShTensor};

const MAGIC: &[u8; 8] = b"SHTC\0\0\0\x01";

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("not an SH tensor container")]
    BadMagic,
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("payload has {got} coefficients, header implies {expected}")]
    Payload { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    frames: usize,
    ordering: String,
    layout: String,
    plan: BandPlan,
    #[serde(default)]
    meta: serde_json::Value,
}

pub fn write_sh_tensor<W: Write>(
    mut out: W,
    tensor: &ShTensor,
    meta: serde_json::Value,
) -> Result<(), ContainerError> {
    let header = Header {
        format: "shtc/1".into(),
        frames: tensor.frames,
        ordering: "flat = n*n + n + m, orthonormal complex SH, Condon-Shortley phase".into(),
        layout: "bin, frame, coefficient; complex128 little-endian".into(),
        plan: tensor.plan.clone(),
        meta,
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    let mut buf = Vec::with_capacity(tensor.raw().len() * 16);
    for z in tensor.raw() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_sh_tensor<R: Read>(mut input: R) -> Result<(ShTensor, serde_json::Value), ContainerError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    let data: Vec<Complex64> = payload
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let got = data.len();
    let expected = ShTensor::zeros(&header.plan, header.frames).raw().len();
    let tensor = ShTensor::from_parts(header.plan, header.frames, data)
        .ok_or(ContainerError::Payload { expected, got })?;
    Ok((tensor, header.meta))
}
