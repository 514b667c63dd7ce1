//! Portable float maps: little-endian, scale -1, rows stored bottom to top.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Encode a 1- or 3-channel CHW tensor.
pub fn encode(image: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = image.chw()?;
    let tag = match c {
        1 => "Pf",
        3 => "PF",
        _ => return Err(Error::Invalid(format!("PFM holds 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{tag}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(c * h * w * 4);
    let plane = h * w;
    let data = image.data();
    for y in (0..h).rev() {
        for x in 0..w {
            for ch in 0..c {
                out.extend_from_slice(&data[ch * plane + y * w + x].to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn write(path: &Path, image: &Tensor) -> Result<()> {
    let bytes = encode(image)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PfmHeader {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub little_endian: bool,
    /// Byte offset of the first sample.
    pub data_offset: usize,
}

fn format_err(path: &Path, offset: usize, detail: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), offset: offset as u64, detail: detail.into() }
}

pub fn parse_header(bytes: &[u8], path: &Path) -> Result<PfmHeader> {
    let mut pos = 0;
    let mut token = |what: &str| -> Result<(String, usize)> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, start, format!("truncated header: missing {what}")));
        }
        Ok((String::from_utf8_lossy(&bytes[start..pos]).into_owned(), start))
    };
    let (magic, at) = token("magic")?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        _ => return Err(format_err(path, at, format!("bad magic {magic:?}"))),
    };
    let mut dim = |what: &str| -> Result<usize> {
        let (t, at) = token(what)?;
        t.parse::<usize>().ok().filter(|&v| v > 0).ok_or_else(|| format_err(path, at, format!("bad {what} {t:?}")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let (scale, at) = token("scale")?;
    let scale: f64 = scale.parse().map_err(|_| format_err(path, at, format!("bad scale {scale:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err(path, at, "scale must be nonzero"));
    }
    // exactly one whitespace byte separates the header from the samples
    let data_offset = pos + 1;
    Ok(PfmHeader { channels, width, height, little_endian: scale < 0.0, data_offset })
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let hdr = parse_header(bytes, path)?;
    let (c, h, w) = (hdr.channels, hdr.height, hdr.width);
    let need = c * h * w * 4;
    let body = bytes.get(hdr.data_offset..).unwrap_or(&[]);
    if body.len() < need {
        return Err(format_err(
            path,
            hdr.data_offset + body.len(),
            format!("truncated data: expected {need} bytes, found {}", body.len()),
        ));
    }
    if body.len() > need {
        return Err(format_err(path, hdr.data_offset + need, "trailing bytes after image data"));
    }
    let plane = h * w;
    let mut data = vec![0.0f32; c * plane];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if hdr.little_endian { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let ch = i % c;
        let px = i / c;
        let (row, x) = (px / w, px % w);
        data[ch * plane + (h - 1 - row) * w + x] = v;
    }
    Ok(Tensor::new(vec![c, h, w], data)?)
}

pub fn read(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Header only; enough to check a file's resolution without loading it.
pub fn read_header(path: &Path) -> Result<PfmHeader> {
    use std::io::Read;
    let mut buf = vec![0u8; 128];
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
    buf.truncate(n);
    parse_header(&buf, path)
}
