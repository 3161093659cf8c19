//! Plain image/field container: `key=value` text header, a blank line, then
//! little-endian `f32` samples, axis 0 fastest, one payload per component.
//!
//! ```text
//! kind=image
//! dims=2
//! sizes=64 64
//! dtype=f32
//! order=little
//! spacing=0.015625 0.015625
//! components=1
//!
//! <payload>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{check_sizes, ScalarImage, SpatialVectorField};

#[derive(Clone, Debug, PartialEq)]
pub struct ImageHeader {
    pub kind: String,
    pub sizes: Vec<usize>,
    pub spacing: Vec<f64>,
    pub components: usize,
}

impl ImageHeader {
    fn render(&self) -> String {
        let join = |v: Vec<String>| v.join(" ");
        format!(
            "kind={}\ndims={}\nsizes={}\ndtype=f32\norder=little\nspacing={}\ncomponents={}\n\n",
            self.kind,
            self.sizes.len(),
            join(self.sizes.iter().map(|s| s.to_string()).collect()),
            join(self.spacing.iter().map(|s| s.to_string()).collect()),
            self.components
        )
    }

    fn payload_bytes(&self) -> usize {
        self.sizes.iter().product::<usize>() * self.components * 4
    }
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad value '{t}' for key '{key}'"))))
        .collect()
}

fn parse(bytes: &[u8]) -> Result<(ImageHeader, Vec<f32>)> {
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::Format("missing blank line after header".into()))?;
    let text = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("header line without '=': '{line}'")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| map.get(k).ok_or_else(|| Error::Format(format!("header is missing '{k}'")));
    if get("dtype")? != "f32" {
        return format_err(format!("unsupported dtype '{}'", get("dtype")?));
    }
    if get("order")? != "little" {
        return format_err(format!("unsupported byte order '{}'", get("order")?));
    }
    let dims: usize = get("dims")?.parse().map_err(|_| Error::Format("bad dims".into()))?;
    let sizes: Vec<usize> = parse_list("sizes", get("sizes")?)?;
    let spacing: Vec<f64> = parse_list("spacing", get("spacing")?)?;
    if sizes.len() != dims || spacing.len() != dims {
        return format_err(format!(
            "dims={dims} but {} sizes and {} spacings",
            sizes.len(),
            spacing.len()
        ));
    }
    check_sizes(&sizes).map_err(|e| Error::Format(e.to_string()))?;
    let components = match map.get("components") {
        Some(c) => c.parse().map_err(|_| Error::Format("bad components".into()))?,
        None => 1,
    };
    let header = ImageHeader {
        kind: map.get("kind").cloned().unwrap_or_else(|| "image".into()),
        sizes,
        spacing,
        components,
    };
    let payload = &bytes[split + 2..];
    let expected = header.payload_bytes();
    if payload.len() != expected {
        return format_err(format!(
            "payload has {} bytes but the header implies {expected} bytes",
            payload.len()
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, data))
}

fn encode(header: &ImageHeader, chunks: &[&[f64]]) -> Vec<u8> {
    let mut out = header.render().into_bytes();
    out.reserve(header.payload_bytes());
    for chunk in chunks {
        for &v in chunk.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_image(path: impl AsRef<Path>, image: &ScalarImage) -> Result<()> {
    let header = ImageHeader {
        kind: "image".into(),
        sizes: image.sizes().to_vec(),
        spacing: image.spacing().to_vec(),
        components: 1,
    };
    fs::write(path, encode(&header, &[image.values()]))?;
    Ok(())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ScalarImage> {
    let (header, data) = parse(&fs::read(path)?)?;
    if header.components != 1 {
        return format_err(format!("expected a scalar image, found {} components", header.components));
    }
    ScalarImage::new(&header.sizes, data.into_iter().map(f64::from).collect())
        .and_then(|img| img.with_spacing(header.spacing))
        .map_err(|e| Error::Format(e.to_string()))
}

/// Writes a vector field as `d` consecutive scalar payloads; spacing is the
/// unit-domain spacing `1/N_j`.
pub fn write_field(path: impl AsRef<Path>, field: &SpatialVectorField) -> Result<()> {
    let header = ImageHeader {
        kind: "field".into(),
        sizes: field.sizes().to_vec(),
        spacing: field.sizes().iter().map(|&n| 1.0 / n as f64).collect(),
        components: field.dims(),
    };
    let chunks: Vec<&[f64]> = field.components().iter().map(|c| c.as_slice()).collect();
    fs::write(path, encode(&header, &chunks))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<SpatialVectorField> {
    let (header, data) = parse(&fs::read(path)?)?;
    let len: usize = header.sizes.iter().product();
    let comps = data
        .chunks_exact(len)
        .map(|c| c.iter().map(|&v| f64::from(v)).collect())
        .collect();
    SpatialVectorField::new(&header.sizes, comps).map_err(|e| Error::Format(e.to_string()))
}
