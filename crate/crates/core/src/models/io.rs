//! Parameter files: a flat little-endian `f64` blob plus a text manifest with
//! one `name dim [dim...]` line per tensor, in blob order.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::{ParamSet, Tensor};

const HEADER: &str = "# graphcast params v1";

/// Manifest text and the raw value blob for `params`.
pub fn encode_params(params: &ParamSet) -> (String, Vec<u8>) {
    let mut manifest = format!("{HEADER}\n");
    let mut blob = Vec::with_capacity(params.num_values() * 8);
    for (name, t) in params.iter() {
        let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        manifest.push_str(&format!("{name} {}\n", dims.join(" ")));
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    (manifest, blob)
}

/// Parses the shape manifest. Blank lines and `#` comments are skipped.
pub fn parse_shape_manifest(text: &str) -> Result<Vec<(String, Vec<usize>)>> {
    let mut out = Vec::new();
    let mut names = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().expect("non-empty line");
        let dims = parts
            .enumerate()
            .map(|(j, d)| match d.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(Error::parse(line_no, j + 2, format!("bad dimension {d:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if dims.is_empty() {
            return Err(Error::parse(line_no, 2, format!("{name} has no dimensions")));
        }
        if dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(Error::parse(line_no, 2, "shape overflows"));
        }
        if !names.insert(name.to_string()) {
            return Err(Error::parse(line_no, 1, format!("duplicate parameter {name}")));
        }
        out.push((name.to_string(), dims));
    }
    Ok(out)
}

/// Rebuilds a [`ParamSet`] from a manifest and blob. The blob length must
/// match the manifest exactly and every value must be finite.
pub fn decode_params(manifest: &str, blob: &[u8]) -> Result<ParamSet> {
    let shapes = parse_shape_manifest(manifest)?;
    let total = shapes.iter().try_fold(0usize, |acc, (_, s)| {
        acc.checked_add(s.iter().product::<usize>())
    });
    let expected_bytes = total.and_then(|t| t.checked_mul(8));
    if expected_bytes != Some(blob.len()) {
        return Err(Error::Schema(format!(
            "parameter blob has {} bytes, manifest needs {}",
            blob.len(),
            expected_bytes.map_or("more".to_string(), |b| b.to_string())
        )));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut params = ParamSet::new();
    for (name, shape) in shapes {
        let n = shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema(format!("non-finite value in {name}")));
        }
        params.push(name, Tensor::new(shape, data)?)?;
    }
    Ok(params)
}

/// Writes `<stem>.bin` and `<stem>.shapes` into `dir`.
pub fn save_params(dir: &Path, stem: &str, params: &ParamSet) -> Result<()> {
    let (manifest, blob) = encode_params(params);
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{stem}.shapes")), manifest)?;
    fs::write(dir.join(format!("{stem}.bin")), blob)?;
    Ok(())
}

pub fn load_params(dir: &Path, stem: &str) -> Result<ParamSet> {
    let read_err = |p: &Path, e: std::io::Error| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(p.display().to_string()),
        _ => Error::Io(e),
    };
    let mpath = dir.join(format!("{stem}.shapes"));
    let bpath = dir.join(format!("{stem}.bin"));
    let manifest = fs::read_to_string(&mpath).map_err(|e| read_err(&mpath, e))?;
    let blob = fs::read(&bpath).map_err(|e| read_err(&bpath, e))?;
    decode_params(&manifest, &blob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn manifest_errors() {
        assert!(parse_shape_manifest("w 2 x\n").is_err());
        assert!(parse_shape_manifest("w 0\n").is_err());
        assert!(parse_shape_manifest("w\n").is_err());
        assert!(parse_shape_manifest("w 2\nw 3\n").is_err());
        assert!(parse_shape_manifest("w 18446744073709551615 3\n").is_err());
        assert_eq!(parse_shape_manifest("# c\n\nw 2 3\n").unwrap().len(), 1);
    }

    #[test]
    fn blob_length_must_match() {
        assert!(decode_params("w 2\n", &[0u8; 8]).is_err());
        assert!(decode_params("w 1\n", &f64::NAN.to_le_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(values in prop::collection::vec(-1e6f64..1e6, 1..40), split in 1usize..40) {
            let split = split.min(values.len());
            let mut p = ParamSet::new();
            p.push("a.weight", Tensor::vector(values[..split].to_vec())).unwrap();
            if split < values.len() {
                p.push("a.bias", Tensor::vector(values[split..].to_vec())).unwrap();
            }
            let (m, b) = encode_params(&p);
            prop_assert_eq!(decode_params(&m, &b).unwrap(), p);
        }
    }
}
