//! Artifact writing: atomic file replacement, CSV and PGM encoders, content
//! hashes for run manifests.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Writes `bytes` to a sibling temp file, syncs it and renames it over `path`,
/// so readers never see a half-written artifact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Validation(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

/// CSV with a header row and one line per matrix row.
pub fn matrix_csv(header: &[String], rows: &Array2<f64>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Column names `x0, x1, ...`.
pub fn coord_header(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|j| format!("{prefix}{j}")).collect()
}

/// Binary PGM (P5) tiling `images` (one flattened `height x width` image per
/// row, values in [0, 1]) into a grid `cols` images wide. Empty cells are black.
pub fn pgm_grid(images: &Array2<f64>, height: usize, width: usize, cols: usize) -> Result<Vec<u8>> {
    if height * width != images.ncols() {
        return Err(CliError::Validation(format!(
            "image shape {height}x{width} does not match vectors of length {}",
            images.ncols()
        )));
    }
    let n = images.nrows();
    let cols = cols.clamp(1, n.max(1));
    let grid_rows = n.div_ceil(cols);
    let (gw, gh) = (cols * width, grid_rows * height);
    let mut out = format!("P5\n{gw} {gh}\n255\n").into_bytes();
    let header = out.len();
    out.resize(header + gw * gh, 0);
    for (i, img) in images.rows().into_iter().enumerate() {
        let (r0, c0) = ((i / cols) * height, (i % cols) * width);
        for y in 0..height {
            for x in 0..width {
                let v = img[y * width + x];
                let byte = if v.is_finite() {
                    (v.clamp(0.0, 1.0) * 255.0).round() as u8
                } else {
                    0
                };
                out[header + (r0 + y) * gw + c0 + x] = byte;
            }
        }
    }
    Ok(out)
}

/// Git-style content hash: SHA-256 over `"blob <len>\0"` followed by the bytes.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    format!("sha256:{}", hex::encode(h.finalize()))
}

/// Parses `HxW`, e.g. `28x28`.
pub fn parse_image_shape(s: &str) -> Result<(usize, usize)> {
    let bad = || CliError::Validation(format!("image shape must look like 28x28, got {s:?}"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pgm_header_and_pixels() {
        let imgs = array![
            [0.0, 1.0, 0.5, 2.0],
            [1.0, 1.0, 1.0, 1.0],
            [0.0, 0.0, 0.0, 0.0]
        ];
        let bytes = pgm_grid(&imgs, 2, 2, 2).unwrap();
        let head = b"P5\n4 4\n255\n";
        assert_eq!(&bytes[..head.len()], head);
        let px = &bytes[head.len()..];
        assert_eq!(px.len(), 16);
        assert_eq!(&px[0..4], &[0, 255, 255, 255]);
        assert_eq!(&px[4..8], &[128, 255, 255, 255]);
        assert!(px[8..].iter().all(|&b| b == 0));
        assert!(pgm_grid(&imgs, 3, 2, 2).is_err());
    }

    #[test]
    fn blob_hash_matches_git_sha256_format() {
        // `git hash-object --object-format=sha256` of an empty file.
        assert_eq!(
            blob_hash(b""),
            "sha256:473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn image_shapes() {
        assert_eq!(parse_image_shape("28x28").unwrap(), (28, 28));
        assert_eq!(parse_image_shape("2X3").unwrap(), (2, 3));
        assert!(parse_image_shape("28").is_err());
        assert!(parse_image_shape("0x4").is_err());
    }
}
