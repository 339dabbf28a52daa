//! Binary one-file-per-slide bag store.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SAGB"
//! 4       4     u32 format version (= 1)
//! 8       4     u32 N (instances)
//! 12      4     u32 D (embedding dim)
//! 16      1     u8 has_coords (0/1)
//! 17      1     u8 label (0/1)
//! 18      2     reserved (zero)
//! 20      4*N*D f32 embeddings, row-major
//! then    8*N   i32 (col,row) pairs, only when has_coords = 1
//! ```
//!
//! Floats are stored bit-exactly; a write/read round trip reproduces the bag
//! with no re-encoding loss.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::{CoreError, EmbeddingBag, Result};

pub const BAG_MAGIC: [u8; 4] = *b"SAGB";
pub const BAG_VERSION: u32 = 1;

const HEADER_LEN: usize = 20;
// Guards against absurd headers in damaged files (45k tiles x 1024 dims is
// well inside this).
const MAX_ELEMENTS: u64 = 1 << 31;

/// Writes `bag` to `path`. Nothing is written when validation fails.
pub fn write_bag(bag: &EmbeddingBag, path: &Path) -> Result<()> {
    let n = bag.len();
    let d = bag.dim();
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);

    w.write_all(&BAG_MAGIC)?;
    w.write_all(&BAG_VERSION.to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&[bag.coords().is_some() as u8, bag.label(), 0, 0])?;

    let mut buf = Vec::with_capacity(n * d * 4);
    for v in bag.embeddings().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;

    if let Some(coords) = bag.coords() {
        let mut cbuf = Vec::with_capacity(n * 8);
        for v in coords.iter() {
            cbuf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&cbuf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a bag previously written by [`write_bag`]. The slide id is taken
/// from the file stem; callers that track ids through a manifest should
/// cross-check against it.
pub fn read_bag(path: &Path) -> Result<EmbeddingBag> {
    let slide_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("unknown")
        .to_string();
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| CoreError::Format(format!("{}: file shorter than bag header", path.display())))?;
    if header[0..4] != BAG_MAGIC {
        return Err(CoreError::Format(format!(
            "{}: bad magic {:?}, expected \"SAGB\"",
            path.display(),
            &header[0..4]
        )));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != BAG_VERSION {
        return Err(CoreError::Format(format!(
            "{}: unsupported bag version {version}",
            path.display()
        )));
    }
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let has_coords = header[16];
    let label = header[17];
    if has_coords > 1 {
        return Err(CoreError::Format(format!(
            "{}: has_coords flag must be 0 or 1, got {has_coords}",
            path.display()
        )));
    }
    if (n as u64) * (d as u64) > MAX_ELEMENTS {
        return Err(CoreError::Corruption(format!(
            "{}: header claims {n}x{d} elements, refusing",
            path.display()
        )));
    }

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let emb_bytes = n * d * 4;
    let coord_bytes = if has_coords == 1 { n * 8 } else { 0 };
    if payload.len() != emb_bytes + coord_bytes {
        return Err(CoreError::Corruption(format!(
            "{}: payload is {} bytes, expected {}",
            path.display(),
            payload.len(),
            emb_bytes + coord_bytes
        )));
    }

    let mut emb = Vec::with_capacity(n * d);
    for chunk in payload[..emb_bytes].chunks_exact(4) {
        emb.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    let embeddings = Array2::from_shape_vec((n, d), emb)
        .map_err(|e| CoreError::Corruption(format!("{}: {e}", path.display())))?;

    let coords = if has_coords == 1 {
        let mut c = Vec::with_capacity(n * 2);
        for chunk in payload[emb_bytes..].chunks_exact(4) {
            c.push(i32::from_le_bytes(chunk.try_into().unwrap()));
        }
        Some(
            Array2::from_shape_vec((n, 2), c)
                .map_err(|e| CoreError::Corruption(format!("{}: {e}", path.display())))?,
        )
    } else {
        None
    };

    EmbeddingBag::new(slide_id, embeddings, coords, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn minimal_bag_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.sagb");
        let bag = EmbeddingBag::new("tiny", array![[0.0f32, 0.0]], None, 0).unwrap();
        write_bag(&bag, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        // header + 1x2 f32 payload
        assert_eq!(bytes.len(), HEADER_LEN + 8);
        let back = read_bag(&path).unwrap();
        assert_eq!(back, bag);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.sagb");
        let mut bytes = vec![b'X', b'X', b'X', b'X'];
        bytes.extend_from_slice(&[0u8; 24]);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_bag(&path), Err(CoreError::Format(_))));
    }
}
