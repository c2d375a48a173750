//! DSFT: a flat binary tensor container.
//!
//! ```text
//! 0..4    magic "DSFT"
//! 4..8    version, u32 LE (= 1)
//! 8..12   C, u32 LE
//! 12..16  h, u32 LE
//! 16..20  w, u32 LE
//! 20..24  patch size, u32 LE
//! 24..32  reserved, zero
//! 32..    C*h*w binary32 LE values, row-major [c][y][x]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FeatureMap;
use crate::error::{Error, Result};

pub const DSFT_MAGIC: [u8; 4] = *b"DSFT";
pub const DSFT_VERSION: u32 = 1;
pub const DSFT_HEADER_LEN: usize = 32;

pub fn write_feature_map<W: Write>(fm: &FeatureMap, mut sink: W) -> Result<()> {
    let mut header = [0u8; DSFT_HEADER_LEN];
    header[0..4].copy_from_slice(&DSFT_MAGIC);
    let fields = [DSFT_VERSION, dim(fm.channels())?, dim(fm.height())?, dim(fm.width())?, dim(fm.patch_size())?];
    for (i, v) in fields.iter().enumerate() {
        header[4 + 4 * i..8 + 4 * i].copy_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&header)?;
    let mut payload = Vec::with_capacity(fm.data().len() * 4);
    for v in fm.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&payload)?;
    sink.flush()?;
    Ok(())
}

pub fn read_feature_map<R: Read>(mut source: R) -> Result<FeatureMap> {
    let mut header = [0u8; DSFT_HEADER_LEN];
    source.read_exact(&mut header).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated { expected: DSFT_HEADER_LEN, found: 0 },
        _ => Error::Io(e),
    })?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != DSFT_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let field = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = field(0);
    if version != DSFT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (c, h, w, p) = (field(1) as usize, field(2) as usize, field(3) as usize, field(4) as usize);
    let expected = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::InvalidArgument(format!("DSFT dims {c}x{h}x{w} overflow")))?;

    let mut payload = Vec::new();
    source.read_to_end(&mut payload)?;
    let found = payload.len() / 4;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if payload.len() != expected * 4 {
        return Err(Error::DimensionMismatch(format!(
            "DSFT payload has {} trailing bytes beyond the declared {expected} values",
            payload.len() - expected * 4
        )));
    }
    let data: Vec<f32> = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    FeatureMap::new(c, h, w, p, data)
}

pub fn read_feature_map_file(path: impl AsRef<Path>) -> Result<FeatureMap> {
    read_feature_map(BufReader::new(File::open(path)?))
}

pub fn write_feature_map_file(fm: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    write_feature_map(fm, BufWriter::new(File::create(path)?))
}

fn dim(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("dimension {v} does not fit in u32")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(fm: &FeatureMap) -> Vec<u8> {
        let mut buf = Vec::new();
        write_feature_map(fm, &mut buf).unwrap();
        buf
    }

    #[test]
    fn single_zero_is_header_plus_four_bytes() {
        let buf = encode(&FeatureMap::zeros(1, 1, 1, 16));
        assert_eq!(buf.len(), 36);
        assert_eq!(&buf[0..4], b"DSFT");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(&buf[20..24], &16u32.to_le_bytes());
        assert!(buf[24..].iter().all(|&b| b == 0));
    }

    #[test]
    fn one_is_little_endian() {
        let mut data = vec![0.0; 2];
        data[0] = 1.0;
        let buf = encode(&FeatureMap::new(2, 1, 1, 8, data).unwrap());
        assert_eq!(&buf[32..36], &[0x00, 0x00, 0x80, 0x3F]);
    }

    #[test]
    fn reads_handwritten_header() {
        let mut buf = b"DSFT".to_vec();
        for v in [1u32, 1, 1, 1, 8, 0, 0] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&[0; 4]);
        let fm = read_feature_map(&buf[..]).unwrap();
        assert_eq!((fm.channels(), fm.height(), fm.width(), fm.patch_size()), (1, 1, 1, 8));
        assert_eq!(fm.data(), &[0.0]);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut buf = encode(&FeatureMap::zeros(1, 1, 1, 8));
        buf[0..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_feature_map(&buf[..]), Err(Error::BadMagic(m)) if &m == b"XXXX"));
    }

    #[test]
    fn rejects_unknown_version() {
        let mut buf = encode(&FeatureMap::zeros(1, 1, 1, 8));
        buf[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(read_feature_map(&buf[..]), Err(Error::UnsupportedVersion(2))));
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut buf = encode(&FeatureMap::zeros(2, 2, 2, 8));
        buf.truncate(DSFT_HEADER_LEN + 7 * 4);
        assert!(matches!(read_feature_map(&buf[..]), Err(Error::Truncated { expected: 8, found: 7 })));
    }

    #[test]
    fn rejects_short_header() {
        assert!(matches!(read_feature_map(&b"DSFT"[..]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn rejects_non_finite() {
        let mut buf = encode(&FeatureMap::zeros(1, 1, 2, 8));
        buf[36..40].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_feature_map(&buf[..]), Err(Error::NonFinite(1))));
    }
}
