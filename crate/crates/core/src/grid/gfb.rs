//! GFB1 binary series layout (little-endian):
//!
//! ```text
//! "GFB1" | u32 version=1 | u32 T | u32 H | u32 W | f32 lat0, lon0, d_lat, d_lon
//!        | H*W mask bytes (0/1, row-major) | T*H*W f32 values (time-major, row-major)
//! ```

use std::fs;
use std::path::Path;

use super::{Calendar, FieldSeries, GridSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GFB1";
const VERSION: u32 = 1;

/// Fixed header width preceding the mask bytes.
pub const GFB1_HEADER_BYTES: usize = 4 + 4 * 4 + 4 * 4;

pub fn encode_series(series: &FieldSeries) -> Result<Vec<u8>> {
    let spec = series.spec();
    let dim = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} = {v} does not fit in u32")))
    };
    let (t, h, w) = (dim(series.n_days(), "T")?, dim(spec.n_lat, "H")?, dim(spec.n_lon, "W")?);
    let mut out = Vec::with_capacity(GFB1_HEADER_BYTES + series.n_cells() + series.data().len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, t, h, w] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [spec.lat0, spec.lon0, spec.d_lat, spec.d_lon] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(series.mask().iter().map(|&m| m as u8));
    for v in series.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_series(bytes: &[u8], calendar: Calendar) -> Result<FieldSeries> {
    if bytes.len() < GFB1_HEADER_BYTES {
        return Err(Error::Format(format!("file too short for GFB1 header: {} bytes", bytes.len())));
    }
    let magic = &bytes[0..4];
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"GFB1\"", String::from_utf8_lossy(magic))));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let f32_at = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported GFB1 version {version}")));
    }
    let (t, h, w) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    let spec = GridSpec { n_lat: h, n_lon: w, lat0: f32_at(20), lon0: f32_at(24), d_lat: f32_at(28), d_lon: f32_at(32) };

    let overflow = || Error::Format(format!("dimensions T={t} H={h} W={w} overflow"));
    let cells = h.checked_mul(w).ok_or_else(overflow)?;
    let n_values = cells.checked_mul(t).ok_or_else(overflow)?;
    let expected = n_values
        .checked_mul(4)
        .and_then(|v| v.checked_add(cells))
        .and_then(|v| v.checked_add(GFB1_HEADER_BYTES))
        .ok_or_else(overflow)?;
    if bytes.len() != expected {
        return Err(Error::Format(format!("expected {expected} bytes for T={t} H={h} W={w}, found {}", bytes.len())));
    }

    let mask_bytes = &bytes[GFB1_HEADER_BYTES..GFB1_HEADER_BYTES + cells];
    let mut mask = Vec::with_capacity(cells);
    for (k, &b) in mask_bytes.iter().enumerate() {
        match b {
            0 => mask.push(false),
            1 => mask.push(true),
            other => return Err(Error::Format(format!("mask byte {other} at cell ({}, {}) is not 0/1", k / w, k % w))),
        }
    }
    let data = bytes[GFB1_HEADER_BYTES + cells..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FieldSeries::new(spec, mask, calendar.stamps(t), data)
}

pub fn read_series(path: impl AsRef<Path>) -> Result<FieldSeries> {
    read_series_with_calendar(path, Calendar::default())
}

pub fn read_series_with_calendar(path: impl AsRef<Path>, calendar: Calendar) -> Result<FieldSeries> {
    decode_series(&fs::read(path)?, calendar)
}

pub fn write_series(series: &FieldSeries, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_series(series)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DayStamp;
    use proptest::prelude::*;

    fn hand_bytes() -> Vec<u8> {
        let mut b = b"GFB1".to_vec();
        for v in [1u32, 2, 2, 2] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [0.0f32, 0.0, 1.0, 1.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&[1, 1, 1, 1]);
        for v in 0..8 {
            b.extend_from_slice(&(v as f32).to_le_bytes());
        }
        b
    }

    #[test]
    fn decodes_hand_assembled_file() {
        let s = decode_series(&hand_bytes(), Calendar::default()).unwrap();
        assert_eq!(s.n_days(), 2);
        assert_eq!(s.value(0, 1, 1), 3.0);
        assert_eq!(s.value(1, 0, 0), 4.0);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut b = hand_bytes();
        b[..4].copy_from_slice(b"XXXX");
        let err = decode_series(&b, Calendar::default()).unwrap_err().to_string();
        assert!(err.contains("XXXX"), "{err}");
    }

    #[test]
    fn rejects_negative_valid_cell_with_coordinates() {
        let mut b = hand_bytes();
        let off = GFB1_HEADER_BYTES + 4 + 4 * 6; // day 1, cell (1, 0)
        b[off..off + 4].copy_from_slice(&(-1.0f32).to_le_bytes());
        let err = decode_series(&b, Calendar::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidCell { day: 1, row: 1, col: 0, .. }), "{err}");
    }

    #[test]
    fn rejects_nan() {
        let mut b = hand_bytes();
        let off = GFB1_HEADER_BYTES + 4;
        b[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_series(&b, Calendar::default()), Err(Error::InvalidCell { day: 0, row: 0, col: 0, .. })));
    }

    #[test]
    fn rejects_overflowing_dimensions() {
        let mut b = hand_bytes();
        b[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        b[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        b[16..20].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_series(&b, Calendar::default()), Err(Error::Format(_))));
    }

    #[test]
    fn empty_series_is_header_plus_mask() {
        let spec = GridSpec::quarter_degree(3, 5);
        let s = FieldSeries::new(spec, vec![true; 15], vec![], vec![]).unwrap();
        let bytes = encode_series(&s).unwrap();
        assert_eq!(bytes.len(), GFB1_HEADER_BYTES + 15);
        assert_eq!(GFB1_HEADER_BYTES, 36);
        assert_eq!(decode_series(&bytes, Calendar::default()).unwrap(), s);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.gfb");
        let s = decode_series(&hand_bytes(), Calendar::default()).unwrap();
        write_series(&s, &p).unwrap();
        assert_eq!(read_series(&p).unwrap(), s);
        assert_eq!(fs::read(&p).unwrap(), hand_bytes());
    }

    #[test]
    fn masked_nonzero_rejected_before_write() {
        let spec = GridSpec::quarter_degree(1, 2);
        let err = FieldSeries::new(spec, vec![true, false], vec![DayStamp { year: 2000, doy: 1 }], vec![1.0, 2.0]);
        assert!(matches!(err, Err(Error::InvalidCell { row: 0, col: 1, .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            h in 1usize..6, w in 1usize..6, t in 0usize..4,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mask: Vec<bool> = (0..h * w).map(|_| rng.gen_bool(0.7)).collect();
            let data: Vec<f32> = (0..t * h * w)
                .map(|k| if mask[k % (h * w)] { rng.gen_range(0.0f32..200.0) } else { 0.0 })
                .collect();
            let spec = GridSpec::new(h, w, rng.gen_range(-10.0..10.0), rng.gen_range(60.0..90.0), 0.25, 0.5).unwrap();
            let s = FieldSeries::new(spec, mask, Calendar::default().stamps(t), data).unwrap();
            let bytes = encode_series(&s).unwrap();
            let back = decode_series(&bytes, Calendar::default()).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(encode_series(&back).unwrap(), bytes);
        }
    }
}
