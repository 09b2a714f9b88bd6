//! Binary tensor files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic   6 bytes   "NTUB1\0"
//! order   u64       N
//! extents N × u64   n_1 … n_N
//! payload ∏ n_k × f64, column-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 6] = b"NTUB1\0";

/// Orders above this are rejected as corrupt headers.
const MAX_ORDER: u64 = 64;

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format(format!("truncated header while reading {what}")))?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_tensor_from<R: Read>(mut r: R) -> Result<Tensor> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file too short for magic bytes".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let order = read_u64(&mut r, "order")?;
    if order == 0 || order > MAX_ORDER {
        return Err(Error::Format(format!("unsupported order {order}")));
    }
    let mut shape = Vec::with_capacity(order as usize);
    for k in 0..order {
        let n = read_u64(&mut r, "extents")?;
        if n == 0 {
            return Err(Error::Format(format!("extent {} is zero", k + 1)));
        }
        shape.push(usize::try_from(n).map_err(|_| Error::Format(format!("extent {n} overflows")))?);
    }
    let numel = shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .and_then(|n| n.checked_mul(8).map(|_| n))
        .ok_or_else(|| Error::Format(format!("extents {shape:?} overflow")))?;

    // read through `take` so a lying header cannot force a huge allocation
    let mut payload = Vec::new();
    r.by_ref().take(numel as u64 * 8).read_to_end(&mut payload)?;
    if payload.len() != numel * 8 {
        return Err(Error::Format(format!(
            "truncated payload: expected {} bytes, found {}",
            numel * 8,
            payload.len()
        )));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::new(shape, data)
}

pub fn write_tensor_to<W: Write>(mut w: W, x: &Tensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(x.order() as u64).to_le_bytes())?;
    for &n in x.shape() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for v in x.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor_from(BufReader::new(File::open(path)?))
}

pub fn write_tensor(path: impl AsRef<Path>, x: &Tensor) -> Result<()> {
    write_tensor_to(BufWriter::new(File::create(path)?), x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(x: &Tensor) -> Vec<u8> {
        let mut buf = Vec::new();
        write_tensor_to(&mut buf, x).unwrap();
        buf
    }

    #[test]
    fn header_layout() {
        let x = Tensor::new(vec![2, 1, 3], (0..6).map(f64::from).collect()).unwrap();
        let bytes = encode(&x);
        assert_eq!(&bytes[..6], MAGIC);
        assert_eq!(u64::from_le_bytes(bytes[6..14].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[14..22].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 6 + 8 * 4 + 8 * 6);
        assert_eq!(f64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap()), 5.0);
    }

    #[test]
    fn rejects_corrupt_files() {
        let x = Tensor::filled(&[2, 2], 1.5).unwrap();
        let good = encode(&x);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(read_tensor_from(&bad[..]), Err(Error::Format(_))));

        assert!(matches!(read_tensor_from(&good[..good.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(read_tensor_from(&good[..10]), Err(Error::Format(_))));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(read_tensor_from(&long[..]), Err(Error::Format(_))));

        let mut zero = good.clone();
        zero[14..22].copy_from_slice(&0u64.to_le_bytes());
        assert!(matches!(read_tensor_from(&zero[..]), Err(Error::Format(_))));

        let mut huge = good;
        huge[14..22].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(read_tensor_from(&huge[..]), Err(Error::Format(_))));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ntub");
        let x = Tensor::new(vec![3, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300, -7.25, 0.1]).unwrap();
        write_tensor(&path, &x).unwrap();
        let y = read_tensor(&path).unwrap();
        assert_eq!(y.shape(), x.shape());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&y), bits(&x));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            shape in prop::collection::vec(1usize..5, 1..5),
            seed in any::<u64>(),
        ) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n as u64)
                .map(|i| f64::from_bits(seed.wrapping_mul(i + 1).rotate_left(17) & !(0x7ffu64 << 52) | (0x3ffu64 << 52)))
                .collect();
            let x = Tensor::new(shape, data).unwrap();
            let y = read_tensor_from(&encode(&x)[..]).unwrap();
            prop_assert_eq!(y, x);
        }
    }
}
