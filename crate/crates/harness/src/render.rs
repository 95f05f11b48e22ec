use std::io::{Read, Write};
use std::path::Path;

use maskselect::BinaryMask;

use crate::HarnessError;

/// Writes a binary PGM (P5) with foreground 255 and background 0.
pub fn write_pgm<W: Write>(mut w: W, mask: &BinaryMask) -> Result<(), HarnessError> {
    write!(w, "P5\n{} {}\n255\n", mask.width(), mask.height())?;
    let mut bytes = Vec::with_capacity(mask.len());
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            bytes.push(if mask.get(r, c) { 255u8 } else { 0 });
        }
    }
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn render_pgm(path: &Path, mask: &BinaryMask) -> Result<(), HarnessError> {
    write_pgm(std::io::BufWriter::new(std::fs::File::create(path)?), mask)
}

/// Reads a P5 image; pixels above 127 are foreground.
pub fn read_pgm<R: Read>(mut r: R) -> Result<BinaryMask, HarnessError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < buf.len() && buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < buf.len() && buf[pos] == b'#' {
            while pos < buf.len() && buf[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(HarnessError::InvalidPgm("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&buf[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(HarnessError::InvalidPgm(format!("magic {:?}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| HarnessError::InvalidPgm(format!("bad number {s:?}")));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max != 255 {
        return Err(HarnessError::InvalidPgm(format!("maxval {max} (expected 255)")));
    }
    let data = &buf[pos + 1.min(buf.len() - pos)..];
    if data.len() != w * h {
        return Err(HarnessError::InvalidPgm(format!("expected {} pixels, found {}", w * h, data.len())));
    }
    Ok(BinaryMask::from_fn(h, w, |r, c| data[r * w + c] > 127))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header() {
        let m = BinaryMask::from_fn(3, 5, |r, c| (r + c) % 2 == 0);
        let mut buf = Vec::new();
        write_pgm(&mut buf, &m).unwrap();
        assert!(buf.starts_with(b"P5\n5 3\n255\n"));
        assert_eq!(buf.len(), 11 + 15);
        assert_eq!(read_pgm(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_pgm(&b"P2\n1 1\n255\n\x00"[..]).is_err());
        assert!(read_pgm(&b"P5\n2 2\n255\n\x00"[..]).is_err());
        assert!(read_pgm(&b"P5\n2"[..]).is_err());
    }
}
