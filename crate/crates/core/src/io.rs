//! Shared I/O helpers: atomic file writes and fixed-precision JSON numbers.

use std::path::Path;

use crate::error::{Error, Result};

/// Writes via a temporary file in the destination directory and renames it
/// into place, so interrupted runs never leave truncated output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// A finite f64 as a JSON number with 17 significant digits, enough to
/// round-trip the value exactly.
pub fn json_f64(x: f64) -> Result<serde_json::Number> {
    if !x.is_finite() {
        return Err(Error::invalid(format!(
            "cannot serialize non-finite value {x}"
        )));
    }
    let text = format!("{x:.16e}");
    text.parse::<serde_json::Number>()
        .map_err(|e| Error::invalid(format!("bad number literal '{text}': {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
    }

    #[test]
    fn json_f64_roundtrips_exactly() {
        for &x in &[
            0.0,
            -0.0,
            1.65,
            0.1 + 0.2,
            std::f64::consts::PI,
            1.0e-300,
            -9.87654321e250,
            f64::MIN_POSITIVE,
        ] {
            let n = json_f64(x).unwrap();
            let back: f64 = n.to_string().parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {n}");
        }
        assert!(json_f64(f64::NAN).is_err());
        assert!(json_f64(f64::INFINITY).is_err());
    }

    #[test]
    fn json_f64_has_17_significant_digits() {
        let n = json_f64(1.65).unwrap().to_string();
        assert_eq!(n, "1.6499999999999999e+0");
    }
}
