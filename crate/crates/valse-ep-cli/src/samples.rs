//! Plain-text complex sample files: one `re,im` pair per line, `#` comments.

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use std::path::Path;
use valse_ep::signal::ComplexSignal;

pub fn read_samples(path: &Path) -> Result<ComplexSignal> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut values = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (re, im) = match (parts.next(), parts.next(), parts.next()) {
            (Some(re), Some(im), None) => (re.trim(), im.trim()),
            _ => bail!(
                "{}:{}: expected `re,im`, got `{raw}`",
                path.display(),
                lineno + 1
            ),
        };
        let re: f64 = re
            .parse()
            .with_context(|| format!("{}:{}: bad real part", path.display(), lineno + 1))?;
        let im: f64 = im
            .parse()
            .with_context(|| format!("{}:{}: bad imaginary part", path.display(), lineno + 1))?;
        values.push(Complex64::new(re, im));
    }
    if values.is_empty() {
        bail!("{}: no samples found", path.display());
    }
    Ok(ComplexSignal::new(values)?)
}

pub fn write_samples(path: &Path, signal: &ComplexSignal) -> Result<()> {
    let mut out = String::new();
    for v in signal.as_slice() {
        out.push_str(&format!("{},{}\n", v.re, v.im));
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.txt");
        std::fs::write(&path, "# header\n1.5,-0.25\n\n0,3 # inline\n").unwrap();
        let sig = read_samples(&path).unwrap();
        assert_eq!(sig.len(), 2);
        assert_eq!(sig[0], Complex64::new(1.5, -0.25));
        assert_eq!(sig[1], Complex64::new(0.0, 3.0));

        let back = dir.path().join("back.txt");
        write_samples(&back, &sig).unwrap();
        assert_eq!(read_samples(&back).unwrap(), sig);
    }

    #[test]
    fn malformed_line_is_diagnosed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "1.0,2.0\nnot-a-pair\n").unwrap();
        let err = read_samples(&path).unwrap_err();
        assert!(format!("{err:#}").contains(":2"));
    }
}
