//! Cube headers, raw BSQ samples and ground-truth grids.
//!
//! Header format (ASCII, one `key=value` per line, `#` starts a comment):
//!
//! ```text
//! rows=145
//! cols=145
//! bands=220
//! dtype=u16le
//! interleave=bsq
//! data=92AV3C.raw
//! ```
//!
//! `data` is resolved relative to the header's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{GroundTruth, HyperCube, AVIRIS_REDUCED_BANDS};
use crate::error::{Error, Result};

struct CubeHeader {
    rows: usize,
    cols: usize,
    bands: usize,
    data: PathBuf,
}

fn parse_header(path: &Path, text: &str) -> Result<CubeHeader> {
    let bad = |reason: String| Error::Header {
        path: path.to_path_buf(),
        reason,
    };
    let mut fields = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key=value", lineno + 1)))?;
        fields.insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
    }
    let get = |key: &str| {
        fields
            .get(key)
            .ok_or_else(|| bad(format!("missing key `{key}`")))
    };
    let dim = |key: &str| -> Result<usize> {
        let v = get(key)?;
        let n: i64 = v
            .parse()
            .map_err(|_| bad(format!("`{key}` is not an integer: {v}")))?;
        if n <= 0 {
            return Err(Error::Dimensions(format!("{key}={n} must be positive")));
        }
        Ok(n as usize)
    };
    let rows = dim("rows")?;
    let cols = dim("cols")?;
    let bands = dim("bands")?;
    if let Some(dtype) = fields.get("dtype") {
        if !dtype.eq_ignore_ascii_case("u16le") {
            return Err(bad(format!("unsupported dtype `{dtype}` (only u16le)")));
        }
    }
    if let Some(il) = fields.get("interleave") {
        if !il.eq_ignore_ascii_case("bsq") {
            return Err(bad(format!("unsupported interleave `{il}` (only bsq)")));
        }
    }
    let data = get("data")?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(CubeHeader {
        rows,
        cols,
        bands,
        data: dir.join(data),
    })
}

/// Loads a cube described by an ASCII header and its raw u16le BSQ file.
pub fn load_cube(header_path: impl AsRef<Path>) -> Result<HyperCube> {
    let header_path = header_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = parse_header(header_path, &text)?;
    let bytes = fs::read(&header.data).map_err(|e| Error::io(&header.data, e))?;
    let expected = header.rows * header.cols * header.bands;
    if bytes.len() != expected * 2 {
        return Err(Error::SizeMismatch {
            expected,
            actual: bytes.len() / 2,
        });
    }
    let values = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    if header.bands == AVIRIS_REDUCED_BANDS {
        log::warn!(
            "{}: 200 bands; this looks like the water-band-removed AVIRIS variant, band numbers will not line up with the 220-band product",
            header_path.display()
        );
    }
    HyperCube::new(header.rows, header.cols, header.bands, values)
}

/// Writes `cube` as a header plus a sibling `<stem>.raw` file.
pub fn write_cube(cube: &HyperCube, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let stem = header_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("cube");
    let data_name = format!("{stem}.raw");
    let data_path = header_path.with_file_name(&data_name);
    let header = format!(
        "rows={}\ncols={}\nbands={}\ndtype=u16le\ninterleave=bsq\ndata={}\n",
        cube.rows(),
        cube.cols(),
        cube.n_bands(),
        data_name
    );
    let mut bytes = Vec::with_capacity(cube.values().len() * 2);
    for v in cube.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    fs::write(header_path, header).map_err(|e| Error::io(header_path, e))?;
    Ok(())
}

/// Loads a label grid from ASCII (whitespace-separated integers, one line per
/// row) or from an 8-bit PGM (`P5` binary or `P2` plain).
pub fn load_ground_truth(path: impl AsRef<Path>, expected_dims: (usize, usize)) -> Result<GroundTruth> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (rows, cols, labels) = if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        parse_pgm(&bytes)?
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::GroundTruth("file is neither PGM nor ASCII".into()))?;
        parse_ascii_grid(&text)?
    };
    if (rows, cols) != expected_dims {
        return Err(Error::Dimensions(format!(
            "ground truth is {rows}x{cols}, expected {}x{}",
            expected_dims.0, expected_dims.1
        )));
    }
    GroundTruth::new(rows, cols, labels)
}

fn parse_label(tok: &str) -> Result<u16> {
    let v: i64 = tok
        .parse()
        .map_err(|_| Error::GroundTruth(format!("not an integer label: `{tok}`")))?;
    if v < 0 {
        return Err(Error::GroundTruth(format!("negative label {v}")));
    }
    u16::try_from(v).map_err(|_| Error::GroundTruth(format!("label {v} too large")))
}

fn parse_ascii_grid(text: &str) -> Result<(usize, usize, Vec<u16>)> {
    let mut labels = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for line in text.lines() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(toks.len()),
            Some(c) if c != toks.len() => {
                return Err(Error::GroundTruth(format!(
                    "row {} has {} entries, expected {c}",
                    rows + 1,
                    toks.len()
                )))
            }
            _ => {}
        }
        for tok in toks {
            labels.push(parse_label(tok)?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::GroundTruth("empty grid".into()))?;
    Ok((rows, cols, labels))
}

fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let binary = bytes.starts_with(b"P5");
    // magic, width, height, maxval
    let mut pos = 2;
    let mut header = [0usize; 3];
    for slot in header.iter_mut() {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::GroundTruth("truncated PGM header".into()))?;
    }
    let [cols, rows, maxval] = header;
    if maxval == 0 || maxval > 255 {
        return Err(Error::GroundTruth(format!(
            "PGM maxval {maxval} unsupported (8-bit only)"
        )));
    }
    let n = rows * cols;
    let labels = if binary {
        // exactly one whitespace byte separates maxval from the raster
        let data = bytes.get(pos + 1..).unwrap_or(&[]);
        if data.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                actual: data.len(),
            });
        }
        data.iter().map(|&b| u16::from(b)).collect()
    } else {
        let text = std::str::from_utf8(&bytes[pos..])
            .map_err(|_| Error::GroundTruth("non-ASCII P2 raster".into()))?;
        let labels = text
            .split_whitespace()
            .map(parse_label)
            .collect::<Result<Vec<_>>>()?;
        if labels.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                actual: labels.len(),
            });
        }
        labels
    };
    Ok((rows, cols, labels))
}

/// Writes a label grid as ASCII, one line per row.
pub fn write_ground_truth(gt: &GroundTruth, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(gt.labels().len() * 3);
    for row in gt.labels().chunks(gt.cols()) {
        let line: Vec<String> = row.iter().map(|l| l.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let values: Vec<u16> = (0..48).map(|v| 955 + v * 17).collect();
        let cube = HyperCube::new(4, 4, 3, values).unwrap();
        let hdr = dir.path().join("tiny.hdr");
        write_cube(&cube, &hdr).unwrap();
        let back = load_cube(&hdr).unwrap();
        assert_eq!(back, cube);
        assert_eq!(back.value_range(), (955, 955 + 47 * 17));
    }

    #[test]
    fn size_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("c.hdr"),
            "rows=10\ncols=10\nbands=5\ndtype=u16le\ninterleave=bsq\ndata=c.raw\n",
        )
        .unwrap();
        fs::write(dir.path().join("c.raw"), vec![0u8; 499 * 2]).unwrap();
        let err = load_cube(dir.path().join("c.hdr")).unwrap_err();
        assert!(err.to_string().contains("size mismatch"), "{err}");
    }

    #[test]
    fn missing_header_names_the_path() {
        let err = load_cube("/nonexistent/cube.hdr").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/cube.hdr"));
    }

    #[test]
    fn non_positive_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("c.hdr");
        fs::write(&hdr, "rows=0\ncols=10\nbands=5\ndata=c.raw\n").unwrap();
        assert!(matches!(load_cube(&hdr), Err(Error::Dimensions(_))));
        fs::write(&hdr, "rows=-3\ncols=10\nbands=5\ndata=c.raw\n").unwrap();
        assert!(matches!(load_cube(&hdr), Err(Error::Dimensions(_))));
    }

    #[test]
    fn rejects_other_interleaves() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("c.hdr");
        fs::write(&hdr, "rows=1\ncols=1\nbands=1\ninterleave=bil\ndata=c.raw\n").unwrap();
        assert!(matches!(load_cube(&hdr), Err(Error::Header { .. })));
    }

    #[test]
    fn ascii_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.txt");
        fs::write(&p, "1 1\n2 0\n").unwrap();
        let gt = load_ground_truth(&p, (2, 2)).unwrap();
        assert_eq!(gt.class_counts(), &[2, 1]);
        assert_eq!(gt.n_labeled(), 3);
        assert!(matches!(
            load_ground_truth(&p, (3, 2)),
            Err(Error::Dimensions(_))
        ));
    }

    #[test]
    fn negative_and_empty_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.txt");
        fs::write(&p, "1 -1\n2 0\n").unwrap();
        assert!(matches!(
            load_ground_truth(&p, (2, 2)),
            Err(Error::GroundTruth(_))
        ));
        fs::write(&p, "0 0\n0 0\n").unwrap();
        let err = load_ground_truth(&p, (2, 2)).unwrap_err();
        assert_eq!(err.to_string(), "no labeled pixels");
    }

    #[test]
    fn pgm_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.pgm");
        let mut bytes = b"P5\n# labels\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 1, 2, 3, 3, 1]);
        fs::write(&p, bytes).unwrap();
        let gt = load_ground_truth(&p, (2, 3)).unwrap();
        assert_eq!(gt.labels(), &[0, 1, 2, 3, 3, 1]);
        assert_eq!(gt.n_classes(), 3);

        fs::write(&p, "P2\n3 2\n16\n0 1 2\n3 3 1\n").unwrap();
        let plain = load_ground_truth(&p, (2, 3)).unwrap();
        assert_eq!(plain, gt);
    }

    #[test]
    fn ground_truth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gt.txt");
        let gt = GroundTruth::new(2, 3, vec![0, 4, 2, 1, 1, 0]).unwrap();
        write_ground_truth(&gt, &p).unwrap();
        assert_eq!(load_ground_truth(&p, (2, 3)).unwrap(), gt);
    }
}
