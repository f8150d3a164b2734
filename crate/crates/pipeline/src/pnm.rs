//! Binary PPM (P6) and PGM (P5) readers and writers, 8-bit only.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{PipelineError, Result};
use crate::roi::RoiImage;

fn write_header(w: &mut impl Write, magic: &str, width: usize, height: usize) -> Result<()> {
    write!(w, "{magic}\n{width} {height}\n255\n")?;
    Ok(())
}

pub fn write_ppm(path: &Path, image: &RoiImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, "P6", image.width, image.height)?;
    w.write_all(&image.rgb)?;
    w.flush()?;
    Ok(())
}

pub fn write_pgm(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    if gray.len() != width * height {
        return Err(PipelineError::Input(format!(
            "pgm buffer holds {} bytes, {}x{} needs {}",
            gray.len(),
            width,
            height,
            width * height
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, "P5", width, height)?;
    w.write_all(gray)?;
    w.flush()?;
    Ok(())
}

/// Reads whitespace-separated header tokens, skipping `#` comments.
fn read_tokens(r: &mut impl Read, path: &Path, n: usize) -> Result<Vec<String>> {
    let mut tokens = Vec::with_capacity(n);
    let mut current = String::new();
    let mut in_comment = false;
    let mut byte = [0u8; 1];
    while tokens.len() < n {
        if r.read(&mut byte)? == 0 {
            return Err(PipelineError::data(path, "truncated header"));
        }
        let c = byte[0];
        if in_comment {
            if c == b'\n' {
                in_comment = false;
            }
            continue;
        }
        match c {
            b'#' => in_comment = true,
            b' ' | b'\t' | b'\r' | b'\n' => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            _ => current.push(c as char),
        }
    }
    Ok(tokens)
}

fn read_pnm(path: &Path, magic: &str, channels: usize) -> Result<(usize, usize, Vec<u8>)> {
    let mut r = BufReader::new(File::open(path)?);
    let head = read_tokens(&mut r, path, 4)?;
    if head[0] != magic {
        return Err(PipelineError::data(
            path,
            format!("expected {magic}, found {}", head[0]),
        ));
    }
    let width: usize = head[1]
        .parse()
        .map_err(|_| PipelineError::data(path, "bad width"))?;
    let height: usize = head[2]
        .parse()
        .map_err(|_| PipelineError::data(path, "bad height"))?;
    if head[3] != "255" {
        return Err(PipelineError::data(path, "only maxval 255 is supported"));
    }
    let mut data = vec![0u8; width * height * channels];
    r.read_exact(&mut data)
        .map_err(|_| PipelineError::data(path, "truncated pixel data"))?;
    Ok((width, height, data))
}

pub fn read_ppm(path: &Path) -> Result<RoiImage> {
    let (width, height, rgb) = read_pnm(path, "P6", 3)?;
    RoiImage::new(width, height, rgb)
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    read_pnm(path, "P5", 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let img = RoiImage::new(3, 2, (0..18).collect()).unwrap();
        write_ppm(&path, &img).unwrap();
        assert_eq!(read_ppm(&path).unwrap(), img);
    }

    #[test]
    fn pgm_round_trip_with_comment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        write_pgm(&path, 2, 2, &[0, 7, 255, 3]).unwrap();
        let (w, h, data) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (2, 2));
        assert_eq!(data, vec![0, 7, 255, 3]);

        // hand-written file with a comment line
        let path2 = dir.path().join("c.pgm");
        let mut bytes = b"P5\n# a comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[9, 10]);
        std::fs::write(&path2, bytes).unwrap();
        let (w, h, data) = read_pgm(&path2).unwrap();
        assert_eq!((w, h, data), (2, 1, vec![9, 10]));
    }

    #[test]
    fn wrong_magic_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ppm");
        std::fs::write(&path, b"P5\n1 1\n255\n\0").unwrap();
        assert!(matches!(
            read_ppm(&path),
            Err(PipelineError::Data { .. })
        ));
    }
}
