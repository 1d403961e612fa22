//! Raw frame ingestion: PGM/PPM sequences and raw video blobs.
//!
//! A `visual_ref` names either a single raw blob file (see
//! [`crate::tensor_io`]) or a directory of binary `*.pgm` (P5, grayscale) /
//! `*.ppm` (P6, RGB) frames read in lexicographic filename order. Pixel
//! bytes map into `[0, 1]`.

use std::fs;
use std::path::Path;

use vad_core::encoders::FrameTensor;

use crate::error::{PipelineError, Result};
use crate::tensor_io::read_video_blob;

struct PnmImage {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

fn parse_pnm(bytes: &[u8], origin: &Path) -> Result<PnmImage> {
    let bad = |msg: &str| PipelineError::data(format!("{}: {msg}", origin.display()));
    if bytes.len() < 2 {
        return Err(bad("truncated header"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(bad("only binary P5/P6 images are supported")),
    };
    // header tokens: width, height, maxval; '#' starts a comment to EOL
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("malformed header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| bad("malformed header"))?
            .parse::<usize>()
            .map_err(|_| bad("header field out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing header terminator"));
    }
    pos += 1;
    let expected = width * height * channels;
    let data = &bytes[pos..];
    if data.len() != expected {
        return Err(bad(&format!(
            "payload is {} bytes, expected {expected}",
            data.len()
        )));
    }
    Ok(PnmImage {
        channels,
        height,
        width,
        data: data.to_vec(),
    })
}

fn frames_from_directory(dir: &Path) -> Result<FrameTensor> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("ppm")
            )
        })
        .collect();
    if paths.is_empty() {
        return Err(PipelineError::data(format!(
            "{}: no .pgm/.ppm frames found",
            dir.display()
        )));
    }
    paths.sort();
    let mut images = Vec::with_capacity(paths.len());
    for p in &paths {
        images.push(parse_pnm(&fs::read(p)?, p)?);
    }
    let (c, h, w) = (images[0].channels, images[0].height, images[0].width);
    if images
        .iter()
        .any(|i| i.channels != c || i.height != h || i.width != w)
    {
        return Err(PipelineError::data(format!(
            "{}: frames disagree on shape",
            dir.display()
        )));
    }
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in &images {
        // interleaved bytes -> channel-major floats
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.push(img.data[(y * w + x) * c + ch] as f64 / 255.0);
                }
            }
        }
    }
    FrameTensor::new(images.len(), c, h, w, data).map_err(PipelineError::from)
}

/// Loads frames from a raw blob file or a directory of PGM/PPM frames.
pub fn load_frames(visual_ref: &Path) -> Result<FrameTensor> {
    if visual_ref.is_dir() {
        frames_from_directory(visual_ref)
    } else if visual_ref.is_file() {
        read_video_blob(visual_ref)
    } else {
        Err(PipelineError::data(format!(
            "{}: no such file or directory",
            visual_ref.display()
        )))
    }
}

/// Writes one grayscale frame as binary PGM (P5).
pub fn write_pgm(path: &Path, height: usize, width: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != height * width {
        return Err(PipelineError::data(format!(
            "pgm payload {} does not equal {height}x{width}",
            pixels.len()
        )));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes)?;
    Ok(())
}
