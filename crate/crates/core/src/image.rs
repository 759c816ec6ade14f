//! Row-major images and their file formats: binary PGM (8/16-bit), flat CSV,
//! forest edge lists and raw float32 sample dumps.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{check_len, invalid, Error, Result};
use crate::graph::{GridGraph, SpanningForest};

/// Magic bytes opening a sample dump file.
pub const SAMPLE_DUMP_MAGIC: &[u8; 4] = b"RSTS";

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_len(height * width, data.len())?;
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self { height, width, data }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

/// Writes a binary PGM, mapping `range.0 ..= range.1` linearly onto the full
/// grey scale and clamping outside values.
pub fn write_pgm<W: Write>(out: &mut W, image: &Image, depth: BitDepth, range: (f64, f64)) -> Result<()> {
    let maxval = depth.maxval();
    write!(out, "P5\n{} {}\n{}\n", image.width, image.height, maxval)?;
    let span = range.1 - range.0;
    let mut bytes = Vec::with_capacity(image.data.len() * 2);
    for &v in &image.data {
        let t = if span > 0.0 && v.is_finite() {
            ((v - range.0) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = (t * maxval as f64).round() as u32;
        match depth {
            BitDepth::Eight => bytes.push(q as u8),
            BitDepth::Sixteen => bytes.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn save_pgm(path: impl AsRef<Path>, image: &Image, depth: BitDepth, range: (f64, f64)) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm(&mut w, image, depth, range)?;
    w.flush()?;
    Ok(())
}

fn pgm_token<R: BufRead>(input: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if input.read(&mut byte)? == 0 {
            return Err(Error::Parse("unexpected end of PGM header".into()));
        }
        match byte[0] {
            b'#' if tok.is_empty() => {
                let mut skip = String::new();
                input.read_line(&mut skip)?;
            }
            c if c.is_ascii_whitespace() => {
                if !tok.is_empty() {
                    return Ok(tok);
                }
            }
            c => tok.push(c as char),
        }
    }
}

/// Reads a binary (P5) PGM; grey levels are scaled to `[0, 1]`.
pub fn read_pgm<R: BufRead>(input: &mut R) -> Result<Image> {
    if pgm_token(input)? != "P5" {
        return Err(Error::Parse("not a binary PGM (P5)".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        pgm_token(input)?
            .parse()
            .map_err(|_| Error::Parse(format!("bad PGM {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("unsupported PGM maxval {maxval}")));
    }
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let mut raw = vec![0u8; width * height * bytes_per];
    input.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(bytes_per)
        .map(|c| {
            let v = if bytes_per == 1 { c[0] as u32 } else { u16::from_be_bytes([c[0], c[1]]) as u32 };
            v as f64 / maxval as f64
        })
        .collect();
    Image::new(height, width, data)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    read_pgm(&mut BufReader::new(File::open(path)?))
}

/// Flat CSV: a `height,width` line, then one value per line in row-major
/// order.
pub fn write_image_csv<W: Write>(out: &mut W, image: &Image) -> Result<()> {
    writeln!(out, "{},{}", image.height, image.width)?;
    for v in &image.data {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

pub fn read_image_csv<R: BufRead>(input: R) -> Result<Image> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty image CSV".into()))??;
    let (h, w) = header
        .split_once(',')
        .and_then(|(h, w)| Some((h.trim().parse().ok()?, w.trim().parse().ok()?)))
        .ok_or_else(|| Error::Parse(format!("bad image CSV header '{header}'")))?;
    let mut data = Vec::with_capacity(h * w);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        data.push(
            line.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad pixel value '{line}'")))?,
        );
    }
    Image::new(h, w, data)
}

/// Forest CSV: a `components,<k>` header, then one included edge index per
/// line.
pub fn write_forest_csv<W: Write>(out: &mut W, forest: &SpanningForest) -> Result<()> {
    writeln!(out, "components,{}", forest.component_count())?;
    for e in forest.included_edges() {
        writeln!(out, "{e}")?;
    }
    Ok(())
}

/// Reads a forest CSV back. Components are re-rooted at their lowest vertex.
pub fn read_forest_csv<R: BufRead>(input: R, graph: &GridGraph) -> Result<SpanningForest> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty forest CSV".into()))??;
    let k: usize = header
        .strip_prefix("components,")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad forest CSV header '{header}'")))?;
    let mut edges = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        edges.push(
            line.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad edge index '{line}'")))?,
        );
    }
    let forest = SpanningForest::from_edges(graph, &edges)?;
    if forest.component_count() != k {
        return Err(invalid(format!(
            "header says {k} components, edges give {}",
            forest.component_count()
        )));
    }
    Ok(forest)
}

/// Sample dump: magic `RSTS`, then little-endian u32 height, width, count,
/// then `count` row-major float32 images.
pub fn write_sample_dump<W: Write>(out: &mut W, height: usize, width: usize, samples: &[Vec<f32>]) -> Result<()> {
    out.write_all(SAMPLE_DUMP_MAGIC)?;
    for v in [height, width, samples.len()] {
        let v = u32::try_from(v).map_err(|_| invalid("sample dump dimension exceeds u32"))?;
        out.write_all(&v.to_le_bytes())?;
    }
    for s in samples {
        check_len(height * width, s.len())?;
        for v in s {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_sample_dump<R: Read>(input: &mut R) -> Result<(usize, usize, Vec<Vec<f32>>)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != SAMPLE_DUMP_MAGIC {
        return Err(Error::Parse("bad sample dump magic".into()));
    }
    let mut word = [0u8; 4];
    let mut next = |input: &mut R| -> Result<usize> {
        input.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word) as usize)
    };
    let (h, w, count) = (next(input)?, next(input)?, next(input)?);
    let mut samples = Vec::with_capacity(count);
    let mut buf = vec![0u8; h * w * 4];
    for _ in 0..count {
        input.read_exact(&mut buf)?;
        samples.push(
            buf.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        );
    }
    Ok((h, w, samples))
}
