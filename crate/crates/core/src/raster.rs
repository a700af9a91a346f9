//! 8-bit grayscale rasters and the binary PGM (P5) codec.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const INK: u8 = 0;
pub const PAPER: u8 = 255;

/// Row-major 8-bit image. 0 is black ink, 255 is white paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, fill: u8) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        Self { width, height, pixels: vec![fill; width as usize * height as usize] }
    }

    pub fn from_vec(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(Error::LengthMismatch {
                expected: width as usize * height as usize,
                got: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.pixels[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn is_binary(&self) -> bool {
        self.pixels.iter().all(|&p| p == INK || p == PAPER)
    }

    pub fn ink_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == INK).count()
    }

    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)?;
        Ok(())
    }

    pub fn read_pgm<R: BufRead>(mut input: R) -> Result<Self> {
        let magic = header_token(&mut input)?;
        if magic != "P5" {
            return Err(Error::Parse(format!("expected P5 magic, found {magic:?}")));
        }
        let width = header_number(&mut input, "width")?;
        let height = header_number(&mut input, "height")?;
        let maxval = header_number(&mut input, "maxval")?;
        if maxval != 255 {
            return Err(Error::Parse(format!("only 8-bit PGM supported, maxval {maxval}")));
        }
        let mut pixels = vec![0u8; width as usize * height as usize];
        input
            .read_exact(&mut pixels)
            .map_err(|_| Error::Parse("truncated PGM raster".into()))?;
        Self::from_vec(width, height, pixels)
    }
}

// Reads one whitespace-delimited header token, skipping `#` comments. Consumes
// exactly one whitespace byte after the token, as the format requires before
// the raster.
fn header_token<R: BufRead>(input: &mut R) -> Result<String> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        if input.read(&mut byte)? == 0 {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        let c = byte[0];
        if c == b'#' && token.is_empty() {
            let mut sink = Vec::new();
            input.read_until(b'\n', &mut sink)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            return Ok(token);
        }
        token.push(c as char);
    }
}

fn header_number<R: BufRead>(input: &mut R, what: &str) -> Result<u32> {
    let tok = header_token(input)?;
    tok.parse()
        .map_err(|_| Error::Parse(format!("bad PGM {what}: {tok:?}")))
}
