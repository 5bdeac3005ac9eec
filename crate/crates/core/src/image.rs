//! 8-bit grayscale raster with binary PGM (P5) I/O.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    /// Row-major, `width * height` bytes.
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_pgm(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Parse a binary PGM with maxval 255.
    pub fn read_pgm<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut header = Vec::new();
        while header.len() < 4 {
            let mut line = String::new();
            let n = r
                .read_line(&mut line)
                .map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
            if n == 0 {
                return Err(Error::Parse { line: 0, message: "truncated PGM header".into() });
            }
            let content = line.split('#').next().unwrap_or_default();
            header.extend(content.split_whitespace().map(str::to_owned));
        }
        if header[0] != "P5" {
            return Err(Error::Parse { line: 1, message: format!("unsupported magic {:?}", header[0]) });
        }
        let num = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| Error::Parse { line: 0, message: format!("bad PGM header field {s:?}") })
        };
        let (width, height, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
        if maxval != 255 {
            return Err(Error::Parse { line: 0, message: format!("unsupported maxval {maxval}") });
        }
        let mut data = vec![0; width as usize * height as usize];
        r.read_exact(&mut data)
            .map_err(|_| Error::Parse { line: 0, message: "truncated PGM raster".into() })?;
        Ok(Self { width, height, data })
    }

    pub fn load_pgm(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_pgm(file)
    }
}
