//! Binary PPM (P6) images of rotor configurations on `ℤ²`, one pixel per
//! lattice point, North up. East is white, North red, West green, South blue.

use thiserror::Error;

use crate::lattice::LatticePoint;

pub const PALETTE: [[u8; 3]; 4] = [[255, 255, 255], [255, 0, 0], [0, 255, 0], [0, 0, 255]];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PpmError {
    #[error("empty box: min {min} is not below max {max}")]
    EmptyBox { min: LatticePoint, max: LatticePoint },
    #[error("malformed PPM: {0}")]
    Malformed(String),
    #[error("pixel {0:?} is not a palette colour")]
    UnknownColour([u8; 3]),
}

/// The closed rectangle `[min.x, max.x] × [min.y, max.y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBox {
    pub min: LatticePoint,
    pub max: LatticePoint,
}

impl PixelBox {
    pub fn new(min: LatticePoint, max: LatticePoint) -> Result<Self, PpmError> {
        if min.x > max.x || min.y > max.y {
            return Err(PpmError::EmptyBox { min, max });
        }
        Ok(PixelBox { min, max })
    }

    /// `(−k, k]²`.
    pub fn centred(k: i64) -> Result<Self, PpmError> {
        PixelBox::new(LatticePoint::new(1 - k, 1 - k), LatticePoint::new(k, k))
    }

    pub fn width(&self) -> usize {
        (self.max.x - self.min.x + 1) as usize
    }

    pub fn height(&self) -> usize {
        (self.max.y - self.min.y + 1) as usize
    }

    /// Lattice points in pixel order: rows from North to South, each West to East.
    pub fn points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        (self.min.y..=self.max.y)
            .rev()
            .flat_map(move |y| (self.min.x..=self.max.x).map(move |x| LatticePoint::new(x, y)))
    }
}

/// Render the residues `rotor(v)` over `area`.
pub fn render_ppm<F: Fn(LatticePoint) -> usize>(area: &PixelBox, rotor: F) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", area.width(), area.height()).into_bytes();
    out.reserve(3 * area.width() * area.height());
    for v in area.points() {
        out.extend_from_slice(&PALETTE[rotor(v) % 4]);
    }
    out
}

/// Width, height and raw RGB payload of a P6 image with maxval 255.
pub fn parse_ppm(bytes: &[u8]) -> Result<(usize, usize, &[u8]), PpmError> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(PpmError::Malformed("truncated header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|e| PpmError::Malformed(e.to_string()))?);
    }
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(PpmError::Malformed(format!("unsupported header {fields:?}")));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|e| PpmError::Malformed(format!("{s:?}: {e}")));
    let (w, h) = (parse(fields[1])?, parse(fields[2])?);
    // Exactly one whitespace byte separates the header from the payload.
    let payload = bytes.get(pos + 1..).unwrap_or(&[]);
    if payload.len() != 3 * w * h {
        return Err(PpmError::Malformed(format!("expected {} payload bytes, found {}", 3 * w * h, payload.len())));
    }
    Ok((w, h, payload))
}

/// Recover the residues from an image rendered over a box with corner `min`.
pub fn decode_rotors(bytes: &[u8], min: LatticePoint) -> Result<Vec<(LatticePoint, usize)>, PpmError> {
    let (w, h, payload) = parse_ppm(bytes)?;
    if w == 0 || h == 0 {
        return Err(PpmError::Malformed("empty image".into()));
    }
    let area = PixelBox::new(min, LatticePoint::new(min.x + w as i64 - 1, min.y + h as i64 - 1))?;
    area.points()
        .zip(payload.chunks_exact(3))
        .map(|(v, px)| {
            let rgb = [px[0], px[1], px[2]];
            PALETTE
                .iter()
                .position(|c| *c == rgb)
                .map(|r| (v, r))
                .ok_or(PpmError::UnknownColour(rgb))
        })
        .collect()
}
