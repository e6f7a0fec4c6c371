//! The square lattice `ℤ²` and the line `ℤ`.
//!
//! Rotor residues on `ℤ²` are `0 = East, 1 = North, 2 = West, 3 = South`, and
//! rotors turn anticlockwise.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use num::BigRational;

use crate::chain::ChainFamily;
use crate::rational::ratio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint {
    pub x: i64,
    pub y: i64,
}

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        LatticePoint { x, y }
    }

    /// Euclidean norm.
    pub fn norm(self) -> f64 {
        ((self.x * self.x + self.y * self.y) as f64).sqrt()
    }

    pub fn l1(self) -> i64 {
        self.x.abs() + self.y.abs()
    }

    /// The four lattice neighbours in residue order.
    pub fn neighbours(self) -> [LatticePoint; 4] {
        [0, 1, 2, 3].map(|i| z2_successor(self, i))
    }
}

impl Add for LatticePoint {
    type Output = LatticePoint;
    fn add(self, o: LatticePoint) -> LatticePoint {
        LatticePoint::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for LatticePoint {
    type Output = LatticePoint;
    fn sub(self, o: LatticePoint) -> LatticePoint {
        LatticePoint::new(self.x - o.x, self.y - o.y)
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

impl FromStr for LatticePoint {
    type Err = String;

    /// Accepts `x,y` or `(x,y)`.
    fn from_str(s: &str) -> Result<Self, String> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (x, y) = inner
            .split_once(',')
            .ok_or_else(|| format!("expected x,y but got {s:?}"))?;
        let parse = |t: &str| t.trim().parse::<i64>().map_err(|e| format!("{s:?}: {e}"));
        Ok(LatticePoint::new(parse(x)?, parse(y)?))
    }
}

/// Unit steps in residue order.
pub const DIRECTIONS: [LatticePoint; 4] = [
    LatticePoint::new(1, 0),
    LatticePoint::new(0, 1),
    LatticePoint::new(-1, 0),
    LatticePoint::new(0, -1),
];

/// `u^(i)`: the neighbour of `u` in direction `i mod 4`.
pub fn z2_successor(u: LatticePoint, i: usize) -> LatticePoint {
    u + DIRECTIONS[i % 4]
}

/// The initial rotor `⌊½ + (2/π)·arg(x − ½, y − ½)⌋ mod 4`, with `arg ∈ [0, 2π)`.
///
/// Evaluated on `X = 2x − 1`, `Y = 2y − 1` (odd, so never on an axis) by
/// comparing against the diagonals; a point on a diagonal belongs to the
/// sector that starts there.
pub fn z2_initial_rotor(v: LatticePoint) -> usize {
    let (x, y) = (2 * v.x - 1, 2 * v.y - 1);
    if y > 0 && -y < x && x <= y {
        1
    } else if x < 0 && x < y && y <= -x {
        2
    } else if y <= x && x < -y {
        3
    } else {
        0
    }
}

/// The `k` with `v ∈ (−k, k]² \ (−(k−1), k−1]²`.
pub fn layer(v: LatticePoint) -> i64 {
    v.x.max(1 - v.x).max(v.y).max(1 - v.y)
}

/// A dense array over a rectangle of `ℤ²` that grows to cover whatever is written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid<T> {
    min: LatticePoint,
    width: i64,
    height: i64,
    cells: Vec<T>,
    default: T,
}

impl<T: Copy> Grid<T> {
    pub fn new(default: T) -> Self {
        Grid {
            min: LatticePoint::new(-4, -4),
            width: 9,
            height: 9,
            cells: vec![default; 81],
            default,
        }
    }

    fn index(&self, p: LatticePoint) -> Option<usize> {
        let (dx, dy) = (p.x - self.min.x, p.y - self.min.y);
        ((0..self.width).contains(&dx) && (0..self.height).contains(&dy)).then(|| (dy * self.width + dx) as usize)
    }

    pub fn get(&self, p: LatticePoint) -> T {
        self.index(p).map_or(self.default, |i| self.cells[i])
    }

    pub fn get_mut(&mut self, p: LatticePoint) -> &mut T {
        if self.index(p).is_none() {
            self.grow_to(p);
        }
        let i = self.index(p).unwrap();
        &mut self.cells[i]
    }

    pub fn set(&mut self, p: LatticePoint, value: T) {
        *self.get_mut(p) = value;
    }

    fn grow_to(&mut self, p: LatticePoint) {
        let max = LatticePoint::new(self.min.x + self.width - 1, self.min.y + self.height - 1);
        let pad_x = self.width.max(8);
        let pad_y = self.height.max(8);
        let new_min = LatticePoint::new(
            if p.x < self.min.x { p.x - pad_x } else { self.min.x },
            if p.y < self.min.y { p.y - pad_y } else { self.min.y },
        );
        let new_max = LatticePoint::new(
            if p.x > max.x { p.x + pad_x } else { max.x },
            if p.y > max.y { p.y + pad_y } else { max.y },
        );
        let (w, h) = (new_max.x - new_min.x + 1, new_max.y - new_min.y + 1);
        let mut cells = vec![self.default; (w * h) as usize];
        for dy in 0..self.height {
            let src = (dy * self.width) as usize;
            let dst = ((dy + self.min.y - new_min.y) * w + (self.min.x - new_min.x)) as usize;
            cells[dst..dst + self.width as usize].copy_from_slice(&self.cells[src..src + self.width as usize]);
        }
        self.min = new_min;
        self.width = w;
        self.height = h;
        self.cells = cells;
    }

    /// The allocated rectangle as `(min corner, max corner)`.
    pub fn bounds(&self) -> (LatticePoint, LatticePoint) {
        (
            self.min,
            LatticePoint::new(self.min.x + self.width - 1, self.min.y + self.height - 1),
        )
    }

    /// Points whose value differs from the default, in row-major order.
    pub fn touched(&self) -> impl Iterator<Item = (LatticePoint, T)> + '_
    where
        T: PartialEq,
    {
        self.cells.iter().enumerate().filter(|(_, v)| **v != self.default).map(|(i, v)| {
            let i = i as i64;
            (LatticePoint::new(self.min.x + i % self.width, self.min.y + i / self.width), *v)
        })
    }
}

/// Simple random walk on `ℤ²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquareLattice;

impl ChainFamily for SquareLattice {
    type Vertex = LatticePoint;

    fn transitions(&self, v: LatticePoint) -> Vec<(LatticePoint, BigRational)> {
        v.neighbours().iter().map(|&w| (w, ratio(1, 4))).collect()
    }

    fn label(&self, v: LatticePoint) -> String {
        v.to_string()
    }
}

/// Nearest-neighbour walk on `ℤ` stepping right with probability `p` and left with `1 − p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub p_right: BigRational,
}

impl Line {
    pub fn simple() -> Self {
        Line { p_right: ratio(1, 2) }
    }
}

impl ChainFamily for Line {
    type Vertex = i64;

    fn transitions(&self, v: i64) -> Vec<(i64, BigRational)> {
        let left = BigRational::from_integer(1.into()) - &self.p_right;
        vec![(v - 1, left), (v + 1, self.p_right.clone())]
    }

    fn label(&self, v: i64) -> String {
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn p(x: i64, y: i64) -> LatticePoint {
        LatticePoint::new(x, y)
    }

    #[test]
    fn successors() {
        assert_eq!(z2_successor(p(0, 0), 0), p(1, 0));
        assert_eq!(z2_successor(p(2, -1), 3), p(2, -2));
        let u = p(5, 5);
        assert_eq!(z2_successor(u, 4), z2_successor(u, 0));
        assert_eq!(u.neighbours().iter().fold(p(0, 0), |acc, &w| acc + (w - u)), p(0, 0));
    }

    #[test]
    fn initial_rotor_examples() {
        assert_eq!(z2_initial_rotor(p(1, 1)), 1);
        assert_eq!(z2_initial_rotor(p(0, 0)), 3);
        assert_eq!(z2_initial_rotor(p(1, 0)), 0);
        assert_eq!(z2_initial_rotor(p(0, 1)), 2);
    }

    #[test]
    fn initial_rotor_matches_angle_off_diagonals() {
        for x in -30..=30 {
            for y in -30..=30 {
                let (fx, fy) = (x as f64 - 0.5, y as f64 - 0.5);
                if fx.abs() == fy.abs() {
                    continue;
                }
                let mut arg = fy.atan2(fx);
                if arg < 0.0 {
                    arg += 2.0 * PI;
                }
                let expected = ((0.5 + 2.0 / PI * arg).floor() as usize) % 4;
                assert_eq!(z2_initial_rotor(p(x, y)), expected, "({x},{y})");
            }
        }
    }

    #[test]
    fn diagonals_start_their_sector() {
        for k in 1..20 {
            // (k, k): angle π/4 opens North; (1−k, k): 3π/4 opens West;
            // (1−k, 1−k): 5π/4 opens South; (k, 1−k): 7π/4 opens East.
            assert_eq!(z2_initial_rotor(p(k, k)), 1);
            assert_eq!(z2_initial_rotor(p(1 - k, k)), 2);
            assert_eq!(z2_initial_rotor(p(1 - k, 1 - k)), 3);
            assert_eq!(z2_initial_rotor(p(k, 1 - k)), 0);
        }
    }

    #[test]
    fn layers_partition_boxes() {
        for k in 1..8i64 {
            let mut count = 0;
            for x in -10..=10 {
                for y in -10..=10 {
                    let v = p(x, y);
                    let inside = -k < x && x <= k && -k < y && y <= k;
                    assert_eq!(inside, layer(v) <= k);
                    if layer(v) == k {
                        count += 1;
                    }
                }
            }
            assert_eq!(count, (2 * k) * (2 * k) - (2 * k - 2) * (2 * k - 2));
        }
    }

    #[test]
    fn grid_grows_and_keeps_values() {
        let mut g = Grid::new(0u32);
        g.set(p(0, 0), 7);
        g.set(p(-100, 3), 1);
        g.set(p(50, -60), 2);
        assert_eq!(g.get(p(0, 0)), 7);
        assert_eq!(g.get(p(-100, 3)), 1);
        assert_eq!(g.get(p(50, -60)), 2);
        assert_eq!(g.get(p(1000, 1000)), 0);
        assert_eq!(g.touched().count(), 3);
    }

    #[test]
    fn parse_points() {
        assert_eq!("(1,-2)".parse::<LatticePoint>().unwrap(), p(1, -2));
        assert_eq!(" 3 , 4 ".parse::<LatticePoint>().unwrap(), p(3, 4));
        assert!("3".parse::<LatticePoint>().is_err());
        assert_eq!(p(-1, 2).to_string(), "(-1,2)");
    }
}
