//! The potential kernel `a` of the simple random walk on `ℤ²`, normalised by
//! `a(0) = 0`, `Δa = 1[v = 0]`, so that `a(1,0) = 1`.
//!
//! Every value has the form `a(v) = Q(v) + R(v)/π` with `Q` an integer and `R`
//! rational. The diagonal is known in closed form,
//! `a(n,n) = (4/π)·Σ_{k=1}^{n} 1/(2k−1)`, and harmonicity off the origin
//! determines column `n+1` of the octant `0 ≤ y ≤ x` from columns `n` and
//! `n−1`. The recursion amplifies by up to `3+2√2` per column, so it is run on
//! exact integers (with `R` scaled by `L = lcm(1, 3, …, 2N−1)`) and evaluated
//! with enough bits of `1/π` to survive the cancellation.
//!
//! Outside the table, values come from the integral
//! `a(x,y) = (2/π) ∫_0^π [1 − e^{−|y|β} cos(xt)] / sinh β dt` with
//! `cosh β = 2 − cos t`.

use std::sync::OnceLock;

use num::{BigInt, BigRational, Integer, One, ToPrimitive, Zero};

use crate::lattice::LatticePoint;

/// Radius of the shared table.
pub const DEFAULT_RADIUS: i64 = 512;

/// `a(v) = q + r/π`, exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Symbolic {
    pub q: BigInt,
    pub r: BigRational,
}

impl Symbolic {
    pub fn to_f64(&self) -> f64 {
        self.q.to_f64().unwrap() + self.r.to_f64().unwrap() / std::f64::consts::PI
    }
}

/// Values of `a` on the octant `0 ≤ y ≤ x ≤ radius`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    radius: i64,
    /// Row-major over the octant: column `x` starts at `x(x+1)/2`.
    values: Vec<f64>,
    exact: Vec<Symbolic>,
    exact_radius: i64,
}

fn octant(v: LatticePoint) -> (i64, i64) {
    let (x, y) = (v.x.abs(), v.y.abs());
    if x >= y {
        (x, y)
    } else {
        (y, x)
    }
}

fn slot(x: i64, y: i64) -> usize {
    (x * (x + 1) / 2 + y) as usize
}

/// `floor(π·2^bits)` by Machin's formula.
fn pi_fixed(bits: u64) -> BigInt {
    let guard = 32;
    let one = BigInt::one() << (bits + guard);
    // atan(1/k) = Σ (−1)^j / ((2j+1) k^{2j+1})
    let atan_inv = |k: u64| {
        let k = BigInt::from(k);
        let k2 = &k * &k;
        let mut power = &one / &k;
        let mut sum = BigInt::zero();
        let mut j = 0u64;
        while !power.is_zero() {
            let term = &power / BigInt::from(2 * j + 1);
            if j.is_multiple_of(2) {
                sum += term;
            } else {
                sum -= term;
            }
            power /= &k2;
            j += 1;
        }
        sum
    };
    let pi = atan_inv(5) * 16 - atan_inv(239) * 4;
    pi >> guard
}

impl KernelTable {
    /// Build the table for `0 ≤ y ≤ x ≤ radius`, keeping exact values for `x ≤ exact_radius`.
    pub fn build(radius: i64, exact_radius: i64) -> Self {
        assert!(radius >= 1);
        let n = radius as u64;
        let l = (1..=n).fold(BigInt::one(), |acc, k| acc.lcm(&BigInt::from(2 * k - 1)));
        // a(n,n)·π·L / 4 = Σ L/(2k−1)
        let mut diag_r = Vec::with_capacity(radius as usize + 1);
        let mut acc = BigInt::zero();
        diag_r.push(acc.clone());
        for k in 1..=n {
            acc += &l / BigInt::from(2 * k - 1);
            diag_r.push(&acc * 4);
        }

        // Enough bits that |R|·2^{-P} and the error in 1/π are far below 1e-12.
        let p = l.bits() + 3 * n + 128;
        let pi = pi_fixed(p + l.bits() + 8);
        // K = floor(2^P / (L π))
        let k_inv = (BigInt::one() << (2 * p + l.bits() + 8)) / (&l * &pi);
        let to_f64 = |q: &BigInt, r: &BigInt| -> f64 {
            let x = (q << p) + r * &k_inv;
            let shift = p - 60;
            let m = (&x >> shift).to_f64().unwrap();
            m / 2f64.powi(60)
        };

        let total = slot(radius, radius) + 1;
        let mut values = vec![0.0; total];
        let mut exact = Vec::new();
        let exact_radius = exact_radius.min(radius);
        // Columns x−1 and x as (Q, R·L) for y = 0..=x.
        let mut prev: Vec<(BigInt, BigInt)> = vec![(BigInt::zero(), BigInt::zero())];
        let mut cur: Vec<(BigInt, BigInt)> = vec![(BigInt::one(), BigInt::zero()), (BigInt::zero(), diag_r[1].clone())];
        let record = |x: i64, col: &[(BigInt, BigInt)], values: &mut Vec<f64>, exact: &mut Vec<Symbolic>| {
            for (y, (q, r)) in col.iter().enumerate() {
                values[slot(x, y as i64)] = to_f64(q, r);
                if x <= exact_radius {
                    exact.push(Symbolic {
                        q: q.clone(),
                        r: BigRational::new(r.clone(), l.clone()),
                    });
                }
            }
        };
        record(0, &prev, &mut values, &mut exact);
        record(1, &cur, &mut values, &mut exact);
        for x in 1..radius {
            let xu = x as usize;
            let at = |col: &Vec<(BigInt, BigInt)>, y: i64| -> (BigInt, BigInt) {
                let y = y.unsigned_abs() as usize;
                col[y].clone()
            };
            let mut next = vec![(BigInt::zero(), BigInt::zero()); xu + 2];
            for y in 0..x {
                // a(x+1,y) = 4a(x,y) − a(x−1,y) − a(x,y+1) − a(x,y−1)
                let (q0, r0) = at(&cur, y);
                let (q1, r1) = at(&prev, y);
                let (q2, r2) = at(&cur, y + 1);
                let (q3, r3) = at(&cur, y - 1);
                next[y as usize] = (q0 * 4 - q1 - q2 - q3, r0 * 4 - r1 - r2 - r3);
            }
            // a(x+1,x) = 2a(x,x) − a(x,x−1)
            let (qd, rd) = at(&cur, x);
            let (qs, rs) = at(&cur, x - 1);
            next[xu] = (qd * 2 - qs, rd * 2 - rs);
            next[xu + 1] = (BigInt::zero(), diag_r[xu + 1].clone());
            record(x + 1, &next, &mut values, &mut exact);
            prev = std::mem::replace(&mut cur, next);
        }
        KernelTable {
            radius,
            values,
            exact,
            exact_radius,
        }
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn contains(&self, v: LatticePoint) -> bool {
        octant(v).0 <= self.radius
    }

    pub fn get(&self, v: LatticePoint) -> Option<f64> {
        let (x, y) = octant(v);
        (x <= self.radius).then(|| self.values[slot(x, y)])
    }

    /// `a(v)` as `q + r/π`, for `max(|x|, |y|)` up to the exact radius.
    pub fn symbolic(&self, v: LatticePoint) -> Option<&Symbolic> {
        let (x, y) = octant(v);
        (x <= self.exact_radius).then(|| &self.exact[slot(x, y)])
    }
}

fn shared() -> &'static KernelTable {
    static TABLE: OnceLock<KernelTable> = OnceLock::new();
    TABLE.get_or_init(|| KernelTable::build(DEFAULT_RADIUS, 16))
}

/// `a(v)`, from the shared table or by quadrature beyond it.
pub fn potential_kernel(v: LatticePoint) -> f64 {
    shared().get(v).unwrap_or_else(|| kernel_integral(v))
}

/// `a(v) = q + r/π` for small `v`.
pub fn potential_kernel_symbolic(v: LatticePoint) -> Option<Symbolic> {
    shared().symbolic(v).cloned()
}

/// Nodes and weights of the 20-point Gauss–Legendre rule on `[−1, 1]`.
const GAUSS20: [(f64, f64); 10] = [
    (0.076_526_521_133_497_33, 0.152_753_387_130_725_85),
    (0.227_785_851_141_645_08, 0.149_172_986_472_603_75),
    (0.373_706_088_715_419_56, 0.142_096_109_318_382_05),
    (0.510_867_001_950_827_1, 0.131_688_638_449_176_63),
    (0.636_053_680_726_515, 0.118_194_531_961_518_42),
    (0.746_331_906_460_150_8, 0.101_930_119_817_240_44),
    (0.839_116_971_822_218_8, 0.083_276_741_576_704_75),
    (0.912_234_428_251_326, 0.062_672_048_334_109_06),
    (0.963_971_927_277_913_8, 0.040_601_429_800_386_94),
    (0.993_128_599_185_094_9, 0.017_614_007_139_152_12),
];

/// `a(v)` by composite Gauss–Legendre quadrature of the one-dimensional integral.
pub fn kernel_integral(v: LatticePoint) -> f64 {
    let (x, y) = (v.x.abs() as f64, v.y.abs() as f64);
    if x == 0.0 && y == 0.0 {
        return 0.0;
    }
    let integrand = |t: f64| {
        let c = 2.0 - t.cos();
        let beta = c.acosh();
        let sinh = (c * c - 1.0).sqrt();
        if t == 0.0 {
            // limit t → 0: sinh β ≈ t, 1 − e^{−yβ}cos(xt) ≈ y t
            return y;
        }
        // 1 − e^{−yβ}cos(xt), written to avoid cancellation near t = 0
        let e = (-y * beta).exp_m1();
        let cx = (x * t).cos();
        let one_minus_cos = 2.0 * (0.5 * x * t).sin().powi(2);
        let numer = one_minus_cos - e * cx;
        numer / sinh
    };
    let panels = ((x.max(y) * 2.0) as usize).max(16);
    let h = std::f64::consts::PI / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (node, w) in GAUSS20 {
            total += w * (integrand(mid - half * node) + integrand(mid + half * node));
        }
    }
    total * h / std::f64::consts::PI
}

/// Fit `a(v) − (2/π)ln|v| ≈ A + B·cos 4θ/|v|² + (C + D·cos 4θ + E·cos 8θ)/|v|⁴`
/// by least squares over lattice points with `lo ≤ |v| ≤ hi`, and return `A`.
pub fn fit_asymptotic_constant(lo: f64, hi: f64) -> f64 {
    let mut normal = [[0.0f64; 6]; 5];
    let r_max = hi.ceil() as i64;
    for x in 0..=r_max {
        for y in 0..=x {
            let r = ((x * x + y * y) as f64).sqrt();
            if r < lo || r > hi {
                continue;
            }
            let v = LatticePoint::new(x, y);
            let theta = (y as f64).atan2(x as f64);
            let target = potential_kernel(v) - 2.0 / std::f64::consts::PI * r.ln();
            let r2 = r * r;
            let r4 = r2 * r2;
            let basis = [
                1.0,
                (4.0 * theta).cos() / r2,
                1.0 / r4,
                (4.0 * theta).cos() / r4,
                (8.0 * theta).cos() / r4,
            ];
            // Weight off-diagonal octant points twice (they stand for 8 points, diagonal/axis for 4).
            let w = if y == 0 || y == x { 1.0 } else { 2.0 };
            for i in 0..5 {
                for j in 0..5 {
                    normal[i][j] += w * basis[i] * basis[j];
                }
                normal[i][5] += w * basis[i] * target;
            }
        }
    }
    solve_small(normal)[0]
}

fn solve_small<const N: usize, const M: usize>(mut m: [[f64; M]; N]) -> [f64; N] {
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for row in 0..N {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..M {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = m[i][N] / m[i][i];
    }
    out
}

/// `h(v) = P_v(T_b < T_c)` for simple random walk on `ℤ²`:
/// `½ + [a(v−c) − a(v−b)] / (2a(b−c))`.
pub fn z2_hitting_prob(v: LatticePoint, b: LatticePoint, c: LatticePoint) -> f64 {
    assert_ne!(b, c, "b and c must differ");
    if v == b {
        return 1.0;
    }
    if v == c {
        return 0.0;
    }
    0.5 + (potential_kernel(v - c) - potential_kernel(v - b)) / (2.0 * potential_kernel(b - c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};
    use std::f64::consts::PI;

    fn p(x: i64, y: i64) -> LatticePoint {
        LatticePoint::new(x, y)
    }

    #[test]
    fn small_values_are_exact() {
        assert_eq!(potential_kernel_symbolic(p(0, 0)).unwrap().q, BigInt::zero());
        let a10 = potential_kernel_symbolic(p(1, 0)).unwrap();
        assert_eq!((a10.q.clone(), a10.r.clone()), (BigInt::one(), ratio(0, 1)));
        let a11 = potential_kernel_symbolic(p(1, 1)).unwrap();
        assert_eq!((a11.q.clone(), a11.r.clone()), (BigInt::zero(), int(4)));
        let a20 = potential_kernel_symbolic(p(2, 0)).unwrap();
        assert_eq!((a20.q.clone(), a20.r.clone()), (BigInt::from(4), int(-8)));
        // a(2,2) = (4/π)(1 + 1/3)
        assert_eq!(potential_kernel_symbolic(p(-2, 2)).unwrap().r, ratio(16, 3));
    }

    #[test]
    fn float_values_match_closed_forms() {
        assert_eq!(potential_kernel(p(1, 0)), 1.0);
        assert!((potential_kernel(p(1, 1)) - 4.0 / PI).abs() < 1e-12);
        assert!((potential_kernel(p(0, -2)) - (4.0 - 8.0 / PI)).abs() < 1e-12);
    }

    #[test]
    fn harmonic_off_origin() {
        for (x, y) in [(0, 0), (3, 1), (-7, 4), (100, 37), (511, 0), (300, -299)] {
            let v = p(x, y);
            let avg = [p(1, 0), p(-1, 0), p(0, 1), p(0, -1)]
                .iter()
                .map(|&d| potential_kernel(v + d))
                .sum::<f64>()
                / 4.0;
            let expected = if v == p(0, 0) { 1.0 } else { 0.0 };
            assert!((avg - potential_kernel(v) - expected).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn table_agrees_with_quadrature() {
        for (x, y) in [(1, 0), (1, 1), (2, 0), (5, 3), (20, 7), (64, 64), (150, 11), (400, 399), (512, 3)] {
            let v = p(x, y);
            let t = potential_kernel(v);
            let q = kernel_integral(v);
            assert!((t - q).abs() < 1e-10, "{v}: table {t} quadrature {q}");
        }
    }

    #[test]
    fn beyond_table_uses_quadrature() {
        let v = p(600, 5);
        let expected = 2.0 / PI * (v.norm()).ln() + (2.0 * 0.577_215_664_901_532_9 + 3.0 * 2f64.ln()) / PI;
        assert!((potential_kernel(v) - expected).abs() < 1e-6);
    }

    #[test]
    fn asymptotic_constant_is_stable() {
        let fits: Vec<f64> = [(20.0, 60.0), (60.0, 120.0), (120.0, 200.0), (20.0, 200.0)]
            .iter()
            .map(|&(lo, hi)| fit_asymptotic_constant(lo, hi))
            .collect();
        let lo = fits.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = fits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo < 1e-6, "{fits:?}");
        // (2γ + 3 ln 2)/π
        let known = (2.0 * 0.577_215_664_901_532_9 + 3.0 * 2f64.ln()) / PI;
        assert!((fits[3] - known).abs() < 1e-6);
    }

    #[test]
    fn hitting_probabilities() {
        let (b, c) = (p(1, 1), p(0, 0));
        assert_eq!(z2_hitting_prob(b, b, c), 1.0);
        assert_eq!(z2_hitting_prob(c, b, c), 0.0);
        // Points equidistant under the reflection swapping b and c.
        let (b2, c2) = (p(1, 0), p(-1, 0));
        assert!((z2_hitting_prob(p(0, 5), b2, c2) - 0.5).abs() < 1e-14);
        // From the origin's neighbours: mean is e_{c,b} = 1/(2a(1,1)) = π/8.
        let mean = [p(1, 0), p(-1, 0), p(0, 1), p(0, -1)]
            .iter()
            .map(|&v| z2_hitting_prob(v, b, c))
            .sum::<f64>()
            / 4.0;
        assert!((mean - PI / 8.0).abs() < 1e-12);
    }

    #[test]
    fn machin_pi() {
        let pi = pi_fixed(200);
        let approx = pi.to_f64().unwrap() / 2f64.powi(200);
        assert!((approx - PI).abs() < 1e-15);
    }
}
