//! Arithmetic in GF(2^8), polynomial evaluation, Lagrange interpolation and
//! Reed-Solomon unique decoding.
//!
//! The field is fixed to the modulus x^8 + x^4 + x^3 + x + 1 (0x11B).
//! Addition is XOR; multiplication goes through a full 256x256 product
//! table (64 KB) so that a scalar-times-row kernel is a single table-row
//! lookup per byte. The table is built once and cross-checked against an
//! independent log/exp construction before first use.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Sub};
use std::sync::LazyLock;

use crate::error::{Error, Result};

/// The field modulus as a 9-bit polynomial.
pub const MODULUS: u16 = 0x11B;

struct Tables {
    mul: Box<[[u8; 256]; 256]>,
    inv: [u8; 256],
}

/// Schoolbook carry-less multiply with reduction; the reference the tables
/// are built from and verified against.
fn schoolbook_mul(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        let carry = a & 0x80;
        a <<= 1;
        if carry != 0 {
            a ^= (MODULUS & 0xFF) as u8;
        }
        b >>= 1;
    }
    acc
}

fn build_tables() -> Tables {
    let mut mul = Box::new([[0u8; 256]; 256]);
    for a in 0..256usize {
        for b in a..256usize {
            let p = schoolbook_mul(a as u8, b as u8);
            mul[a][b] = p;
            mul[b][a] = p;
        }
    }

    // Independent construction via the generator 0x03: exp/log tables give a
    // second route to every product; any disagreement is a build bug.
    let mut exp = [0u8; 255];
    let mut log = [0u8; 256];
    let mut x = 1u8;
    for (i, e) in exp.iter_mut().enumerate() {
        *e = x;
        log[x as usize] = i as u8;
        x = schoolbook_mul(x, 0x03);
    }
    assert_eq!(x, 1, "0x03 must generate the multiplicative group");
    for a in 1..256usize {
        for b in 1..256usize {
            let idx = (log[a] as usize + log[b] as usize) % 255;
            assert_eq!(mul[a][b], exp[idx], "product table mismatch at {a:#x}*{b:#x}");
        }
    }

    let mut inv = [0u8; 256];
    for a in 1..256usize {
        inv[a] = exp[(255 - log[a] as usize) % 255];
        debug_assert_eq!(mul[a][inv[a] as usize], 1);
    }
    Tables { mul, inv }
}

static TABLES: LazyLock<Tables> = LazyLock::new(build_tables);

/// One element of GF(2^8).
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Self = Gf256(0);
    pub const ONE: Self = Gf256(1);

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Multiplicative inverse; zero is a domain error.
    pub fn inv(self) -> Result<Self> {
        if self.0 == 0 {
            return Err(Error::ZeroInverse);
        }
        Ok(Gf256(TABLES.inv[self.0 as usize]))
    }
}

impl fmt::Debug for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf256({:#04x})", self.0)
    }
}

impl From<u8> for Gf256 {
    fn from(v: u8) -> Self {
        Gf256(v)
    }
}

impl Add for Gf256 {
    type Output = Gf256;
    #[inline]
    fn add(self, rhs: Gf256) -> Gf256 {
        Gf256(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf256 {
    #[inline]
    fn add_assign(&mut self, rhs: Gf256) {
        self.0 ^= rhs.0;
    }
}

// Characteristic 2: subtraction is addition.
impl Sub for Gf256 {
    type Output = Gf256;
    #[inline]
    fn sub(self, rhs: Gf256) -> Gf256 {
        self + rhs
    }
}

impl Mul for Gf256 {
    type Output = Gf256;
    #[inline]
    fn mul(self, rhs: Gf256) -> Gf256 {
        Gf256(TABLES.mul[self.0 as usize][rhs.0 as usize])
    }
}

impl MulAssign for Gf256 {
    #[inline]
    fn mul_assign(&mut self, rhs: Gf256) {
        *self = *self * rhs;
    }
}

/// The 256-byte product row for a fixed scalar: `row[x] = a * x`.
///
/// This is the inner-loop primitive of every vector-matrix kernel; one row
/// stays hot in cache while a database row streams through it.
#[inline]
pub fn mul_row(a: u8) -> &'static [u8; 256] {
    &TABLES.mul[a as usize]
}

/// A polynomial over GF(2^8), coefficients lowest degree first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    coeffs: Vec<Gf256>,
}

impl Poly {
    /// Builds from coefficients (lowest first), trimming trailing zeros so the
    /// leading coefficient of a nonzero polynomial is nonzero.
    pub fn new(mut coeffs: Vec<Gf256>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&Gf256::ZERO) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Gf256::ZERO);
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly {
            coeffs: vec![Gf256::ZERO],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Gf256] {
        &self.coeffs
    }

    pub fn constant_term(&self) -> Gf256 {
        self.coeffs[0]
    }

    /// Horner evaluation.
    pub fn eval(&self, x: Gf256) -> Gf256 {
        let mut acc = Gf256::ZERO;
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    /// Long division: returns (quotient, remainder).
    fn div_rem(&self, divisor: &Poly) -> (Poly, Poly) {
        assert!(!divisor.is_zero(), "division by the zero polynomial");
        let dlead = *divisor.coeffs.last().unwrap();
        let dlead_inv = dlead.inv().unwrap();
        let ddeg = divisor.degree();
        let mut rem = self.coeffs.clone();
        if rem.len() <= ddeg {
            return (Poly::zero(), Poly::new(rem));
        }
        let mut quot = vec![Gf256::ZERO; rem.len() - ddeg];
        for i in (ddeg..rem.len()).rev() {
            let coef = rem[i] * dlead_inv;
            quot[i - ddeg] = coef;
            if !coef.is_zero() {
                for (j, &d) in divisor.coeffs.iter().enumerate() {
                    rem[i - ddeg + j] += coef * d;
                }
            }
        }
        (Poly::new(quot), Poly::new(rem))
    }
}

fn check_distinct(xs: impl Iterator<Item = Gf256> + Clone) -> Result<()> {
    let mut seen = [false; 256];
    for x in xs {
        if seen[x.0 as usize] {
            return Err(Error::DuplicateEvalPoint);
        }
        seen[x.0 as usize] = true;
    }
    Ok(())
}

/// Precomputed Lagrange combination weights for a fixed set of x-coordinates
/// evaluated at a fixed target. Computing the weights once and reusing them
/// word-wise is what keeps record recovery at one multiply per share byte.
#[derive(Clone, Debug)]
pub struct LagrangeWeights {
    weights: Vec<Gf256>,
}

impl LagrangeWeights {
    /// Weights for evaluating the interpolating polynomial at zero.
    /// All x-coordinates must be nonzero and distinct.
    pub fn at_zero(xs: &[Gf256]) -> Result<Self> {
        if xs.iter().any(|x| x.is_zero()) {
            return Err(Error::ZeroEvalPoint);
        }
        Self::at_point(xs, Gf256::ZERO)
    }

    /// Weights for evaluating the interpolating polynomial at `target`.
    pub fn at_point(xs: &[Gf256], target: Gf256) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InsufficientPoints { got: 0, need: 1 });
        }
        check_distinct(xs.iter().copied())?;
        let mut weights = Vec::with_capacity(xs.len());
        for (i, &xi) in xs.iter().enumerate() {
            let mut num = Gf256::ONE;
            let mut den = Gf256::ONE;
            for (j, &xj) in xs.iter().enumerate() {
                if i != j {
                    num *= target + xj;
                    den *= xi + xj;
                }
            }
            weights.push(num * den.inv()?);
        }
        Ok(LagrangeWeights { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weighted sum over the y-values paired with the x-coordinates the
    /// weights were built from.
    pub fn combine(&self, ys: &[Gf256]) -> Gf256 {
        debug_assert_eq!(ys.len(), self.weights.len());
        let mut acc = Gf256::ZERO;
        for (&w, &y) in self.weights.iter().zip(ys) {
            acc += w * y;
        }
        acc
    }
}

/// Value at zero of the unique interpolating polynomial through `points`.
pub fn lagrange_at_zero(points: &[(Gf256, Gf256)]) -> Result<Gf256> {
    let xs: Vec<Gf256> = points.iter().map(|p| p.0).collect();
    let weights = LagrangeWeights::at_zero(&xs)?;
    let ys: Vec<Gf256> = points.iter().map(|p| p.1).collect();
    Ok(weights.combine(&ys))
}

/// Outcome of Reed-Solomon unique decoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RsDecoded {
    /// The recovered polynomial of degree <= the requested bound.
    pub poly: Poly,
    /// Input indices whose y-values the polynomial does not pass through.
    pub corrupted: Vec<usize>,
}

/// Berlekamp-Welch unique decoding.
///
/// Given `k` points of a degree-<=`degree_bound` polynomial with at most
/// `floor((k - degree_bound - 1) / 2)` corrupted y-values, recovers the
/// polynomial and the corrupted positions. Solves for an error locator E
/// (monic, degree e) and Q = f*E of degree <= degree_bound + e satisfying
/// Q(x_i) = y_i * E(x_i), then divides.
pub fn rs_decode(points: &[(Gf256, Gf256)], degree_bound: usize) -> Result<RsDecoded> {
    let k = points.len();
    if k < degree_bound + 1 {
        return Err(Error::InsufficientPoints {
            got: k,
            need: degree_bound + 1,
        });
    }
    check_distinct(points.iter().map(|p| p.0))?;
    let max_errors = (k - degree_bound - 1) / 2;
    let fail = Error::DecodeFailure {
        degree: degree_bound,
        max_errors,
    };

    // Unknowns: Q_0..Q_{t+e} then E_0..E_{e-1} (E is monic of degree e).
    let e = max_errors;
    let q_len = degree_bound + e + 1;
    let cols = q_len + e;
    let mut rows = Vec::with_capacity(k);
    for &(x, y) in points {
        let mut row = vec![Gf256::ZERO; cols + 1];
        let mut xp = Gf256::ONE;
        for cell in row.iter_mut().take(q_len) {
            *cell = xp;
            xp *= x;
        }
        // xp now holds x^{q_len}; restart powers for the E columns.
        let mut xe = Gf256::ONE;
        for m in 0..e {
            row[q_len + m] = y * xe;
            xe *= x;
        }
        row[cols] = y * xe; // y * x^e on the right-hand side
        rows.push(row);
    }

    let solution = match solve(rows, cols) {
        Some(s) => s,
        None => return Err(fail),
    };

    let q = Poly::new(solution[..q_len].to_vec());
    let mut e_coeffs = solution[q_len..].to_vec();
    e_coeffs.push(Gf256::ONE);
    let locator = Poly::new(e_coeffs);

    let (f, rem) = q.div_rem(&locator);
    if !rem.is_zero() || f.degree() > degree_bound {
        return Err(fail);
    }
    let corrupted: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, &(x, y))| f.eval(x) != y)
        .map(|(i, _)| i)
        .collect();
    if corrupted.len() > max_errors {
        return Err(fail);
    }
    Ok(RsDecoded { poly: f, corrupted })
}

/// Gaussian elimination over GF(2^8) on an augmented matrix with `cols`
/// unknowns. Returns any solution (free variables set to zero), or None if
/// the system is inconsistent.
fn solve(mut rows: Vec<Vec<Gf256>>, cols: usize) -> Option<Vec<Gf256>> {
    let n = rows.len();
    let mut pivot_of_col = vec![usize::MAX; cols];
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..n).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pivot);
        let inv = rows[rank][col].inv().unwrap();
        for cell in rows[rank][col..].iter_mut() {
            *cell *= inv;
        }
        for r in 0..n {
            if r != rank && !rows[r][col].is_zero() {
                let factor = rows[r][col];
                let (head, tail) = if r < rank {
                    let (a, b) = rows.split_at_mut(rank);
                    (&mut a[r], &b[0])
                } else {
                    let (a, b) = rows.split_at_mut(r);
                    (&mut b[0], &a[rank])
                };
                for (dst, &src) in head[col..].iter_mut().zip(&tail[col..]) {
                    *dst += factor * src;
                }
            }
        }
        pivot_of_col[col] = rank;
        rank += 1;
        if rank == n {
            break;
        }
    }
    // Inconsistent if any reduced row is zero with a nonzero right-hand side.
    for row in &rows {
        if row[..cols].iter().all(|c| c.is_zero()) && !row[cols].is_zero() {
            return None;
        }
    }
    let mut solution = vec![Gf256::ZERO; cols];
    for col in 0..cols {
        let p = pivot_of_col[col];
        if p != usize::MAX {
            solution[col] = rows[p][cols];
        }
    }
    Some(solution)
}
