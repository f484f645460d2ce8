//! Batched retrieval for mobile clients: q Goldberg queries stacked into a
//! q x r matrix, answered with one matrix product Q . D computed by
//! Strassen recursion over GF(2^8).
//!
//! Additions are XOR, so Strassen's linear combinations are exact; the
//! result is bit-identical to q independent vector products. Blocks whose
//! smallest dimension falls below the cutoff multiply with the streaming
//! naive kernel.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::gf256::{mul_row, Gf256};
use crate::goldberg::{self, GoldbergResponse, RecoveryReport};
use crate::sharing::EvalPointSet;
use crate::spectrumdb::DatabaseMatrix;

/// Below this block dimension the naive kernel beats recursion overhead;
/// tunable, benchmarked by the workspace bench suite.
pub const DEFAULT_CUTOFF: usize = 64;

/// A dense matrix of field elements, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl FieldMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FieldMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                context: "matrix body",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(FieldMatrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [u8] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn as_ref(&self) -> MatRef<'_> {
        MatRef {
            rows: self.rows,
            cols: self.cols,
            data: &self.data,
        }
    }
}

/// Borrowed matrix view; lets the database body participate in products
/// without copying.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [u8],
}

impl<'a> MatRef<'a> {
    #[inline]
    fn row(&self, i: usize) -> &'a [u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn db_as_matrix(db: &DatabaseMatrix) -> MatRef<'_> {
    MatRef {
        rows: db.rows(),
        cols: db.record_bytes(),
        data: db.data(),
    }
}

/// Exact product over GF(2^8) via Strassen recursion with zero padding to
/// even block sizes per level, stripped on return.
pub fn strassen_mul(a: MatRef<'_>, b: MatRef<'_>, cutoff: usize) -> Result<FieldMatrix> {
    check_product_dims(a, b)?;
    if is_base(a.rows, a.cols, b.cols, cutoff) {
        return Ok(naive_mul_top(a, b));
    }
    Ok(strassen_rec(a, b, cutoff, &mut None))
}

/// As [`strassen_mul`] but sequential throughout, counting base-case block
/// multiplications (7^levels on power-of-two cubes at cutoff 1).
pub fn strassen_mul_counted(
    a: MatRef<'_>,
    b: MatRef<'_>,
    cutoff: usize,
) -> Result<(FieldMatrix, u64)> {
    check_product_dims(a, b)?;
    let mut count = Some(0u64);
    let out = if is_base(a.rows, a.cols, b.cols, cutoff) {
        count = Some(1);
        naive_mul_seq(a, b)
    } else {
        strassen_rec(a, b, cutoff, &mut count)
    };
    Ok((out, count.unwrap()))
}

fn check_product_dims(a: MatRef<'_>, b: MatRef<'_>) -> Result<()> {
    if a.cols != b.rows {
        return Err(Error::LengthMismatch {
            context: "matrix product inner dimension",
            expected: a.cols,
            got: b.rows,
        });
    }
    Ok(())
}

fn is_base(m: usize, k: usize, n: usize, cutoff: usize) -> bool {
    let min = m.min(k).min(n);
    min <= 1 || min < cutoff
}

/// Recursive step. `count`: Some -> sequential counted mode, None -> free
/// to run the seven subproducts in parallel.
fn strassen_rec(a: MatRef<'_>, b: MatRef<'_>, cutoff: usize, count: &mut Option<u64>) -> FieldMatrix {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if is_base(m, k, n, cutoff) {
        if let Some(c) = count {
            *c += 1;
        }
        return naive_mul_seq(a, b);
    }
    // Pad each dimension to even; quadrant extraction fills the padding
    // with zeros, which is exact in a XOR field.
    let (m2, k2, n2) = (m.div_ceil(2), k.div_ceil(2), n.div_ceil(2));
    let a11 = quadrant(a, 0, 0, m2, k2);
    let a12 = quadrant(a, 0, k2, m2, k2);
    let a21 = quadrant(a, m2, 0, m2, k2);
    let a22 = quadrant(a, m2, k2, m2, k2);
    let b11 = quadrant(b, 0, 0, k2, n2);
    let b12 = quadrant(b, 0, n2, k2, n2);
    let b21 = quadrant(b, k2, 0, k2, n2);
    let b22 = quadrant(b, k2, n2, k2, n2);

    let products: [FieldMatrix; 7];
    #[cfg(feature = "parallel")]
    {
        // Fork the seven subproducts when there is enough work to amortize
        // the join, regardless of how skinny the blocks are.
        if count.is_none() && m2 * k2 * n2 >= 1 << 20 {
            let p1 = || strassen_rec(xor(&a11, &a22).as_ref(), xor(&b11, &b22).as_ref(), cutoff, &mut None);
            let p2 = || strassen_rec(xor(&a21, &a22).as_ref(), b11.as_ref(), cutoff, &mut None);
            let p3 = || strassen_rec(a11.as_ref(), xor(&b12, &b22).as_ref(), cutoff, &mut None);
            let p4 = || strassen_rec(a22.as_ref(), xor(&b21, &b11).as_ref(), cutoff, &mut None);
            let p5 = || strassen_rec(xor(&a11, &a12).as_ref(), b22.as_ref(), cutoff, &mut None);
            let p6 = || strassen_rec(xor(&a21, &a11).as_ref(), xor(&b11, &b12).as_ref(), cutoff, &mut None);
            let p7 = || strassen_rec(xor(&a12, &a22).as_ref(), xor(&b21, &b22).as_ref(), cutoff, &mut None);
            let ((m1, m2_), ((m3, m4), (m5, (m6, m7)))) = rayon::join(
                || rayon::join(p1, p2),
                || {
                    rayon::join(
                        || rayon::join(p3, p4),
                        || rayon::join(p5, || rayon::join(p6, p7)),
                    )
                },
            );
            products = [m1, m2_, m3, m4, m5, m6, m7];
            return assemble(products, m, n, m2, n2);
        }
    }
    let mut sub = |x: &FieldMatrix, y: &FieldMatrix| -> FieldMatrix {
        let out = strassen_rec(x.as_ref(), y.as_ref(), cutoff, count);
        out
    };
    products = [
        {
            let (x, y) = (xor(&a11, &a22), xor(&b11, &b22));
            sub(&x, &y)
        },
        {
            let x = xor(&a21, &a22);
            sub(&x, &b11)
        },
        {
            let y = xor(&b12, &b22);
            sub(&a11, &y)
        },
        {
            let y = xor(&b21, &b11);
            sub(&a22, &y)
        },
        {
            let x = xor(&a11, &a12);
            sub(&x, &b22)
        },
        {
            let (x, y) = (xor(&a21, &a11), xor(&b11, &b12));
            sub(&x, &y)
        },
        {
            let (x, y) = (xor(&a12, &a22), xor(&b21, &b22));
            sub(&x, &y)
        },
    ];
    assemble(products, m, n, m2, n2)
}

fn assemble(p: [FieldMatrix; 7], m: usize, n: usize, m2: usize, n2: usize) -> FieldMatrix {
    let [m1, m2_, m3, m4, m5, m6, m7] = p;
    let c11 = xor(&xor(&m1, &m4), &xor(&m5, &m7));
    let c12 = xor(&m3, &m5);
    let c21 = xor(&m2_, &m4);
    let c22 = xor(&xor(&m1, &m2_), &xor(&m3, &m6));
    let mut out = FieldMatrix::zeros(m, n);
    for i in 0..m {
        let (qrow, src_i) = if i < m2 { (0, i) } else { (1, i - m2) };
        let row = out.row_mut(i);
        let left = if qrow == 0 { &c11 } else { &c21 };
        let right = if qrow == 0 { &c12 } else { &c22 };
        let take_left = n.min(n2);
        row[..take_left].copy_from_slice(&left.row(src_i)[..take_left]);
        if n > n2 {
            row[n2..].copy_from_slice(&right.row(src_i)[..n - n2]);
        }
    }
    out
}

fn quadrant(a: MatRef<'_>, row0: usize, col0: usize, rows: usize, cols: usize) -> FieldMatrix {
    let mut out = FieldMatrix::zeros(rows, cols);
    let copy_rows = rows.min(a.rows.saturating_sub(row0));
    let copy_cols = cols.min(a.cols.saturating_sub(col0));
    for i in 0..copy_rows {
        out.row_mut(i)[..copy_cols]
            .copy_from_slice(&a.row(row0 + i)[col0..col0 + copy_cols]);
    }
    out
}

fn xor(a: &FieldMatrix, b: &FieldMatrix) -> FieldMatrix {
    debug_assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    let mut out = a.clone();
    for (x, y) in out.data.iter_mut().zip(&b.data) {
        *x ^= y;
    }
    out
}

/// Streaming naive kernel: walks B row-major once, scattering each row into
/// every output row through the scalar product table.
fn naive_mul_seq(a: MatRef<'_>, b: MatRef<'_>) -> FieldMatrix {
    let mut out = FieldMatrix::zeros(a.rows, b.cols);
    naive_accumulate(a, b, 0..a.cols, &mut out.data);
    out
}

fn naive_accumulate(
    a: MatRef<'_>,
    b: MatRef<'_>,
    inner: std::ops::Range<usize>,
    out: &mut [u8],
) {
    let n = b.cols;
    for ka in inner {
        let brow = b.row(ka);
        for i in 0..a.rows {
            let scalar = a.row(i)[ka];
            if scalar == 0 {
                continue;
            }
            let table = mul_row(scalar);
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &w) in orow.iter_mut().zip(brow) {
                *o ^= table[w as usize];
            }
        }
    }
}

/// Top-level naive product; with the `parallel` feature the inner dimension
/// splits across tasks whose partial results XOR together.
fn naive_mul_top(a: MatRef<'_>, b: MatRef<'_>) -> FieldMatrix {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let tasks = rayon::current_num_threads() * 4;
        let chunk = a.cols.div_ceil(tasks).max(64);
        if a.cols > chunk {
            let data = (0..a.cols.div_ceil(chunk))
                .into_par_iter()
                .map(|ci| {
                    let lo = ci * chunk;
                    let hi = (lo + chunk).min(a.cols);
                    let mut part = vec![0u8; a.rows * b.cols];
                    naive_accumulate(a, b, lo..hi, &mut part);
                    part
                })
                .reduce(
                    || vec![0u8; a.rows * b.cols],
                    |mut x, y| {
                        for (p, q) in x.iter_mut().zip(&y) {
                            *p ^= q;
                        }
                        x
                    },
                );
            return FieldMatrix {
                rows: a.rows,
                cols: b.cols,
                data,
            };
        }
    }
    naive_mul_seq(a, b)
}

/// The q stacked query rows a single server receives, all at its point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryMatrix {
    pub alpha: Gf256,
    pub queries: FieldMatrix,
}

/// The q x s answer grid from one server; row j answers query j.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseMatrix {
    pub server_id: u8,
    pub alpha: Gf256,
    pub values: FieldMatrix,
}

/// Builds q independent Goldberg query sets and stacks them per server.
/// Duplicate betas are allowed and stay independent.
pub fn build_queries(
    betas: &[u64],
    rows: usize,
    t: usize,
    points: &EvalPointSet,
    rng: &mut impl RngCore,
) -> Result<Vec<QueryMatrix>> {
    if betas.is_empty() {
        return Err(Error::InvalidParams("empty query batch".into()));
    }
    let ell = points.len();
    let mut stacks: Vec<FieldMatrix> = (0..ell)
        .map(|_| FieldMatrix::zeros(betas.len(), rows))
        .collect();
    for (j, &beta) in betas.iter().enumerate() {
        let queries = goldberg::build_queries(beta, rows, t, points, rng)?;
        for (stack, q) in stacks.iter_mut().zip(&queries) {
            for (dst, g) in stack.row_mut(j).iter_mut().zip(&q.rho) {
                *dst = g.0;
            }
        }
    }
    Ok(stacks
        .into_iter()
        .enumerate()
        .map(|(i, queries)| QueryMatrix {
            alpha: points.get(i),
            queries,
        })
        .collect())
}

/// One matrix product answers the whole batch; row-wise identical to q
/// separate single-query answers.
pub fn server_answer(
    server_id: u8,
    batch: &QueryMatrix,
    db: &DatabaseMatrix,
) -> Result<ResponseMatrix> {
    if batch.queries.cols() != db.rows() {
        return Err(Error::LengthMismatch {
            context: "batch query columns",
            expected: db.rows(),
            got: batch.queries.cols(),
        });
    }
    let values = strassen_mul(batch.queries.as_ref(), db_as_matrix(db), DEFAULT_CUTOFF)?;
    Ok(ResponseMatrix {
        server_id,
        alpha: batch.alpha,
        values,
    })
}

/// Row-wise Goldberg recovery across the k response matrices.
pub fn recover(responses: &[ResponseMatrix], t: usize) -> Result<Vec<RecoveryReport>> {
    let Some(first) = responses.first() else {
        return Err(Error::InsufficientResponses { got: 0, need: t + 1 });
    };
    let q = first.values.rows();
    for r in responses {
        if r.values.rows() != q {
            return Err(Error::LengthMismatch {
                context: "batch response rows",
                expected: q,
                got: r.values.rows(),
            });
        }
    }
    let mut reports = Vec::with_capacity(q);
    for j in 0..q {
        let row_responses: Vec<GoldbergResponse> = responses
            .iter()
            .map(|r| GoldbergResponse {
                server_id: r.server_id,
                alpha: r.alpha,
                values: r.values.row(j).iter().map(|&v| Gf256(v)).collect(),
            })
            .collect();
        reports.push(goldberg::recover(&row_responses, t)?);
    }
    Ok(reports)
}
