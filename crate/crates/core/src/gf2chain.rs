//! The Morse complex with GF(2) coefficients.

use serde::Serialize;
use thiserror::Error;

use crate::critpoint::CriticalPoint;
use crate::flow::ConnectionCount;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("no connection count for c{upper} -> c{lower}")]
    MissingPair { upper: usize, lower: usize },
    #[error("count c{upper} -> c{lower} does not join adjacent indices")]
    IndexMismatch { upper: usize, lower: usize },
    #[error("boundary operator does not square to zero")]
    NotAComplex,
}

/// Dense GF(2) matrix stored column by column in 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = rows.div_ceil(64);
        BitMatrix {
            rows,
            cols,
            stride,
            words: vec![0; stride * cols],
        }
    }

    /// From row-major 0/1 entries.
    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = BitMatrix::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged rows");
            for (c, &v) in row.iter().enumerate() {
                m.set(r, c, v & 1 == 1);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols);
        self.words[c * self.stride + r / 64] >> (r % 64) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        assert!(r < self.rows && c < self.cols);
        let w = &mut self.words[c * self.stride + r / 64];
        if v {
            *w |= 1 << (r % 64);
        } else {
            *w &= !(1 << (r % 64));
        }
    }

    fn column(&self, c: usize) -> &[u64] {
        &self.words[c * self.stride..(c + 1) * self.stride]
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn mul(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.rows, "shape mismatch");
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            for k in 0..other.rows {
                if other.get(k, j) {
                    let src = self.column(k).to_vec();
                    let dst = &mut out.words[j * out.stride..(j + 1) * out.stride];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d ^= s;
                    }
                }
            }
        }
        out
    }

    /// Rank by column reduction, pivoting on the first nonzero row.
    pub fn rank(&self) -> usize {
        let mut pivots: Vec<Option<Vec<u64>>> = vec![None; self.rows];
        let mut rank = 0;
        for c in 0..self.cols {
            let mut col = self.column(c).to_vec();
            while let Some(r) = first_set(&col) {
                match &pivots[r] {
                    Some(p) => {
                        for (a, b) in col.iter_mut().zip(p) {
                            *a ^= b;
                        }
                    }
                    None => {
                        pivots[r] = Some(col);
                        rank += 1;
                        break;
                    }
                }
            }
        }
        rank
    }

    /// Rows as strings of `0` and `1`.
    pub fn to_bitstrings(&self) -> Vec<String> {
        (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| if self.get(r, c) { '1' } else { '0' })
                    .collect()
            })
            .collect()
    }
}

fn first_set(words: &[u64]) -> Option<usize> {
    words
        .iter()
        .enumerate()
        .find(|(_, &w)| w != 0)
        .map(|(i, w)| i * 64 + w.trailing_zeros() as usize)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainComplexGF2 {
    /// Critical-point ids in each degree `0..=n`.
    pub generators: Vec<Vec<usize>>,
    /// `boundaries[k]` maps degree `k` to degree `k - 1`; `boundaries[0]` has no rows.
    pub boundaries: Vec<BitMatrix>,
}

impl ChainComplexGF2 {
    /// A complex from explicit boundary matrices, with generators numbered
    /// consecutively across degrees.
    pub fn from_matrices(sizes: &[usize], boundaries: Vec<BitMatrix>) -> Self {
        let mut next = 0;
        let generators = sizes
            .iter()
            .map(|&s| {
                let g: Vec<usize> = (next..next + s).collect();
                next += s;
                g
            })
            .collect();
        let c = ChainComplexGF2 {
            generators,
            boundaries,
        };
        for k in 0..c.generators.len() {
            let rows = if k == 0 { 0 } else { c.generators[k - 1].len() };
            assert_eq!((c.boundaries[k].rows(), c.boundaries[k].cols()), (rows, c.generators[k].len()));
        }
        c
    }

    pub fn top_degree(&self) -> usize {
        self.generators.len() - 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HomologyRanks {
    pub b: Vec<usize>,
}

impl HomologyRanks {
    pub fn total(&self) -> usize {
        self.b.iter().sum()
    }

    pub fn euler(&self) -> i64 {
        alternating(&self.b)
    }
}

fn alternating(v: &[usize]) -> i64 {
    v.iter()
        .enumerate()
        .map(|(k, &x)| if k % 2 == 0 { x as i64 } else { -(x as i64) })
        .sum()
}

/// Complex on the given critical points of an `n`-manifold. Every ordered
/// pair of adjacent index must have a count.
pub fn build_complex(
    points: &[CriticalPoint],
    counts: &[ConnectionCount],
    n: usize,
) -> Result<ChainComplexGF2, ChainError> {
    let mut generators = vec![Vec::new(); n + 1];
    for p in points {
        generators[p.index].push(p.id);
    }
    let position = |id: usize| -> Option<(usize, usize)> {
        generators
            .iter()
            .enumerate()
            .find_map(|(k, g)| g.iter().position(|&x| x == id).map(|i| (k, i)))
    };
    let mut boundaries: Vec<BitMatrix> = (0..=n)
        .map(|k| {
            let rows = if k == 0 { 0 } else { generators[k - 1].len() };
            BitMatrix::zeros(rows, generators[k].len())
        })
        .collect();
    let mut seen: Vec<Vec<bool>> = boundaries
        .iter()
        .map(|b| vec![false; b.rows() * b.cols()])
        .collect();
    for c in counts {
        let (Some((kp, ip)), Some((kq, iq))) = (position(c.source), position(c.sink)) else {
            return Err(ChainError::IndexMismatch {
                upper: c.source,
                lower: c.sink,
            });
        };
        if kp != kq + 1 {
            return Err(ChainError::IndexMismatch {
                upper: c.source,
                lower: c.sink,
            });
        }
        boundaries[kp].set(iq, ip, c.count_mod2 == 1);
        seen[kp][iq * generators[kp].len() + ip] = true;
    }
    for k in 1..=n {
        for (iq, &q) in generators[k - 1].iter().enumerate() {
            for (ip, &p) in generators[k].iter().enumerate() {
                if !seen[k][iq * generators[k].len() + ip] {
                    return Err(ChainError::MissingPair { upper: p, lower: q });
                }
            }
        }
    }
    Ok(ChainComplexGF2 {
        generators,
        boundaries,
    })
}

pub fn verify_d_squared(c: &ChainComplexGF2) -> bool {
    (2..c.boundaries.len()).all(|k| c.boundaries[k - 1].mul(&c.boundaries[k]).is_zero())
}

pub fn homology_ranks(c: &ChainComplexGF2) -> Result<HomologyRanks, ChainError> {
    if !verify_d_squared(c) {
        return Err(ChainError::NotAComplex);
    }
    let ranks: Vec<usize> = c.boundaries.iter().map(BitMatrix::rank).collect();
    let b = (0..c.generators.len())
        .map(|k| {
            let next = ranks.get(k + 1).copied().unwrap_or(0);
            c.generators[k].len() - ranks[k] - next
        })
        .collect();
    Ok(HomologyRanks { b })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DegreeCheck {
    pub degree: usize,
    pub critical_points: usize,
    pub betti: usize,
    pub holds: bool,
    pub equality: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MorseReport {
    pub degrees: Vec<DegreeCheck>,
    pub euler_critical: i64,
    pub euler_betti: i64,
    pub euler_holds: bool,
}

impl MorseReport {
    pub fn all_hold(&self) -> bool {
        self.euler_holds && self.degrees.iter().all(|d| d.holds)
    }

    /// Degrees violating the weak inequality.
    pub fn failures(&self) -> Vec<usize> {
        self.degrees.iter().filter(|d| !d.holds).map(|d| d.degree).collect()
    }
}

pub fn morse_inequalities(points: &[CriticalPoint], ranks: &HomologyRanks) -> MorseReport {
    let mut per_degree = vec![0usize; ranks.b.len()];
    for p in points {
        if p.index >= per_degree.len() {
            per_degree.resize(p.index + 1, 0);
        }
        per_degree[p.index] += 1;
    }
    let degrees = per_degree
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let b = ranks.b.get(k).copied().unwrap_or(0);
            DegreeCheck {
                degree: k,
                critical_points: c,
                betti: b,
                holds: c >= b,
                equality: c == b,
            }
        })
        .collect();
    let euler_critical = alternating(&per_degree);
    let euler_betti = ranks.euler();
    MorseReport {
        degrees,
        euler_critical,
        euler_betti,
        euler_holds: euler_critical == euler_betti,
    }
}
