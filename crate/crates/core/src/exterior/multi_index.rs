use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 12;

/// A strictly increasing set of zero-based axes, stored as a bitmask.
///
/// Ordering is lexicographic on the increasing axis sequence, which is the
/// row order used by hat-map matrices and sparse coefficient maps.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex(u16);

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum IndexError {
    #[error("axis {axis} exceeds dimension {n}")]
    AxisOutOfRange { axis: usize, n: usize },
    #[error("axes must be strictly increasing")]
    NotIncreasing,
    #[error("dimension {0} exceeds the supported maximum of 12")]
    DimensionTooLarge(usize),
    #[error("malformed multi-index `{0}`")]
    Malformed(String),
}

impl MultiIndex {
    pub const EMPTY: MultiIndex = MultiIndex(0);

    pub fn from_bits(bits: u16) -> Self {
        MultiIndex(bits)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn single(axis: usize) -> Self {
        assert!(axis < MAX_DIM, "axis {axis} exceeds the supported maximum");
        MultiIndex(1 << axis)
    }

    /// Builds from strictly increasing zero-based axes.
    pub fn new(axes: &[usize]) -> Result<Self, IndexError> {
        let mut bits = 0u16;
        let mut last = None;
        for &a in axes {
            if a >= MAX_DIM {
                return Err(IndexError::AxisOutOfRange {
                    axis: a + 1,
                    n: MAX_DIM,
                });
            }
            if last.is_some_and(|l| a <= l) {
                return Err(IndexError::NotIncreasing);
            }
            last = Some(a);
            bits |= 1 << a;
        }
        Ok(MultiIndex(bits))
    }

    /// Normalizes an arbitrary axis tuple to its sorted set and the sign of
    /// the sorting permutation. The sign is 0 when an axis repeats.
    pub fn sort_with_sign(axes: &[usize]) -> (MultiIndex, i8) {
        let mut bits = 0u16;
        let mut sign = 1i8;
        for &a in axes {
            assert!(a < MAX_DIM, "axis {a} exceeds the supported maximum");
            if bits & (1 << a) != 0 {
                sign = 0;
            }
            // each earlier axis larger than `a` is one inversion
            if (bits >> a).count_ones() % 2 == 1 {
                sign = -sign;
            }
            bits |= 1 << a;
        }
        (MultiIndex(bits), sign)
    }

    pub fn degree(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, axis: usize) -> bool {
        axis < 16 && self.0 & (1 << axis) != 0
    }

    /// Largest axis plus one.
    pub fn span(self) -> usize {
        16 - self.0.leading_zeros() as usize
    }

    pub fn axes(self) -> Axes {
        Axes(self.0)
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.axes().collect()
    }

    /// Zero-based slot of `axis` within the increasing sequence.
    pub fn position(self, axis: usize) -> Option<usize> {
        self.contains(axis)
            .then(|| (self.0 & ((1u16 << axis) - 1)).count_ones() as usize)
    }

    /// Removes `axis`, returning the remainder and the sign (−1)^slot.
    pub fn remove(self, axis: usize) -> Option<(MultiIndex, f64)> {
        let pos = self.position(axis)?;
        let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
        Some((MultiIndex(self.0 & !(1 << axis)), sign))
    }

    /// Sign of dx^a∧dx^b relative to dx^{a∪b}; `None` when they overlap.
    pub fn wedge(self, other: MultiIndex) -> Option<(MultiIndex, f64)> {
        if self.0 & other.0 != 0 {
            return None;
        }
        let mut inversions = 0u32;
        for b in other.axes() {
            inversions += (self.0 >> (b + 1)).count_ones();
        }
        let sign = if inversions.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        Some((MultiIndex(self.0 | other.0), sign))
    }

    pub fn union(self, other: MultiIndex) -> MultiIndex {
        MultiIndex(self.0 | other.0)
    }

    pub fn is_disjoint(self, other: MultiIndex) -> bool {
        self.0 & other.0 == 0
    }

    /// All degree-`k` indices on `n` axes, in lexicographic order.
    pub fn all(n: usize, k: usize) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        if k > n {
            return out;
        }
        let mut current = Vec::with_capacity(k);
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
            if cur.len() == k {
                out.push(MultiIndex::new(cur).expect("increasing by construction"));
                return;
            }
            for a in start..n {
                if n - a < k - cur.len() {
                    break;
                }
                cur.push(a);
                rec(a + 1, n, k, cur, out);
                cur.pop();
            }
        }
        rec(0, n, k, &mut current, &mut out);
        out
    }

    /// Complement within `0..n`.
    pub fn complement(self, n: usize) -> MultiIndex {
        let mask = if n >= 16 { u16::MAX } else { (1u16 << n) - 1 };
        MultiIndex(!self.0 & mask)
    }

    /// Parses one-based comma-joined axes such as `"1,2,4"`; checks `n`.
    pub fn parse_in(text: &str, n: usize) -> Result<Self, IndexError> {
        if n > MAX_DIM {
            return Err(IndexError::DimensionTooLarge(n));
        }
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Ok(MultiIndex::EMPTY);
        }
        let mut axes = Vec::new();
        for part in trimmed.split(',') {
            let a: usize = part
                .trim()
                .parse()
                .map_err(|_| IndexError::Malformed(text.to_string()))?;
            if a == 0 || a > n {
                return Err(IndexError::AxisOutOfRange { axis: a, n });
            }
            axes.push(a - 1);
        }
        MultiIndex::new(&axes)
    }
}

pub struct Axes(u16);

impl Iterator for Axes {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let a = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(a)
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.axes().cmp(other.axes())
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One-based comma-joined display, e.g. `1,2,4`.
impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for a in self.axes() {
            if !first {
                write!(f, ",")?;
            }
            first = false;
            write!(f, "{}", a + 1)?;
        }
        Ok(())
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{self}]")
    }
}

impl FromStr for MultiIndex {
    type Err = IndexError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MultiIndex::parse_in(s, MAX_DIM)
    }
}
