//! Nested partitions of [0, 1).
//!
//! Level 1 holds the single interval [0, 1). Level n+1 adds the lattice
//! {j / D_n : 1 <= j <= D_n} with D_n = f(n) 2^n and f(n) = n^4, so the
//! breakpoints of level n are {0} together with the union of the lattices
//! D_1, ..., D_{n-1}. All breakpoints are kept as exact numerators over a
//! common denominator L = lcm(D_1, ..., D_{n_max - 1}); counting uses
//! inclusion-exclusion over lattice gcds, so every level can be queried
//! without materializing it.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::error::{Error, Result};

/// Largest level with exact u128 arithmetic (L * D_15 < 2^128).
pub const EXACT_LEVEL_LIMIT: usize = 16;
/// Largest level we are willing to store densely.
pub const DENSE_LEVEL_LIMIT: usize = 12;

pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

pub fn f(n: usize) -> u128 {
    (n as u128).pow(4)
}

/// D_m = f(m) 2^m, the lattice inserted when passing from level m to m+1.
pub fn lattice(m: usize) -> u128 {
    f(m) << m
}

/// Upper bound f(n) 2^{n+1} on T_n.
pub fn t_bound(n: usize) -> f64 {
    (n as f64).powi(4) * 2f64.powi(n as i32 + 1)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Exact floor(t * g) for t in [0, 1) and g < 2^64.
#[inline]
fn floor_mul(t: f64, g: u128) -> u128 {
    if t <= 0.0 {
        return 0;
    }
    let bits = t.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = (bits & ((1u64 << 52) - 1)) as u128;
    let (mant, shift) = if exp == 0 { (frac, 1074) } else { (frac | (1u128 << 52), 1075 - exp) };
    if shift >= 128 {
        return 0;
    }
    (mant * g) >> shift
}

#[derive(Clone, Debug)]
struct LevelCounter {
    /// (g, c): count of breakpoints in [0, x) is Σ c ceil(x g).
    terms: Vec<(u128, i64)>,
    lattices: Vec<u128>,
}

impl LevelCounter {
    fn new(level: usize) -> Self {
        if level == 1 {
            return Self { terms: vec![(1, 1)], lattices: vec![1] };
        }
        let lats: Vec<u128> = (1..level).map(lattice).collect();
        let mut map: BTreeMap<u128, i64> = BTreeMap::new();
        for mask in 1u32..(1u32 << lats.len()) {
            let mut g = 0u128;
            for (i, &d) in lats.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    g = gcd(g, d);
                }
            }
            let sign = if mask.count_ones() % 2 == 1 { 1 } else { -1 };
            *map.entry(g).or_insert(0) += sign;
        }
        let terms = map.into_iter().filter(|&(_, c)| c != 0).collect();
        Self { terms, lattices: lats }
    }

    /// Breakpoints in [0, a / l).
    fn count_lt(&self, a: u128, l: u128) -> u64 {
        let mut acc: i128 = 0;
        for &(g, c) in &self.terms {
            acc += c as i128 * (a * g).div_ceil(l) as i128;
        }
        acc as u64
    }

    /// Breakpoints in [0, a / l], for a < l.
    fn count_le(&self, a: u128, l: u128) -> u64 {
        let mut acc: i128 = 0;
        for &(g, c) in &self.terms {
            acc += c as i128 * ((a * g) / l + 1) as i128;
        }
        acc as u64
    }

    /// Breakpoints in [0, t], for t in [0, 1).
    #[inline]
    fn count_le_f64(&self, t: f64) -> u64 {
        let mut acc: i128 = 0;
        for &(g, c) in &self.terms {
            acc += c as i128 * (floor_mul(t, g) + 1) as i128;
        }
        acc as u64
    }
}

/// One interval of a level, with exact endpoints `tau_num / L` and
/// `end_num / L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub level: usize,
    pub index: u64,
    pub tau_num: u128,
    pub end_num: u128,
    pub tau: f64,
    pub len: f64,
    pub rep: f64,
}

#[derive(Clone, Debug)]
pub struct PartitionSystem {
    n_max: usize,
    denom: u128,
    counters: Vec<LevelCounter>,
    counts: Vec<u64>,
}

impl PartitionSystem {
    pub fn build(n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::Domain("n_max must be at least 1".into()));
        }
        if n_max > EXACT_LEVEL_LIMIT {
            return Err(Error::Capacity {
                level: n_max,
                count: format!("~{:.3e}", t_bound(n_max) / 2.0),
                limit: EXACT_LEVEL_LIMIT,
            });
        }
        let mut denom = 1u128;
        for m in 1..n_max {
            let d = lattice(m);
            denom = denom / gcd(denom, d) * d;
        }
        let counters: Vec<LevelCounter> = (1..=n_max).map(LevelCounter::new).collect();
        let counts = counters.iter().map(|c| c.count_lt(denom, denom)).collect();
        Ok(Self { n_max, denom, counters, counts })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Common denominator L of all breakpoints.
    pub fn denominator(&self) -> u128 {
        self.denom
    }

    /// T_n, the number of intervals at level n.
    pub fn t_count(&self, n: usize) -> u64 {
        self.counts[n - 1]
    }

    fn check(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.n_max {
            return Err(Error::Domain(format!("level {n} outside 1..={}", self.n_max)));
        }
        Ok(())
    }

    fn counter(&self, n: usize) -> &LevelCounter {
        &self.counters[n - 1]
    }

    /// Number of level-n breakpoints in [0, num / L).
    pub fn count_lt(&self, n: usize, num: u128) -> u64 {
        self.counter(n).count_lt(num, self.denom)
    }

    /// Number of level-n breakpoints in [0, num / L]; equals the index of
    /// the interval containing num / L when num < L.
    pub fn count_le(&self, n: usize, num: u128) -> u64 {
        self.counter(n).count_le(num, self.denom)
    }

    /// Representative point of interval j (1-based) with left end `tau` and
    /// length `len`: an irrational-rotation offset clamped to the middle 90%.
    #[inline]
    pub fn representative(j: u64, tau: f64, len: f64) -> f64 {
        let frac = (j as f64 * GOLDEN_RATIO + 1.0 / 7.0).fract().clamp(0.05, 0.95);
        tau + len * frac
    }

    fn to_f64(&self, num: u128) -> f64 {
        num as f64 / self.denom as f64
    }

    fn make_node(&self, n: usize, j: u64, tau_num: u128, end_num: u128) -> Node {
        let tau = self.to_f64(tau_num);
        let len = self.to_f64(end_num - tau_num);
        Node { level: n, index: j, tau_num, end_num, tau, len, rep: Self::representative(j, tau, len) }
    }

    /// Exact endpoints of the level-n interval containing t in [0, 1).
    fn endpoints_around(&self, n: usize, t: f64) -> (u128, u128) {
        if n == 1 {
            return (0, self.denom);
        }
        let mut lo = 0u128;
        let mut hi = self.denom;
        for &d in &self.counter(n).lattices {
            let k = floor_mul(t, d);
            let step = self.denom / d;
            lo = lo.max(k * step);
            hi = hi.min((k + 1) * step);
        }
        (lo, hi)
    }

    /// Interval j of level n. Endpoints are found by bisection over f64
    /// bit patterns (every interval for n <= 16 is many ulps wide), with
    /// an exact integer bisection as fallback.
    pub fn node(&self, n: usize, j: u64) -> Result<Node> {
        self.check(n)?;
        let t_n = self.t_count(n);
        if j == 0 || j > t_n {
            return Err(Error::Domain(format!("node {j} outside 1..={t_n} at level {n}")));
        }
        let c = self.counter(n);
        let (mut lo, mut hi) = (0u64, 1.0f64.to_bits());
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if c.count_le_f64(f64::from_bits(mid)) >= j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let t = f64::from_bits(if c.count_le_f64(f64::from_bits(lo)) >= j { lo } else { hi });
        if t < 1.0 && c.count_le_f64(t) == j {
            let (a, b) = self.endpoints_around(n, t);
            return Ok(self.make_node(n, j, a, b));
        }
        Ok(self.node_exact(n, j))
    }

    /// Integer-only route to node j (slower; also serves as a test oracle).
    pub fn node_exact(&self, n: usize, j: u64) -> Node {
        let c = self.counter(n);
        let (mut lo, mut hi) = (0u128, self.denom - 1);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if c.count_le(mid, self.denom) >= j {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let a = lo;
        let mut b = self.denom;
        if n > 1 {
            for &d in &c.lattices {
                let step = self.denom / d;
                b = b.min((a / step + 1) * step);
            }
        }
        self.make_node(n, j, a, b)
    }

    /// v_n(t) together with π_n(t). t = 1 maps to the last node and π = 1.
    pub fn locate(&self, n: usize, t: f64) -> Result<(u64, f64)> {
        self.check(n)?;
        if !(0.0..=1.0).contains(&t) || t.is_nan() {
            return Err(Error::Domain(format!("t = {t} outside [0, 1]")));
        }
        if t == 1.0 {
            return Ok((self.t_count(n), 1.0));
        }
        let j = self.counter(n).count_le_f64(t);
        let (a, b) = self.endpoints_around(n, t);
        Ok((j, self.make_node(n, j, a, b).rep))
    }

    /// Full node containing t in [0, 1).
    pub fn node_at(&self, n: usize, t: f64) -> Result<Node> {
        self.check(n)?;
        if !(0.0..1.0).contains(&t) {
            return Err(Error::Domain(format!("t = {t} outside [0, 1)")));
        }
        let j = self.counter(n).count_le_f64(t);
        let (a, b) = self.endpoints_around(n, t);
        Ok(self.make_node(n, j, a, b))
    }

    /// Index of the level-m ancestor of node (n, j), m <= n.
    pub fn ancestor(&self, n: usize, j: u64, m: usize) -> Result<u64> {
        let node = self.node(n, j)?;
        self.check(m)?;
        if m > n {
            return Err(Error::Domain(format!("ancestor level {m} above {n}")));
        }
        Ok(self.count_le(m, node.tau_num))
    }

    /// Level-(n+h) descendants of node (n, j) as a half-open range of
    /// 1-based indices.
    pub fn subtree_nodes(&self, n: usize, h: usize, j: u64) -> Result<Range<u64>> {
        let node = self.node(n, j)?;
        self.check(n + h)?;
        Ok(self.subtree_of(&node, n + h))
    }

    pub fn subtree_of(&self, node: &Node, level: usize) -> Range<u64> {
        let start = self.count_lt(level, node.tau_num) + 1;
        let end = self.count_lt(level, node.end_num) + 1;
        start..end
    }

    pub fn children(&self, n: usize, j: u64) -> Result<Range<u64>> {
        self.subtree_nodes(n, 1, j)
    }

    /// All breakpoint numerators of level n, including L (the point 1).
    /// Materializes the level, intended for n <= 8.
    pub fn breakpoints(&self, n: usize) -> Result<Vec<u128>> {
        self.check(n)?;
        let mut pts = vec![0u128, self.denom];
        for m in 1..n {
            let step = self.denom / lattice(m);
            pts.extend((1..=lattice(m)).map(|k| k * step));
        }
        pts.sort_unstable();
        pts.dedup();
        Ok(pts)
    }

    /// CSV rows `level,j,tau_num,tau_den,rep` with the fraction reduced.
    pub fn dump_csv(&self, n: usize, nodes: Range<u64>) -> Result<String> {
        let mut out = String::from("level,j,tau_num,tau_den,rep\n");
        for j in nodes {
            let nd = self.node(n, j)?;
            let g = gcd(nd.tau_num, self.denom).max(1);
            out.push_str(&format!("{},{},{},{},{:.17e}\n", n, j, nd.tau_num / g, self.denom / g, nd.rep));
        }
        Ok(out)
    }

    pub fn dense(&self, levels: usize) -> Result<DenseLevels> {
        DenseLevels::build(self, levels)
    }
}

/// One materialized level: representatives, interval lengths, and the
/// number of children each node has at the next level.
#[derive(Clone, Debug, Default)]
pub struct DenseLevel {
    pub rep: Vec<f64>,
    pub len: Vec<f64>,
    pub tau: Vec<f64>,
    pub nchild: Vec<u8>,
}

impl DenseLevel {
    pub fn len_nodes(&self) -> usize {
        self.rep.len()
    }
}

/// Levels 1..=depth stored as flat arrays in tree (= left-to-right) order.
#[derive(Clone, Debug)]
pub struct DenseLevels {
    pub levels: Vec<DenseLevel>,
}

impl DenseLevels {
    pub fn build(ps: &PartitionSystem, depth: usize) -> Result<Self> {
        ps.check(depth)?;
        if depth > DENSE_LEVEL_LIMIT {
            return Err(Error::Capacity {
                level: depth,
                count: ps.t_count(depth).to_string(),
                limit: DENSE_LEVEL_LIMIT,
            });
        }
        let mut levels: Vec<DenseLevel> = (1..=depth)
            .map(|n| {
                let t = ps.t_count(n) as usize;
                DenseLevel {
                    rep: Vec::with_capacity(t),
                    len: Vec::with_capacity(t),
                    tau: Vec::with_capacity(t),
                    nchild: Vec::with_capacity(if n < depth { t } else { 0 }),
                }
            })
            .collect();
        let l = ps.denominator();
        let lf = l as f64;
        // Depth-first walk; each frame is (level, left, right).
        let mut stack: Vec<(usize, u128, u128)> = vec![(1, 0, l)];
        let mut kids: Vec<(usize, u128, u128)> = Vec::new();
        while let Some((n, x, y)) = stack.pop() {
            let lv = &mut levels[n - 1];
            let j = lv.rep.len() as u64 + 1;
            let tau = x as f64 / lf;
            let len = (y - x) as f64 / lf;
            lv.tau.push(tau);
            lv.len.push(len);
            lv.rep.push(PartitionSystem::representative(j, tau, len));
            if n < depth {
                let step = l / lattice(n);
                let mut k = x / step + 1;
                kids.clear();
                let mut left = x;
                while k * step < y {
                    kids.push((n + 1, left, k * step));
                    left = k * step;
                    k += 1;
                }
                kids.push((n + 1, left, y));
                levels[n - 1].nchild.push(kids.len() as u8);
                stack.extend(kids.iter().rev());
            }
        }
        Ok(Self { levels })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, n: usize) -> &DenseLevel {
        &self.levels[n - 1]
    }

    /// Parent index (0-based) of every node at level n >= 2.
    pub fn parents(&self, n: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.level(n).len_nodes());
        for (p, &c) in self.level(n - 1).nchild.iter().enumerate() {
            for _ in 0..c {
                out.push(p as u32);
            }
        }
        out
    }

    /// First child offset (0-based) of every node at level n, plus a final
    /// sentinel equal to the size of level n+1.
    pub fn child_offsets(&self, n: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.level(n).len_nodes() + 1);
        let mut acc = 0u32;
        out.push(0);
        for &c in &self.level(n).nchild {
            acc += c as u32;
            out.push(acc);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_level_counts() {
        let ps = PartitionSystem::build(14).unwrap();
        let expected = [1u64, 2, 64, 704, 4736, 24704, 105984, 413184, 1457664, 4775424, 14979072, 44961792, 128765952, 362729472];
        for (n, &t) in expected.iter().enumerate() {
            assert_eq!(ps.t_count(n + 1), t, "level {}", n + 1);
        }
    }

    #[test]
    fn level_three_is_sixty_fourths() {
        let ps = PartitionSystem::build(3).unwrap();
        let bp = ps.breakpoints(3).unwrap();
        let l = ps.denominator();
        assert_eq!(bp.len(), 65);
        for (j, &b) in bp.iter().enumerate() {
            assert_eq!(b * 64, j as u128 * l);
        }
    }

    #[test]
    fn capacity_refusal() {
        assert!(matches!(PartitionSystem::build(0), Err(Error::Domain(_))));
        assert!(matches!(PartitionSystem::build(17), Err(Error::Capacity { .. })));
        assert!(matches!(PartitionSystem::build(21), Err(Error::Capacity { .. })));
        assert!(PartitionSystem::build(16).is_ok());
    }

    #[test]
    fn floor_mul_exact() {
        assert_eq!(floor_mul(0.5, 64), 32);
        assert_eq!(floor_mul(0.499999999, 64), 31);
        assert_eq!(floor_mul(1e-300, 1 << 40), 0);
        let t = 0.3f64;
        // 0.3 is slightly below 3/10 in binary.
        assert_eq!(floor_mul(t, 10), 2);
    }

    #[test]
    fn node_routes_agree() {
        let ps = PartitionSystem::build(9).unwrap();
        for n in 1..=9 {
            let t = ps.t_count(n);
            for j in [1, 2, t / 3 + 1, t / 2, t - 1, t].into_iter().filter(|&j| j >= 1 && j <= t) {
                let a = ps.node(n, j).unwrap();
                let b = ps.node_exact(n, j);
                assert_eq!(a, b, "level {n} node {j}");
            }
        }
    }

    #[test]
    fn dense_matches_lazy() {
        let ps = PartitionSystem::build(6).unwrap();
        let d = ps.dense(6).unwrap();
        for n in 1..=6 {
            let lv = d.level(n);
            assert_eq!(lv.len_nodes() as u64, ps.t_count(n));
            for j in (1..=ps.t_count(n)).step_by(37) {
                let nd = ps.node(n, j).unwrap();
                let i = (j - 1) as usize;
                assert_eq!(lv.rep[i], nd.rep);
                assert_eq!(lv.len[i], nd.len);
            }
        }
        for n in 1..6 {
            let offs = d.child_offsets(n);
            for j in (1..=ps.t_count(n)).step_by(53) {
                let r = ps.children(n, j).unwrap();
                let i = (j - 1) as usize;
                assert_eq!(r.start - 1, offs[i] as u64);
                assert_eq!(r.end - 1, offs[i + 1] as u64);
            }
        }
    }
}
