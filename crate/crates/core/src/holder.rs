//! Sampled Hölder seminorms on grid fields.
//!
//! The seminorm is the maximum of `|f(a) - f(b)| / |a - b|^delta` over a
//! fixed, seeded set of sample-index pairs: pairs straddling the plane
//! `x1 = 0` with dyadic gaps, plus uniform random pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_fields::Point3;
use crate::grid::GridSpec;

/// Axis-aligned box `lo <= x <= hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Region {
    pub fn whole(grid: &GridSpec) -> Self {
        let r = grid.half_width;
        Self { lo: [-r; 3], hi: [r; 3] }
    }

    pub fn cube(half: f64) -> Self {
        Self { lo: [-half; 3], hi: [half; 3] }
    }

    pub fn contains(&self, x: Point3) -> bool {
        let a = x.to_array();
        (0..3).all(|i| a[i] >= self.lo[i] && a[i] <= self.hi[i])
    }
}

/// Pair budget for [`PairSet::generate`].
pub const DEFAULT_PAIRS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub grid: GridSpec,
    /// Index pairs and their distance.
    pub pairs: Vec<(usize, usize, f64)>,
}

impl PairSet {
    /// `straddling` pairs across `x1 = 0` along `x1` with gaps `2^m` cells and
    /// random offsets, plus `random` uniform pairs; all inside `region`.
    pub fn generate(grid: GridSpec, region: &Region, straddling: usize, random: usize, seed: u64) -> Self {
        let n = grid.n;
        let h = grid.spacing();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::with_capacity(straddling + random);
        // Admissible indices per axis.
        let axis: [Vec<usize>; 3] = std::array::from_fn(|a| {
            (0..n).filter(|&i| (region.lo[a]..=region.hi[a]).contains(&grid.coord(i))).collect()
        });
        if axis.iter().any(|v| v.is_empty()) {
            return Self { grid, pairs };
        }
        let pick = |rng: &mut ChaCha8Rng, a: usize| axis[a][rng.gen_range(0..axis[a].len())];
        let (first, last) = (axis[0][0], *axis[0].last().unwrap());
        // Gaps that fit inside the admissible x1 range while straddling 0.
        let straddles = first < n / 2 && last >= n / 2;
        let gaps: Vec<usize> = (0..=(n / 2).ilog2())
            .map(|m| 1usize << m)
            .filter(|&g| straddles && g <= last - first)
            .collect();
        let mut attempts = 0;
        while !gaps.is_empty() && pairs.len() < straddling && attempts < 50 * straddling.max(1) {
            attempts += 1;
            let gap = gaps[rng.gen_range(0..gaps.len())];
            // Left point at n/2 - 1 - a, right point at n/2 - 1 - a + gap with a < gap.
            let a = rng.gen_range(0..gap);
            if a > n / 2 - 1 - first || n / 2 - 1 - a + gap > last {
                continue;
            }
            let i1 = n / 2 - 1 - a;
            let (i2, i3) = (pick(&mut rng, 1), pick(&mut rng, 2));
            pairs.push((grid.index(i1, i2, i3), grid.index(i1 + gap, i2, i3), gap as f64 * h));
        }
        for _ in 0..random {
            let (p, q) = loop {
                let p = [pick(&mut rng, 0), pick(&mut rng, 1), pick(&mut rng, 2)];
                let q = [pick(&mut rng, 0), pick(&mut rng, 1), pick(&mut rng, 2)];
                if p != q {
                    break (p, q);
                }
            };
            let d = (0..3).map(|a| ((p[a] as f64 - q[a] as f64) * h).powi(2)).sum::<f64>().sqrt();
            pairs.push((grid.index(p[0], p[1], p[2]), grid.index(q[0], q[1], q[2]), d));
        }
        Self { grid, pairs }
    }

    pub fn default_for(grid: GridSpec, seed: u64) -> Self {
        Self::generate(grid, &Region::whole(&grid), DEFAULT_PAIRS, DEFAULT_PAIRS, seed)
    }

    /// `max |f(a) - f(b)| / |a - b|^delta` over the pair set.
    pub fn seminorm(&self, values: &[f64], delta: f64) -> f64 {
        assert_eq!(values.len(), self.grid.len());
        self.pairs
            .iter()
            .map(|&(p, q, d)| (values[p] - values[q]).abs() / d.powf(delta))
            .fold(0.0, f64::max)
    }

    pub fn truncated(&self, count: usize) -> Self {
        Self { grid: self.grid, pairs: self.pairs[..count.min(self.pairs.len())].to_vec() }
    }
}
