//! Nested quasi-random designs.
//!
//! Every design set is a prefix of one randomly shifted Sobol' sequence mapped
//! affinely into the domain, so `T_{l-1}` is literally the first `N_{l-1}`
//! points of `T_l`.

use alloc::vec::Vec;
use alloc::{format, vec};

use crate::error::{Error, Result};
use crate::model::{InputDomain, PointSet, Points};
use crate::rng::{shift_vector, Namespace};

pub const MAX_SOBOL_DIM: usize = 8;
const BITS: usize = 32;

/// Primitive-polynomial data `(s, a, m_1..m_s)` for dimensions 2..=8 from
/// the new-joe-kuo-6.21201 table. Dimension 1 is van der Corput.
const JOE_KUO: [(u32, u32, &[u32]); MAX_SOBOL_DIM - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

fn direction_numbers(axis: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if axis == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (31 - k);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO[axis - 1];
    let s = s as usize;
    for k in 0..s {
        v[k] = m[k] << (31 - k);
    }
    for k in s..BITS {
        let j = k - s;
        v[k] = v[j] ^ (v[j] >> s);
        for bit in 0..s - 1 {
            if (a >> bit) & 1 != 0 {
                v[k] ^= v[j + 1 + bit];
            }
        }
    }
    v
}

/// Gray-code Sobol' generator. Index 0 (the origin) is skipped.
#[derive(Debug, Clone)]
pub struct SobolSequence {
    directions: Vec<[u32; BITS]>,
    state: Vec<u32>,
    index: u32,
}

impl SobolSequence {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_SOBOL_DIM {
            return Err(Error::UnsupportedDimension {
                dim,
                max: MAX_SOBOL_DIM,
            });
        }
        Ok(SobolSequence {
            directions: (0..dim).map(direction_numbers).collect(),
            state: vec![0; dim],
            index: 0,
        })
    }

    /// Writes the next point into `out` (length `dim`).
    pub fn next_into(&mut self, out: &mut [f64]) -> Result<()> {
        if self.index == u32::MAX {
            return Err(Error::invalid("n", "Sobol' sequence exhausted"));
        }
        let c = self.index.trailing_ones() as usize;
        self.index += 1;
        for (k, x) in self.state.iter_mut().enumerate() {
            *x ^= self.directions[k][c];
            out[k] = f64::from(*x) * (1.0 / 4_294_967_296.0);
        }
        Ok(())
    }
}

/// First `n` Sobol' points in `[0,1)^dim`, each shifted by `shift` modulo 1.
pub fn sobol_sequence(dim: usize, n: usize, shift: &[f64]) -> Result<PointSet> {
    if shift.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: shift.len(),
        });
    }
    if shift.iter().any(|s| !(0.0..1.0).contains(s)) {
        return Err(Error::invalid("shift", "entries must lie in [0, 1)"));
    }
    let mut seq = SobolSequence::new(dim)?;
    let mut coords = vec![0.0; n * dim];
    for row in coords.chunks_exact_mut(dim) {
        seq.next_into(row)?;
        for (x, s) in row.iter_mut().zip(shift) {
            let y = *x + s;
            *x = if y >= 1.0 { y - 1.0 } else { y };
        }
    }
    PointSet::new(dim, coords)
}

/// Growth rule `N_l = round(N_base * s^(gamma * l))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignGrowth {
    pub growth_base: f64,
    pub growth_rate: f64,
    pub base_points: usize,
}

impl DesignGrowth {
    /// `base_points = None` selects `round(s^gamma)`.
    pub fn new(growth_base: f64, growth_rate: f64, base_points: Option<usize>) -> Result<Self> {
        if !(growth_base > 1.0 && growth_base.is_finite()) {
            return Err(Error::invalid(
                "s",
                format!("need s > 1, got {growth_base}"),
            ));
        }
        if !(growth_rate > 0.0 && growth_rate.is_finite()) {
            return Err(Error::invalid(
                "gamma",
                format!("need gamma > 0, got {growth_rate}"),
            ));
        }
        let base_points =
            base_points.unwrap_or_else(|| round_half_up(libm::pow(growth_base, growth_rate)));
        if base_points == 0 {
            return Err(Error::invalid("n_base", "need at least one base point"));
        }
        Ok(DesignGrowth {
            growth_base,
            growth_rate,
            base_points,
        })
    }

    pub fn size(&self, level: usize) -> usize {
        round_half_up(
            self.base_points as f64 * libm::pow(self.growth_base, self.growth_rate * level as f64),
        )
    }
}

fn round_half_up(x: f64) -> usize {
    libm::floor(x + 0.5) as usize
}

#[derive(Debug, Clone)]
pub struct LevelDesign {
    domain: InputDomain,
    growth: DesignGrowth,
    shift: Vec<f64>,
    sizes: Vec<usize>,
    points: PointSet,
}

impl LevelDesign {
    /// Design with levels `0..=levels`.
    pub fn build(
        domain: &InputDomain,
        levels: usize,
        growth: DesignGrowth,
        shift: Vec<f64>,
    ) -> Result<Self> {
        let mut design = LevelDesign {
            domain: domain.clone(),
            growth,
            shift,
            sizes: Vec::new(),
            points: PointSet::default(),
        };
        for _ in 0..=levels {
            design.push_level()?;
        }
        Ok(design)
    }

    /// Like [`LevelDesign::build`] with the shift drawn from `seed`.
    pub fn seeded(
        domain: &InputDomain,
        levels: usize,
        growth: DesignGrowth,
        seed: u64,
    ) -> Result<Self> {
        let shift = shift_vector(seed, Namespace::DesignShift, domain.dim());
        Self::build(domain, levels, growth, shift)
    }

    /// Appends the next level; returns its index.
    pub fn push_level(&mut self) -> Result<usize> {
        let level = self.sizes.len();
        let n = self.growth.size(level);
        if let Some(&prev) = self.sizes.last() {
            if n <= prev {
                return Err(Error::invalid(
                    "gamma",
                    format!("level {level} would not grow the design ({prev} -> {n} points)"),
                ));
            }
        }
        if n > u32::MAX as usize {
            return Err(Error::invalid("levels", "design exceeds the Sobol' period"));
        }
        let unit = sobol_sequence(self.domain.dim(), n, &self.shift)?;
        let dim = self.domain.dim();
        let mut coords = vec![0.0; n * dim];
        for (src, dst) in unit.iter().zip(coords.chunks_exact_mut(dim)) {
            self.domain.from_unit(src, dst);
        }
        self.points = PointSet::new(dim, coords)?;
        self.sizes.push(n);
        Ok(level)
    }

    pub fn domain(&self) -> &InputDomain {
        &self.domain
    }

    pub fn growth(&self) -> DesignGrowth {
        self.growth
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// Index of the finest level built so far.
    pub fn finest_level(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, level: usize) -> usize {
        self.sizes[level]
    }

    /// `T_level`.
    pub fn points(&self, level: usize) -> Points<'_> {
        self.points.prefix(self.sizes[level])
    }

    /// `A_level = T_level \ T_{level-1}` (indices `N_{level-1}..N_level`).
    pub fn added_points(&self, level: usize) -> Points<'_> {
        let start = if level == 0 { 0 } else { self.sizes[level - 1] };
        let dim = self.points.dim();
        Points::from_raw(
            dim,
            &self.points.coords()[start * dim..self.sizes[level] * dim],
        )
    }
}

/// Fixed prediction points `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    points: PointSet,
}

impl PredictionSet {
    pub fn new(points: PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("pred_points", "need at least one point"));
        }
        Ok(PredictionSet { points })
    }

    pub fn points(&self) -> Points<'_> {
        self.points.view()
    }

    pub fn point_set(&self) -> &PointSet {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A shifted Sobol' prefix of `count` points scaled into the domain. The shift
/// comes from a namespace disjoint from the design shift.
pub fn build_prediction_set(
    domain: &InputDomain,
    count: usize,
    seed: u64,
) -> Result<PredictionSet> {
    if count == 0 {
        return Err(Error::invalid("pred_points", "need at least one point"));
    }
    let dim = domain.dim();
    let shift = shift_vector(seed, Namespace::PredictionShift, dim);
    let unit = sobol_sequence(dim, count, &shift)?;
    let mut coords = vec![0.0; count * dim];
    for (src, dst) in unit.iter().zip(coords.chunks_exact_mut(dim)) {
        domain.from_unit(src, dst);
    }
    PredictionSet::new(PointSet::new(dim, coords)?)
}

/// `build_level_design` with an explicit shift.
pub fn build_level_design(
    domain: &InputDomain,
    levels: usize,
    growth_base: f64,
    growth_rate: f64,
    base_points: usize,
    shift: Vec<f64>,
) -> Result<LevelDesign> {
    let growth = DesignGrowth::new(growth_base, growth_rate, Some(base_points))?;
    LevelDesign::build(domain, levels, growth, shift)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn van_der_corput_prefix() {
        let ps = sobol_sequence(1, 3, &[0.0]).unwrap();
        assert_eq!(ps.coords(), &[0.5, 0.75, 0.25]);
    }

    #[test]
    fn two_dimensional_prefix() {
        let ps = sobol_sequence(2, 4, &[0.0, 0.0]).unwrap();
        assert_eq!(
            ps.coords(),
            &[0.5, 0.5, 0.75, 0.25, 0.25, 0.75, 0.375, 0.375]
        );
    }

    #[test]
    fn shift_wraps_modulo_one() {
        let plain = sobol_sequence(1, 16, &[0.0]).unwrap();
        let shifted = sobol_sequence(1, 16, &[0.5]).unwrap();
        for (a, b) in plain.coords().iter().zip(shifted.coords()) {
            let expect = (a + 0.5) % 1.0;
            assert!((b - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn eight_points_distinct() {
        let ps = sobol_sequence(2, 8, &[0.0, 0.0]).unwrap();
        for i in 0..8 {
            for j in 0..i {
                assert_ne!(ps.point(i), ps.point(j));
            }
        }
    }

    #[test]
    fn every_axis_stratifies_dyadic_prefixes() {
        let n = 64;
        let ps = sobol_sequence(MAX_SOBOL_DIM, n, &[0.0; MAX_SOBOL_DIM]).unwrap();
        for k in 0..MAX_SOBOL_DIM {
            // the first 2^m - 1 points of each axis, plus the origin, hit
            // every interval [i/2^m, (i+1)/2^m) exactly once
            let mut hit = vec![false; n];
            hit[0] = true;
            for i in 0..n - 1 {
                let cell = (ps.point(i)[k] * n as f64) as usize;
                assert!(!hit[cell], "axis {k} cell {cell} hit twice");
                hit[cell] = true;
            }
        }
    }

    #[test]
    fn rejects_unsupported_dimension() {
        assert!(matches!(
            sobol_sequence(9, 4, &[0.0; 9]),
            Err(Error::UnsupportedDimension { .. })
        ));
        assert!(sobol_sequence(0, 4, &[]).is_err());
    }

    #[test]
    fn prefix_property() {
        let short = sobol_sequence(3, 10, &[0.1, 0.2, 0.3]).unwrap();
        let long = sobol_sequence(3, 25, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(short.coords(), &long.coords()[..30]);
    }

    #[test]
    fn sizes_follow_growth_rule() {
        let d = InputDomain::unit(1).unwrap();
        let design = build_level_design(&d, 2, 2.0, 1.0, 2, vec![0.3]).unwrap();
        assert_eq!(design.sizes(), &[2, 4, 8]);
        let design = build_level_design(&d, 1, 2.0, 2.0, 4, vec![0.3]).unwrap();
        assert_eq!(design.sizes(), &[4, 16]);
        let design = build_level_design(&d, 0, 2.0, 2.0, 4, vec![0.3]).unwrap();
        assert_eq!(design.sizes(), &[4]);
    }

    #[test]
    fn default_base_is_s_to_gamma() {
        let g = DesignGrowth::new(2.0, 2.0, None).unwrap();
        assert_eq!(g.base_points, 4);
        assert_eq!(g.size(3), 256);
    }

    #[test]
    fn rejects_bad_growth() {
        assert!(DesignGrowth::new(1.0, 1.0, None).is_err());
        assert!(DesignGrowth::new(2.0, 0.0, None).is_err());
        assert!(DesignGrowth::new(2.0, 1.0, Some(0)).is_err());
        // growth too slow to survive rounding
        let d = InputDomain::unit(1).unwrap();
        assert!(build_level_design(&d, 1, 1.01, 0.1, 2, vec![0.0]).is_err());
    }

    #[test]
    fn levels_are_nested_and_inside_domain() {
        let d = InputDomain::cube(2, -5.0, 5.0).unwrap();
        let g = DesignGrowth::new(2.0, 2.0, None).unwrap();
        let design = LevelDesign::seeded(&d, 3, g, 9).unwrap();
        for l in 1..=3 {
            let coarse = design.points(l - 1);
            let fine = design.points(l);
            for i in 0..coarse.len() {
                assert_eq!(coarse.point(i), fine.point(i));
            }
            assert_eq!(
                design.added_points(l).len(),
                design.size(l) - design.size(l - 1)
            );
        }
        assert!(design.points(3).iter().all(|p| d.contains(p)));
    }

    #[test]
    fn fill_distance_decays_like_inverse_size() {
        let d = InputDomain::unit(1).unwrap();
        let g = DesignGrowth::new(2.0, 1.0, Some(2)).unwrap();
        let design = LevelDesign::seeded(&d, 4, g, 77).unwrap();
        let fill = |pts: Points<'_>| {
            let mut worst = 0.0f64;
            for k in 0..=4000 {
                let x = k as f64 / 4000.0;
                let nearest = pts
                    .iter()
                    .map(|p| (p[0] - x).abs())
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(nearest);
            }
            worst
        };
        let base = fill(design.points(0)) * design.size(0) as f64;
        for l in 0..=4 {
            let predicted = base / design.size(l) as f64;
            assert!(
                fill(design.points(l)) <= 2.0 * predicted + 1e-12,
                "level {l}"
            );
        }
    }

    #[test]
    fn prediction_set_is_deterministic_and_distinct() {
        let d = InputDomain::unit(1).unwrap();
        let a = build_prediction_set(&d, 256, 4).unwrap();
        let b = build_prediction_set(&d, 256, 4).unwrap();
        assert_eq!(a, b);
        let mut xs: Vec<f64> = a.points().iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        assert_eq!(xs.len(), 256);
        assert_eq!(build_prediction_set(&d, 1, 4).unwrap().len(), 1);
        assert!(build_prediction_set(&d, 0, 4).is_err());
    }
}
