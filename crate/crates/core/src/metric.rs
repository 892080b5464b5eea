//! Multi-scale spatial orderness.
//!
//! For a set of grids, orderness at scale 1 is
//!
//! ```text
//! so = E[(X(p) - X(r))^2] / E[(X(p) - X(q))^2] - 1
//! ```
//!
//! where `(p, q, r)` is a two-hop triple: `q = p + d`, `r = p + 2d` for an
//! axis step `d` in the 4-neighbourhood. Expectations are Monte-Carlo means
//! over triples drawn uniformly (with replacement) over `(grid, placement)`.
//! A diffusion process along the grid axes gives `so = 1`; spatially
//! exchangeable data gives `so = 0`.
//!
//! Scale `a` applies non-overlapping `a x a` mean downsampling first.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid2D, Image, Plane};
use crate::io::fmt_sig9;
use crate::seed::{self, Stream};

/// Default number of triples drawn per scale.
pub const DEFAULT_TRIPLES: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no grids given")]
    EmptyInput,
    #[error("triple count must be at least 1")]
    ZeroCount,
    #[error("grid {grid_index} ({height}x{width}) admits no two-hop triple")]
    GridTooSmall {
        grid_index: usize,
        height: usize,
        width: usize,
    },
    #[error("triple {index} lies outside its grid or is not a two-hop arrangement")]
    InvalidTriple { index: usize },
    #[error("mean one-hop squared difference is zero; orderness is undefined")]
    DegenerateDenominator,
    #[error("scale {scale} is too large for a {height}x{width} grid")]
    ScaleTooLarge {
        scale: usize,
        height: usize,
        width: usize,
    },
    #[error("scales must be positive and strictly increasing")]
    InvalidScales,
    #[error("stack {index} does not match the shape of stack 0")]
    ShapeMismatch { index: usize },
    #[error("every channel has a degenerate denominator")]
    AllChannelsDegenerate,
    #[error("at scale {scale}: {source}")]
    AtScale {
        scale: usize,
        #[source]
        source: Box<MetricError>,
    },
}

impl MetricError {
    /// The scale annotation of a multi-scale failure, if any.
    pub fn scale(&self) -> Option<usize> {
        match self {
            MetricError::AtScale { scale, .. } => Some(*scale),
            _ => None,
        }
    }

    /// True when the underlying cause is a zero denominator.
    pub fn is_degenerate(&self) -> bool {
        match self {
            MetricError::DegenerateDenominator | MetricError::AllChannelsDegenerate => true,
            MetricError::AtScale { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }
}

/// Unit axis step of a triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Right,
    Left,
    Down,
    Up,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Right, Direction::Left, Direction::Down, Direction::Up];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::Right => (0, 1),
            Direction::Left => (0, -1),
            Direction::Down => (1, 0),
            Direction::Up => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TwoHopTriple {
    pub grid_index: usize,
    pub p: (usize, usize),
    pub q: (usize, usize),
    pub r: (usize, usize),
}

impl TwoHopTriple {
    pub fn from_step(grid_index: usize, p: (usize, usize), dir: Direction) -> Self {
        let (dr, dc) = dir.delta();
        let step = |k: isize| {
            (
                (p.0 as isize + k * dr) as usize,
                (p.1 as isize + k * dc) as usize,
            )
        };
        Self {
            grid_index,
            p,
            q: step(1),
            r: step(2),
        }
    }

    /// Bounds and collinear two-hop shape check against a `height x width` grid.
    pub fn is_valid_for(&self, height: usize, width: usize) -> bool {
        let inside = |(r, c): (usize, usize)| r < height && c < width;
        if !(inside(self.p) && inside(self.q) && inside(self.r)) {
            return false;
        }
        let d1 = (
            self.q.0 as isize - self.p.0 as isize,
            self.q.1 as isize - self.p.1 as isize,
        );
        let d2 = (
            self.r.0 as isize - self.q.0 as isize,
            self.r.1 as isize - self.q.1 as isize,
        );
        d1 == d2 && d1.0.abs() + d1.1.abs() == 1
    }
}

/// Number of valid `(p, direction)` placements in a `height x width` grid.
pub fn placement_count(height: usize, width: usize) -> usize {
    let horizontal = if width >= 3 { height * (width - 2) } else { 0 };
    let vertical = if height >= 3 { (height - 2) * width } else { 0 };
    2 * (horizontal + vertical)
}

/// Decodes placement `index` (in `0..placement_count`) to `(p, direction)`.
fn placement(height: usize, width: usize, index: usize) -> ((usize, usize), Direction) {
    let horizontal = if width >= 3 { height * (width - 2) } else { 0 };
    let vertical = if height >= 3 { (height - 2) * width } else { 0 };
    if index < 2 * horizontal {
        let (dir, u) = if index < horizontal {
            (Direction::Right, index)
        } else {
            (Direction::Left, index - horizontal)
        };
        let (row, col) = (u / (width - 2), u % (width - 2));
        match dir {
            Direction::Right => ((row, col), dir),
            _ => ((row, col + 2), dir),
        }
    } else {
        let u = index - 2 * horizontal;
        let (dir, u) = if u < vertical {
            (Direction::Down, u)
        } else {
            (Direction::Up, u - vertical)
        };
        let (row, col) = (u / width, u % width);
        match dir {
            Direction::Down => ((row, col), dir),
            _ => ((row + 2, col), dir),
        }
    }
}

/// Largest scale at which a `height x width` grid still admits a triple.
pub fn max_valid_scale(height: usize, width: usize) -> usize {
    (1..=height.max(width))
        .take_while(|&a| placement_count(height / a, width / a) > 0)
        .last()
        .unwrap_or(0)
}

struct TripleSampler {
    counts: Vec<usize>,
    shapes: Vec<(usize, usize)>,
}

impl TripleSampler {
    fn new<P: Plane>(grids: &[P], count: usize) -> Result<Self, MetricError> {
        if grids.is_empty() {
            return Err(MetricError::EmptyInput);
        }
        if count == 0 {
            return Err(MetricError::ZeroCount);
        }
        let mut counts = Vec::with_capacity(grids.len());
        let mut shapes = Vec::with_capacity(grids.len());
        for (grid_index, g) in grids.iter().enumerate() {
            let n = placement_count(g.height(), g.width());
            if n == 0 {
                return Err(MetricError::GridTooSmall {
                    grid_index,
                    height: g.height(),
                    width: g.width(),
                });
            }
            counts.push(n);
            shapes.push((g.height(), g.width()));
        }
        Ok(Self { counts, shapes })
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng) -> (usize, (usize, usize), Direction) {
        let g = if self.counts.len() == 1 {
            0
        } else {
            rng.random_range(0..self.counts.len())
        };
        let (h, w) = self.shapes[g];
        let (p, dir) = placement(h, w, rng.random_range(0..self.counts[g]));
        (g, p, dir)
    }
}

/// Draws `count` two-hop triples uniformly over `(grid, placement)`.
pub fn sample_triples<P: Plane>(
    grids: &[P],
    count: usize,
    seed: u64,
) -> Result<Vec<TwoHopTriple>, MetricError> {
    let sampler = TripleSampler::new(grids, count)?;
    let mut rng = seed::rng(seed);
    Ok((0..count)
        .map(|_| {
            let (g, p, dir) = sampler.draw(&mut rng);
            TwoHopTriple::from_step(g, p, dir)
        })
        .collect())
}

/// Every placement of every grid, in grid-major order.
pub fn enumerate_triples<P: Plane>(grids: &[P]) -> Vec<TwoHopTriple> {
    let mut out = Vec::new();
    for (g, grid) in grids.iter().enumerate() {
        let (h, w) = (grid.height(), grid.width());
        out.extend((0..placement_count(h, w)).map(|i| {
            let (p, dir) = placement(h, w, i);
            TwoHopTriple::from_step(g, p, dir)
        }));
    }
    out
}

/// Mean one-hop and two-hop squared differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopStats {
    pub d_one: f64,
    pub d_two: f64,
    pub n_triples: usize,
}

impl HopStats {
    pub fn orderness(&self) -> Result<f64, MetricError> {
        if self.d_one > 0.0 {
            Ok(self.d_two / self.d_one - 1.0)
        } else {
            Err(MetricError::DegenerateDenominator)
        }
    }
}

#[derive(Default)]
struct HopAccumulator {
    one: f64,
    two: f64,
    n: usize,
}

impl HopAccumulator {
    #[inline]
    fn push(&mut self, vp: f64, vq: f64, vr: f64) {
        let a = vp - vq;
        let b = vp - vr;
        self.one += a * a;
        self.two += b * b;
        self.n += 1;
    }

    fn finish(self) -> HopStats {
        let n = self.n.max(1) as f64;
        HopStats {
            d_one: self.one / n,
            d_two: self.two / n,
            n_triples: self.n,
        }
    }
}

/// Hop statistics over an explicit triple list.
pub fn hop_stats<P: Plane>(grids: &[P], triples: &[TwoHopTriple]) -> Result<HopStats, MetricError> {
    if triples.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut acc = HopAccumulator::default();
    for (index, t) in triples.iter().enumerate() {
        let g = grids
            .get(t.grid_index)
            .filter(|g| t.is_valid_for(g.height(), g.width()))
            .ok_or(MetricError::InvalidTriple { index })?;
        acc.push(g.at(t.p.0, t.p.1), g.at(t.q.0, t.q.1), g.at(t.r.0, t.r.1));
    }
    Ok(acc.finish())
}

/// Samples `count` triples with the same stream as [`sample_triples`] and
/// accumulates their statistics without materializing them.
fn sampled_stats<P: Plane>(grids: &[P], count: usize, seed: u64) -> Result<HopStats, MetricError> {
    let sampler = TripleSampler::new(grids, count)?;
    let mut rng = seed::rng(seed);
    let mut acc = HopAccumulator::default();
    for _ in 0..count {
        let (g, p, dir) = sampler.draw(&mut rng);
        let grid = &grids[g];
        let w = grid.width() as isize;
        let v = grid.values();
        let (dr, dc) = dir.delta();
        let step = dr * w + dc;
        let ip = (p.0 * grid.width() + p.1) as isize;
        acc.push(
            v[ip as usize],
            v[(ip + step) as usize],
            v[(ip + 2 * step) as usize],
        );
    }
    Ok(acc.finish())
}

/// Orderness at the native resolution of `grids`.
pub fn orderness_scale1<P: Plane>(
    grids: &[P],
    count: usize,
    seed: u64,
) -> Result<(f64, HopStats), MetricError> {
    let stats = sampled_stats(grids, count, seed)?;
    Ok((stats.orderness()?, stats))
}

/// Orderness from all placements of all grids, no sampling.
pub fn orderness_exhaustive<P: Plane>(grids: &[P]) -> Result<(f64, HopStats), MetricError> {
    if grids.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut acc = HopAccumulator::default();
    for (grid_index, grid) in grids.iter().enumerate() {
        let (h, w) = (grid.height(), grid.width());
        let n = placement_count(h, w);
        if n == 0 {
            return Err(MetricError::GridTooSmall {
                grid_index,
                height: h,
                width: w,
            });
        }
        for i in 0..n {
            let t = {
                let (p, dir) = placement(h, w, i);
                TwoHopTriple::from_step(grid_index, p, dir)
            };
            acc.push(grid.at(t.p.0, t.p.1), grid.at(t.q.0, t.q.1), grid.at(t.r.0, t.r.1));
        }
    }
    let stats = acc.finish();
    Ok((stats.orderness()?, stats))
}

/// Non-overlapping `a x a` block means. Rows and columns beyond
/// `a * floor(dim / a)` are dropped.
pub fn downsample_mean<P: Plane>(grid: &P, a: usize) -> Result<Grid2D, MetricError> {
    let (h, w) = (grid.height(), grid.width());
    if a == 0 {
        return Err(MetricError::InvalidScales);
    }
    let (oh, ow) = (h / a, w / a);
    if oh == 0 || ow == 0 {
        return Err(MetricError::ScaleTooLarge {
            scale: a,
            height: h,
            width: w,
        });
    }
    let v = grid.values();
    let norm = (a * a) as f64;
    let mut out = Vec::with_capacity(oh * ow);
    for br in 0..oh {
        for bc in 0..ow {
            let mut sum = 0.0;
            for r in br * a..(br + 1) * a {
                let row = &v[r * w + bc * a..r * w + (bc + 1) * a];
                sum += row.iter().sum::<f64>();
            }
            out.push(sum / norm);
        }
    }
    Ok(Grid2D::new(oh, ow, out).expect("block means of finite values are finite"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub scale: usize,
    pub so: f64,
    #[serde(flatten)]
    pub stats: HopStats,
}

/// Orderness per scale, with the statistics behind each value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdernessProfile {
    pub entries: Vec<ProfileEntry>,
    pub seed: u64,
    pub triples_requested: usize,
}

pub const PROFILE_CSV_HEADER: &str = "scale,so,d_one,d_two,n_triples,seed";

impl OrdernessProfile {
    pub fn get(&self, scale: usize) -> Option<&ProfileEntry> {
        self.entries.iter().find(|e| e.scale == scale)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(PROFILE_CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.scale,
                fmt_sig9(e.so),
                fmt_sig9(e.stats.d_one),
                fmt_sig9(e.stats.d_two),
                e.stats.n_triples,
                self.seed
            ));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("profile serializes")
    }
}

fn check_scales(scales: &[usize]) -> Result<(), MetricError> {
    if scales.is_empty() || scales[0] == 0 || scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricError::InvalidScales);
    }
    Ok(())
}

/// Orderness at each scale in `scales`. Each scale draws from its own
/// substream of `seed`, so the value at a scale does not depend on which
/// other scales are requested.
pub fn orderness_multiscale<P: Plane + Sync>(
    grids: &[P],
    scales: &[usize],
    count: usize,
    seed: u64,
) -> Result<OrdernessProfile, MetricError> {
    check_scales(scales)?;
    if grids.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let entries = scales
        .par_iter()
        .map(|&scale| {
            let at_scale = |source: MetricError| MetricError::AtScale {
                scale,
                source: Box::new(source),
            };
            let sub = seed::derive(seed, Stream::Scale, scale as u64);
            let (so, stats) = if scale == 1 {
                orderness_scale1(grids, count, sub)
            } else {
                let small = grids
                    .iter()
                    .map(|g| downsample_mean(g, scale))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(at_scale)?;
                orderness_scale1(&small, count, sub)
            }
            .map_err(at_scale)?;
            Ok(ProfileEntry { scale, so, stats })
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    Ok(OrdernessProfile {
        entries,
        seed,
        triples_requested: count,
    })
}

/// One profile per channel of a multi-channel image set. Single-channel
/// input uses `seed` directly; otherwise channel `c` uses its own substream.
pub fn channel_profiles(
    images: &[Image],
    scales: &[usize],
    count: usize,
    seed: u64,
) -> Result<Vec<OrdernessProfile>, MetricError> {
    let first = images.first().ok_or(MetricError::EmptyInput)?;
    let shape = first.shape();
    if let Some(index) = images.iter().position(|i| i.shape() != shape) {
        return Err(MetricError::ShapeMismatch { index });
    }
    let channels = shape.0;
    (0..channels)
        .map(|c| {
            let planes: Vec<_> = images.iter().map(|i| i.channel(c)).collect();
            let s = if channels == 1 {
                seed
            } else {
                seed::derive(seed, Stream::Channel, c as u64)
            };
            orderness_multiscale(&planes, scales, count, s)
        })
        .collect()
}

/// Per-channel scale-1 orderness of a set of channel stacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackOrderness {
    /// Mean over channels with a defined value.
    pub mean_so: f64,
    /// `None` for channels whose one-hop mean is zero (e.g. dead units).
    pub per_channel: Vec<Option<f64>>,
}

impl StackOrderness {
    pub fn degenerate_channels(&self) -> Vec<usize> {
        self.per_channel
            .iter()
            .enumerate()
            .filter_map(|(c, v)| v.is_none().then_some(c))
            .collect()
    }
}

/// Treats channel `c` of every stack as one grid set and measures its
/// scale-1 orderness with substream `c` of `seed`; degenerate channels are
/// excluded from the mean.
pub fn orderness_of_stack(
    stacks: &[Image],
    count: usize,
    seed: u64,
) -> Result<StackOrderness, MetricError> {
    let first = stacks.first().ok_or(MetricError::EmptyInput)?;
    let shape = first.shape();
    if let Some(index) = stacks.iter().position(|s| s.shape() != shape) {
        return Err(MetricError::ShapeMismatch { index });
    }
    let per_channel = (0..shape.0)
        .into_par_iter()
        .map(|c| {
            let planes: Vec<_> = stacks.iter().map(|s| s.channel(c)).collect();
            let sub = seed::derive(seed, Stream::Channel, c as u64);
            match orderness_scale1(&planes, count, sub) {
                Ok((so, _)) => Ok(Some(so)),
                Err(MetricError::DegenerateDenominator) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    let defined: Vec<f64> = per_channel.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(MetricError::AllChannelsDegenerate);
    }
    Ok(StackOrderness {
        mean_so: defined.iter().sum::<f64>() / defined.len() as f64,
        per_channel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridView;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};
    use std::collections::HashSet;

    fn grid(rows: &[&[f64]]) -> Grid2D {
        Grid2D::from_rows(rows).unwrap()
    }

    fn noise_grids(n: usize, h: usize, w: usize, seed: u64) -> Vec<Grid2D> {
        let mut rng = seed::rng(seed);
        (0..n)
            .map(|_| {
                let v = (0..h * w).map(|_| StandardNormal.sample(&mut rng)).collect();
                Grid2D::new(h, w, v).unwrap()
            })
            .collect()
    }

    /// Rows are independent 1D random walks: each pixel is its left
    /// neighbour plus N(0, sigma).
    fn row_walk_grids(n: usize, h: usize, w: usize, sigma: f64, seed: u64) -> Vec<Grid2D> {
        let mut rng = seed::rng(seed);
        (0..n)
            .map(|_| {
                let mut v = Vec::with_capacity(h * w);
                for _ in 0..h {
                    let mut x: f64 = StandardNormal.sample(&mut rng);
                    for _ in 0..w {
                        v.push(x);
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x += sigma * z;
                    }
                }
                Grid2D::new(h, w, v).unwrap()
            })
            .collect()
    }

    /// X[i][j] = R[i] + C[j] with R, C independent random walks, i.e. a
    /// diffusion along both axes.
    fn separable_walk_grids(n: usize, size: usize, sigma: f64, seed: u64) -> Vec<Grid2D> {
        let mut rng = seed::rng(seed);
        let walk = |rng: &mut ChaCha8Rng| {
            let mut x = 0.0;
            (0..size)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    x += sigma * z;
                    x
                })
                .collect::<Vec<f64>>()
        };
        (0..n)
            .map(|_| {
                let rows = walk(&mut rng);
                let cols = walk(&mut rng);
                let v = rows
                    .iter()
                    .flat_map(|r| cols.iter().map(move |c| r + c))
                    .collect();
                Grid2D::new(size, size, v).unwrap()
            })
            .collect()
    }

    #[test]
    fn one_by_three_has_two_placements() {
        let g = grid(&[&[0.0, 1.0, 2.0]]);
        let t = sample_triples(&[g], 4, 11).unwrap();
        assert_eq!(t.len(), 4);
        for tr in &t {
            assert!(tr.p == (0, 0) || tr.p == (0, 2));
            assert!(tr.is_valid_for(1, 3));
        }
    }

    #[test]
    fn three_by_three_has_twelve_placements() {
        assert_eq!(placement_count(3, 3), 12);
        let g = Grid2D::filled(3, 3, 0.0).unwrap();
        let all: HashSet<_> = enumerate_triples(&[g]).into_iter().collect();
        assert_eq!(all.len(), 12);
        // brute force: every (p, d) with p + 2d inside
        let mut brute = HashSet::new();
        for r in 0..3 {
            for c in 0..3 {
                for d in Direction::ALL {
                    let (dr, dc) = d.delta();
                    let (rr, cc) = (r as isize + 2 * dr, c as isize + 2 * dc);
                    if (0..3).contains(&rr) && (0..3).contains(&cc) {
                        brute.insert(TwoHopTriple::from_step(0, (r, c), d));
                    }
                }
            }
        }
        assert_eq!(all, brute);
    }

    #[test]
    fn sampling_is_deterministic_and_covers_placements() {
        let grids = noise_grids(3, 5, 4, 1);
        let a = sample_triples(&grids, 2000, 99).unwrap();
        let b = sample_triples(&grids, 2000, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_triples(&grids, 2000, 100).unwrap();
        assert_ne!(a, c);
        let seen: HashSet<_> = a.iter().collect();
        assert_eq!(seen.len(), 3 * placement_count(5, 4));
        assert!(a.iter().all(|t| t.is_valid_for(5, 4)));
    }

    #[test]
    fn sample_errors() {
        let empty: Vec<Grid2D> = vec![];
        assert_eq!(sample_triples(&empty, 1, 0), Err(MetricError::EmptyInput));
        let tiny = Grid2D::filled(2, 2, 1.0).unwrap();
        assert!(matches!(
            sample_triples(&[tiny], 1, 0),
            Err(MetricError::GridTooSmall { grid_index: 0, .. })
        ));
    }

    #[test]
    fn hop_stats_arithmetic() {
        let g = grid(&[&[0.0, 1.0, 2.0]]);
        let t = TwoHopTriple::from_step(0, (0, 0), Direction::Right);
        let s = hop_stats(&[g], &[t]).unwrap();
        assert_eq!((s.d_one, s.d_two, s.n_triples), (1.0, 4.0, 1));
    }

    #[test]
    fn hop_stats_rejects_out_of_bounds() {
        let g = grid(&[&[0.0, 1.0, 2.0]]);
        let t = TwoHopTriple::from_step(0, (0, 1), Direction::Right);
        assert_eq!(hop_stats(&[g], &[t]), Err(MetricError::InvalidTriple { index: 0 }));
    }

    #[test]
    fn constant_grids_are_degenerate() {
        let g = vec![Grid2D::filled(6, 6, 3.5).unwrap(); 4];
        let t = sample_triples(&g, 100, 0).unwrap();
        let s = hop_stats(&g, &t).unwrap();
        assert_eq!((s.d_one, s.d_two), (0.0, 0.0));
        assert_eq!(orderness_scale1(&g, 100, 0), Err(MetricError::DegenerateDenominator));
    }

    #[test]
    fn streaming_matches_materialized_triples() {
        let g = noise_grids(7, 6, 9, 3);
        let t = sample_triples(&g, 5000, 17).unwrap();
        let a = hop_stats(&g, &t).unwrap();
        let (_, b) = orderness_scale1(&g, 5000, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn horizontal_random_walk_ratio_near_two() {
        // oracle: explicit horizontal triples over independent row walks
        let g = row_walk_grids(50, 16, 32, 0.1, 5);
        let mut rng = seed::rng(6);
        let triples: Vec<_> = (0..100_000)
            .map(|_| {
                let gi = rng.random_range(0..g.len());
                let row = rng.random_range(0..16);
                let col = rng.random_range(0..30);
                if rng.random_bool(0.5) {
                    TwoHopTriple::from_step(gi, (row, col), Direction::Right)
                } else {
                    TwoHopTriple::from_step(gi, (row, col + 2), Direction::Left)
                }
            })
            .collect();
        let s = hop_stats(&g, &triples).unwrap();
        let ratio = s.d_two / s.d_one;
        assert!((1.9..=2.1).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn iid_noise_has_zero_orderness() {
        let g = noise_grids(200, 16, 16, 8);
        let (so, _) = orderness_scale1(&g, 100_000, 1).unwrap();
        assert!(so.abs() < 0.05, "so {so}");
    }

    #[test]
    fn axis_diffusion_has_unit_orderness() {
        let g = separable_walk_grids(200, 32, 0.1, 9);
        let (so, _) = orderness_scale1(&g, 100_000, 2).unwrap();
        assert!((0.9..=1.1).contains(&so), "so {so}");
        let p = orderness_multiscale(&g, &[1], 100_000, 2).unwrap();
        assert!((0.9..=1.1).contains(&p.entries[0].so));
    }

    #[test]
    fn permuted_pixels_lose_order() {
        let g = separable_walk_grids(200, 24, 0.1, 10);
        let mut perm: Vec<usize> = (0..24 * 24).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut seed::rng(4));
        let permuted: Vec<Grid2D> = g
            .iter()
            .map(|x| Grid2D::new(24, 24, perm.iter().map(|&i| x.values()[i]).collect()).unwrap())
            .collect();
        let (so, _) = orderness_scale1(&permuted, 100_000, 3).unwrap();
        assert!(so.abs() < 0.05, "so {so}");
    }

    #[test]
    fn downsample_examples() {
        let g = grid(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(downsample_mean(&g, 2).unwrap(), grid(&[&[2.5]]));
        assert_eq!(downsample_mean(&g, 1).unwrap(), g);
        let sevens = Grid2D::filled(3, 3, 7.0).unwrap();
        assert_eq!(downsample_mean(&sevens, 2).unwrap(), grid(&[&[7.0]]));
        assert!(matches!(
            downsample_mean(&g, 3),
            Err(MetricError::ScaleTooLarge { scale: 3, .. })
        ));
    }

    #[test]
    fn multiscale_constant_plus_noise_is_unordered() {
        let mut rng = seed::rng(12);
        let g: Vec<Grid2D> = noise_grids(400, 24, 24, 13)
            .into_iter()
            .map(|x| {
                let offset = rng.random_range(-5.0..5.0);
                x.map(|v| v * 0.2 + offset).unwrap()
            })
            .collect();
        let scales: Vec<usize> = (1..=max_valid_scale(24, 24)).collect();
        let p = orderness_multiscale(&g, &scales, 100_000, 14).unwrap();
        for e in &p.entries {
            assert!(e.so.abs() < 0.05, "scale {} so {}", e.scale, e.so);
        }
    }

    #[test]
    fn multiscale_annotates_failing_scale() {
        let g = noise_grids(2, 8, 8, 0);
        let err = orderness_multiscale(&g, &[1, 3], 10, 0).unwrap_err();
        assert_eq!(err.scale(), Some(3));
        let c = vec![Grid2D::filled(8, 8, 1.0).unwrap()];
        let err = orderness_multiscale(&c, &[2], 10, 0).unwrap_err();
        assert!(err.is_degenerate());
        assert_eq!(err.scale(), Some(2));
        assert_eq!(
            orderness_multiscale(&g, &[2, 1], 10, 0),
            Err(MetricError::InvalidScales)
        );
    }

    #[test]
    fn scale_values_independent_of_other_scales() {
        let g = noise_grids(20, 12, 12, 2);
        let both = orderness_multiscale(&g, &[1, 2], 1000, 5).unwrap();
        let only = orderness_multiscale(&g, &[2], 1000, 5).unwrap();
        assert_eq!(both.entries[1], only.entries[0]);
    }

    #[test]
    fn profile_csv_columns() {
        let g = noise_grids(5, 8, 8, 0);
        let p = orderness_multiscale(&g, &[1, 2], 100, 77).unwrap();
        let csv = p.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(PROFILE_CSV_HEADER));
        assert!(lines.next().unwrap().starts_with("1,"));
        assert!(lines.next().unwrap().ends_with(",100,77"));
        let json = p.to_json();
        assert_eq!(json["entries"][0]["n_triples"], 100);
        assert_eq!(json["seed"], 77);
    }

    fn stack_of(planes: Vec<Vec<Grid2D>>) -> Vec<Image> {
        // planes[c][n] -> stacks[n] with channels c
        let n = planes[0].len();
        (0..n)
            .map(|i| Image::from_planes(&planes.iter().map(|c| c[i].clone()).collect::<Vec<_>>()).unwrap())
            .collect()
    }

    #[test]
    fn single_channel_stack_matches_scale1() {
        let g = noise_grids(30, 10, 10, 21);
        let stacks = stack_of(vec![g.clone()]);
        let s = orderness_of_stack(&stacks, 5000, 8).unwrap();
        let (so, _) = orderness_scale1(&g, 5000, seed::derive(8, Stream::Channel, 0)).unwrap();
        assert_eq!(s.mean_so, so);
        assert_eq!(s.per_channel, vec![Some(so)]);
    }

    #[test]
    fn mixed_channels_average() {
        let diffusion = separable_walk_grids(200, 32, 0.1, 31);
        let noise = noise_grids(200, 32, 32, 32);
        let s = orderness_of_stack(&stack_of(vec![diffusion, noise]), 100_000, 1).unwrap();
        let v: Vec<f64> = s.per_channel.iter().map(|x| x.unwrap()).collect();
        assert!((v[0] - 1.0).abs() < 0.1 && v[1].abs() < 0.05, "{v:?}");
        assert!((s.mean_so - 0.5).abs() < 0.075, "{}", s.mean_so);
    }

    #[test]
    fn dead_channels_are_excluded() {
        let noise = noise_grids(50, 8, 8, 40);
        let dead = vec![Grid2D::filled(8, 8, 0.0).unwrap(); 50];
        let s = orderness_of_stack(&stack_of(vec![dead.clone(), noise]), 2000, 3).unwrap();
        assert_eq!(s.degenerate_channels(), vec![0]);
        assert_eq!(Some(s.mean_so), s.per_channel[1]);
        assert_eq!(
            orderness_of_stack(&stack_of(vec![dead]), 100, 0),
            Err(MetricError::AllChannelsDegenerate)
        );
    }

    #[test]
    fn linear_ramp_exhaustive() {
        // 12 placements: 6 horizontal with (1, 4), 6 vertical with (0, 0)
        let g = grid(&[&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]]);
        let (so, s) = orderness_exhaustive(&[g]).unwrap();
        assert_eq!((s.d_one, s.d_two, s.n_triples), (0.5, 2.0, 12));
        assert_eq!(so, 3.0);
    }

    #[test]
    fn max_scale() {
        assert_eq!(max_valid_scale(28, 28), 9);
        assert_eq!(max_valid_scale(32, 32), 10);
        assert_eq!(max_valid_scale(1, 3), 1);
        assert_eq!(max_valid_scale(2, 2), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn affine_invariance(alpha in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64], beta in -10.0..10.0f64, seed in 0u64..1000) {
            let g = noise_grids(6, 9, 9, seed);
            let t: Vec<Grid2D> = g.iter().map(|x| x.map(|v| alpha * v + beta).unwrap()).collect();
            let a = orderness_multiscale(&g, &[1, 2, 3], 500, seed).unwrap();
            let b = orderness_multiscale(&t, &[1, 2, 3], 500, seed).unwrap();
            for (x, y) in a.entries.iter().zip(&b.entries) {
                prop_assert!((x.so - y.so).abs() < 1e-9);
            }
        }

        #[test]
        fn crop_consistency(h in 3usize..20, w in 3usize..20, a in 1usize..4, extra_r in 0usize..3, extra_c in 0usize..3) {
            prop_assume!(h / a >= 1 && w / a >= 1);
            let big = noise_grids(1, h + extra_r, w + extra_c, (h * 31 + w) as u64).remove(0);
            let (ch, cw) = (a * (h / a), a * (w / a));
            let crop: Vec<f64> = (0..ch).flat_map(|r| (0..cw).map(move |c| (r, c))).map(|(r, c)| big.at(r, c)).collect();
            let crop = Grid2D::new(ch, cw, crop).unwrap();
            // the same top-left block structure, whatever the margin
            let lhs = downsample_mean(&big, a).unwrap();
            let rhs = downsample_mean(&crop, a).unwrap();
            prop_assert_eq!(lhs.height(), (h + extra_r) / a);
            for r in 0..rhs.height() {
                for c in 0..rhs.width() {
                    prop_assert_eq!(lhs.at(r, c), rhs.at(r, c));
                }
            }
        }

        #[test]
        fn entries_satisfy_ratio_identity(seed in 0u64..500) {
            let g = noise_grids(4, 12, 12, seed);
            let views: Vec<GridView<'_>> = g.iter().map(|x| x.view()).collect();
            let p = orderness_multiscale(&views, &[1, 2, 4], 300, seed).unwrap();
            for e in &p.entries {
                prop_assert_eq!(e.so, e.stats.d_two / e.stats.d_one - 1.0);
            }
        }
    }
}
