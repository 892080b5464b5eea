//! Synthetic calibration datasets.
//!
//! - `diffusion`: `X[i][j] = R[i] + C[j]`, with `R` and `C` independent
//!   Gaussian random walks of step `sigma`. Along every row each pixel is
//!   its left neighbour plus `N(0, sigma)`, and the same holds down every
//!   column, so triples in all four directions see the diffusion model
//!   (orderness 1).
//! - `iid`: independent `N(0, sigma)` pixels (orderness 0).
//! - `const-plus-noise`: `a(I) + N(0, sigma)` with `a(I) ~ U(0, 1)` drawn
//!   per image (orderness 0 at every scale).
//!
//! The whole dataset is then mapped into `[0, 1]` by one global affine
//! transform, which leaves orderness unchanged.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Provenance};
use crate::grid::Image;
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    Diffusion,
    Iid,
    ConstPlusNoise,
}

impl std::str::FromStr for FixtureKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diffusion" => Ok(Self::Diffusion),
            "iid" => Ok(Self::Iid),
            "const-plus-noise" => Ok(Self::ConstPlusNoise),
            other => Err(format!("unknown fixture kind '{other}' (diffusion, iid, const-plus-noise)")),
        }
    }
}

impl FixtureKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Diffusion => "diffusion",
            Self::Iid => "iid",
            Self::ConstPlusNoise => "const-plus-noise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub kind: FixtureKind,
    pub n: usize,
    pub size: usize,
    pub sigma: f64,
    pub seed: u64,
}

fn gauss(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn walk(rng: &mut impl Rng, len: usize, sigma: f64) -> Vec<f64> {
    let mut x = 0.0;
    (0..len)
        .map(|_| {
            x += sigma * gauss(rng);
            x
        })
        .collect()
}

pub fn gen_fixture(spec: &FixtureSpec) -> Result<Dataset, DataError> {
    if spec.n == 0 || spec.size == 0 || !(spec.sigma > 0.0 && spec.sigma.is_finite()) {
        return Err(DataError::Invalid(format!(
            "fixture needs n > 0, size > 0 and sigma > 0 (got {}, {}, {})",
            spec.n, spec.size, spec.sigma
        )));
    }
    let s = spec.size;
    let mut raw: Vec<Vec<f64>> = (0..spec.n)
        .map(|i| {
            let mut rng = seed::sub_rng(spec.seed, Stream::Fixture, i as u64);
            match spec.kind {
                FixtureKind::Diffusion => {
                    let rows = walk(&mut rng, s, spec.sigma);
                    let cols = walk(&mut rng, s, spec.sigma);
                    rows.iter().flat_map(|r| cols.iter().map(move |c| r + c)).collect()
                }
                FixtureKind::Iid => (0..s * s)
                    .map(|_| spec.sigma * gauss(&mut rng))
                    .collect(),
                FixtureKind::ConstPlusNoise => {
                    let a: f64 = rng.random();
                    (0..s * s)
                        .map(|_| a + spec.sigma * gauss(&mut rng))
                        .collect()
                }
            }
        })
        .collect();
    let lo = raw.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    for v in raw.iter_mut().flatten() {
        *v = ((*v - lo) / span).clamp(0.0, 1.0);
    }
    let images = raw
        .into_iter()
        .map(|v| Image::new(1, s, s, v).map_err(|e| DataError::Invalid(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut prov = Provenance::new();
    prov.insert("source".into(), "fixture".into());
    prov.insert("kind".into(), spec.kind.name().into());
    prov.insert("n".into(), spec.n.into());
    prov.insert("size".into(), spec.size.into());
    prov.insert("sigma".into(), spec.sigma.into());
    prov.insert("seed".into(), spec.seed.into());
    prov.insert("affine_offset".into(), lo.into());
    prov.insert("affine_scale".into(), span.into());
    Dataset::new(images, vec![0; spec.n], 1, prov)
}
