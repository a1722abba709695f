//! Survey geometry, the zero-inflated binomial model and reproducible
//! simulation of region summaries.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::inference::ThetaFull;
use crate::{Error, Result};

/// Number of sites and repeat visits in one region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionDesign {
    pub n_sites: u32,
    pub n_visits: u32,
}

impl RegionDesign {
    pub fn new(n_sites: u32, n_visits: u32) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidDesign("at least one site is required"));
        }
        if n_visits == 0 {
            return Err(Error::InvalidDesign("at least one visit is required"));
        }
        Ok(Self { n_sites, n_visits })
    }

    pub fn sites(&self) -> f64 {
        f64::from(self.n_sites)
    }

    pub fn visits(&self) -> f64 {
        f64::from(self.n_visits)
    }
}

pub(crate) fn open_unit(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::OutsideUnitInterval { name, value })
    }
}

/// Occupancy and detection probability of one region.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionParams {
    pub psi: f64,
    pub p: f64,
}

impl RegionParams {
    pub fn new(psi: f64, p: f64) -> Result<Self> {
        Ok(Self { psi: open_unit("psi", psi)?, p: open_unit("p", p)? })
    }

    pub(crate) fn check(&self) -> Result<()> {
        open_unit("psi", self.psi)?;
        open_unit("p", self.p)?;
        Ok(())
    }
}

/// Sufficient statistics of one region: sites with at least one detection
/// and total detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionSummary {
    pub detected_sites: u32,
    pub detections: u64,
}

impl RegionSummary {
    pub fn new(detected_sites: u32, detections: u64, design: &RegionDesign) -> Result<Self> {
        let s = Self { detected_sites, detections };
        s.validate(design)?;
        Ok(s)
    }

    pub fn validate(&self, design: &RegionDesign) -> Result<()> {
        let s = u64::from(self.detected_sites);
        if self.detected_sites > design.n_sites {
            return Err(Error::InvalidSummary("more detected sites than sites"));
        }
        if self.detections < s {
            return Err(Error::InvalidSummary("fewer detections than detected sites"));
        }
        if self.detections > s * u64::from(design.n_visits) {
            return Err(Error::InvalidSummary("more detections than visits to detected sites"));
        }
        Ok(())
    }

    /// Real-valued view used by the likelihood code.
    pub fn counts(&self) -> Counts {
        Counts { detected_sites: f64::from(self.detected_sites), detections: self.detections as f64 }
    }
}

/// Real-valued sufficient statistics.
///
/// The log-likelihood is linear in these, so evaluating it at expected counts
/// gives the expected log-likelihood and its derivatives exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Counts {
    pub detected_sites: f64,
    pub detections: f64,
}

impl From<RegionSummary> for Counts {
    fn from(s: RegionSummary) -> Self {
        s.counts()
    }
}

/// Everything needed to simulate a two-region study.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TwoSampleConfig {
    pub designs: [RegionDesign; 2],
    pub truth: ThetaFull,
    pub base_seed: u64,
}

/// Truth family indexed by the effect size `R`: `ψ₂ = (1 − R)ψ₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scenario {
    pub psi1: f64,
    pub p1: f64,
    pub p2: f64,
    pub designs: [RegionDesign; 2],
}

impl Scenario {
    /// `p₁ = p₂ = 0.5`, `K₁ = K₂ = 3`, `N₁ = N₂ = 50`.
    pub fn standard(psi1: f64) -> Self {
        let design = RegionDesign { n_sites: 50, n_visits: 3 };
        Self { psi1, p1: 0.5, p2: 0.5, designs: [design, design] }
    }

    pub fn truth(&self, r: f64) -> Result<ThetaFull> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::NotAProbability { name: "R", value: r });
        }
        ThetaFull::new(self.psi1, self.p1, (1.0 - r) * self.psi1, self.p2)
    }
}

/// Probability of at least one detection in `visits` visits: `1 − (1−p)^K`.
pub fn theta_detect(p: f64, visits: u32) -> f64 {
    1.0 - (1.0 - p).powi(visits as i32)
}

/// Zero-inflated binomial pmf of the detection count at one site.
pub fn zib_pmf(y: u32, params: &RegionParams, visits: u32) -> Result<f64> {
    if y > visits {
        return Err(Error::CountOutOfRange { y, visits });
    }
    let RegionParams { psi, p } = *params;
    if !(0.0..=1.0).contains(&psi) {
        return Err(Error::NotAProbability { name: "psi", value: psi });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::NotAProbability { name: "p", value: p });
    }
    let k = visits as i32;
    let miss_all = (1.0 - p).powi(k);
    Ok(if y == 0 {
        1.0 - psi + psi * miss_all
    } else {
        let y = y as i32;
        psi * binomial_coefficient(visits, y as u32) * p.powi(y) * (1.0 - p).powi(k - y)
    })
}

pub(crate) fn binomial_coefficient(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// A reproducible random stream for one simulated dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream(ChaCha8Rng);

impl RandomStream {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self(ChaCha8Rng::from_seed(seed))
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

const STREAM_TAG: [u8; 8] = *b"occscore";

/// Stream for replicate `replicate` at grid point `r_index`.
///
/// The ChaCha key is the little-endian concatenation of the three indices and
/// a fixed tag, so distinct triples always give distinct keys.
pub fn derive_stream(base_seed: u64, r_index: u64, replicate: u64) -> RandomStream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&base_seed.to_le_bytes());
    key[8..16].copy_from_slice(&r_index.to_le_bytes());
    key[16..24].copy_from_slice(&replicate.to_le_bytes());
    key[24..].copy_from_slice(&STREAM_TAG);
    RandomStream::from_seed(key)
}

// Below this detection probability rejection wastes too many draws.
const REJECTION_MIN_THETA: f64 = 0.25;

/// One draw of Binomial(K, p) conditioned on being positive.
pub fn sample_zero_truncated_binomial<R: Rng + ?Sized>(visits: u32, p: f64, rng: &mut R) -> u32 {
    let theta = theta_detect(p, visits);
    if theta >= REJECTION_MIN_THETA {
        let bin = Binomial::new(u64::from(visits), p).expect("p is a probability");
        loop {
            let y = bin.sample(rng);
            if y > 0 {
                return y as u32;
            }
        }
    }
    // inverse CDF over 1..=K with pmf C(K,y) p^y (1-p)^(K-y) / θ
    let u: f64 = rng.random::<f64>() * theta;
    let q = 1.0 - p;
    let mut term = q.powi(visits as i32);
    let mut cdf = 0.0;
    let ratio = p / q;
    for y in 1..=visits {
        term *= ratio * f64::from(visits - y + 1) / f64::from(y);
        cdf += term;
        if u < cdf {
            return y;
        }
    }
    visits
}

/// Simulates one region's sufficient statistics.
///
/// The number of detected sites is Binomial(N, ψθ); each detected site
/// contributes a zero-truncated Binomial(K, p) count.
pub fn simulate_region<R: Rng + ?Sized>(
    design: &RegionDesign,
    params: &RegionParams,
    rng: &mut R,
) -> RegionSummary {
    let theta = theta_detect(params.p, design.n_visits);
    let detected = Binomial::new(u64::from(design.n_sites), params.psi * theta)
        .expect("ψθ is a probability")
        .sample(rng) as u32;
    let detections = (0..detected)
        .map(|_| u64::from(sample_zero_truncated_binomial(design.n_visits, params.p, rng)))
        .sum();
    RegionSummary { detected_sites: detected, detections }
}
