//! Channel figures of merit derived from impulse responses, and the
//! per-scenario channel matrix that feeds the allocator.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::raytrace::{BounceConfig, ImpulseResponse, TraceError, Tracer, WINDOW_OVERFLOW_TOLERANCE};
use crate::real::Real;
use crate::scene::{Scenario, Wavelength};

/// Upper edge of the bandwidth search, Hz.
pub const BANDWIDTH_SEARCH_CEILING: f64 = 50e9;
/// Coarse scan step, Hz.
pub const BANDWIDTH_COARSE_STEP: f64 = 10e6;
/// Bisection stops once the bracket is this narrow, Hz.
pub const BANDWIDTH_RESOLUTION: f64 = 1e6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("channel has zero DC gain")]
    ZeroChannel,
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("scenario users must all have {expected} branches; user {user_id} has {found}")]
    BranchCount { user_id: u32, expected: usize, found: usize },
}

/// Where the 3-dB point sits relative to `|H(0)|`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthConvention {
    /// `|H(f)| / |H(0)| = 1/√2`, i.e. `|H(f)|² = ½ |H(0)|²`.
    #[default]
    Optical,
    /// `|H(f)| / |H(0)| = 1/2`.
    Electrical,
}

impl BandwidthConvention {
    /// Threshold on `|H(f)|² / |H(0)|²`.
    pub fn power_ratio(self) -> f64 {
        match self {
            Self::Optical => 0.5,
            Self::Electrical => 0.25,
        }
    }
}

/// A 3-dB bandwidth, or no crossing below the search ceiling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth<T> {
    Finite(T),
    Unbounded,
}

impl<T: Real> Bandwidth<T> {
    /// Hz, with `+∞` for unbounded.
    pub fn hz(self) -> T {
        match self {
            Self::Finite(f) => f,
            Self::Unbounded => T::infinity(),
        }
    }
}

/// `H(0)`: the total collected fraction of source power.
pub fn dc_gain<T: Real>(ir: &ImpulseResponse<T>) -> T {
    ir.energy()
}

/// `H(f) = Σ p_k exp(−j 2π f t_k)` with `t_k` the bin centre times.
pub fn frequency_response<T: Real>(ir: &ImpulseResponse<T>, f: T) -> Complex<T> {
    let w = T::lit(2.0) * T::PI() * f;
    let mut acc = Complex::new(T::zero(), T::zero());
    for (k, &p) in ir.bins.iter().enumerate() {
        if p == T::zero() {
            continue;
        }
        let (s, c) = (w * ir.bin_center(k)).sin_cos();
        acc.re += p * c;
        acc.im -= p * s;
    }
    acc
}

/// `|H(f)|²` by Horner evaluation over the occupied bin range. Equal to
/// `|frequency_response|²`; the common phase factor `exp(−j 2π f t_first)`
/// drops out of the magnitude.
struct MagnitudeEvaluator<'a> {
    bins: &'a [f64],
    bin_width: f64,
}

impl<'a> MagnitudeEvaluator<'a> {
    fn new(bins: &'a [f64], bin_width: f64) -> Self {
        let first = bins.iter().position(|&p| p != 0.0).unwrap_or(0);
        let last = bins.iter().rposition(|&p| p != 0.0).map_or(first, |l| l + 1);
        Self { bins: &bins[first..last], bin_width }
    }

    fn mag2(&self, f: f64) -> f64 {
        let (s, c) = (-2.0 * std::f64::consts::PI * f * self.bin_width).sin_cos();
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for &p in self.bins.iter().rev() {
            let nre = re * c - im * s + p;
            im = re * s + im * c;
            re = nre;
        }
        re * re + im * im
    }
}

/// Smallest frequency where `|H(f)|²` drops to the convention's fraction of
/// `|H(0)|²`: coarse 10 MHz scan to 50 GHz, then bisection to 1 MHz.
pub fn bandwidth_3db<T: Real>(
    ir: &ImpulseResponse<T>,
    convention: BandwidthConvention,
) -> Result<Bandwidth<T>, MetricsError> {
    let h0 = dc_gain(ir).to_f64_lossy();
    if !(h0 > 0.0) {
        return Err(MetricsError::ZeroChannel);
    }
    let bins: Vec<f64> = ir.bins.iter().map(|b| b.to_f64_lossy()).collect();
    let eval = MagnitudeEvaluator::new(&bins, ir.bin_width.to_f64_lossy());
    let threshold = convention.power_ratio() * h0 * h0;
    let below = |f: f64| eval.mag2(f) <= threshold;

    let steps = (BANDWIDTH_SEARCH_CEILING / BANDWIDTH_COARSE_STEP).round() as usize;
    let mut prev = 0.0;
    for n in 1..=steps {
        let f = n as f64 * BANDWIDTH_COARSE_STEP;
        if below(f) {
            let (mut lo, mut hi) = (prev, f);
            while hi - lo > BANDWIDTH_RESOLUTION {
                let mid = 0.5 * (lo + hi);
                if below(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Bandwidth::Finite(T::lit(0.5 * (lo + hi))));
        }
        prev = f;
    }
    Ok(Bandwidth::Unbounded)
}

/// Root-mean-square delay spread about the power-weighted mean delay.
pub fn rms_delay_spread<T: Real>(ir: &ImpulseResponse<T>) -> Result<T, MetricsError> {
    let h0 = dc_gain(ir);
    if !(h0 > T::zero()) {
        return Err(MetricsError::ZeroChannel);
    }
    // Delays are taken from the first populated bin so a single path is exactly zero.
    let k0 = ir.first_nonzero().unwrap_or(0);
    let offset = |k: usize| T::from_usize_lossy(k - k0) * ir.bin_width;
    let mut first = T::zero();
    for (k, &p) in ir.bins.iter().enumerate().skip(k0) {
        first += p * offset(k);
    }
    let mean = first / h0;
    let mut second = T::zero();
    for (k, &p) in ir.bins.iter().enumerate().skip(k0) {
        let dt = offset(k) - mean;
        second += p * dt * dt;
    }
    Ok((second / h0).max(T::zero()).sqrt())
}

/// Everything the allocator and reports need about one (user, branch, AP) link.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkMetrics<T> {
    pub dc_gain: T,
    pub ir: ImpulseResponse<T>,
    /// `None` for links with zero gain.
    pub bw_3db: Option<Bandwidth<T>>,
    pub delay_spread: Option<T>,
}

impl<T: Real> LinkMetrics<T> {
    pub fn from_ir(ir: ImpulseResponse<T>, convention: BandwidthConvention) -> Self {
        let dc = dc_gain(&ir);
        let (bw_3db, delay_spread) = if dc > T::zero() {
            (bandwidth_3db(&ir, convention).ok(), rms_delay_spread(&ir).ok())
        } else {
            (None, None)
        };
        Self { dc_gain: dc, ir, bw_3db, delay_spread }
    }
}

/// Per-link metrics for every (user, branch, AP) plus the band scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix<T> {
    pub user_ids: Vec<u32>,
    pub ap_ids: Vec<u32>,
    pub num_branches: usize,
    /// Row-major `[user][branch][ap]`.
    pub links: Vec<LinkMetrics<T>>,
    /// Responsivity per band, A/W.
    pub responsivity: [T; 4],
    /// Emitted power per AP and band, W.
    pub unit_power: Vec<[T; 4]>,
}

impl<T: Real> ChannelMatrix<T> {
    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_aps(&self) -> usize {
        self.ap_ids.len()
    }

    #[inline]
    pub fn index(&self, user: usize, branch: usize, ap: usize) -> usize {
        (user * self.num_branches + branch) * self.ap_ids.len() + ap
    }

    #[inline]
    pub fn link(&self, user: usize, branch: usize, ap: usize) -> &LinkMetrics<T> {
        &self.links[self.index(user, branch, ap)]
    }

    /// Photocurrent produced at a branch by one AP's emission in band `w`, A.
    #[inline]
    pub fn photocurrent(&self, user: usize, branch: usize, ap: usize, w: Wavelength) -> T {
        self.responsivity[w.index()] * self.unit_power[ap][w.index()] * self.link(user, branch, ap).dc_gain
    }

    /// A matrix without impulse responses, for allocation experiments on synthetic gains.
    pub fn from_gains(
        user_ids: Vec<u32>,
        ap_ids: Vec<u32>,
        num_branches: usize,
        gains: &[T],
        responsivity: [T; 4],
        unit_power: Vec<[T; 4]>,
    ) -> Self {
        assert_eq!(gains.len(), user_ids.len() * num_branches * ap_ids.len());
        assert_eq!(unit_power.len(), ap_ids.len());
        let links = gains
            .iter()
            .map(|&g| LinkMetrics {
                dc_gain: g,
                ir: ImpulseResponse { bin_width: T::lit(1e-11), t0: T::zero(), bins: vec![g] },
                bw_3db: (g > T::zero()).then_some(Bandwidth::Unbounded),
                delay_spread: (g > T::zero()).then_some(T::zero()),
            })
            .collect();
        Self { user_ids, ap_ids, num_branches, links, responsivity, unit_power }
    }
}

/// Traces every (user, branch, AP) link of a scenario.
///
/// Links are evaluated in parallel and collected in index order, so the
/// result is independent of the worker count.
pub fn build_channel_matrix<T: Real>(
    scenario: &Scenario<T>,
    cfg: BounceConfig<T>,
    convention: BandwidthConvention,
) -> Result<ChannelMatrix<T>, MetricsError> {
    let num_branches = scenario.users.first().map_or(0, |u| u.branches.len());
    if let Some(u) = scenario.users.iter().find(|u| u.branches.len() != num_branches) {
        return Err(MetricsError::BranchCount {
            user_id: u.user_id,
            expected: num_branches,
            found: u.branches.len(),
        });
    }
    let tracer = Tracer::new(&scenario.room, cfg)?;
    let num_aps = scenario.units.len();
    let total = scenario.users.len() * num_branches * num_aps;

    let traced: Vec<(LinkMetrics<T>, T)> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let ap = idx % num_aps;
            let branch = (idx / num_aps) % num_branches;
            let user = idx / (num_aps * num_branches);
            let out = tracer.trace(&scenario.units[ap], &scenario.users[user], branch)?;
            Ok((LinkMetrics::from_ir(out.ir, convention), out.overflow_fraction))
        })
        .collect::<Result<_, TraceError>>()?;

    let overflowed = traced
        .iter()
        .filter(|(_, o)| *o > T::lit(WINDOW_OVERFLOW_TOLERANCE))
        .count();
    if overflowed > 0 {
        log::warn!(
            "{overflowed} of {total} links collected more than {WINDOW_OVERFLOW_TOLERANCE:e} of their energy \
             beyond the {} s window; their responses were extended",
            cfg.time_window
        );
    }

    let responsivity = scenario.wavelengths.bands.map(|b| b.responsivity);
    let unit_power = scenario
        .units
        .iter()
        .map(|u| Wavelength::ALL.map(|w| u.unit_power(scenario.wavelengths.band(w))))
        .collect();
    Ok(ChannelMatrix {
        user_ids: scenario.users.iter().map(|u| u.user_id).collect(),
        ap_ids: scenario.units.iter().map(|u| u.id).collect(),
        num_branches,
        links: traced.into_iter().map(|(l, _)| l).collect(),
        responsivity,
        unit_power,
    })
}
