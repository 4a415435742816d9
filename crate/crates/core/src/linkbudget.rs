//! Photocurrents, noise and SINR for a WDMA downlink.
//!
//! Every access point emits all four bands for illumination. For a user on
//! channel `(ap, w)` the received emissions fall into three classes: its own
//! modulated signal, co-channel interference from other users' modulated
//! `(ap', w)` channels, and unmodulated illumination that only adds shot noise.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::real::{Real, ELECTRON_CHARGE};
use crate::scene::Wavelength;

/// SINR needed for a 10⁻⁹ OOK bit error rate, dB.
pub const SINR_THRESHOLD_DB: f64 = 15.6;

/// Default rate per hertz of usable bandwidth (7.1 Gbit/s over 5 GHz).
pub const DEFAULT_KAPPA: f64 = 1.42;

/// Which non-signal emissions contribute shot noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbientPolicy {
    /// Every emission in the field of view, including the serving unit's other bands.
    #[default]
    AllEmissions,
    /// As above but without the serving unit's other three bands.
    ExcludeServingUnit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel<T> {
    /// Preamplifier input-referred current noise density, A/√Hz.
    pub noise_density: T,
    /// Receiver noise bandwidth, Hz.
    pub receiver_bandwidth: T,
    /// Elementary charge, C.
    pub electron_charge: T,
    /// Shot noise on or off. Off is only useful for checking scaling laws.
    pub shot_noise: bool,
    pub ambient: AmbientPolicy,
}

impl<T: Real> NoiseModel<T> {
    pub fn new(noise_density: T, receiver_bandwidth: T) -> Self {
        Self {
            noise_density,
            receiver_bandwidth,
            electron_charge: T::lit(ELECTRON_CHARGE),
            shot_noise: true,
            ambient: AmbientPolicy::default(),
        }
    }

    pub fn preamp_var(&self) -> T {
        preamp_noise_var(self.noise_density, self.receiver_bandwidth)
    }

    pub fn shot_var(&self, incident_photocurrent: T) -> T {
        if self.shot_noise {
            shot_noise_var_with(self.electron_charge, incident_photocurrent, self.receiver_bandwidth)
        } else {
            T::zero()
        }
    }

    /// Signal-independent part of the SINR denominator.
    #[inline]
    pub fn base_noise_var(&self, incident_photocurrent: T) -> T {
        self.shot_var(incident_photocurrent) + self.preamp_var()
    }

    pub fn cast<U: Real>(&self) -> NoiseModel<U> {
        NoiseModel {
            noise_density: U::lit(self.noise_density.to_f64_lossy()),
            receiver_bandwidth: U::lit(self.receiver_bandwidth.to_f64_lossy()),
            electron_charge: U::lit(self.electron_charge.to_f64_lossy()),
            shot_noise: self.shot_noise,
            ambient: self.ambient,
        }
    }
}

/// One modulated or unmodulated emission: an access point (by index) in one band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId {
    pub ap: usize,
    pub wavelength: Wavelength,
}

impl ChannelId {
    pub fn new(ap: usize, wavelength: Wavelength) -> Self {
        Self { ap, wavelength }
    }
}

/// How every emission in the room relates to one user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkClasses {
    pub signal: ChannelId,
    /// Other users' modulated channels in the same band, by AP index.
    pub interfering: Vec<ChannelId>,
    /// Everything else, in (AP, band) order.
    pub illumination: Vec<ChannelId>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LinkError {
    #[error("users {first} and {second} share AP index {} in band {}", .channel.ap, .channel.wavelength)]
    Conflict { first: usize, second: usize, channel: ChannelId },
    #[error("user {0} has no channel assigned")]
    Unassigned(usize),
    #[error("user index {0} out of range")]
    UnknownUser(usize),
    #[error("signal photocurrent is zero; SINR is undefined")]
    DegenerateLink,
}

/// Rejects assignments where two users share an `(ap, wavelength)` channel.
pub fn check_exclusive(assignment: &[Option<ChannelId>]) -> Result<(), LinkError> {
    let mut seen: Vec<(ChannelId, usize)> = Vec::with_capacity(assignment.len());
    for (user, ch) in assignment.iter().enumerate() {
        if let Some(ch) = ch {
            if let Some(&(_, first)) = seen.iter().find(|(c, _)| c == ch) {
                return Err(LinkError::Conflict { first, second: user, channel: *ch });
            }
            seen.push((*ch, user));
        }
    }
    Ok(())
}

/// Splits all `num_aps × 4` emissions into signal, interference and illumination for `user`.
///
/// `assignment` is indexed by user; unassigned users neither interfere nor
/// count as signal.
pub fn classify_links(
    assignment: &[Option<ChannelId>],
    user: usize,
    num_aps: usize,
) -> Result<LinkClasses, LinkError> {
    check_exclusive(assignment)?;
    let signal = assignment
        .get(user)
        .ok_or(LinkError::UnknownUser(user))?
        .ok_or(LinkError::Unassigned(user))?;
    let modulated: BTreeSet<ChannelId> = assignment
        .iter()
        .enumerate()
        .filter(|&(v, _)| v != user)
        .filter_map(|(_, c)| *c)
        .collect();

    let mut interfering = Vec::new();
    let mut illumination = Vec::new();
    for ap in 0..num_aps {
        for w in Wavelength::ALL {
            let ch = ChannelId::new(ap, w);
            if ch == signal {
                continue;
            }
            if w == signal.wavelength && ap != signal.ap && modulated.contains(&ch) {
                interfering.push(ch);
            } else {
                illumination.push(ch);
            }
        }
    }
    Ok(LinkClasses { signal, interfering, illumination })
}

/// Photocurrents seen by one receiver branch for one user's channel.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkBudget<T> {
    pub user_id: u32,
    pub branch: usize,
    pub ap: usize,
    pub wavelength: Wavelength,
    /// A.
    pub signal_photocurrent: T,
    /// One entry per co-channel modulated AP, A.
    pub interference_photocurrents: Vec<T>,
    /// Unmodulated illumination photocurrent, A.
    pub ambient_photocurrent: T,
    /// Total incident photocurrent driving shot noise, A.
    pub incident_photocurrent: T,
}

impl<T: Real> LinkBudget<T> {
    /// Budget whose shot noise is driven by signal + interference + ambient.
    pub fn new(signal: T, interference: Vec<T>, ambient: T) -> Self {
        let incident = signal + interference.iter().copied().sum::<T>() + ambient;
        Self {
            user_id: 0,
            branch: 0,
            ap: 0,
            wavelength: Wavelength::Red,
            signal_photocurrent: signal,
            interference_photocurrents: interference,
            ambient_photocurrent: ambient,
            incident_photocurrent: incident,
        }
    }

    /// Builds the budget from a per-emission photocurrent table.
    ///
    /// `photocurrent(ch)` is the current one emission produces at this branch.
    /// The incident total is summed over all counted emissions in (AP, band)
    /// order, so it does not depend on how other users are assigned.
    pub fn from_classes(
        classes: &LinkClasses,
        num_aps: usize,
        ambient: AmbientPolicy,
        photocurrent: impl Fn(ChannelId) -> T,
    ) -> Self {
        let signal = photocurrent(classes.signal);
        let interference: Vec<T> = classes.interfering.iter().map(|&c| photocurrent(c)).collect();
        let counts = |c: &ChannelId| match ambient {
            AmbientPolicy::AllEmissions => true,
            AmbientPolicy::ExcludeServingUnit => {
                c.ap != classes.signal.ap || c.wavelength == classes.signal.wavelength
            }
        };
        let ambient_current: T = classes
            .illumination
            .iter()
            .filter(|c| counts(c))
            .map(|&c| photocurrent(c))
            .sum();
        let incident = incident_photocurrent(num_aps, classes.signal, ambient, &photocurrent);
        Self {
            user_id: 0,
            branch: 0,
            ap: classes.signal.ap,
            wavelength: classes.signal.wavelength,
            signal_photocurrent: signal,
            interference_photocurrents: interference,
            ambient_photocurrent: ambient_current,
            incident_photocurrent: incident,
        }
    }

    /// Σ of squared interferer photocurrents, A².
    pub fn interference_power(&self) -> T {
        self.interference_photocurrents.iter().map(|&i| i * i).sum()
    }
}

/// Sum of every counted emission's photocurrent in (AP, band) order.
pub fn incident_photocurrent<T: Real>(
    num_aps: usize,
    signal: ChannelId,
    ambient: AmbientPolicy,
    photocurrent: impl Fn(ChannelId) -> T,
) -> T {
    let skip_serving = ambient == AmbientPolicy::ExcludeServingUnit;
    let mut total = T::zero();
    for ap in 0..num_aps {
        for w in Wavelength::ALL {
            if skip_serving && ap == signal.ap && w != signal.wavelength {
                continue;
            }
            total += photocurrent(ChannelId::new(ap, w));
        }
    }
    total
}

/// Shot-noise variance `2 q I B`, A².
pub fn shot_noise_var<T: Real>(total_photocurrent: T, bandwidth: T) -> T {
    shot_noise_var_with(T::lit(ELECTRON_CHARGE), total_photocurrent, bandwidth)
}

#[inline]
fn shot_noise_var_with<T: Real>(q: T, current: T, bandwidth: T) -> T {
    T::lit(2.0) * q * current * bandwidth
}

/// Preamplifier noise variance `density² B`, A².
pub fn preamp_noise_var<T: Real>(density: T, bandwidth: T) -> T {
    density * density * bandwidth
}

/// Linear SINR from a signal current, the signal-independent noise variance
/// and the summed squared interference.
#[inline]
pub fn sinr_from_parts<T: Real>(signal: T, base_noise_var: T, interference_power: T) -> T {
    signal * signal / (base_noise_var + interference_power)
}

pub fn sinr_linear<T: Real>(budget: &LinkBudget<T>, noise: &NoiseModel<T>) -> T {
    sinr_from_parts(
        budget.signal_photocurrent,
        noise.base_noise_var(budget.incident_photocurrent),
        budget.interference_power(),
    )
}

/// SINR in dB. Fails when there is no signal at all.
pub fn sinr<T: Real>(budget: &LinkBudget<T>, noise: &NoiseModel<T>) -> Result<T, LinkError> {
    if !(budget.signal_photocurrent > T::zero()) {
        return Err(LinkError::DegenerateLink);
    }
    Ok(to_db(sinr_linear(budget, noise)))
}

#[inline]
pub fn to_db<T: Real>(linear: T) -> T {
    T::lit(10.0) * linear.log10()
}

#[inline]
pub fn from_db<T: Real>(db: T) -> T {
    T::lit(10.0).powf(db / T::lit(10.0))
}

/// Gaussian tail probability `Q(x) = ½ erfc(x / √2)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// OOK bit error rate `Q(√SINR)`.
pub fn ber_ook<T: Real>(sinr_linear: T) -> T {
    T::lit(q_function(sinr_linear.max(T::zero()).sqrt().to_f64_lossy()))
}

/// Inclusive comparison against the 15.6 dB OOK threshold.
pub fn meets_threshold<T: Real>(sinr_db: T) -> bool {
    sinr_db >= T::lit(SINR_THRESHOLD_DB)
}

/// `min(configured, kappa · min(channel bandwidth, receiver bandwidth))`.
pub fn supported_rate<T: Real>(bw_channel: T, bw_receiver: T, configured_rate: T, kappa: T) -> T {
    configured_rate.min(kappa * bw_channel.min(bw_receiver))
}
