//! Lambertian multipath tracing: line of sight plus first- and second-order
//! diffuse reflections off the discretized room surfaces.
//!
//! Responses are geometry only (per watt of source power); band powers and
//! responsivities are applied by the link budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::real::{Real, SPEED_OF_LIGHT};
use crate::scene::{discretize, LightUnit, ReceiverBranch, Room, SurfaceElement, UserPlacement, Vec3};

/// Fraction of collected energy allowed beyond the nominal window before warning.
pub const WINDOW_OVERFLOW_TOLERANCE: f64 = 1e-6;

const FIRST_ORDER_CHUNK: usize = 4096;
const SECOND_ORDER_CHUNK: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BounceConfig<T> {
    /// Highest reflection order traced: 0, 1 or 2.
    pub max_order: u8,
    pub elem_size_bounce1: T,
    pub elem_size_bounce2: T,
    /// s.
    pub time_bin: T,
    /// Nominal response length, s. Extended automatically when paths arrive later.
    pub time_window: T,
}

/// Element-size presets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    /// 5 cm elements for first-order paths, 20 cm for second-order.
    #[default]
    Paper,
    /// 20 cm / 80 cm, for quick runs.
    Desk,
}

impl<T: Real> BounceConfig<T> {
    pub fn new(resolution: Resolution, max_order: u8) -> Self {
        let (e1, e2) = match resolution {
            Resolution::Paper => (0.05, 0.20),
            Resolution::Desk => (0.20, 0.80),
        };
        Self {
            max_order,
            elem_size_bounce1: T::lit(e1),
            elem_size_bounce2: T::lit(e2),
            time_bin: T::lit(0.01e-9),
            time_window: T::lit(60e-9),
        }
    }

    /// Element sizes taken from the room description.
    pub fn from_room(room: &Room<T>, max_order: u8) -> Self {
        Self {
            elem_size_bounce1: room.elem_size_bounce1,
            elem_size_bounce2: room.elem_size_bounce2,
            ..Self::new(Resolution::Paper, max_order)
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let z = T::zero();
        if self.max_order > 2 {
            return Err(TraceError::InvalidConfig(format!(
                "max_order {} not supported (0, 1 or 2)",
                self.max_order
            )));
        }
        for (name, v) in [
            ("elem_size_bounce1", self.elem_size_bounce1),
            ("elem_size_bounce2", self.elem_size_bounce2),
            ("time_bin", self.time_bin),
            ("time_window", self.time_window),
        ] {
            if !(v.is_finite() && v > z) {
                return Err(TraceError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> BounceConfig<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        BounceConfig {
            max_order: self.max_order,
            elem_size_bounce1: c(self.elem_size_bounce1),
            elem_size_bounce2: c(self.elem_size_bounce2),
            time_bin: c(self.time_bin),
            time_window: c(self.time_window),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TraceError {
    #[error("invalid bounce configuration: {0}")]
    InvalidConfig(String),
    #[error("branch index {index} out of range ({len} branches)")]
    BranchIndex { index: usize, len: usize },
}

/// Time-binned received power per watt transmitted.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseResponse<T> {
    pub bin_width: T,
    /// Start time of the first bin, s.
    pub t0: T,
    pub bins: Vec<T>,
}

impl<T: Real> ImpulseResponse<T> {
    /// Centre time of bin `k`.
    #[inline]
    pub fn bin_center(&self, k: usize) -> T {
        self.t0 + (T::from_usize_lossy(k) + T::lit(0.5)) * self.bin_width
    }

    pub fn energy(&self) -> T {
        self.bins.iter().copied().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.bins.iter().all(|&b| b == T::zero())
    }

    pub fn first_nonzero(&self) -> Option<usize> {
        self.bins.iter().position(|&b| b > T::zero())
    }

    pub fn nonzero_bins(&self) -> usize {
        self.bins.iter().filter(|&&b| b > T::zero()).count()
    }
}

/// A single propagation path: collected fraction of source power and its delay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathContribution<T> {
    pub power_gain: T,
    /// s.
    pub delay: T,
}

#[inline]
fn cos_pow<T: Real>(c: T, m: T) -> T {
    if m == T::one() {
        c
    } else {
        c.powf(m)
    }
}

/// Fraction of an order-`m` Lambertian source's power collected by a patch
/// of `area` at distance `d`: `(m+1)/(2π d²) cos^m φ cos θ A`, or zero when
/// either cosine is not positive.
#[inline]
pub fn lambertian_gain<T: Real>(m: T, d: T, cos_phi: T, cos_theta: T, area: T) -> T {
    if cos_phi <= T::zero() || cos_theta <= T::zero() {
        return T::zero();
    }
    (m + T::one()) / (T::lit(2.0) * T::PI() * d * d) * cos_pow(cos_phi, m) * cos_theta * area
}

/// Whether light arriving along `arrival_dir` (unit vector from the
/// receiver towards the source) falls inside the branch field of view.
/// The boundary angle is accepted.
pub fn in_fov<T: Real>(branch: &ReceiverBranch<T>, arrival_dir: Vec3<T>) -> (bool, T) {
    let view = BranchView::new(Vec3::zero(), branch);
    let cos_theta = view.normal.dot(arrival_dir);
    (view.accepts(cos_theta), cos_theta)
}

/// Receiver face with its derived quantities cached.
#[derive(Clone, Copy, Debug)]
struct BranchView<T> {
    position: Vec3<T>,
    normal: Vec3<T>,
    cos_fov: T,
    area: T,
}

impl<T: Real> BranchView<T> {
    fn new(position: Vec3<T>, branch: &ReceiverBranch<T>) -> Self {
        // A few ulps of slack keep the boundary angle inside after rounding.
        let cos_fov = branch.cos_fov() - T::epsilon() * T::lit(4.0);
        Self { position, normal: branch.normal(), cos_fov, area: branch.detector_area }
    }

    #[inline]
    fn accepts(&self, cos_theta: T) -> bool {
        cos_theta > T::zero() && cos_theta >= self.cos_fov
    }

    /// Gain from a Lambertian emitter of order `m` at `from` with normal `n`.
    #[inline]
    fn gain_from(&self, from: Vec3<T>, n: Vec3<T>, m: T) -> (T, T) {
        let v = self.position - from;
        let d = v.norm();
        if d <= T::zero() {
            return (T::zero(), d);
        }
        let inv = T::one() / d;
        let cos_phi = n.dot(v) * inv;
        let cos_theta = -self.normal.dot(v) * inv;
        if !self.accepts(cos_theta) {
            return (T::zero(), d);
        }
        (lambertian_gain(m, d, cos_phi, cos_theta, self.area), d)
    }
}

fn branch_view<T: Real>(user: &UserPlacement<T>, branch_index: usize) -> Result<BranchView<T>, TraceError> {
    let branch = user
        .branches
        .get(branch_index)
        .ok_or(TraceError::BranchIndex { index: branch_index, len: user.branches.len() })?;
    Ok(BranchView::new(user.position, branch))
}

/// Fraction of source power reaching `e` from the AP, and the distance.
#[inline]
fn source_to_element<T: Real>(ap: &LightUnit<T>, e: &SurfaceElement<T>) -> (T, T) {
    let v = e.center - ap.position;
    let d = v.norm();
    if d <= T::zero() {
        return (T::zero(), d);
    }
    let inv = T::one() / d;
    let cos_phi = ap.normal.dot(v) * inv;
    let cos_theta = -e.normal.dot(v) * inv;
    (lambertian_gain(ap.lambertian_order, d, cos_phi, cos_theta, e.area), d)
}

#[inline]
fn c_light<T: Real>() -> T {
    T::lit(SPEED_OF_LIGHT)
}

/// Direct path from the AP to one receiver branch.
pub fn los_contribution<T: Real>(
    ap: &LightUnit<T>,
    user: &UserPlacement<T>,
    branch_index: usize,
) -> Result<PathContribution<T>, TraceError> {
    let view = branch_view(user, branch_index)?;
    Ok(los_with(ap, &view))
}

fn los_with<T: Real>(ap: &LightUnit<T>, view: &BranchView<T>) -> PathContribution<T> {
    let (gain, d) = view.gain_from(ap.position, ap.normal, ap.lambertian_order);
    PathContribution { power_gain: gain, delay: d / c_light() }
}

/// Single-bounce paths AP → element → branch. Zero-gain paths are omitted.
pub fn first_order_response<T: Real>(
    ap: &LightUnit<T>,
    user: &UserPlacement<T>,
    branch_index: usize,
    elements: &[SurfaceElement<T>],
) -> Result<Vec<PathContribution<T>>, TraceError> {
    let view = branch_view(user, branch_index)?;
    let mut out = Vec::new();
    first_order_each(ap, &view, elements, |p| out.push(p));
    Ok(out)
}

fn first_order_each<T: Real>(
    ap: &LightUnit<T>,
    view: &BranchView<T>,
    elements: &[SurfaceElement<T>],
    mut sink: impl FnMut(PathContribution<T>),
) {
    let c = c_light::<T>();
    for e in elements {
        if e.reflectance <= T::zero() {
            continue;
        }
        let (g1, d1) = source_to_element(ap, e);
        if g1 <= T::zero() {
            continue;
        }
        let (g2, d2) = view.gain_from(e.center, e.normal, e.lambertian_order);
        if g2 <= T::zero() {
            continue;
        }
        sink(PathContribution { power_gain: g1 * e.reflectance * g2, delay: (d1 + d2) / c });
    }
}

/// Reflected power leaving each element towards the room, with the AP distance.
fn illuminate<T: Real>(ap: &LightUnit<T>, elements: &[SurfaceElement<T>]) -> Vec<(usize, T, T)> {
    elements
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            if e.reflectance <= T::zero() {
                return None;
            }
            let (g, d) = source_to_element(ap, e);
            (g > T::zero()).then(|| (i, g * e.reflectance, d))
        })
        .collect()
}

/// Elements the branch can see, with their re-emission gain to the detector and distance.
fn visible<T: Real>(view: &BranchView<T>, elements: &[SurfaceElement<T>]) -> Vec<(usize, T, T)> {
    elements
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            if e.reflectance <= T::zero() {
                return None;
            }
            let (g, d) = view.gain_from(e.center, e.normal, e.lambertian_order);
            (g > T::zero()).then(|| (i, g * e.reflectance, d))
        })
        .collect()
}

/// Two-bounce paths AP → e1 → e2 → branch over all ordered pairs `e1 ≠ e2`.
/// The field of view is applied at the receiver only.
pub fn second_order_response<T: Real>(
    ap: &LightUnit<T>,
    user: &UserPlacement<T>,
    branch_index: usize,
    elements: &[SurfaceElement<T>],
) -> Result<Vec<PathContribution<T>>, TraceError> {
    let view = branch_view(user, branch_index)?;
    let lit = illuminate(ap, elements);
    let seen = visible(&view, elements);
    let mut out = Vec::new();
    for &e2 in &seen {
        second_order_into(elements, &lit, e2, |p| out.push(p));
    }
    Ok(out)
}

/// Paths ending on one visible element `e2`, summed over every lit `e1`.
#[inline]
fn second_order_into<T: Real>(
    elements: &[SurfaceElement<T>],
    lit: &[(usize, T, T)],
    (j, g2r, d2r): (usize, T, T),
    mut sink: impl FnMut(PathContribution<T>),
) {
    let c = c_light::<T>();
    let two_pi = T::lit(2.0) * T::PI();
    let e2 = &elements[j];
    for &(i, ga1, da1) in lit {
        if i == j {
            continue;
        }
        let e1 = &elements[i];
        let v = e2.center - e1.center;
        let d2 = v.norm_squared();
        let cos1 = e1.normal.dot(v);
        let cos2 = -e2.normal.dot(v);
        if cos1 <= T::zero() || cos2 <= T::zero() || d2 <= T::zero() {
            continue;
        }
        let d = d2.sqrt();
        let inv = T::one() / d;
        let m = e1.lambertian_order;
        let g12 = (m + T::one()) / (two_pi * d2) * cos_pow(cos1 * inv, m) * (cos2 * inv) * e2.area;
        sink(PathContribution { power_gain: ga1 * g12 * g2r, delay: (da1 + d + d2r) / c });
    }
}

/// Accumulates path powers into fixed-width bins starting at `t0`.
struct Binner<T> {
    t0: T,
    inv_bin: T,
    bins: Vec<T>,
}

impl<T: Real> Binner<T> {
    fn new(t0: T, bin: T, len: usize) -> Self {
        Self { t0, inv_bin: T::one() / bin, bins: vec![T::zero(); len] }
    }

    #[inline]
    fn add(&mut self, p: PathContribution<T>) {
        let k = ((p.delay - self.t0) * self.inv_bin).floor().max(T::zero());
        let k = k.to_usize().unwrap_or(usize::MAX);
        if k >= self.bins.len() {
            self.bins.resize(k + 1, T::zero());
        }
        self.bins[k] += p.power_gain;
    }

    /// Adds another binner's bins (same origin) in index order.
    fn merge(&mut self, other: &Binner<T>) {
        if other.bins.len() > self.bins.len() {
            self.bins.resize(other.bins.len(), T::zero());
        }
        for (a, &b) in self.bins.iter_mut().zip(&other.bins) {
            *a += b;
        }
    }
}

/// Impulse response plus window diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceOutput<T> {
    pub ir: ImpulseResponse<T>,
    /// Fraction of collected energy past the nominal window.
    pub overflow_fraction: T,
}

/// Surface discretizations for both bounce orders, reusable across links.
#[derive(Clone, Debug)]
pub struct Tracer<T> {
    cfg: BounceConfig<T>,
    elements1: Vec<SurfaceElement<T>>,
    elements2: Vec<SurfaceElement<T>>,
}

impl<T: Real> Tracer<T> {
    pub fn new(room: &Room<T>, cfg: BounceConfig<T>) -> Result<Self, TraceError> {
        cfg.validate()?;
        let elements1 = if cfg.max_order >= 1 { discretize(room, cfg.elem_size_bounce1) } else { Vec::new() };
        let elements2 = if cfg.max_order >= 2 { discretize(room, cfg.elem_size_bounce2) } else { Vec::new() };
        Ok(Self { cfg, elements1, elements2 })
    }

    pub fn config(&self) -> &BounceConfig<T> {
        &self.cfg
    }

    pub fn elements_first(&self) -> &[SurfaceElement<T>] {
        &self.elements1
    }

    pub fn elements_second(&self) -> &[SurfaceElement<T>] {
        &self.elements2
    }

    /// Traces one (AP, user, branch) link.
    ///
    /// Contributions are reduced in a fixed order (LOS, then first-order
    /// chunks, then second-order chunks, each chunk in element order) so the
    /// output does not depend on the number of worker threads.
    pub fn trace(
        &self,
        ap: &LightUnit<T>,
        user: &UserPlacement<T>,
        branch_index: usize,
    ) -> Result<TraceOutput<T>, TraceError> {
        let view = branch_view(user, branch_index)?;
        let cfg = &self.cfg;
        let c = c_light::<T>();
        let los_delay = (ap.position - user.position).norm() / c;
        let t0 = (los_delay / cfg.time_bin).floor() * cfg.time_bin;
        let nominal = (cfg.time_window / cfg.time_bin).ceil().to_usize().unwrap_or(1).max(1);

        let mut acc = Binner::new(t0, cfg.time_bin, nominal);
        let los = los_with(ap, &view);
        if los.power_gain > T::zero() {
            acc.add(los);
        }

        if cfg.max_order >= 1 {
            let partials: Vec<Binner<T>> = self
                .elements1
                .par_chunks(FIRST_ORDER_CHUNK)
                .map(|chunk| {
                    let mut b = Binner::new(t0, cfg.time_bin, 0);
                    first_order_each(ap, &view, chunk, |p| b.add(p));
                    b
                })
                .collect();
            for p in &partials {
                acc.merge(p);
            }
        }

        if cfg.max_order >= 2 {
            let lit = illuminate(ap, &self.elements2);
            let seen = visible(&view, &self.elements2);
            let partials: Vec<Binner<T>> = seen
                .par_chunks(SECOND_ORDER_CHUNK)
                .map(|chunk| {
                    let mut b = Binner::new(t0, cfg.time_bin, 0);
                    for &e2 in chunk {
                        second_order_into(&self.elements2, &lit, e2, |p| b.add(p));
                    }
                    b
                })
                .collect();
            for p in &partials {
                acc.merge(p);
            }
        }

        let bins = acc.bins;
        let total: T = bins.iter().copied().sum();
        let overflow: T = bins.iter().skip(nominal).copied().sum();
        let overflow_fraction = if total > T::zero() { overflow / total } else { T::zero() };
        if overflow_fraction > T::lit(WINDOW_OVERFLOW_TOLERANCE) {
            log::debug!(
                "AP {} user {} branch {}: {:.3e} of energy beyond the {} s window; window extended to {} bins",
                ap.id,
                user.user_id,
                branch_index,
                overflow_fraction.to_f64_lossy(),
                cfg.time_window,
                bins.len()
            );
        }
        Ok(TraceOutput { ir: ImpulseResponse { bin_width: cfg.time_bin, t0, bins }, overflow_fraction })
    }
}

/// Impulse response of one link, discretizing the room on the fly.
pub fn impulse_response<T: Real>(
    room: &Room<T>,
    ap: &LightUnit<T>,
    user: &UserPlacement<T>,
    branch_index: usize,
    cfg: BounceConfig<T>,
) -> Result<ImpulseResponse<T>, TraceError> {
    let out = Tracer::new(room, cfg)?.trace(ap, user, branch_index)?;
    if out.overflow_fraction > T::lit(WINDOW_OVERFLOW_TOLERANCE) {
        log::warn!(
            "{:.3e} of collected energy fell beyond the time window; window extended",
            out.overflow_fraction.to_f64_lossy()
        );
    }
    Ok(out.ir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::builtin::{default_branches, reference_room};
    use crate::scene::{Surface, REFLECTOR_LAMBERTIAN_ORDER};

    fn ap_at(x: f64, y: f64) -> LightUnit<f64> {
        LightUnit::ceiling(1, x, y, 3.0, 12, 1.0)
    }

    fn user_at(x: f64, y: f64, z: f64) -> UserPlacement<f64> {
        UserPlacement { user_id: 1, position: Vec3::new(x, y, z), branches: default_branches() }
    }

    #[test]
    fn gain_closed_form() {
        let g = lambertian_gain(1.0, 2.0, 1.0, 1.0, 2e-5);
        assert!((g - 2e-5 / (4.0 * std::f64::consts::PI)).abs() < 1e-18);
        assert!((g - 1.5915e-6).abs() < 1e-10);
        let g = lambertian_gain(1.0f64, 2.5, 0.8, 0.9928, 2e-5);
        assert!((g - 8.09e-7).abs() < 0.01e-7, "{g}");
        assert_eq!(lambertian_gain(1.0, 2.0, -0.1, 1.0, 2e-5), 0.0);
    }

    #[test]
    fn fov_overhead_excluded() {
        for b in default_branches() {
            let (inside, cos) = in_fov(&b, Vec3::new(0.0, 0.0, 1.0));
            assert!(!inside);
            assert!((cos - 30f64.to_radians().cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn fov_along_normal_and_boundary() {
        let b = default_branches()[1];
        let (inside, cos) = in_fov(&b, b.normal());
        assert!(inside);
        assert!((cos - 1.0).abs() < 1e-15);
        // Rotate the normal 25° further up in elevation: exactly on the FOV edge.
        for az in [0.0, 90.0, 180.0, 270.0] {
            let b = ReceiverBranch { azimuth_deg: az, ..b };
            let edge = crate::scene::branch_normal(az, 85.0);
            assert!(in_fov(&b, edge).0, "az {az}");
            let outside = crate::scene::branch_normal(az, 85.01);
            assert!(!in_fov(&b, outside).0);
        }
    }

    #[test]
    fn los_directly_below_is_zero() {
        let ap = ap_at(1.0, 1.0);
        let user = user_at(1.0, 1.0, 1.0);
        for b in 0..4 {
            assert_eq!(los_contribution(&ap, &user, b).unwrap().power_gain, 0.0);
        }
    }

    #[test]
    fn los_hand_example() {
        let ap = ap_at(1.0, 1.0);
        let user = user_at(2.5, 1.0, 1.0);
        let p = los_contribution(&ap, &user, 2).unwrap();
        let expected = 2.0 / (2.0 * std::f64::consts::PI * 6.25) * 0.8 * (0.3 + 0.8 * 3f64.sqrt() / 2.0) * 2e-5;
        assert!((p.power_gain - expected).abs() < 1e-18);
        assert!((p.power_gain - 8.09e-7).abs() < 0.01e-7);
        assert!((p.delay - 8.339e-9).abs() < 1e-12);
        // The opposite-facing branch sees nothing.
        assert_eq!(los_contribution(&ap, &user, 0).unwrap().power_gain, 0.0);
    }

    #[test]
    fn los_behind_source_is_zero() {
        let ap = ap_at(2.0, 2.0);
        let mut user = user_at(2.5, 2.0, 3.5);
        user.branches = vec![ReceiverBranch { elevation_deg: 90.0, fov_half_angle_deg: 90.0, ..default_branches()[0] }];
        assert_eq!(los_contribution(&ap, &user, 0).unwrap().power_gain, 0.0);
    }

    #[test]
    fn bad_branch_index() {
        let ap = ap_at(1.0, 1.0);
        let user = user_at(2.0, 2.0, 1.0);
        assert_eq!(
            los_contribution(&ap, &user, 7),
            Err(TraceError::BranchIndex { index: 7, len: 4 })
        );
    }

    fn element(center: Vec3<f64>, normal: Vec3<f64>, area: f64, rho: f64) -> SurfaceElement<f64> {
        SurfaceElement {
            center,
            normal,
            area,
            reflectance: rho,
            lambertian_order: REFLECTOR_LAMBERTIAN_ORDER,
            surface: Surface::Floor,
        }
    }

    #[test]
    fn single_element_two_factor_oracle() {
        // Floor patch halfway between an AP and a user facing it.
        let ap = ap_at(1.0, 2.0);
        let user = UserPlacement {
            user_id: 1,
            position: Vec3::new(3.0, 2.0, 1.0),
            branches: vec![ReceiverBranch {
                azimuth_deg: 180.0,
                elevation_deg: -45.0,
                fov_half_angle_deg: 60.0,
                detector_area: 20e-6,
            }],
        };
        let e = element(Vec3::new(2.0, 2.0, 0.0), Vec3::new(0.0, 0.0, 1.0), 1.0, 0.3);
        let got = first_order_response(&ap, &user, 0, &[e]).unwrap();
        assert_eq!(got.len(), 1);

        let d1 = (1.0f64 + 9.0).sqrt();
        let g1 = 2.0 / (2.0 * std::f64::consts::PI * d1 * d1) * (3.0 / d1) * (3.0 / d1) * 1.0;
        let d2 = (1.0f64 + 1.0).sqrt();
        let arrival = Vec3::new(-1.0, 0.0, -1.0) * (1.0 / d2);
        let cos_t = user.branches[0].normal().dot(arrival);
        let g2 = 2.0 / (2.0 * std::f64::consts::PI * d2 * d2) * (1.0 / d2) * cos_t * 20e-6;
        let expected = g1 * 0.3 * g2;
        assert!(((got[0].power_gain - expected) / expected).abs() < 1e-12);
        assert!((got[0].delay - (d1 + d2) / SPEED_OF_LIGHT).abs() < 1e-20);
    }

    #[test]
    fn black_room_has_no_reflections() {
        let mut room = reference_room();
        room.rho_floor = 0.0;
        room.rho_walls_ceiling = 0.0;
        let elems = discretize(&room, 0.4);
        let ap = ap_at(1.0, 1.0);
        let user = user_at(2.0, 3.0, 1.0);
        for b in 0..4 {
            assert!(first_order_response(&ap, &user, b, &elems).unwrap().is_empty());
            assert!(second_order_response(&ap, &user, b, &elems).unwrap().is_empty());
        }
    }

    #[test]
    fn first_order_energy_bound() {
        let room = reference_room();
        let elems = discretize(&room, 0.2);
        let ap = ap_at(1.0, 3.0);
        let user = user_at(2.0, 4.0, 1.0);
        for b in 0..4 {
            let total: f64 = first_order_response(&ap, &user, b, &elems)
                .unwrap()
                .iter()
                .map(|p| p.power_gain)
                .sum();
            assert!(total < 0.8, "{total}");
        }
    }

    #[test]
    fn coplanar_elements_do_not_exchange_light() {
        let n = Vec3::new(1.0, 0.0, 0.0);
        let elems = vec![
            element(Vec3::new(0.0, 1.0, 1.0), n, 0.04, 0.8),
            element(Vec3::new(0.0, 2.0, 1.0), n, 0.04, 0.8),
        ];
        let ap = ap_at(1.0, 1.5);
        let mut user = user_at(1.0, 1.5, 1.0);
        user.branches = vec![ReceiverBranch { azimuth_deg: 180.0, elevation_deg: 10.0, fov_half_angle_deg: 90.0, detector_area: 1e-4 }];
        assert!(second_order_response(&ap, &user, 0, &elems).unwrap().is_empty());
    }

    #[test]
    fn reflection_orders_scale_with_reflectance_powers() {
        // Uniform reflectance ρ: first order ∝ ρ, second order ∝ ρ².
        let energy = |rho: f64| {
            let mut room = reference_room();
            room.rho_walls_ceiling = rho;
            room.rho_floor = rho;
            let elems = discretize(&room, 0.4);
            let ap = ap_at(3.0, 5.0);
            let user = user_at(1.0, 2.0, 1.0);
            let mut e = [0.0f64; 2];
            for b in 0..4 {
                e[0] += first_order_response(&ap, &user, b, &elems).unwrap().iter().map(|p| p.power_gain).sum::<f64>();
                e[1] += second_order_response(&ap, &user, b, &elems).unwrap().iter().map(|p| p.power_gain).sum::<f64>();
            }
            e
        };
        let (hi, lo) = (energy(0.8), energy(0.4));
        assert!(hi[0] > 0.0 && hi[1] > 0.0);
        assert!((hi[0] / lo[0] - 2.0).abs() < 1e-9);
        assert!((hi[1] / lo[1] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn white_cube_stays_finite() {
        let room = Room {
            width_x: 3.0,
            length_y: 3.0,
            height_z: 3.0,
            rho_walls_ceiling: 1.0,
            rho_floor: 1.0,
            elem_size_bounce1: 0.5,
            elem_size_bounce2: 0.5,
            cf_height: 1.0,
        };
        let ap = ap_at(1.5, 1.5);
        let user = user_at(1.0, 1.0, 1.0);
        let cfg = BounceConfig { elem_size_bounce1: 0.5, elem_size_bounce2: 0.5, ..BounceConfig::new(Resolution::Desk, 2) };
        for b in 0..4 {
            let ir = impulse_response(&room, &ap, &user, b, cfg).unwrap();
            let e = ir.energy();
            assert!(e.is_finite() && e < 1.0);
        }
    }

    #[test]
    fn los_only_single_bin() {
        let room = reference_room();
        let ap = ap_at(1.0, 1.0);
        let user = user_at(2.5, 1.0, 1.0);
        let ir = impulse_response(&room, &ap, &user, 2, BounceConfig::new(Resolution::Desk, 0)).unwrap();
        assert_eq!(ir.nonzero_bins(), 1);
        let below = user_at(1.0, 1.0, 1.0);
        for b in 0..4 {
            let ir = impulse_response(&room, &ap, &below, b, BounceConfig::new(Resolution::Desk, 0)).unwrap();
            assert!(ir.is_zero());
        }
    }

    #[test]
    fn energy_monotone_in_order_and_causal() {
        let room = reference_room();
        let ap = ap_at(3.0, 3.0);
        let user = user_at(1.5, 4.5, 1.0);
        for b in 0..4 {
            let mut last = 0.0;
            for order in 0..=2 {
                let cfg = BounceConfig::new(Resolution::Desk, order);
                let ir = impulse_response(&room, &ap, &user, b, cfg).unwrap();
                let e = ir.energy();
                assert!(e >= last);
                last = e;
                let d = (ap.position - user.position).norm() / SPEED_OF_LIGHT;
                assert!(ir.t0 >= d - ir.bin_width);
                assert!(ir.bins.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn reciprocity_single_bounce() {
        // Point source and detector, both order 1, equal areas, facing down/up symmetrically.
        let room = reference_room();
        let elems = discretize(&room, 0.4);
        let area = 1e-4;
        let a = Vec3::new(1.0, 2.0, 1.5);
        let b = Vec3::new(3.0, 6.0, 1.5);
        let n = Vec3::new(0.0, 0.0, 1.0);
        let single = |from: Vec3<f64>, to: Vec3<f64>| -> f64 {
            let src = LightUnit { id: 1, position: from, normal: n, num_lds: 1, lambertian_order: 1.0 };
            let view = BranchView { position: to, normal: n, cos_fov: -1.0, area };
            let mut total = Vec::new();
            first_order_each(&src, &view, &elems, |p| total.push(p.power_gain * area));
            total.iter().sum()
        };
        let ab = single(a, b);
        let ba = single(b, a);
        assert!(ab > 0.0);
        assert!(((ab - ba) / ab).abs() < 1e-12, "{ab} vs {ba}");
    }

    #[test]
    fn halving_paper_elements_changes_first_order_energy_little() {
        let room = reference_room();
        let ap = ap_at(1.0, 3.0);
        let (coarse_elems, fine_elems) = (discretize(&room, 0.05), discretize(&room, 0.025));
        for (x, y) in [(1.5, 2.5), (2.5, 4.5), (0.5, 0.5)] {
            let user = user_at(x, y, 1.0);
            let (mut coarse, mut fine) = (0.0f64, 0.0f64);
            for b in 0..4 {
                coarse += first_order_response(&ap, &user, b, &coarse_elems).unwrap().iter().map(|p| p.power_gain).sum::<f64>();
                fine += first_order_response(&ap, &user, b, &fine_elems).unwrap().iter().map(|p| p.power_gain).sum::<f64>();
            }
            assert!(fine > 0.0);
            assert!(((coarse - fine) / fine).abs() < 0.02, "({x},{y}): {coarse} vs {fine}");
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let room = reference_room();
        let ap = ap_at(3.0, 5.0);
        let user = user_at(1.5, 4.5, 1.0);
        let cfg = BounceConfig::new(Resolution::Desk, 2);
        let tracer = Tracer::new(&room, cfg).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| tracer.trace(&ap, &user, 0).unwrap().ir)
        };
        let one = run(1);
        for n in [2, 4, 7] {
            let other = run(n);
            assert_eq!(one.bins.len(), other.bins.len());
            assert!(one.bins.iter().zip(&other.bins).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn f32_trace_agrees_with_f64() {
        let room = reference_room();
        let ap = ap_at(1.0, 3.0);
        let user = user_at(1.5, 2.5, 1.0);
        let cfg = BounceConfig::new(Resolution::Desk, 2);
        let e64 = impulse_response(&room, &ap, &user, 3, cfg).unwrap().energy();
        let e32 = impulse_response(&room.cast::<f32>(), &ap.cast(), &user.cast(), 3, cfg.cast()).unwrap().energy();
        assert!(((e32 as f64 - e64) / e64).abs() < 1e-3, "{e32} vs {e64}");
    }
}
