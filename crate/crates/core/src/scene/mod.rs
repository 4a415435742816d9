//! Room geometry, luminaires, receivers and scenario descriptions.
//!
//! Everything here is immutable once built. Scenarios are read from a JSON
//! document (see [`schema`]) whose omitted fields fall back to the reference
//! configuration in [`builtin`].

pub mod builtin;
mod geometry;
pub mod schema;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::allocate::Objective;
use crate::linkbudget::NoiseModel;
use crate::real::Real;

pub use geometry::{branch_normal, Vec3};

/// Lambertian order of every reflecting surface element.
pub const REFLECTOR_LAMBERTIAN_ORDER: f64 = 1.0;

/// Number of faces on the angle diversity receiver.
pub const BRANCHES_PER_RECEIVER: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Room<T> {
    pub width_x: T,
    pub length_y: T,
    pub height_z: T,
    pub rho_walls_ceiling: T,
    pub rho_floor: T,
    /// Element side used for first-order reflections, m.
    pub elem_size_bounce1: T,
    /// Element side used for second-order reflections, m.
    pub elem_size_bounce2: T,
    /// Height of the communication floor, m.
    pub cf_height: T,
}

impl<T: Real> Room<T> {
    pub fn center(&self) -> Vec3<T> {
        let half = T::lit(0.5);
        Vec3::new(self.width_x * half, self.length_y * half, self.height_z * half)
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        let z = T::zero();
        p.is_finite()
            && p.x >= z
            && p.x <= self.width_x
            && p.y >= z
            && p.y <= self.length_y
            && p.z >= z
            && p.z <= self.height_z
    }

    pub fn surface_area(&self) -> T {
        let two = T::lit(2.0);
        two * (self.width_x * self.length_y
            + self.width_x * self.height_z
            + self.length_y * self.height_z)
    }

    pub fn diagonal(&self) -> T {
        Vec3::new(self.width_x, self.length_y, self.height_z).norm()
    }

    pub fn cast<U: Real>(&self) -> Room<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        Room {
            width_x: c(self.width_x),
            length_y: c(self.length_y),
            height_z: c(self.height_z),
            rho_walls_ceiling: c(self.rho_walls_ceiling),
            rho_floor: c(self.rho_floor),
            elem_size_bounce1: c(self.elem_size_bounce1),
            elem_size_bounce2: c(self.elem_size_bounce2),
            cf_height: c(self.cf_height),
        }
    }
}

/// Which of the six room faces an element lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Surface {
    Floor,
    Ceiling,
    WallX0,
    WallXMax,
    WallY0,
    WallYMax,
}

/// One square-ish patch of a room surface acting as a secondary Lambertian emitter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceElement<T> {
    pub center: Vec3<T>,
    /// Unit normal pointing into the room.
    pub normal: Vec3<T>,
    pub area: T,
    pub reflectance: T,
    pub lambertian_order: T,
    pub surface: Surface,
}

/// Tiles all six faces of the room with elements of side close to `elem_size`.
///
/// Each face dimension is split into `max(1, round(dim / elem_size))` cells so
/// the tiling is exact; the actual cell size is recorded in each element's area.
pub fn discretize<T: Real>(room: &Room<T>, elem_size: T) -> Vec<SurfaceElement<T>> {
    let (w, l, h) = (room.width_x, room.length_y, room.height_z);
    let z = T::zero();
    let one = T::one();
    let m = T::lit(REFLECTOR_LAMBERTIAN_ORDER);

    let cells = |dim: T| -> usize {
        let n = (dim / elem_size).round().to_usize().unwrap_or(1);
        n.max(1)
    };

    // (surface, origin, axis u (full length), axis v (full length), normal, reflectance)
    let faces = [
        (Surface::Floor, Vec3::new(z, z, z), Vec3::new(w, z, z), Vec3::new(z, l, z), Vec3::new(z, z, one), room.rho_floor),
        (Surface::Ceiling, Vec3::new(z, z, h), Vec3::new(w, z, z), Vec3::new(z, l, z), Vec3::new(z, z, -one), room.rho_walls_ceiling),
        (Surface::WallX0, Vec3::new(z, z, z), Vec3::new(z, l, z), Vec3::new(z, z, h), Vec3::new(one, z, z), room.rho_walls_ceiling),
        (Surface::WallXMax, Vec3::new(w, z, z), Vec3::new(z, l, z), Vec3::new(z, z, h), Vec3::new(-one, z, z), room.rho_walls_ceiling),
        (Surface::WallY0, Vec3::new(z, z, z), Vec3::new(w, z, z), Vec3::new(z, z, h), Vec3::new(z, one, z), room.rho_walls_ceiling),
        (Surface::WallYMax, Vec3::new(z, l, z), Vec3::new(w, z, z), Vec3::new(z, z, h), Vec3::new(z, -one, z), room.rho_walls_ceiling),
    ];

    let mut out = Vec::new();
    for (surface, origin, u, v, normal, rho) in faces {
        let (nu, nv) = (cells(u.norm()), cells(v.norm()));
        let du = u * (one / T::from_usize_lossy(nu));
        let dv = v * (one / T::from_usize_lossy(nv));
        let area = du.norm() * dv.norm();
        let half = T::lit(0.5);
        out.reserve(nu * nv);
        for i in 0..nu {
            for j in 0..nv {
                let center = origin
                    + du * (T::from_usize_lossy(i) + half)
                    + dv * (T::from_usize_lossy(j) + half);
                out.push(SurfaceElement {
                    center,
                    normal,
                    area,
                    reflectance: rho,
                    lambertian_order: m,
                    surface,
                });
            }
        }
    }
    out
}

/// The four wavelength bands of an RYGB laser-diode luminaire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wavelength {
    Red,
    Yellow,
    Green,
    Blue,
}

impl Wavelength {
    /// All bands in tie-break order.
    pub const ALL: [Wavelength; 4] = [Self::Red, Self::Yellow, Self::Green, Self::Blue];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Red => "Red",
            Self::Yellow => "Yellow",
            Self::Green => "Green",
            Self::Blue => "Blue",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "red" | "r" => Some(Self::Red),
            "yellow" | "y" => Some(Self::Yellow),
            "green" | "g" => Some(Self::Green),
            "blue" | "b" => Some(Self::Blue),
            _ => None,
        }
    }
}

impl fmt::Display for Wavelength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WavelengthBand<T> {
    /// Optical power of one laser diode in this band, W.
    pub power_per_ld: T,
    /// Photodetector responsivity, A/W.
    pub responsivity: T,
}

/// Per-band parameters indexed by [`Wavelength::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct WavelengthTable<T> {
    pub bands: [WavelengthBand<T>; 4],
}

impl<T: Real> WavelengthTable<T> {
    pub fn band(&self, w: Wavelength) -> &WavelengthBand<T> {
        &self.bands[w.index()]
    }

    pub fn total_power_per_ld(&self) -> T {
        self.bands.iter().map(|b| b.power_per_ld).sum()
    }

    pub fn cast<U: Real>(&self) -> WavelengthTable<U> {
        WavelengthTable {
            bands: self.bands.map(|b| WavelengthBand {
                power_per_ld: U::lit(b.power_per_ld.to_f64_lossy()),
                responsivity: U::lit(b.responsivity.to_f64_lossy()),
            }),
        }
    }
}

/// A ceiling luminaire; modelled as one Lambertian point source per band.
#[derive(Clone, Debug, PartialEq)]
pub struct LightUnit<T> {
    pub id: u32,
    pub position: Vec3<T>,
    pub normal: Vec3<T>,
    pub num_lds: u32,
    pub lambertian_order: T,
}

impl<T: Real> LightUnit<T> {
    pub fn ceiling(id: u32, x: T, y: T, height: T, num_lds: u32, m: T) -> Self {
        Self {
            id,
            position: Vec3::new(x, y, height),
            normal: Vec3::new(T::zero(), T::zero(), -T::one()),
            num_lds,
            lambertian_order: m,
        }
    }

    /// Optical power emitted by the whole unit in one band, W.
    pub fn unit_power(&self, band: &WavelengthBand<T>) -> T {
        T::lit(f64::from(self.num_lds)) * band.power_per_ld
    }

    pub fn cast<U: Real>(&self) -> LightUnit<U> {
        LightUnit {
            id: self.id,
            position: self.position.cast(),
            normal: self.normal.cast(),
            num_lds: self.num_lds,
            lambertian_order: U::lit(self.lambertian_order.to_f64_lossy()),
        }
    }
}

/// One photodetector face of the angle diversity receiver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReceiverBranch<T> {
    pub azimuth_deg: T,
    pub elevation_deg: T,
    pub fov_half_angle_deg: T,
    /// Detector area, m².
    pub detector_area: T,
}

impl<T: Real> ReceiverBranch<T> {
    pub fn normal(&self) -> Vec3<T> {
        branch_normal(self.azimuth_deg, self.elevation_deg)
    }

    pub fn cos_fov(&self) -> T {
        crate::real::deg_to_rad(self.fov_half_angle_deg).cos()
    }

    pub fn cast<U: Real>(&self) -> ReceiverBranch<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        ReceiverBranch {
            azimuth_deg: c(self.azimuth_deg),
            elevation_deg: c(self.elevation_deg),
            fov_half_angle_deg: c(self.fov_half_angle_deg),
            detector_area: c(self.detector_area),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserPlacement<T> {
    pub user_id: u32,
    pub position: Vec3<T>,
    pub branches: Vec<ReceiverBranch<T>>,
}

impl<T: Real> UserPlacement<T> {
    pub fn cast<U: Real>(&self) -> UserPlacement<U> {
        UserPlacement {
            user_id: self.user_id,
            position: self.position.cast(),
            branches: self.branches.iter().map(ReceiverBranch::cast).collect(),
        }
    }
}

/// Candidate ordering used to break ties between equal-objective assignments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    /// Smallest (user id, AP id, wavelength R<Y<G<B) key sequence wins.
    #[default]
    Lexicographic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolverOptions {
    pub objective: Objective,
    pub tiebreak: TieBreak,
}

/// A complete, validated experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario<T> {
    pub name: String,
    pub room: Room<T>,
    pub units: Vec<LightUnit<T>>,
    pub wavelengths: WavelengthTable<T>,
    pub users: Vec<UserPlacement<T>>,
    pub noise: NoiseModel<T>,
    pub configured_rate_bps: T,
    /// Per-user data-rate overrides, bit/s.
    pub rate_overrides: BTreeMap<u32, T>,
    pub solver: SolverOptions,
}

impl<T: Real> Scenario<T> {
    pub fn cast<U: Real>(&self) -> Scenario<U> {
        Scenario {
            name: self.name.clone(),
            room: self.room.cast(),
            units: self.units.iter().map(LightUnit::cast).collect(),
            wavelengths: self.wavelengths.cast(),
            users: self.users.iter().map(UserPlacement::cast).collect(),
            noise: self.noise.cast(),
            configured_rate_bps: U::lit(self.configured_rate_bps.to_f64_lossy()),
            rate_overrides: self
                .rate_overrides
                .iter()
                .map(|(k, v)| (*k, U::lit(v.to_f64_lossy())))
                .collect(),
            solver: self.solver,
        }
    }

    pub fn user_index(&self, user_id: u32) -> Option<usize> {
        self.users.iter().position(|u| u.user_id == user_id)
    }

    pub fn unit_index(&self, ap_id: u32) -> Option<usize> {
        self.units.iter().position(|a| a.id == ap_id)
    }

    /// Checks every structural invariant, collecting all violations.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut v = Violations::default();
        let r = &self.room;
        let zero = T::zero();
        let one = T::one();

        if self.name.trim().is_empty() {
            v.push("name", "must not be empty");
        }
        for (path, val) in [
            ("room.width", r.width_x),
            ("room.length", r.length_y),
            ("room.height", r.height_z),
        ] {
            if !(val.is_finite() && val > zero) {
                v.push(path, "must be a positive finite length");
            }
        }
        for (path, val) in [
            ("room.rho_walls_ceiling", r.rho_walls_ceiling),
            ("room.rho_floor", r.rho_floor),
        ] {
            if !(val >= zero && val <= one) {
                v.push(path, "reflectance must lie in [0, 1]");
            }
        }
        let min_dim = r.width_x.min(r.length_y).min(r.height_z);
        for (path, val) in [("room.elem1", r.elem_size_bounce1), ("room.elem2", r.elem_size_bounce2)] {
            if !(val.is_finite() && val > zero) {
                v.push(path, "element size must be positive");
            } else if val > min_dim {
                v.push(path, "element size exceeds a room dimension");
            }
        }
        if !(r.cf_height >= zero && r.cf_height < r.height_z) {
            v.push("room.cf_height", "communication floor must lie in [0, height)");
        }

        for (i, b) in self.wavelengths.bands.iter().enumerate() {
            let name = Wavelength::ALL[i].name().to_ascii_lowercase();
            if !(b.power_per_ld.is_finite() && b.power_per_ld >= zero) {
                v.push(format!("wavelengths.{name}.power_w"), "power must be non-negative");
            }
            if !(b.responsivity > zero && b.responsivity <= one) {
                v.push(format!("wavelengths.{name}.resp"), "responsivity must lie in (0, 1]");
            }
        }

        if self.units.is_empty() {
            v.push("units", "at least one light unit is required");
        }
        let mut ap_ids = BTreeSet::new();
        let height_tol = T::lit(1e-9);
        for (i, u) in self.units.iter().enumerate() {
            if !ap_ids.insert(u.id) {
                v.push(format!("units[{i}].id"), format!("duplicate AP id {}", u.id));
            }
            if !r.contains(u.position) {
                v.push(format!("units[{i}].pos"), "position outside room");
            } else if (u.position.z - r.height_z).abs() > height_tol {
                v.push(format!("units[{i}].pos"), "light units must sit on the ceiling");
            }
            if u.num_lds == 0 {
                v.push(format!("units[{i}].num_lds"), "at least one laser diode per unit");
            }
            if !(u.lambertian_order.is_finite() && u.lambertian_order > zero) {
                v.push(format!("units[{i}].lambertian_order"), "must be positive");
            }
        }

        if self.users.is_empty() {
            v.push("users", "at least one user is required");
        }
        let mut user_ids = BTreeSet::new();
        for (i, u) in self.users.iter().enumerate() {
            if !user_ids.insert(u.user_id) {
                v.push(format!("users[{i}].id"), format!("duplicate user id {}", u.user_id));
            }
            if !r.contains(u.position) {
                v.push(format!("users[{i}].pos"), "position outside room");
            } else if (u.position.z - r.cf_height).abs() > height_tol {
                v.push(format!("users[{i}].pos"), "receiver must lie on the communication floor");
            }
            if u.branches.len() != BRANCHES_PER_RECEIVER {
                v.push(
                    format!("users[{i}].branches"),
                    format!("expected {BRANCHES_PER_RECEIVER} branches, found {}", u.branches.len()),
                );
            }
            for (j, b) in u.branches.iter().enumerate() {
                let p = format!("receiver.branches[{j}]");
                if !(b.azimuth_deg >= zero && b.azimuth_deg < T::lit(360.0)) {
                    v.push(format!("{p}.az"), "azimuth must lie in [0, 360)");
                }
                if !(b.elevation_deg > zero && b.elevation_deg <= T::lit(90.0)) {
                    v.push(format!("{p}.el"), "elevation must lie in (0, 90]");
                }
                if !(b.fov_half_angle_deg > zero && b.fov_half_angle_deg <= T::lit(90.0)) {
                    v.push(format!("{p}.fov"), "field of view must lie in (0, 90]");
                }
                if !(b.detector_area.is_finite() && b.detector_area > zero) {
                    v.push(format!("{p}.area_mm2"), "detector area must be positive");
                }
            }
        }
        for id in self.rate_overrides.keys() {
            if !user_ids.contains(id) {
                v.push("rate_overrides", format!("unknown user id {id}"));
            }
        }

        if !(self.noise.noise_density.is_finite() && self.noise.noise_density > zero) {
            v.push("receiver.noise_density_pa_sqrthz", "must be positive");
        }
        if !(self.noise.receiver_bandwidth.is_finite() && self.noise.receiver_bandwidth > zero) {
            v.push("receiver.bandwidth_hz", "must be positive");
        }
        if !(self.configured_rate_bps.is_finite() && self.configured_rate_bps > zero) {
            v.push("rate_bps", "configured rate must be positive");
        }

        v.into_result()
    }
}

/// A single violated invariant, addressed by its field path in the scenario schema.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Violations(Vec<Violation>);

impl Violations {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation { path: path.into(), message: message.into() });
    }

    fn into_result(self) -> Result<(), ScenarioError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(self.0))
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario:\n  {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n  "))]
    Invalid(Vec<Violation>),
    #[error("unknown built-in scenario {0:?} (expected conference_table, cocktail1 or cocktail2)")]
    UnknownBuiltin(String),
}

impl ScenarioError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            Self::Invalid(v) => v,
            _ => &[],
        }
    }
}
