//! Reference room configuration and the three published user layouts.

use std::collections::BTreeMap;

use crate::linkbudget::NoiseModel;
use crate::scene::{
    LightUnit, ReceiverBranch, Room, Scenario, ScenarioError, SolverOptions, UserPlacement, Vec3,
    Wavelength, WavelengthBand, WavelengthTable,
};

pub const BUILTIN_NAMES: [&str; 3] = ["conference_table", "cocktail1", "cocktail2"];

pub const DEFAULT_NUM_LDS: u32 = 12;
pub const DEFAULT_TX_LAMBERTIAN_ORDER: f64 = 1.0;
pub const DEFAULT_RATE_BPS: f64 = 7.1e9;
/// Preamplifier input-referred noise density, A/√Hz.
pub const DEFAULT_NOISE_DENSITY: f64 = 4.47e-12;
pub const DEFAULT_RECEIVER_BANDWIDTH: f64 = 5e9;

pub const UNIT_POSITIONS_XY: [(f64, f64); 8] = [
    (1.0, 1.0),
    (1.0, 3.0),
    (1.0, 5.0),
    (1.0, 7.0),
    (3.0, 1.0),
    (3.0, 3.0),
    (3.0, 5.0),
    (3.0, 7.0),
];

pub fn reference_room() -> Room<f64> {
    Room {
        width_x: 4.0,
        length_y: 8.0,
        height_z: 3.0,
        rho_walls_ceiling: 0.8,
        rho_floor: 0.3,
        elem_size_bounce1: 0.05,
        elem_size_bounce2: 0.20,
        cf_height: 1.0,
    }
}

pub fn default_wavelengths() -> WavelengthTable<f64> {
    let band = |power_per_ld, responsivity| WavelengthBand { power_per_ld, responsivity };
    WavelengthTable {
        bands: [band(0.8, 0.4), band(0.5, 0.35), band(0.3, 0.3), band(0.3, 0.2)],
    }
}

pub fn default_units(room: &Room<f64>) -> Vec<LightUnit<f64>> {
    UNIT_POSITIONS_XY
        .iter()
        .zip(1u32..)
        .map(|(&(x, y), id)| {
            LightUnit::ceiling(id, x, y, room.height_z, DEFAULT_NUM_LDS, DEFAULT_TX_LAMBERTIAN_ORDER)
        })
        .collect()
}

/// Four faces at azimuth 0/90/180/270°, 60° elevation, 25° FOV, 20 mm².
pub fn default_branches() -> Vec<ReceiverBranch<f64>> {
    [0.0, 90.0, 180.0, 270.0]
        .into_iter()
        .map(|azimuth_deg| ReceiverBranch {
            azimuth_deg,
            elevation_deg: 60.0,
            fov_half_angle_deg: 25.0,
            detector_area: 20e-6,
        })
        .collect()
}

fn layout(name: &str) -> Option<(&'static [(f64, f64)], f64)> {
    const CONFERENCE: [(f64, f64); 10] = [
        (1.5, 2.5),
        (1.5, 3.5),
        (1.5, 5.5),
        (1.5, 4.5),
        (2.0, 2.5),
        (2.0, 5.5),
        (2.5, 2.5),
        (2.5, 3.5),
        (2.5, 5.5),
        (2.5, 4.5),
    ];
    const COCKTAIL1: [(f64, f64); 10] = [
        (0.5, 0.5),
        (0.5, 1.0),
        (0.5, 1.5),
        (1.0, 0.75),
        (1.0, 1.25),
        (1.75, 3.25),
        (1.75, 3.75),
        (1.75, 4.25),
        (2.25, 3.5),
        (2.25, 4.0),
    ];
    const COCKTAIL2: [(f64, f64); 10] = [
        (0.5, 0.5),
        (0.5, 1.0),
        (0.5, 1.5),
        (0.5, 2.0),
        (1.0, 0.75),
        (1.0, 1.25),
        (1.0, 1.75),
        (1.75, 3.75),
        (1.75, 4.25),
        (2.25, 4.0),
    ];
    match name {
        "conference_table" => Some((&CONFERENCE, 5e9)),
        "cocktail1" => Some((&COCKTAIL1, 5e9)),
        "cocktail2" => Some((&COCKTAIL2, 2.5e9)),
        _ => None,
    }
}

/// Reference configuration with the given user positions (on the communication floor).
pub fn reference_scenario(name: &str, users_xy: &[(f64, f64)], receiver_bandwidth: f64) -> Scenario<f64> {
    let room = reference_room();
    let branches = default_branches();
    let users = users_xy
        .iter()
        .zip(1u32..)
        .map(|(&(x, y), user_id)| UserPlacement {
            user_id,
            position: Vec3::new(x, y, room.cf_height),
            branches: branches.clone(),
        })
        .collect();
    Scenario {
        name: name.to_owned(),
        units: default_units(&room),
        room,
        wavelengths: default_wavelengths(),
        users,
        noise: NoiseModel::new(DEFAULT_NOISE_DENSITY, receiver_bandwidth),
        configured_rate_bps: DEFAULT_RATE_BPS,
        rate_overrides: BTreeMap::new(),
        solver: SolverOptions::default(),
    }
}

/// One of the three published ten-user layouts.
pub fn builtin_scenario(name: &str) -> Result<Scenario<f64>, ScenarioError> {
    let (xy, bw) = layout(name).ok_or_else(|| ScenarioError::UnknownBuiltin(name.to_owned()))?;
    Ok(reference_scenario(name, xy, bw))
}

/// A published (AP, branch, wavelength) choice for one user. Branch is 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceEntry {
    pub user_id: u32,
    pub ap_id: u32,
    pub branch: u8,
    pub wavelength: Wavelength,
}

/// The published optimised allocation for a built-in layout.
pub fn reference_allocation(name: &str) -> Result<Vec<ReferenceEntry>, ScenarioError> {
    use Wavelength::{Blue as B, Green as G, Red as R, Yellow as Y};
    let rows: [(u32, u8, Wavelength); 10] = match name {
        "conference_table" => [
            (1, 4, R),
            (2, 3, R),
            (4, 2, R),
            (3, 3, R),
            (2, 3, Y),
            (3, 3, Y),
            (6, 1, R),
            (6, 1, Y),
            (7, 1, R),
            (7, 1, Y),
        ],
        "cocktail1" => [
            (1, 1, G),
            (1, 1, Y),
            (2, 2, Y),
            (5, 1, R),
            (1, 4, R),
            (2, 3, R),
            (6, 1, Y),
            (3, 2, R),
            (6, 1, R),
            (7, 2, R),
        ],
        "cocktail2" => [
            (1, 1, B),
            (1, 1, Y),
            (1, 4, G),
            (2, 2, Y),
            (5, 1, R),
            (1, 4, R),
            (2, 2, R),
            (6, 1, R),
            (3, 2, R),
            (7, 2, R),
        ],
        other => return Err(ScenarioError::UnknownBuiltin(other.to_owned())),
    };
    Ok(rows
        .iter()
        .zip(1u32..)
        .map(|(&(ap_id, branch, wavelength), user_id)| ReferenceEntry { user_id, ap_id, branch, wavelength })
        .collect())
}
