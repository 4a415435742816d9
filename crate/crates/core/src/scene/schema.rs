//! JSON scenario files.
//!
//! Only `name` and `users` are required; every other key falls back to the
//! reference configuration. Units are SI except the detector area (mm²) and
//! the noise density (pA/√Hz), which are converted on load.
//!
//! ```json
//! {
//!   "name": "demo",
//!   "room": {"width": 4, "length": 8, "height": 3, "rho_walls_ceiling": 0.8,
//!            "rho_floor": 0.3, "elem1": 0.05, "elem2": 0.2, "cf_height": 1},
//!   "transmitter": {"num_lds": 12, "lambertian_order": 1},
//!   "units": [{"id": 1, "pos": [1, 1, 3]}],
//!   "wavelengths": {"red": {"power_w": 0.8, "resp": 0.4}},
//!   "receiver": {"branches": [{"az": 0, "el": 60, "fov": 25, "area_mm2": 20}],
//!                "noise_density_pa_sqrthz": 4.47, "bandwidth_hz": 5e9},
//!   "users": [{"id": 1, "pos": [1.5, 2.5, 1]}],
//!   "rate_bps": 7.1e9,
//!   "rate_overrides": [{"id": 1, "rate_bps": 3.2e9}],
//!   "solver": {"objective": "db_sum", "tiebreak": "lexicographic"}
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::builtin;
use crate::allocate::Objective;
use crate::linkbudget::NoiseModel;
use crate::scene::{
    LightUnit, ReceiverBranch, Room, Scenario, ScenarioError, SolverOptions, TieBreak,
    UserPlacement, Vec3, Wavelength, WavelengthBand,
};

/// Exact in binary, so dividing by them is correctly rounded.
const MM2_PER_M2: f64 = 1e6;
const PA_PER_A: f64 = 1e12;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<RoomFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmitter: Option<TransmitterFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<Vec<PointFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths: Option<BTreeMap<Wavelength, BandFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiver: Option<ReceiverFile>,
    pub users: Vec<PointFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_bps: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rate_overrides: Vec<RateOverrideFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverFile>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomFile {
    pub width: Option<f64>,
    pub length: Option<f64>,
    pub height: Option<f64>,
    pub rho_walls_ceiling: Option<f64>,
    pub rho_floor: Option<f64>,
    pub elem1: Option<f64>,
    pub elem2: Option<f64>,
    pub cf_height: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterFile {
    pub num_lds: Option<u32>,
    pub lambertian_order: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointFile {
    pub id: u32,
    pub pos: [f64; 3],
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandFile {
    pub power_w: Option<f64>,
    pub resp: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverFile {
    pub branches: Option<Vec<BranchFile>>,
    pub noise_density_pa_sqrthz: Option<f64>,
    pub bandwidth_hz: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchFile {
    pub az: f64,
    pub el: f64,
    pub fov: f64,
    pub area_mm2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateOverrideFile {
    pub id: u32,
    pub rate_bps: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverFile {
    pub objective: Option<Objective>,
    pub tiebreak: Option<TieBreak>,
}

/// Reads, fills defaults and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario<f64>, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario<f64>, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    let scenario = file.into_scenario();
    scenario.validate()?;
    Ok(scenario)
}

impl ScenarioFile {
    /// Fills omitted fields from the reference configuration. Does not validate.
    pub fn into_scenario(self) -> Scenario<f64> {
        let d = builtin::reference_room();
        let r = self.room.unwrap_or_default();
        let room = Room {
            width_x: r.width.unwrap_or(d.width_x),
            length_y: r.length.unwrap_or(d.length_y),
            height_z: r.height.unwrap_or(d.height_z),
            rho_walls_ceiling: r.rho_walls_ceiling.unwrap_or(d.rho_walls_ceiling),
            rho_floor: r.rho_floor.unwrap_or(d.rho_floor),
            elem_size_bounce1: r.elem1.unwrap_or(d.elem_size_bounce1),
            elem_size_bounce2: r.elem2.unwrap_or(d.elem_size_bounce2),
            cf_height: r.cf_height.unwrap_or(d.cf_height),
        };

        let tx = self.transmitter.unwrap_or_default();
        let num_lds = tx.num_lds.unwrap_or(builtin::DEFAULT_NUM_LDS);
        let m_tx = tx.lambertian_order.unwrap_or(builtin::DEFAULT_TX_LAMBERTIAN_ORDER);
        let units = match self.units {
            Some(units) => units
                .into_iter()
                .map(|p| LightUnit {
                    id: p.id,
                    position: Vec3::from(p.pos),
                    normal: Vec3::new(0.0, 0.0, -1.0),
                    num_lds,
                    lambertian_order: m_tx,
                })
                .collect(),
            None => builtin::UNIT_POSITIONS_XY
                .iter()
                .zip(1u32..)
                .map(|(&(x, y), id)| LightUnit::ceiling(id, x, y, room.height_z, num_lds, m_tx))
                .collect(),
        };

        let mut wavelengths = builtin::default_wavelengths();
        for (w, b) in self.wavelengths.unwrap_or_default() {
            let band = &mut wavelengths.bands[w.index()];
            if let Some(p) = b.power_w {
                band.power_per_ld = p;
            }
            if let Some(resp) = b.resp {
                band.responsivity = resp;
            }
        }

        let rx = self.receiver.unwrap_or_default();
        let branches = match rx.branches {
            Some(bs) => bs
                .into_iter()
                .map(|b| ReceiverBranch {
                    azimuth_deg: b.az,
                    elevation_deg: b.el,
                    fov_half_angle_deg: b.fov,
                    detector_area: b.area_mm2 / MM2_PER_M2,
                })
                .collect(),
            None => builtin::default_branches(),
        };
        let noise = NoiseModel::new(
            rx.noise_density_pa_sqrthz
                .map_or(builtin::DEFAULT_NOISE_DENSITY, |v| v / PA_PER_A),
            rx.bandwidth_hz.unwrap_or(builtin::DEFAULT_RECEIVER_BANDWIDTH),
        );

        let users = self
            .users
            .into_iter()
            .map(|p| UserPlacement {
                user_id: p.id,
                position: Vec3::from(p.pos),
                branches: branches.clone(),
            })
            .collect();

        let solver = self.solver.unwrap_or_default();
        Scenario {
            name: self.name,
            room,
            units,
            wavelengths,
            users,
            noise,
            configured_rate_bps: self.rate_bps.unwrap_or(builtin::DEFAULT_RATE_BPS),
            rate_overrides: self.rate_overrides.into_iter().map(|o| (o.id, o.rate_bps)).collect(),
            solver: SolverOptions {
                objective: solver.objective.unwrap_or_default(),
                tiebreak: solver.tiebreak.unwrap_or_default(),
            },
        }
    }
}

/// `y` such that `y / scale == x` exactly, preferring the plain product.
fn unscale(x: f64, scale: f64) -> f64 {
    let q = x * scale;
    let mut lo = q;
    let mut hi = q;
    for _ in 0..8 {
        if lo / scale == x {
            return lo;
        }
        if hi / scale == x {
            return hi;
        }
        lo = next_down(lo);
        hi = next_up(hi);
    }
    q
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

fn next_down(x: f64) -> f64 {
    -next_up(-x)
}

impl Scenario<f64> {
    /// Fully populated file form; parsing it yields an identical scenario.
    pub fn to_file(&self) -> ScenarioFile {
        let (num_lds, m_tx) = self
            .units
            .first()
            .map_or((builtin::DEFAULT_NUM_LDS, builtin::DEFAULT_TX_LAMBERTIAN_ORDER), |u| {
                (u.num_lds, u.lambertian_order)
            });
        let branches = self.users.first().map(|u| {
            u.branches
                .iter()
                .map(|b| BranchFile {
                    az: b.azimuth_deg,
                    el: b.elevation_deg,
                    fov: b.fov_half_angle_deg,
                    area_mm2: unscale(b.detector_area, MM2_PER_M2),
                })
                .collect()
        });
        ScenarioFile {
            name: self.name.clone(),
            room: Some(RoomFile {
                width: Some(self.room.width_x),
                length: Some(self.room.length_y),
                height: Some(self.room.height_z),
                rho_walls_ceiling: Some(self.room.rho_walls_ceiling),
                rho_floor: Some(self.room.rho_floor),
                elem1: Some(self.room.elem_size_bounce1),
                elem2: Some(self.room.elem_size_bounce2),
                cf_height: Some(self.room.cf_height),
            }),
            transmitter: Some(TransmitterFile { num_lds: Some(num_lds), lambertian_order: Some(m_tx) }),
            units: Some(
                self.units
                    .iter()
                    .map(|u| PointFile { id: u.id, pos: u.position.to_array() })
                    .collect(),
            ),
            wavelengths: Some(
                Wavelength::ALL
                    .iter()
                    .map(|&w| {
                        let b: &WavelengthBand<f64> = self.wavelengths.band(w);
                        (w, BandFile { power_w: Some(b.power_per_ld), resp: Some(b.responsivity) })
                    })
                    .collect(),
            ),
            receiver: Some(ReceiverFile {
                branches,
                noise_density_pa_sqrthz: Some(unscale(self.noise.noise_density, PA_PER_A)),
                bandwidth_hz: Some(self.noise.receiver_bandwidth),
            }),
            users: self
                .users
                .iter()
                .map(|u| PointFile { id: u.user_id, pos: u.position.to_array() })
                .collect(),
            rate_bps: Some(self.configured_rate_bps),
            rate_overrides: self
                .rate_overrides
                .iter()
                .map(|(&id, &rate_bps)| RateOverrideFile { id, rate_bps })
                .collect(),
            solver: Some(SolverFile {
                objective: Some(self.solver.objective),
                tiebreak: Some(self.solver.tiebreak),
            }),
        }
    }

    /// Canonical JSON text. Stable field order; used for content hashing.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serialises")
    }
}
