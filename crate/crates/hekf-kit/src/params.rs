//! Physical parameters of the truck-semitrailer combination.
//!
//! Geometry is fixed from a representative three-axle semitrailer rig; the
//! fifteen identifiable parameters are the tire parameters of the three axle
//! groups (truck front, truck rear, semitrailer group).

use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{self, KvFile};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;

/// Number of lumped axles in the single-track model (2 truck + 3 semitrailer).
pub const AXLE_COUNT: usize = 5;

/// Magic-formula tire parameters of one lumped axle.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TireParams {
    /// Shape factor C (dimensionless).
    pub shape_c: f64,
    /// Peak factor D (dimensionless).
    pub peak_d: f64,
    /// Stiffness-curve scale c1 (N).
    pub stiffness_scale: f64,
    /// Stiffness-curve load scale c2 (N).
    pub load_scale: f64,
    /// Relaxation length (m).
    pub relaxation_length: f64,
}

impl TireParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("shape_c", self.shape_c),
            ("peak_d", self.peak_d),
            ("stiffness_scale", self.stiffness_scale),
            ("load_scale", self.load_scale),
            ("relaxation_length", self.relaxation_length),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!(
                    "tire parameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Identifiable axle groups. The three semitrailer axles share one parameter
/// set, so the model exposes 3 x 5 = 15 free tire parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxleGroup {
    TruckFront,
    TruckRear,
    Trailer,
}

impl AxleGroup {
    pub const ALL: [AxleGroup; 3] = [AxleGroup::TruckFront, AxleGroup::TruckRear, AxleGroup::Trailer];

    pub fn key(self) -> &'static str {
        match self {
            AxleGroup::TruckFront => "tire_truck_front",
            AxleGroup::TruckRear => "tire_truck_rear",
            AxleGroup::Trailer => "tire_trailer",
        }
    }
}

/// Full parameter set of the articulated single-track model.
///
/// Distances are positive and measured along each body's longitudinal axis:
/// truck axles and hitch relative to the truck center of gravity, semitrailer
/// axles relative to the king pin (positive rearward).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VehicleParams {
    /// Truck mass (kg).
    pub truck_mass: f64,
    /// Truck yaw inertia (kg m²).
    pub truck_yaw_inertia: f64,
    /// Semitrailer yaw inertia (kg m²).
    pub trailer_yaw_inertia: f64,
    /// Truck COG to front axle, positive forward (m).
    pub truck_front_axle: f64,
    /// Truck COG to rear axle, positive rearward (m).
    pub truck_rear_axle: f64,
    /// Truck COG to fifth-wheel king pin, positive rearward (m).
    pub truck_hitch: f64,
    /// King pin to each semitrailer axle, positive rearward (m).
    pub trailer_axles: [f64; 3],
    /// King pin to the center of the semitrailer running gear (m).
    pub hitch_to_gear_center: f64,
    /// Maximum road friction coefficient.
    pub mu_max: f64,
    /// Gravitational acceleration (m/s²).
    pub gravity: f64,
    /// Fixed vertical forces of the two truck axles (N).
    pub truck_vertical_forces: [f64; 2],
    /// Tire parameters per axle: truck front, truck rear, semitrailer 1-3.
    pub tires: [TireParams; AXLE_COUNT],
}

impl VehicleParams {
    /// Representative nominal rig used as the default configuration.
    pub fn nominal() -> Self {
        let truck_front = TireParams {
            shape_c: 1.45,
            peak_d: 4.0e4,
            stiffness_scale: 5.2e5,
            load_scale: 7.0e4,
            relaxation_length: 0.6,
        };
        let truck_rear = TireParams {
            shape_c: 1.50,
            peak_d: 6.5e4,
            stiffness_scale: 8.5e5,
            load_scale: 1.1e5,
            relaxation_length: 0.55,
        };
        let trailer = TireParams {
            shape_c: 1.55,
            peak_d: 5.0e4,
            stiffness_scale: 6.5e5,
            load_scale: 7.5e4,
            relaxation_length: 0.7,
        };
        VehicleParams {
            truck_mass: 8800.0,
            truck_yaw_inertia: 35_000.0,
            trailer_yaw_inertia: 330_000.0,
            truck_front_axle: 1.4,
            truck_rear_axle: 2.2,
            truck_hitch: 1.9,
            trailer_axles: [6.4, 7.7, 9.0],
            hitch_to_gear_center: 7.7,
            mu_max: 0.9,
            gravity: GRAVITY,
            truck_vertical_forces: [64_000.0, 103_000.0],
            tires: [truck_front, truck_rear, trailer, trailer, trailer],
        }
    }

    /// Group parameters shared by each axle: `[truck front, truck rear, trailer]`.
    pub fn tire_groups(&self) -> [TireParams; 3] {
        [self.tires[0], self.tires[1], self.tires[2]]
    }

    pub fn set_tire_group(&mut self, group: AxleGroup, tire: TireParams) {
        match group {
            AxleGroup::TruckFront => self.tires[0] = tire,
            AxleGroup::TruckRear => self.tires[1] = tire,
            AxleGroup::Trailer => {
                self.tires[2] = tire;
                self.tires[3] = tire;
                self.tires[4] = tire;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("truck_front_axle", self.truck_front_axle),
            ("truck_rear_axle", self.truck_rear_axle),
            ("truck_hitch", self.truck_hitch),
            ("trailer_axle_1", self.trailer_axles[0]),
            ("trailer_axle_2", self.trailer_axles[1]),
            ("trailer_axle_3", self.trailer_axles[2]),
            ("hitch_to_gear_center", self.hitch_to_gear_center),
        ];
        for (name, v) in lengths {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("truck_mass", self.truck_mass),
            ("truck_yaw_inertia", self.truck_yaw_inertia),
            ("trailer_yaw_inertia", self.trailer_yaw_inertia),
            ("gravity", self.gravity),
            ("fz11", self.truck_vertical_forces[0]),
            ("fz12", self.truck_vertical_forces[1]),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.mu_max > 0.0 && self.mu_max <= 2.0) {
            return Err(Error::Domain(format!(
                "mu_max must lie in (0, 2], got {}",
                self.mu_max
            )));
        }
        for tire in &self.tires {
            tire.validate()?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut kv = KvFile::load(path)?;
        let params = Self::from_kv(&mut kv)?;
        kv.finish()?;
        params.validate()?;
        Ok(params)
    }

    fn from_kv(kv: &mut KvFile) -> Result<Self> {
        let nom = Self::nominal();
        let mut take_tire = |key: &str, nom: TireParams| -> Result<TireParams> {
            Ok(TireParams {
                shape_c: kv.take_f64_or(&format!("{key}.shape_c"), nom.shape_c)?,
                peak_d: kv.take_f64_or(&format!("{key}.peak_d"), nom.peak_d)?,
                stiffness_scale: kv
                    .take_f64_or(&format!("{key}.stiffness_scale"), nom.stiffness_scale)?,
                load_scale: kv.take_f64_or(&format!("{key}.load_scale"), nom.load_scale)?,
                relaxation_length: kv
                    .take_f64_or(&format!("{key}.relaxation_length"), nom.relaxation_length)?,
            })
        };
        let tf = take_tire("tire_truck_front", nom.tires[0])?;
        let tr = take_tire("tire_truck_rear", nom.tires[1])?;
        let tl = take_tire("tire_trailer", nom.tires[2])?;
        Ok(VehicleParams {
            truck_mass: kv.take_f64_or("truck_mass", nom.truck_mass)?,
            truck_yaw_inertia: kv.take_f64_or("truck_yaw_inertia", nom.truck_yaw_inertia)?,
            trailer_yaw_inertia: kv.take_f64_or("trailer_yaw_inertia", nom.trailer_yaw_inertia)?,
            truck_front_axle: kv.take_f64_or("truck_front_axle", nom.truck_front_axle)?,
            truck_rear_axle: kv.take_f64_or("truck_rear_axle", nom.truck_rear_axle)?,
            truck_hitch: kv.take_f64_or("truck_hitch", nom.truck_hitch)?,
            trailer_axles: [
                kv.take_f64_or("trailer_axle_1", nom.trailer_axles[0])?,
                kv.take_f64_or("trailer_axle_2", nom.trailer_axles[1])?,
                kv.take_f64_or("trailer_axle_3", nom.trailer_axles[2])?,
            ],
            hitch_to_gear_center: kv
                .take_f64_or("hitch_to_gear_center", nom.hitch_to_gear_center)?,
            mu_max: kv.take_f64_or("mu_max", nom.mu_max)?,
            gravity: kv.take_f64_or("gravity", nom.gravity)?,
            truck_vertical_forces: [
                kv.take_f64_or("fz11", nom.truck_vertical_forces[0])?,
                kv.take_f64_or("fz12", nom.truck_vertical_forces[1])?,
            ],
            tires: [tf, tr, tl, tl, tl],
        })
    }

    /// Write the parameter set in the flat key-value format.
    pub fn save(&self, path: impl AsRef<Path>, header: &str) -> Result<()> {
        let text = kv::render(header, &self.to_pairs());
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn to_pairs(&self) -> Vec<(String, f64)> {
        let mut pairs = vec![
            ("truck_mass".into(), self.truck_mass),
            ("truck_yaw_inertia".into(), self.truck_yaw_inertia),
            ("trailer_yaw_inertia".into(), self.trailer_yaw_inertia),
            ("truck_front_axle".into(), self.truck_front_axle),
            ("truck_rear_axle".into(), self.truck_rear_axle),
            ("truck_hitch".into(), self.truck_hitch),
            ("trailer_axle_1".into(), self.trailer_axles[0]),
            ("trailer_axle_2".into(), self.trailer_axles[1]),
            ("trailer_axle_3".into(), self.trailer_axles[2]),
            ("hitch_to_gear_center".into(), self.hitch_to_gear_center),
            ("mu_max".into(), self.mu_max),
            ("gravity".into(), self.gravity),
            ("fz11".into(), self.truck_vertical_forces[0]),
            ("fz12".into(), self.truck_vertical_forces[1]),
        ];
        for (group, tire) in AxleGroup::ALL.iter().zip(self.tire_groups()) {
            let key = group.key();
            pairs.push((format!("{key}.shape_c"), tire.shape_c));
            pairs.push((format!("{key}.peak_d"), tire.peak_d));
            pairs.push((format!("{key}.stiffness_scale"), tire.stiffness_scale));
            pairs.push((format!("{key}.load_scale"), tire.load_scale));
            pairs.push((format!("{key}.relaxation_length"), tire.relaxation_length));
        }
        pairs
    }
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::nominal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_params_validate() {
        VehicleParams::nominal().validate().unwrap();
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rig.params");
        let mut params = VehicleParams::nominal();
        params.truck_mass = 9100.0;
        params.tires[0].shape_c = 1.38;
        params.save(&path, "test rig").unwrap();
        let loaded = VehicleParams::load(&path).unwrap();
        assert_eq!(loaded, params);
    }

    #[test]
    fn loader_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.params");
        std::fs::write(&path, "truck_mass = 9000\nnot_a_key = 1\n").unwrap();
        let err = VehicleParams::load(&path).unwrap_err();
        assert!(err.to_string().contains("not_a_key"));
    }

    #[test]
    fn invalid_values_rejected() {
        let mut p = VehicleParams::nominal();
        p.mu_max = 2.5;
        assert!(p.validate().is_err());
        let mut p = VehicleParams::nominal();
        p.tires[2].relaxation_length = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn trailer_group_is_shared() {
        let mut p = VehicleParams::nominal();
        let mut t = p.tires[2];
        t.shape_c = 1.2;
        p.set_tire_group(AxleGroup::Trailer, t);
        assert_eq!(p.tires[3].shape_c, 1.2);
        assert_eq!(p.tires[4].shape_c, 1.2);
    }
}
