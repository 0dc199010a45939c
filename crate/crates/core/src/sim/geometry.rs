use crate::model::GeoPosition;

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// East/north offset in meters from some anchor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Local {
    pub east: f64,
    pub north: f64,
}

impl Local {
    pub fn new(east: f64, north: f64) -> Self {
        Self { east, north }
    }

    pub fn dot(self, o: Local) -> f64 {
        self.east * o.east + self.north * o.north
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl serde::Serialize for Local {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(&(self.east, self.north), s)
    }
}

/// Great-circle ground distance (haversine), altitude ignored.
pub fn distance_m(a: &GeoPosition, b: &GeoPosition) -> f64 {
    let (p1, p2) = (a.latitude.to_radians(), b.latitude.to_radians());
    let dp = p2 - p1;
    let dl = (b.longitude - a.longitude).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}

/// Small-offset flat-earth displacement, fine at building scale.
pub fn offset_geo(anchor: &GeoPosition, d: Local) -> GeoPosition {
    let dlat = d.north / EARTH_RADIUS_M;
    let dlon = d.east / (EARTH_RADIUS_M * anchor.latitude.to_radians().cos());
    GeoPosition::new(
        anchor.latitude + dlat.to_degrees(),
        anchor.longitude + dlon.to_degrees(),
        anchor.altitude,
    )
}

/// Inverse of [`offset_geo`].
pub fn to_local(anchor: &GeoPosition, p: &GeoPosition) -> Local {
    let north = (p.latitude - anchor.latitude).to_radians() * EARTH_RADIUS_M;
    let east = (p.longitude - anchor.longitude).to_radians()
        * EARTH_RADIUS_M
        * anchor.latitude.to_radians().cos();
    Local::new(east, north)
}
