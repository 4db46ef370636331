//! Flow datasets: regions, the OD matrix, and the data-side transforms
//! (aggregation and range filtering) that drive relayout.

mod ingest;
mod transform;

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon};

pub use ingest::{
    load_dataset, load_two_sided, parse_boundaries, parse_flow_csv, BoundaryFeature, FlowTable,
    Projection,
};
pub use transform::{aggregate, filter_by_range, Filtered};

/// A map region with its boundary in layout coordinates and the initial
/// connection site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionParts", into = "RegionParts")]
pub struct Region {
    id: String,
    name: String,
    boundary: Polygon,
    anchor: Point,
}

#[derive(Clone, Serialize, Deserialize)]
struct RegionParts {
    id: String,
    name: String,
    boundary: Polygon,
    anchor: Point,
}

impl TryFrom<RegionParts> for Region {
    type Error = Error;

    fn try_from(p: RegionParts) -> Result<Self> {
        Region::with_anchor(p.id, p.name, p.boundary, p.anchor)
    }
}

impl From<Region> for RegionParts {
    fn from(r: Region) -> Self {
        RegionParts {
            id: r.id,
            name: r.name,
            boundary: r.boundary,
            anchor: r.anchor,
        }
    }
}

impl Region {
    /// Region with the default anchor (centroid, or grid pole when the
    /// centroid is outside).
    pub fn new(id: impl Into<String>, name: impl Into<String>, boundary: Polygon) -> Result<Self> {
        let id = id.into();
        check_boundary(&id, &boundary)?;
        let anchor = boundary
            .interior_anchor()
            .ok_or_else(|| Error::Geometry(format!("region {id}: no interior point found")))?;
        Ok(Region {
            id,
            name: name.into(),
            boundary,
            anchor,
        })
    }

    pub fn with_anchor(
        id: impl Into<String>,
        name: impl Into<String>,
        boundary: Polygon,
        anchor: Point,
    ) -> Result<Self> {
        let id = id.into();
        check_boundary(&id, &boundary)?;
        if !boundary.contains(anchor) {
            return Err(Error::Geometry(format!(
                "region {id}: anchor ({}, {}) is not strictly inside the boundary",
                anchor.x, anchor.y
            )));
        }
        Ok(Region {
            id,
            name: name.into(),
            boundary,
            anchor,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn boundary(&self) -> &Polygon {
        &self.boundary
    }

    pub fn anchor(&self) -> Point {
        self.anchor
    }

    /// Rigid translation; the anchor moves with the boundary.
    pub fn translated(&self, dx: f64, dy: f64) -> Region {
        Region {
            id: self.id.clone(),
            name: self.name.clone(),
            boundary: self.boundary.translate(dx, dy),
            anchor: self.anchor.translate(dx, dy),
        }
    }

    pub(crate) fn renamed(mut self, id: &str) -> Region {
        self.id = id.to_string();
        self.name = id.to_string();
        self
    }
}

fn check_boundary(id: &str, boundary: &Polygon) -> Result<()> {
    if !boundary.is_simple() {
        return Err(Error::Geometry(format!(
            "region {id}: boundary must be a simple polygon with at least 3 vertices and non-zero area"
        )));
    }
    Ok(())
}

/// A set of contiguous regions merged into one for regional comparison.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionGroup {
    pub group_id: String,
    pub member_ids: BTreeSet<String>,
}

impl RegionGroup {
    pub fn new<I, S>(group_id: impl Into<String>, members: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        RegionGroup {
            group_id: group_id.into(),
            member_ids: members.into_iter().map(Into::into).collect(),
        }
    }
}

/// M origins, N destinations and an M×N matrix of non-negative flows.
/// Totals are always recomputed from the matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetParts", into = "DatasetParts")]
pub struct FlowDataset {
    origins: Vec<Region>,
    destinations: Vec<Region>,
    flows: Vec<f64>,
    totals_out: Vec<f64>,
    totals_in: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct DatasetParts {
    origins: Vec<Region>,
    destinations: Vec<Region>,
    flows: Vec<Vec<f64>>,
}

impl TryFrom<DatasetParts> for FlowDataset {
    type Error = Error;

    fn try_from(p: DatasetParts) -> Result<Self> {
        FlowDataset::new(p.origins, p.destinations, p.flows)
    }
}

impl From<FlowDataset> for DatasetParts {
    fn from(d: FlowDataset) -> Self {
        let flows = (0..d.m()).map(|i| d.row(i).to_vec()).collect();
        DatasetParts {
            origins: d.origins,
            destinations: d.destinations,
            flows,
        }
    }
}

impl FlowDataset {
    /// Validated constructor: non-negative finite flows, at least one
    /// positive flow, unique ids per side, matching shapes.
    pub fn new(origins: Vec<Region>, destinations: Vec<Region>, flows: Vec<Vec<f64>>) -> Result<Self> {
        let d = Self::build(origins, destinations, flows)?;
        if !d.flows.iter().any(|&f| f > 0.0) {
            return Err(Error::Validation("dataset has no positive flow".into()));
        }
        Ok(d)
    }

    /// Same checks minus the positive-flow requirement; range filtering may
    /// legitimately leave nothing.
    pub(crate) fn build(
        origins: Vec<Region>,
        destinations: Vec<Region>,
        flows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let (m, n) = (origins.len(), destinations.len());
        if flows.len() != m || flows.iter().any(|r| r.len() != n) {
            return Err(Error::Validation(format!(
                "flow matrix shape does not match {m} origins x {n} destinations"
            )));
        }
        for side in [&origins, &destinations] {
            let mut seen = HashSet::new();
            for r in side.iter() {
                if !seen.insert(r.id()) {
                    return Err(Error::Validation(format!("duplicate region id {}", r.id())));
                }
            }
        }
        let flat: Vec<f64> = flows.into_iter().flatten().collect();
        if let Some(bad) = flat.iter().find(|f| !f.is_finite() || **f < 0.0) {
            return Err(Error::Validation(format!("flow values must be finite and >= 0, got {bad}")));
        }
        let mut totals_out = vec![0.0; m];
        let mut totals_in = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                totals_out[i] += flat[i * n + j];
                totals_in[j] += flat[i * n + j];
            }
        }
        Ok(FlowDataset {
            origins,
            destinations,
            flows: flat,
            totals_out,
            totals_in,
        })
    }

    pub fn origins(&self) -> &[Region] {
        &self.origins
    }

    pub fn destinations(&self) -> &[Region] {
        &self.destinations
    }

    pub fn m(&self) -> usize {
        self.origins.len()
    }

    pub fn n(&self) -> usize {
        self.destinations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty() || self.destinations.is_empty()
    }

    pub fn flow(&self, origin: usize, destination: usize) -> f64 {
        self.flows[origin * self.n() + destination]
    }

    pub fn row(&self, origin: usize) -> &[f64] {
        let n = self.n();
        &self.flows[origin * n..(origin + 1) * n]
    }

    pub fn flows(&self) -> Vec<Vec<f64>> {
        (0..self.m()).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn totals_out(&self) -> &[f64] {
        &self.totals_out
    }

    pub fn totals_in(&self) -> &[f64] {
        &self.totals_in
    }

    pub fn grand_total(&self) -> f64 {
        self.flows.iter().sum()
    }

    pub fn max_flow(&self) -> f64 {
        self.flows.iter().copied().fold(0.0, f64::max)
    }

    /// Origins and destinations are the same regions in the same order.
    pub fn is_same_country(&self) -> bool {
        self.m() == self.n()
            && self
                .origins
                .iter()
                .zip(&self.destinations)
                .all(|(a, b)| a.id() == b.id())
    }

    pub fn origin_index(&self, id: &str) -> Option<usize> {
        self.origins.iter().position(|r| r.id() == id)
    }

    pub fn destination_index(&self, id: &str) -> Option<usize> {
        self.destinations.iter().position(|r| r.id() == id)
    }

    pub(crate) fn id_lookup(regions: &[Region]) -> HashMap<&str, usize> {
        regions.iter().enumerate().map(|(i, r)| (r.id(), i)).collect()
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Unit squares laid side by side along x.
    pub fn strip(ids: &[&str]) -> Vec<Region> {
        ids.iter()
            .enumerate()
            .map(|(i, id)| {
                let x = i as f64;
                Region::new(
                    *id,
                    *id,
                    Polygon::new(vec![
                        Point::new(x, 0.0),
                        Point::new(x + 1.0, 0.0),
                        Point::new(x + 1.0, 1.0),
                        Point::new(x, 1.0),
                    ]),
                )
                .unwrap()
            })
            .collect()
    }

    pub fn square_dataset(ids: &[&str], flows: Vec<Vec<f64>>) -> FlowDataset {
        FlowDataset::new(strip(ids), strip(ids), flows).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    #[test]
    fn totals_are_recomputed() {
        let d = square_dataset(&["A", "B"], vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(d.totals_out(), &[3.0, 7.0]);
        assert_eq!(d.totals_in(), &[4.0, 6.0]);
        assert_eq!(d.grand_total(), 10.0);
        assert!(d.is_same_country());
    }

    #[test]
    fn all_zero_matrix_rejected() {
        let err = FlowDataset::new(strip(&["A"]), strip(&["A"]), vec![vec![0.0]]).unwrap_err();
        assert_eq!(err.code(), "ValidationError");
    }

    #[test]
    fn negative_flow_rejected() {
        let err = FlowDataset::new(strip(&["A"]), strip(&["A"]), vec![vec![-1.0]]).unwrap_err();
        assert_eq!(err.code(), "ValidationError");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = FlowDataset::new(strip(&["A", "A"]), strip(&["A"]), vec![vec![1.0], vec![1.0]])
            .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn anchor_outside_rejected() {
        let poly = Polygon::new(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)]);
        let err = Region::with_anchor("X", "X", poly, Point::new(1.0, 1.0)).unwrap_err();
        assert_eq!(err.code(), "GeometryError");
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let d = square_dataset(&["A", "B"], vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        let json = serde_json::to_string(&d).unwrap();
        let back: FlowDataset = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        let broken = json.replace("2.0", "-2.0");
        assert!(serde_json::from_str::<FlowDataset>(&broken).is_err());
    }
}
