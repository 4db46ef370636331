//! Data-side transforms: region aggregation and flow-range filtering.

use std::collections::{HashMap, HashSet};

use geo::BooleanOps;

use super::{FlowDataset, Region, RegionGroup};
use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon};

fn to_geo(p: &Polygon) -> geo::MultiPolygon<f64> {
    let ring: Vec<geo::Coord<f64>> = p
        .vertices()
        .iter()
        .map(|v| geo::Coord { x: v.x, y: v.y })
        .collect();
    geo::MultiPolygon::new(vec![geo::Polygon::new(geo::LineString::new(ring), vec![])])
}

fn from_geo(mp: &geo::MultiPolygon<f64>) -> Option<Polygon> {
    use geo::Area;
    let largest = mp
        .0
        .iter()
        .max_by(|a, b| a.unsigned_area().total_cmp(&b.unsigned_area()))?;
    Some(Polygon::new(
        largest
            .exterior()
            .coords()
            .map(|c| Point::new(c.x, c.y))
            .collect(),
    ))
}

fn touching(a: &Polygon, b: &Polygon) -> bool {
    let tol = 1e-6 * a.bbox().union(&b.bbox()).diagonal();
    a.boundary_gap(b) <= tol
}

/// Members form a connected graph under polygon adjacency.
fn contiguous(members: &[&Region]) -> bool {
    let n = members.len();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && touching(members[i].boundary(), members[j].boundary()) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn merge(group: &RegionGroup, members: &[&Region]) -> Result<Region> {
    if members.len() == 1 {
        return Ok(members[0].clone().renamed(&group.group_id));
    }
    let union = members[1..]
        .iter()
        .fold(to_geo(members[0].boundary()), |acc, r| acc.union(&to_geo(r.boundary())));
    let outline = from_geo(&union).ok_or_else(|| {
        Error::Aggregation(format!("group {}: union of members is empty", group.group_id))
    })?;
    Region::new(group.group_id.clone(), group.group_id.clone(), outline).map_err(|e| {
        Error::Aggregation(format!("group {}: merged outline is unusable ({e})", group.group_id))
    })
}

/// Regions of one side after grouping, plus the old-index -> new-index map.
fn aggregate_side(regions: &[Region], groups: &[&RegionGroup]) -> Result<(Vec<Region>, Vec<usize>)> {
    let index = FlowDataset::id_lookup(regions);
    let mut group_of: HashMap<usize, usize> = HashMap::new();
    for (g, group) in groups.iter().enumerate() {
        for id in &group.member_ids {
            group_of.insert(index[id.as_str()], g);
        }
    }

    let mut out = Vec::new();
    let mut slot_of_group: HashMap<usize, usize> = HashMap::new();
    let mut map = vec![0; regions.len()];
    for (i, r) in regions.iter().enumerate() {
        match group_of.get(&i) {
            None => {
                map[i] = out.len();
                out.push(r.clone());
            }
            Some(&g) => {
                if let Some(&slot) = slot_of_group.get(&g) {
                    map[i] = slot;
                    continue;
                }
                let group = groups[g];
                let members: Vec<&Region> = group
                    .member_ids
                    .iter()
                    .map(|id| &regions[index[id.as_str()]])
                    .collect();
                if !contiguous(&members) {
                    return Err(Error::Contiguity {
                        group: group.group_id.clone(),
                    });
                }
                slot_of_group.insert(g, out.len());
                map[i] = out.len();
                out.push(merge(group, &members)?);
            }
        }
    }
    Ok((out, map))
}

fn applies_to(group: &RegionGroup, regions: &[Region]) -> Result<bool> {
    let present = group
        .member_ids
        .iter()
        .filter(|id| regions.iter().any(|r| r.id() == id.as_str()))
        .count();
    match present {
        0 => Ok(false),
        p if p == group.member_ids.len() => Ok(true),
        _ => Err(Error::Aggregation(format!(
            "group {} mixes regions from different sides",
            group.group_id
        ))),
    }
}

/// Merges each group into a single region (outline = union of members,
/// flows summed). Each group applies to whichever side holds its members;
/// in same-country datasets both sides are merged identically. Merged
/// regions take the position of their first member.
pub fn aggregate(dataset: &FlowDataset, groups: &[RegionGroup]) -> Result<FlowDataset> {
    if groups.is_empty() {
        return Ok(dataset.clone());
    }

    let mut claimed: HashSet<&str> = HashSet::new();
    let mut group_ids: HashSet<&str> = HashSet::new();
    for g in groups {
        if g.member_ids.is_empty() {
            return Err(Error::Aggregation(format!("group {} has no members", g.group_id)));
        }
        if !group_ids.insert(&g.group_id) {
            return Err(Error::Aggregation(format!("group id {} used twice", g.group_id)));
        }
        for id in &g.member_ids {
            if !claimed.insert(id) {
                return Err(Error::Aggregation(format!("region {id} belongs to more than one group")));
            }
        }
    }

    let mut origin_groups = Vec::new();
    let mut dest_groups = Vec::new();
    for g in groups {
        let o = applies_to(g, dataset.origins())?;
        let d = applies_to(g, dataset.destinations())?;
        if !o && !d {
            let missing = g.member_ids.iter().next().cloned().unwrap_or_default();
            return Err(Error::Aggregation(format!(
                "group {}: unknown region {missing}",
                g.group_id
            )));
        }
        if o {
            origin_groups.push(g);
        }
        if d {
            dest_groups.push(g);
        }
    }

    let (origins, omap) = aggregate_side(dataset.origins(), &origin_groups)?;
    let (destinations, dmap) = aggregate_side(dataset.destinations(), &dest_groups)?;
    for side in [&origins, &destinations] {
        let mut ids = HashSet::new();
        if let Some(r) = side.iter().find(|r| !ids.insert(r.id())) {
            return Err(Error::Aggregation(format!(
                "group id {} collides with an existing region",
                r.id()
            )));
        }
    }

    let mut flows = vec![vec![0.0; destinations.len()]; origins.len()];
    for i in 0..dataset.m() {
        for j in 0..dataset.n() {
            flows[omap[i]][dmap[j]] += dataset.flow(i, j);
        }
    }
    FlowDataset::build(origins, destinations, flows)
}

/// Result of a range filter: the reduced dataset and the ids that survived
/// on each side.
#[derive(Clone, Debug, PartialEq)]
pub struct Filtered {
    pub dataset: FlowDataset,
    pub retained_origins: Vec<String>,
    pub retained_destinations: Vec<String>,
}

/// Zeroes flows outside `[lo, hi]` and drops regions left without flow.
/// Same-country datasets drop a region from both sides only when both its
/// row and column are empty, so rows and columns stay aligned; otherwise
/// each side is pruned on its own totals.
pub fn filter_by_range(dataset: &FlowDataset, lo: f64, hi: f64) -> Result<Filtered> {
    if !(lo >= 0.0 && hi >= lo) {
        return Err(Error::Range { lo, hi });
    }
    let (m, n) = (dataset.m(), dataset.n());
    let kept = |f: f64| if f >= lo && f <= hi { f } else { 0.0 };
    let flows: Vec<Vec<f64>> = (0..m)
        .map(|i| dataset.row(i).iter().map(|&f| kept(f)).collect())
        .collect();

    let row_live: Vec<bool> = flows.iter().map(|r| r.iter().any(|&f| f > 0.0)).collect();
    let col_live: Vec<bool> = (0..n).map(|j| flows.iter().any(|r| r[j] > 0.0)).collect();
    let (keep_rows, keep_cols) = if dataset.is_same_country() {
        let both: Vec<bool> = (0..m).map(|i| row_live[i] || col_live[i]).collect();
        (both.clone(), both)
    } else {
        (row_live, col_live)
    };

    let rows: Vec<usize> = (0..m).filter(|&i| keep_rows[i]).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| keep_cols[j]).collect();
    let reduced = FlowDataset::build(
        rows.iter().map(|&i| dataset.origins()[i].clone()).collect(),
        cols.iter().map(|&j| dataset.destinations()[j].clone()).collect(),
        rows.iter()
            .map(|&i| cols.iter().map(|&j| flows[i][j]).collect())
            .collect(),
    )?;
    Ok(Filtered {
        retained_origins: reduced.origins().iter().map(|r| r.id().to_string()).collect(),
        retained_destinations: reduced
            .destinations()
            .iter()
            .map(|r| r.id().to_string())
            .collect(),
        dataset: reduced,
    })
}
