//! Regenerates the sample datasets under `fixtures/`.
//!
//! ```text
//! cargo run -p maptrix --example generate_fixtures
//! ```
//!
//! Boundaries are synthetic jittered grids with the real region codes of
//! each country; flows follow a gravity model. Output is deterministic.

use std::fs;
use std::path::Path;

use maptrix::fixtures::{country_ids, gravity_flows, grid_regions, to_csv, to_geojson};
use maptrix::flow_model::FlowDataset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    fs::create_dir_all(&dir)?;

    // (code, seed, lon0, lat0) so the files look like plausible lon/lat.
    let countries = [
        ("AU", 11, 113.0, -44.0),
        ("DE", 12, 5.0, 47.0),
        ("NZ", 13, 166.0, -47.0),
        ("CN", 14, 73.0, 18.0),
        ("US", 15, -125.0, 24.0),
    ];
    let mut regions = std::collections::HashMap::new();
    for (code, seed, lon0, lat0) in countries {
        let ids: Vec<String> = country_ids(code).expect("known code").iter().map(|s| s.to_string()).collect();
        let rs = grid_regions(&ids, seed)?;
        let flows = gravity_flows(&rs, &rs, seed);
        let ds = FlowDataset::new(rs.clone(), rs.clone(), flows)?;
        let stem = code.to_lowercase();
        fs::write(dir.join(format!("{stem}.csv")), to_csv(&ds))?;
        fs::write(dir.join(format!("{stem}.geojson")), to_geojson(&rs, lon0, lat0))?;
        regions.insert(code, rs);
    }

    let (nz, us) = (&regions["NZ"], &regions["US"]);
    let ds = FlowDataset::new(nz.clone(), us.clone(), gravity_flows(nz, us, 16))?;
    fs::write(dir.join("nz_us.csv"), to_csv(&ds))?;

    println!("wrote fixtures to {}", dir.display());
    Ok(())
}
