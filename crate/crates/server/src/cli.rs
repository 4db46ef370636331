use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maptrix::assembler::{layout, layout_two_country, relayout, LayoutConfig};
use maptrix::document::LayoutDocument;
use maptrix::flow_model::{load_dataset, load_two_sided, Projection, RegionGroup};
use maptrix::render::{render, StyleSpec};
use maptrix::selection::SelectionState;
use maptrix::{Error, Result};

use crate::session::{ServiceConfig, Snapshot, Store};

const EXIT_CODES: &str = "\
Exit codes:
   0  success
   1  I/O or unexpected failure
   2  bad command-line arguments
   3  IngestError          flow ids and boundary ids differ
   4  ValidationError      malformed input
   5  GeometryError        unusable boundary polygon
   6  AggregationError     bad group definition
   7  ContiguityError      group members are not contiguous
   8  RangeError           --filter bounds are invalid
   9  DegenerateSiteError  two regions share a site
  10  SteepLeaderError     --k too small for the layout
  11  ModeError            mode does not fit the data
  12  CrossingRepairError  leaders could not be untangled
  13  QpError              refinement solver failure";

#[derive(Debug, Parser)]
#[command(name = "maptrix", version, about = "OD matrices linked to origin and destination maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lay out one dataset and write it as SVG.
    #[command(after_help = EXIT_CODES)]
    Render(RenderArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    SameCountry,
    TwoCountry,
}

#[derive(Debug, Args)]
pub struct Tuning {
    /// Leader diagonal gradient.
    #[arg(long)]
    pub k: Option<f64>,
    /// Weight of the separation term against staying near the anchors.
    #[arg(long)]
    pub w: Option<f64>,
    /// JSON file with style overrides (any subset of the style fields).
    #[arg(long, env = "MAPTRIX_STYLE")]
    pub style: Option<PathBuf>,
}

impl Tuning {
    fn config(&self) -> Result<LayoutConfig> {
        let mut config = LayoutConfig::default();
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(w) = self.w {
            config.refinement.w = w;
        }
        if let Some(path) = &self.style {
            let text = std::fs::read_to_string(path)?;
            config.style = serde_json::from_str::<StyleSpec>(&text)
                .map_err(|e| Error::Validation(format!("style {}: {e}", path.display())))?;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Flow table CSV: header `origin,<destination ids>`, one row per origin.
    pub flows: PathBuf,
    /// GeoJSON boundaries of the origin regions (of all regions for
    /// same-country data).
    pub boundaries: PathBuf,
    /// GeoJSON boundaries of the destination regions, for two-country data.
    pub destination_boundaries: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Defaults to same-country when rows and columns name the same regions.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Keep only flows in LO:HI.
    #[arg(long, value_parser = parse_range, value_name = "LO:HI")]
    pub filter: Option<(f64, f64)>,
    /// JSON file with a list of `{"group_id": .., "member_ids": [..]}`.
    #[arg(long, value_name = "FILE")]
    pub group: Option<PathBuf>,
    /// Also write the layout document as JSON.
    #[arg(long, value_name = "FILE")]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "MAPTRIX_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Layouts cached per session.
    #[arg(long, env = "MAPTRIX_CACHE_SIZE", default_value_t = 16)]
    pub cache_size: usize,
    /// Sessions are restored from this file at start and written to it on
    /// shutdown.
    #[arg(long, env = "MAPTRIX_SNAPSHOT")]
    pub snapshot: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: Tuning,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(lo)?, num(hi)?))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Runs the render pipeline and returns the SVG and layout document.
pub fn render_files(args: &RenderArgs) -> Result<(String, LayoutDocument)> {
    let config = args.tuning.config()?;
    let mut selection = SelectionState {
        range: args.filter,
        ..Default::default()
    };
    if let Some(path) = &args.group {
        selection.groups = serde_json::from_slice::<Vec<RegionGroup>>(&read(path)?)
            .map_err(|e| Error::Validation(format!("groups {}: {e}", path.display())))?;
    }
    selection.validate()?;

    let flows = read(&args.flows)?;
    let boundaries = read(&args.boundaries)?;
    let projection = Projection::default();
    let dataset = Arc::new(match &args.destination_boundaries {
        Some(dest) => load_two_sided(&flows, &boundaries, &read(dest)?, &projection)?,
        None => load_dataset(&flows, &boundaries, &projection)?,
    });
    let mode = args.mode.unwrap_or(
        if args.destination_boundaries.is_none() && dataset.is_same_country() {
            Mode::SameCountry
        } else {
            Mode::TwoCountry
        },
    );
    let base = match mode {
        Mode::SameCountry => layout(dataset, &config)?,
        Mode::TwoCountry => layout_two_country(dataset, &config)?,
    };
    let shown = if selection.same_layout(&SelectionState::default()) {
        base
    } else {
        relayout(&base, &selection)?
    };
    let svg = render(&shown, &config.style, None)?;
    Ok((svg, LayoutDocument::new(&shown)))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn run_render(args: &RenderArgs) -> Result<()> {
    let (svg, doc) = render_files(args)?;
    write(&args.out, &svg)?;
    if let Some(path) = &args.json {
        write(path, &doc.to_json())?;
    }
    Ok(())
}

pub async fn run_serve(args: &ServeArgs) -> Result<()> {
    let config = ServiceConfig {
        layout: args.tuning.config()?,
        cache_capacity: args.cache_size,
        ..Default::default()
    };
    let store = Arc::new(Store::new(config));
    if let Some(path) = args.snapshot.as_ref().filter(|p| p.exists()) {
        let snapshot: Snapshot = serde_json::from_slice(&read(path)?)
            .map_err(|e| Error::Validation(format!("snapshot {}: {e}", path.display())))?;
        for (id, e) in store.restore(snapshot).await {
            tracing::warn!(session = %id, error = %e, "session not restored");
        }
        tracing::info!(sessions = store.len(), "snapshot restored");
    }

    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    tracing::info!(addr = %args.addr, "listening");
    axum::serve(listener, crate::api::router(store.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;

    if let Some(path) = &args.snapshot {
        let snapshot = store.snapshot().await;
        let json = serde_json::to_string(&snapshot).expect("snapshot serializes");
        write(path, &json)?;
        tracing::info!(sessions = snapshot.sessions.len(), path = %path.display(), "snapshot written");
    }
    Ok(())
}
