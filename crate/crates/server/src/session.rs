//! Sessions: one uploaded dataset, its current selection, and the layouts
//! computed for it so far.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::{Arc, RwLock};

use maptrix::assembler::{layout, layout_two_country, relayout, LayoutConfig, LayoutMode, MapTrixLayout};
use maptrix::document::LayoutDocument;
use maptrix::flow_model::{load_dataset, load_two_sided, FlowDataset, Projection, RegionGroup};
use maptrix::selection::{Highlight, SelectionState};
use maptrix::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize};

/// Raw upload, kept so sessions can be written to disk and reloaded.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Inputs {
    pub flows: String,
    pub boundaries: String,
    /// Present for two-country uploads.
    pub destination_boundaries: Option<String>,
    /// Lay out with independent orderings even if both sides share ids.
    #[serde(default)]
    pub two_country: bool,
}

impl Inputs {
    fn load(&self, projection: &Projection) -> Result<FlowDataset> {
        match &self.destination_boundaries {
            Some(dest) => load_two_sided(
                self.flows.as_bytes(),
                self.boundaries.as_bytes(),
                dest.as_bytes(),
                projection,
            ),
            None => load_dataset(self.flows.as_bytes(), self.boundaries.as_bytes(), projection),
        }
    }

    fn mode(&self, dataset: &FlowDataset) -> LayoutMode {
        if self.two_country || self.destination_boundaries.is_some() || !dataset.is_same_country() {
            LayoutMode::TwoCountry
        } else {
            LayoutMode::SameCountry
        }
    }
}

/// A layout with its serialized document.
#[derive(Debug)]
pub struct Computed {
    pub layout: MapTrixLayout,
    pub document: Box<serde_json::value::RawValue>,
    pub hash: String,
}

impl Computed {
    fn new(layout: MapTrixLayout) -> Self {
        let doc = LayoutDocument::new(&layout);
        let json = doc.to_json();
        Computed {
            hash: doc.hash(),
            document: serde_json::value::RawValue::from_string(json).expect("document is valid JSON"),
            layout,
        }
    }
}

/// Layouts keyed by the layout-relevant part of the selection, evicting
/// the oldest entry once full. Entries are never modified.
#[derive(Debug)]
struct LayoutCache {
    capacity: usize,
    entries: HashMap<String, Arc<Computed>>,
    order: VecDeque<String>,
}

impl LayoutCache {
    fn new(capacity: usize) -> Self {
        LayoutCache {
            capacity: capacity.max(1),
            entries: HashMap::new(),
            order: VecDeque::new(),
        }
    }

    fn key(selection: &SelectionState) -> String {
        serde_json::to_string(&selection.layout_key()).expect("selection serializes")
    }

    fn get(&self, selection: &SelectionState) -> Option<Arc<Computed>> {
        self.entries.get(&Self::key(selection)).cloned()
    }

    fn insert(&mut self, selection: &SelectionState, computed: Arc<Computed>) {
        let key = Self::key(selection);
        if self.entries.contains_key(&key) {
            return;
        }
        while self.entries.len() >= self.capacity {
            match self.order.pop_front() {
                Some(old) => {
                    self.entries.remove(&old);
                }
                None => break,
            }
        }
        self.order.push_back(key.clone());
        self.entries.insert(key, computed);
    }
}

#[derive(Debug)]
pub struct SessionState {
    pub selection: SelectionState,
    pub current: Arc<Computed>,
    cache: LayoutCache,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub inputs: Inputs,
    pub mode: LayoutMode,
    /// Layout of the unfiltered dataset; relayouts reuse its geometry.
    pub base: Arc<Computed>,
    /// Held for the whole of a mutation, so mutations of one session run
    /// one at a time while other sessions proceed.
    pub state: tokio::sync::Mutex<SessionState>,
}

/// Partial update of a selection. `version` must equal the session's
/// current version; absent fields are left as they are, and `"range":
/// null` clears the range.
#[derive(Clone, Debug, Default, Deserialize)]
pub struct SelectionDelta {
    pub version: u64,
    #[serde(default, deserialize_with = "present")]
    pub range: Option<Option<(f64, f64)>>,
    #[serde(default)]
    pub groups: Option<Vec<RegionGroup>>,
    #[serde(default)]
    pub highlights: Option<BTreeSet<Highlight>>,
}

fn present<'de, D, T>(d: D) -> std::result::Result<Option<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    T::deserialize(d).map(Some)
}

impl SelectionDelta {
    pub fn apply(&self, to: &SelectionState) -> SelectionState {
        SelectionState {
            range: self.range.unwrap_or(to.range),
            groups: self.groups.clone().unwrap_or_else(|| to.groups.clone()),
            highlights: self.highlights.clone().unwrap_or_else(|| to.highlights.clone()),
            version: to.version + 1,
        }
    }
}

/// Why a selection update was refused.
#[derive(Debug)]
pub enum UpdateError {
    Stale { current: u64 },
    Invalid(Error),
}

impl From<Error> for UpdateError {
    fn from(e: Error) -> Self {
        UpdateError::Invalid(e)
    }
}

/// Result of a selection update.
#[derive(Debug)]
pub struct Update {
    pub selection: SelectionState,
    pub computed: Arc<Computed>,
    pub relayout: bool,
}

fn check_highlights(dataset: &FlowDataset, highlights: &BTreeSet<Highlight>) -> Result<()> {
    let unknown = |id: &str| Error::Validation(format!("highlight names unknown region {id}"));
    for h in highlights {
        match h {
            Highlight::Origin { id } => {
                dataset.origin_index(id).ok_or_else(|| unknown(id))?;
            }
            Highlight::Destination { id } => {
                dataset.destination_index(id).ok_or_else(|| unknown(id))?;
            }
            Highlight::Cell { origin, destination } => {
                dataset.origin_index(origin).ok_or_else(|| unknown(origin))?;
                dataset.destination_index(destination).ok_or_else(|| unknown(destination))?;
            }
        }
    }
    Ok(())
}

impl Session {
    /// Loads the upload and computes its first layout.
    pub fn create(id: String, inputs: Inputs, config: &ServiceConfig) -> Result<Session> {
        let dataset = Arc::new(inputs.load(&config.projection)?);
        let mode = inputs.mode(&dataset);
        let first = match mode {
            LayoutMode::SameCountry => layout(dataset, &config.layout)?,
            LayoutMode::TwoCountry => layout_two_country(dataset, &config.layout)?,
        };
        let base = Arc::new(Computed::new(first));
        let selection = SelectionState::default();
        let mut cache = LayoutCache::new(config.cache_capacity);
        cache.insert(&selection, base.clone());
        Ok(Session {
            id,
            inputs,
            mode,
            state: tokio::sync::Mutex::new(SessionState {
                selection,
                current: base.clone(),
                cache,
            }),
            base,
        })
    }

    /// Applies a selection delta. Highlight-only changes keep the current
    /// layout; range and group changes relayout unless the result is cached.
    pub async fn update(&self, delta: SelectionDelta) -> std::result::Result<Update, UpdateError> {
        let mut state = self.state.lock().await;
        if delta.version != state.selection.version {
            return Err(UpdateError::Stale {
                current: state.selection.version,
            });
        }
        let next = delta.apply(&state.selection);
        next.validate()?;

        let (computed, relayout_run) = if next.same_layout(&state.selection) {
            (state.current.clone(), false)
        } else if let Some(hit) = state.cache.get(&next) {
            (hit, false)
        } else {
            let base = self.base.clone();
            let key = next.layout_key();
            let computed = tokio::task::spawn_blocking(move || relayout(&base.layout, &key).map(Computed::new))
                .await
                .map_err(|e| Error::Io(format!("layout task failed: {e}")))??;
            (Arc::new(computed), true)
        };
        check_highlights(&computed.layout.dataset, &next.highlights)?;

        state.cache.insert(&next, computed.clone());
        state.selection = next.clone();
        state.current = computed.clone();
        Ok(Update {
            selection: next,
            computed,
            relayout: relayout_run,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub layout: LayoutConfig,
    pub projection: Projection,
    /// Layouts kept per session.
    pub cache_capacity: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            layout: LayoutConfig::default(),
            projection: Projection::default(),
            cache_capacity: 16,
        }
    }
}

/// Everything needed to rebuild the sessions of a store.
#[derive(Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub sessions: Vec<SavedSession>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SavedSession {
    pub id: String,
    pub inputs: Inputs,
    pub selection: SelectionState,
}

#[derive(Debug, Default)]
pub struct Store {
    pub config: ServiceConfig,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl Store {
    pub fn new(config: ServiceConfig) -> Self {
        Store {
            config,
            sessions: RwLock::default(),
        }
    }

    pub fn get(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().expect("session map poisoned").get(id).cloned()
    }

    pub fn insert(&self, session: Session) -> Arc<Session> {
        let session = Arc::new(session);
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(session.id.clone(), session.clone());
        session
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub async fn snapshot(&self) -> Snapshot {
        let mut sessions: Vec<Arc<Session>> = self.sessions.read().expect("session map poisoned").values().cloned().collect();
        sessions.sort_by(|a, b| a.id.cmp(&b.id));
        let mut saved = Vec::with_capacity(sessions.len());
        for s in sessions {
            let selection = s.state.lock().await.selection.clone();
            saved.push(SavedSession {
                id: s.id.clone(),
                inputs: s.inputs.clone(),
                selection,
            });
        }
        Snapshot { sessions: saved }
    }

    /// Rebuilds sessions from a snapshot. Sessions that no longer load are
    /// skipped and reported.
    pub async fn restore(&self, snapshot: Snapshot) -> Vec<(String, Error)> {
        let mut failed = Vec::new();
        for saved in snapshot.sessions {
            let session = match Session::create(saved.id.clone(), saved.inputs, &self.config) {
                Ok(s) => s,
                Err(e) => {
                    failed.push((saved.id, e));
                    continue;
                }
            };
            let delta = SelectionDelta {
                version: 0,
                range: Some(saved.selection.range),
                groups: Some(saved.selection.groups),
                highlights: Some(saved.selection.highlights),
            };
            match session.update(delta).await {
                Ok(_) => {
                    session.state.lock().await.selection.version = saved.selection.version;
                    self.insert(session);
                }
                Err(UpdateError::Invalid(e)) => failed.push((saved.id, e)),
                Err(UpdateError::Stale { .. }) => unreachable!("fresh session is at version 0"),
            }
        }
        failed
    }
}
