use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow_model::RegionGroup;

/// Something the user pointed at. Highlights never change the layout.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Highlight {
    Origin { id: String },
    Destination { id: String },
    Cell { origin: String, destination: String },
}

/// Range filter, aggregation groups and highlights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionState {
    pub range: Option<(f64, f64)>,
    pub groups: Vec<RegionGroup>,
    pub highlights: BTreeSet<Highlight>,
    pub version: u64,
}

impl SelectionState {
    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.range {
            if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Range { lo, hi });
            }
        }
        Ok(())
    }

    /// Whether two selections produce the same layout.
    pub fn same_layout(&self, other: &SelectionState) -> bool {
        self.range == other.range && self.groups == other.groups
    }

    /// The part of the selection that affects layout.
    pub fn layout_key(&self) -> SelectionState {
        SelectionState {
            range: self.range,
            groups: self.groups.clone(),
            highlights: BTreeSet::new(),
            version: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn highlights_do_not_affect_layout_key() {
        let mut a = SelectionState::default();
        let b = a.clone();
        a.highlights.insert(Highlight::Origin { id: "QLD".into() });
        a.version = 3;
        assert!(a.same_layout(&b));
        assert_eq!(a.layout_key(), b.layout_key());
    }

    #[test]
    fn inverted_range_rejected() {
        let s = SelectionState {
            range: Some((10.0, 5.0)),
            ..Default::default()
        };
        assert_eq!(s.validate().unwrap_err().code(), "RangeError");
    }

    #[test]
    fn json_shape() {
        let s: SelectionState = serde_json::from_str(
            r#"{"range":[0,5],"highlights":[{"kind":"cell","origin":"A","destination":"B"}]}"#,
        )
        .unwrap();
        assert_eq!(s.range, Some((0.0, 5.0)));
        assert_eq!(s.highlights.len(), 1);
    }
}
