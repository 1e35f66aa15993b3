//! Label set definition shared by the generator, loss, inference and
//! evaluation code.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSchema {
    labels: Vec<LabelEntry>,
    #[serde(default)]
    lateral_pairs: Vec<(u32, u32)>,
    wm_ids: Vec<u32>,
    wmh_id: u32,
    #[serde(default)]
    background_id: u32,
    #[serde(default)]
    evaluation_ids: Vec<u32>,
}

/// Ordered label list. Its length `L` is the number of softmax channels in
/// a prediction; channel `c` holds label `labels[c]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct LabelSchema {
    raw: RawSchema,
    channel_of: HashMap<u32, usize>,
    mirror: HashMap<u32, u32>,
}

impl PartialEq for LabelSchema {
    fn eq(&self, other: &Self) -> bool {
        self.hash() == other.hash()
    }
}

impl From<LabelSchema> for RawSchema {
    fn from(s: LabelSchema) -> Self {
        s.raw
    }
}

impl TryFrom<RawSchema> for LabelSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        let mut channel_of = HashMap::new();
        for (c, l) in raw.labels.iter().enumerate() {
            if channel_of.insert(l.id, c).is_some() {
                return Err(Error::invalid(format!("duplicate label id {}", l.id)));
            }
        }
        let known = |id: u32, what: &str| -> Result<()> {
            if channel_of.contains_key(&id) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} id {id} is not a schema label")))
            }
        };
        known(raw.background_id, "background")?;
        known(raw.wmh_id, "WMH")?;
        if raw.wm_ids.is_empty() {
            return Err(Error::invalid("schema needs at least one white matter id"));
        }
        for &id in &raw.wm_ids {
            known(id, "white matter")?;
        }
        for &id in &raw.evaluation_ids {
            known(id, "evaluation")?;
        }
        let mut mirror = HashMap::new();
        for &(l, r) in &raw.lateral_pairs {
            known(l, "lateral")?;
            known(r, "lateral")?;
            if l == r {
                return Err(Error::invalid(format!("lateral pair ({l}, {r}) is not a pair")));
            }
            if mirror.insert(l, r).is_some() || mirror.insert(r, l).is_some() {
                return Err(Error::invalid(format!("label in pair ({l}, {r}) appears in another pair")));
            }
        }
        if mirror.contains_key(&raw.wmh_id) {
            return Err(Error::invalid("WMH label cannot be lateralised"));
        }
        if mirror.contains_key(&raw.background_id) {
            return Err(Error::invalid("background label cannot be lateralised"));
        }
        Ok(LabelSchema {
            raw,
            channel_of,
            mirror,
        })
    }
}

impl LabelSchema {
    pub fn new(
        labels: Vec<LabelEntry>,
        lateral_pairs: Vec<(u32, u32)>,
        wm_ids: Vec<u32>,
        wmh_id: u32,
        background_id: u32,
    ) -> Result<Self> {
        RawSchema {
            labels,
            lateral_pairs,
            wm_ids,
            wmh_id,
            background_id,
            evaluation_ids: Vec::new(),
        }
        .try_into()
    }

    /// Restricts the Dice summary to `ids` (all non-background labels when
    /// empty).
    pub fn with_evaluation_ids(mut self, ids: Vec<u32>) -> Result<Self> {
        self.raw.evaluation_ids = ids;
        self.raw.try_into()
    }

    /// Whole-brain schema: 36 regions, WMH and background, FreeSurfer ids.
    pub fn brain() -> Self {
        const LEFT: [(u32, &str); 16] = [
            (2, "Left-Cerebral-White-Matter"),
            (3, "Left-Cerebral-Cortex"),
            (4, "Left-Lateral-Ventricle"),
            (5, "Left-Inf-Lat-Vent"),
            (7, "Left-Cerebellum-White-Matter"),
            (8, "Left-Cerebellum-Cortex"),
            (10, "Left-Thalamus"),
            (11, "Left-Caudate"),
            (12, "Left-Putamen"),
            (13, "Left-Pallidum"),
            (17, "Left-Hippocampus"),
            (18, "Left-Amygdala"),
            (26, "Left-Accumbens-area"),
            (28, "Left-VentralDC"),
            (30, "Left-vessel"),
            (31, "Left-choroid-plexus"),
        ];
        const RIGHT: [(u32, &str); 16] = [
            (41, "Right-Cerebral-White-Matter"),
            (42, "Right-Cerebral-Cortex"),
            (43, "Right-Lateral-Ventricle"),
            (44, "Right-Inf-Lat-Vent"),
            (46, "Right-Cerebellum-White-Matter"),
            (47, "Right-Cerebellum-Cortex"),
            (49, "Right-Thalamus"),
            (50, "Right-Caudate"),
            (51, "Right-Putamen"),
            (52, "Right-Pallidum"),
            (53, "Right-Hippocampus"),
            (54, "Right-Amygdala"),
            (58, "Right-Accumbens-area"),
            (60, "Right-VentralDC"),
            (62, "Right-vessel"),
            (63, "Right-choroid-plexus"),
        ];
        const MIDLINE: [(u32, &str); 4] = [
            (14, "3rd-Ventricle"),
            (15, "4th-Ventricle"),
            (16, "Brain-Stem"),
            (24, "CSF"),
        ];
        let mut labels: Vec<(u32, &str)> = vec![(0, "Unknown")];
        labels.extend(LEFT);
        labels.extend(MIDLINE);
        labels.extend(RIGHT);
        labels.push((77, "WM-hypointensities"));
        labels.sort_by_key(|l| l.0);
        let entries = labels
            .into_iter()
            .map(|(id, name)| LabelEntry {
                id,
                name: name.to_string(),
            })
            .collect();
        let pairs = LEFT.iter().zip(RIGHT.iter()).map(|(l, r)| (l.0, r.0)).collect();
        // Brainstem plus left/right cortex, WM, hippocampus, amygdala,
        // thalamus, caudate, pallidum, putamen, accumbens, cerebellar cortex
        // and cerebellar WM.
        let eval = vec![
            16, 3, 42, 2, 41, 17, 53, 18, 54, 10, 49, 11, 50, 13, 52, 12, 51, 26, 58, 8, 47, 7, 46,
        ];
        LabelSchema::new(entries, pairs, vec![2, 41], 77, 0)
            .and_then(|s| s.with_evaluation_ids(eval))
            .expect("built-in schema is valid")
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn labels(&self) -> &[LabelEntry] {
        &self.raw.labels
    }

    /// Number of softmax channels `L`.
    pub fn len(&self) -> usize {
        self.raw.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.labels.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.raw.labels.iter().map(|l| l.id)
    }

    pub fn lateral_pairs(&self) -> &[(u32, u32)] {
        &self.raw.lateral_pairs
    }

    pub fn wm_ids(&self) -> &[u32] {
        &self.raw.wm_ids
    }

    pub fn wmh_id(&self) -> u32 {
        self.raw.wmh_id
    }

    pub fn background_id(&self) -> u32 {
        self.raw.background_id
    }

    /// Labels summarised in Dice tables.
    pub fn evaluation_ids(&self) -> Vec<u32> {
        if self.raw.evaluation_ids.is_empty() {
            self.ids()
                .filter(|&id| id != self.raw.background_id && id != self.raw.wmh_id)
                .collect()
        } else {
            self.raw.evaluation_ids.clone()
        }
    }

    pub fn contains(&self, id: u32) -> bool {
        self.channel_of.contains_key(&id)
    }

    pub fn channel_of(&self, id: u32) -> Option<usize> {
        self.channel_of.get(&id).copied()
    }

    pub fn id_of(&self, channel: usize) -> u32 {
        self.raw.labels[channel].id
    }

    pub fn name_of(&self, id: u32) -> Option<&str> {
        self.channel_of(id).map(|c| self.raw.labels[c].name.as_str())
    }

    /// Lateral counterpart of `id`, or `id` itself for midline labels.
    pub fn mirror_id(&self, id: u32) -> u32 {
        self.mirror.get(&id).copied().unwrap_or(id)
    }

    pub fn is_wm(&self, id: u32) -> bool {
        self.raw.wm_ids.contains(&id)
    }

    /// Channel permutation realising the lateral swap.
    pub fn mirror_channels(&self) -> Vec<usize> {
        self.raw
            .labels
            .iter()
            .map(|l| self.channel_of[&self.mirror_id(l.id)])
            .collect()
    }

    /// Converts label ids to channel indices, failing on foreign labels.
    pub fn channel_indices(&self, labels: &LabelVolume) -> Result<Vec<usize>> {
        labels
            .data()
            .iter()
            .map(|&id| {
                self.channel_of(id)
                    .ok_or_else(|| Error::invalid(format!("label {id} is not in the schema")))
            })
            .collect()
    }

    pub fn validate(&self, labels: &LabelVolume) -> Result<()> {
        let present: HashSet<u32> = labels.label_set().into_iter().collect();
        match present.iter().find(|id| !self.contains(**id)) {
            Some(id) => Err(Error::invalid(format!("label {id} is not in the schema"))),
            None => Ok(()),
        }
    }

    /// Stable content hash (hex SHA-256 of the canonical JSON form).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(&self.raw).expect("schema serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
