use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trimmed clip with its annotation flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoManifestEntry {
    pub video_id: String,
    pub source_url: String,
    pub start: f64,
    pub end: f64,
    pub label: String,
    pub is_mime_artist: bool,
    pub object_relevant: bool,
    pub scene_relevant: bool,
}

impl VideoManifestEntry {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectSize {
    NoneOrSmall,
    Large,
}

/// Ordered class list (defines class indices), per-class object size, and
/// the superclass grouping. Classes missing from `superclasses` form their
/// own superclass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTaxonomy {
    pub classes: Vec<String>,
    #[serde(default)]
    pub object_size: BTreeMap<String, ObjectSize>,
    #[serde(default)]
    pub superclasses: BTreeMap<String, String>,
}

impl ClassTaxonomy {
    /// Sorts and deduplicates `classes`; no object sizes, no grouping.
    pub fn from_classes<I, S>(classes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = classes.into_iter().map(Into::into).collect();
        ClassTaxonomy {
            classes: set.into_iter().collect(),
            object_size: BTreeMap::new(),
            superclasses: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Taxonomy("no classes".into()));
        }
        if self.classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Taxonomy(
                "classes must be unique and in lexicographic order".into(),
            ));
        }
        if !self.object_size.is_empty() {
            for c in &self.classes {
                if !self.object_size.contains_key(c) {
                    return Err(Error::Taxonomy(format!("class `{c}` has no object size")));
                }
            }
            for c in self.object_size.keys() {
                if self.index_of(c).is_none() {
                    return Err(Error::Taxonomy(format!(
                        "object size given for unknown class `{c}`"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.classes
            .binary_search_by(|c| c.as_str().cmp(class))
            .ok()
    }

    pub fn class_index(&self, class: &str) -> Result<usize> {
        self.index_of(class)
            .ok_or_else(|| Error::Taxonomy(format!("unknown class `{class}`")))
    }

    pub fn superclass_of<'a>(&'a self, class: &'a str) -> &'a str {
        self.superclasses.get(class).map_or(class, String::as_str)
    }

    /// Sorted, deduplicated superclass names over `classes`.
    pub fn superclass_names(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.classes.iter().map(|c| self.superclass_of(c)).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// For each class index, the index of its superclass in
    /// [`ClassTaxonomy::superclass_names`].
    pub fn superclass_indices(&self) -> Vec<usize> {
        let names = self.superclass_names();
        self.classes
            .iter()
            .map(|c| {
                names
                    .binary_search_by(|n| n.as_str().cmp(self.superclass_of(c)))
                    .expect("superclass present by construction")
            })
            .collect()
    }

    pub fn object_size_of(&self, class: &str) -> Option<ObjectSize> {
        self.object_size.get(class).copied()
    }
}

/// Validated manifest entries bound to a taxonomy.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub entries: Vec<VideoManifestEntry>,
    pub taxonomy: ClassTaxonomy,
}

impl Manifest {
    pub fn new(entries: Vec<VideoManifestEntry>, taxonomy: ClassTaxonomy) -> Result<Self> {
        taxonomy.validate()?;
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !(e.start.is_finite() && e.end.is_finite() && 0.0 <= e.start && e.start < e.end) {
                return Err(Error::Argument(format!(
                    "video `{}`: malformed interval [{}, {}]",
                    e.video_id, e.start, e.end
                )));
            }
            taxonomy.class_index(&e.label)?;
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::Argument(format!("duplicate video id `{}`", e.video_id)));
            }
        }
        Ok(Manifest { entries, taxonomy })
    }

    /// The built-in reference manifest for the mimed-action benchmark.
    pub fn reference_mimetics() -> Self {
        let taxonomy: ClassTaxonomy =
            serde_json::from_str(include_str!("../../data/mimetics/taxonomy.json"))
                .expect("bundled taxonomy parses");
        let entries = parse_manifest_csv(
            include_str!("../../data/mimetics/manifest.csv").as_bytes(),
            Path::new("<bundled manifest>"),
        )
        .expect("bundled manifest parses");
        let m = Manifest::new(entries, taxonomy).expect("bundled manifest is valid");
        m.check_trimmed_durations(1.0, 10.0)
            .expect("bundled clips are trimmed to 1-10 s");
        m
    }

    /// Every clip must last between `min` and `max` seconds.
    pub fn check_trimmed_durations(&self, min: f64, max: f64) -> Result<()> {
        for e in &self.entries {
            let d = e.duration();
            if !(min..=max).contains(&d) {
                return Err(Error::Argument(format!(
                    "video `{}` lasts {d:.2} s, outside [{min}, {max}]",
                    e.video_id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Class index of each entry, in entry order.
    pub fn labels(&self) -> Vec<usize> {
        self.entries
            .iter()
            .map(|e| self.taxonomy.index_of(&e.label).expect("validated"))
            .collect()
    }

    /// Number of videos per class name (classes with no video included as 0).
    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> =
            self.taxonomy.classes.iter().map(|c| (c.clone(), 0)).collect();
        for e in &self.entries {
            *counts.get_mut(&e.label).expect("validated") += 1;
        }
        counts
    }

    /// `(classes, videos)` per object-size label.
    pub fn object_size_partition(&self) -> BTreeMap<ObjectSize, (usize, usize)> {
        let mut out = BTreeMap::new();
        for (class, n) in self.class_counts() {
            if let Some(size) = self.taxonomy.object_size_of(&class) {
                let slot = out.entry(size).or_insert((0, 0));
                slot.0 += 1;
                slot.1 += n;
            }
        }
        out
    }

    pub fn entry(&self, video_id: &str) -> Option<&VideoManifestEntry> {
        self.entries.iter().find(|e| e.video_id == video_id)
    }
}

fn parse_manifest_csv<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<VideoManifestEntry>> {
    const HEADER: [&str; 8] = [
        "video_id",
        "source_url",
        "start",
        "end",
        "label",
        "is_mime_artist",
        "object_relevant",
        "scene_relevant",
    ];
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse {
        path: path.into(),
        line: 1,
        msg: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("expected header `{}`", HEADER.join(",")),
        });
    }
    let mut entries = Vec::new();
    for (i, rec) in rdr.deserialize::<VideoManifestEntry>().enumerate() {
        let entry = rec.map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 2,
            msg: e.to_string(),
        })?;
        if !(entry.start >= 0.0 && entry.start < entry.end) {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 2,
                msg: format!("malformed interval [{}, {}]", entry.start, entry.end),
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn load_taxonomy(path: &Path) -> Result<ClassTaxonomy> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let t: ClassTaxonomy = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    t.validate()?;
    Ok(t)
}

pub fn save_taxonomy(path: &Path, taxonomy: &ClassTaxonomy) -> Result<()> {
    let text = serde_json::to_string_pretty(taxonomy).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Loads a manifest CSV and checks every label against the taxonomy.
pub fn load_manifest(manifest_path: &Path, taxonomy_path: &Path) -> Result<Manifest> {
    let taxonomy = load_taxonomy(taxonomy_path)?;
    let file = fs::File::open(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let entries = parse_manifest_csv(file, manifest_path)?;
    Manifest::new(entries, taxonomy)
}

pub fn save_manifest(path: &Path, entries: &[VideoManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e.into(),
    })?;
    for e in entries {
        w.serialize(e).map_err(|e| Error::Io {
            path: path.into(),
            source: e.into(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
