//! Seeded synthetic datasets on disk and the manifest that indexes them.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::human::{gen_human_form, HumanFormSpec};
use super::machine::{gen_machine_form, FacadeType, MachineFormSpec};
use crate::error::{Error, Result};
use crate::files::{create_dir_all, load_grid, read_text, save_grid, write_atomic};
use crate::geometry::VoxelGrid;
use crate::training::Dataset;
use crate::Label;

pub const MANIFEST_NAME: &str = "manifest.tsv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Argument(format!("unknown split `{s}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Samples per class in each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    /// Relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub label: Label,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                location: format!("manifest line {}", n + 1),
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [path, label, split] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            };
            let label: Label = label.parse().map_err(|e: Error| err(e.to_string()))?;
            let split: Split = split.parse().map_err(|e: Error| err(e.to_string()))?;
            if !seen.insert(path.to_string()) {
                return Err(err(format!("duplicate path `{path}`")));
            }
            rows.push(ManifestRow {
                path: path.to_string(),
                label,
                split,
            });
        }
        Ok(Manifest { rows })
    }

    pub fn to_tsv(&self) -> String {
        self.rows
            .iter()
            .map(|r| format!("{}\t{}\t{}\n", r.path, r.label, r.split))
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestRow> {
        self.rows.iter().filter(|r| r.split == split).collect()
    }

    pub fn count(&self, split: Split, label: Label) -> usize {
        self.rows.iter().filter(|r| r.split == split && r.label == label).count()
    }
}

/// Loads the rows' grids into a training set; every grid must be `resolution`^3.
pub fn load_rows(rows: &[&ManifestRow], base: &Path, resolution: usize) -> Result<Dataset> {
    let mut data = Dataset::new(resolution);
    for row in rows {
        let path = base.join(&row.path);
        let grid = load_grid(&path)?;
        if grid.dims() != [resolution; 3] {
            return Err(Error::Shape(format!(
                "{} has dims {:?} but the model resolution is {resolution}",
                path.display(),
                grid.dims()
            )));
        }
        data.push(grid.to_f64(), row.label.index())?;
    }
    Ok(data)
}

/// Machine-class parameter ranges used by [`gen_dataset`].
pub fn sample_machine_spec(rng: &mut impl Rng) -> MachineFormSpec {
    MachineFormSpec {
        unit_count: rng.gen_range(1..=8),
        fill_coefficient: rng.gen_range(0.4..=1.0),
        facade_type: FacadeType::ALL[rng.gen_range(0..3)],
        core_fraction: rng.gen_range(0.0..=0.35),
        rotation_shear_deg: if rng.gen_bool(1.0 / 3.0) { 0.0 } else { rng.gen_range(-30.0..=30.0) },
        seed: rng.gen(),
    }
}

/// Human-class parameter ranges used by [`gen_dataset`].
pub fn sample_human_spec(rng: &mut impl Rng) -> HumanFormSpec {
    HumanFormSpec {
        base_masses: rng.gen_range(2..=6),
        subtraction_count: rng.gen_range(1..=3),
        setback_levels: rng.gen_range(0..=3),
        asymmetry: rng.gen_range(0.3..=1.0),
        seed: rng.gen(),
    }
}

pub fn gen_sample(label: Label, resolution: usize, rng: &mut impl Rng) -> Result<VoxelGrid> {
    match label {
        Label::Human => gen_human_form(&sample_human_spec(rng), resolution),
        Label::Machine => gen_machine_form(&sample_machine_spec(rng), resolution),
    }
}

/// Writes `{split}/{label}_{idx:05}.vxg` for every split and class plus
/// `manifest.tsv` under `out_dir`. Samples are drawn in split, then class, then
/// index order from one stream seeded by `master_seed`.
pub fn gen_dataset(counts: SplitCounts, resolution: usize, master_seed: u64, out_dir: &Path) -> Result<Manifest> {
    if counts.train == 0 || counts.test == 0 {
        return Err(Error::Argument("train and test counts must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let mut manifest = Manifest::default();
    create_dir_all(out_dir)?;
    for split in Split::ALL {
        let n = counts.get(split);
        if n == 0 {
            continue;
        }
        create_dir_all(&out_dir.join(split.as_str()))?;
        for label in Label::ALL {
            for idx in 0..n {
                let grid = gen_sample(label, resolution, &mut rng)?;
                let rel = format!("{split}/{label}_{idx:05}.vxg");
                save_grid(&out_dir.join(&rel), &grid)?;
                manifest.rows.push(ManifestRow { path: rel, label, split });
            }
        }
    }
    write_atomic(&out_dir.join(MANIFEST_NAME), manifest.to_tsv().as_bytes())?;
    Ok(manifest)
}

/// Population variance, across occupied levels `i`, of the occupied-cell count per level.
pub fn footprint_variance(grid: &VoxelGrid) -> f64 {
    let [d, h, w] = grid.dims();
    let counts: Vec<f64> = (0..d)
        .map(|i| grid.data()[i * h * w..(i + 1) * h * w].iter().filter(|v| **v != 0.0).count() as f64)
        .filter(|c| *c > 0.0)
        .collect();
    if counts.is_empty() {
        return 0.0;
    }
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / counts.len() as f64
}
