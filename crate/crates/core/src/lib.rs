//! Voxel-based classification of architectural massing forms.
//!
//! The pipeline runs mesh parsing and voxelization ([`geometry`]), a four-block
//! 3D CNN with hand-written adjoints ([`nn`], [`model`]), SGD-with-momentum
//! training ([`training`]), confusion-matrix metrics ([`evaluation`]) and
//! input-gradient saliency maps ([`saliency`]). [`datagen`] produces seeded
//! synthetic form families to run the whole thing end to end.

pub mod datagen;
pub mod error;
pub mod evaluation;
pub mod files;
pub mod geometry;
pub mod model;
pub mod nn;
pub mod saliency;
pub mod training;

pub use error::{Error, Result};
pub use geometry::{FillMode, MeshFormat, TriangleMesh, ValueKind, VoxelGrid};
pub use model::{ArchConfig, Network};
pub use nn::Tensor;

/// Class label of a form: 0 = architect-designed, 1 = generator-produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Human = 0,
    Machine = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Human, Label::Machine];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Label::Human),
            1 => Ok(Label::Machine),
            _ => Err(Error::Argument(format!("class id {i} is not a binary label"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::Machine => "machine",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "human" | "h" | "0" => Ok(Label::Human),
            "machine" | "m" | "1" => Ok(Label::Machine),
            _ => Err(Error::Argument(format!("unknown label `{s}`"))),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
