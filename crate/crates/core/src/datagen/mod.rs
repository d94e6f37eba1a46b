//! Seeded synthetic massing families standing in for a real labelled corpus.

mod dataset;
mod human;
mod machine;

pub use dataset::{
    footprint_variance, gen_dataset, gen_sample, load_rows, sample_human_spec, sample_machine_spec, Manifest,
    ManifestRow, Split, SplitCounts, MANIFEST_NAME,
};
pub use human::{gen_human_form, is_six_connected, plan_human_form, rasterize_human, HumanFormSpec, HumanPlan, MAX_ATTEMPTS};
pub use machine::{gen_machine_form, plan_machine_form, rasterize_machine, Cuboid, FacadeType, MachineFormSpec, MachinePlan};
