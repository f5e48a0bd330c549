//! Bags, synthetic generation, splitting, sampling and on-disk format.

mod bag;
mod generate;
mod io;
mod sampler;
mod split;

pub use bag::{bag_label, Bag, Instance, InstanceId};
pub use generate::{generate_synthetic, Dataset, GenSpec, Generated, SplitName};
pub use io::{
    load_dataset, read_manifest, save_dataset, BagRecord, DatasetManifest, FileRecord,
    DATASET_FORMAT, MANIFEST_FILE,
};
pub use sampler::{sample_instance_batch, SampledInstance, Sampling};
pub use split::{largest_remainder, split_dataset};
