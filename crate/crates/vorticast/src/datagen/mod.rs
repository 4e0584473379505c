pub mod dataset;
pub mod grf;
pub mod solver;

pub use dataset::{
    generate_dataset, load_dataset, load_meta, read_trajectory, sample_file_name,
    write_trajectory, DatagenError, Dataset, DatasetMeta, SplitCounts, SplitSpec, Trajectory,
    DATASET_META, TRAJ_MAGIC,
};
pub use grf::{grf_spectrum, sample_grf, signed_freq};
pub use solver::{Forcing, SolverConfig, SolverError, VorticitySolver};
