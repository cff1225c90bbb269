//! Anatomy-shared and anatomy-specific learners: the PN0-PN4 block family,
//! the parameter registry and the forward context that binds them.

mod block;
mod forward;
mod registry;

pub use block::{Parameterization, PnBlock, PnKind, SE_REDUCTION};
pub use forward::{Forward, Mode};
pub use registry::{AnatomyId, ParamEntry, ParamRegistry, ParamRole, Partition, PartitionCounts};
