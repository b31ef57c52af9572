//! Isolated sign recognition from colour-glove video: segmentation, hand
//! tracking, hand shape and head motion features, HMM training and
//! sequential fusion of manual and non-manual channels.

pub mod features;
pub mod fusion;
pub mod glove;
pub mod head;
pub mod hmm;
pub mod ingest;
pub mod mask;
pub mod pipeline;
pub mod shape;
pub mod track;
pub mod tutor;

pub use features::{FeatureLayout, FeatureSequence, Modality, ModalityGroup};
pub use fusion::{ClusterMap, FusionDecision, ModelBanks};
pub use hmm::{HmmBank, SignHmm, TrainConfig};
pub use ingest::{FaceBox, FrameSequence, LabeledSequence, SignCatalog};
pub use mask::BinaryMask;
pub use shape::{HandShapeVector, TemplateLibrary};
pub use track::{Trajectory, TrajectoryPoint};
pub use tutor::{Verdict, VerdictKind};
