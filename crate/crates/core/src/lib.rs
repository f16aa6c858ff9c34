//! Gradient-boosted generalised additive models with piecewise-polynomial
//! shape functions.
//!
//! Each output `i` is modelled as `F_i(x) = b_i + sum_k f_ik(x_k)` where
//! every `f_ik` is a piecewise cubic learnt by boosting depth-1 trees whose
//! leaves hold monomials `gamma (x - u)^d`. Per feature, the continuity
//! order, maximum degree, monotonicity and curvature can be fixed, and an
//! allow-mask chooses which features enter which output.
//!
//! ```no_run
//! use polygam::{BinLayout, ConstraintSpec, FeatureConstraint, SplitScheme, TrainConfig, TaskKind};
//!
//! let data = polygam::load_csv("housing.csv", "MEDV", TaskKind::Regression, &[]).unwrap();
//! let parts = polygam::partition(&data, 0.1, 0.2, 7);
//! let train = data.subset(&parts.train);
//! let valid = data.subset(&parts.valid);
//! let layout = BinLayout::fit(&train, &SplitScheme::default());
//! let spec = ConstraintSpec::uniform(train.feature_kinds(), 1, FeatureConstraint::free(3));
//! let out = polygam::train(&train, Some(&valid), &layout, &spec, &TrainConfig::default()).unwrap();
//! let (_raw, _yhat) = out.model.predict(&data.subset(&parts.test)).unwrap();
//! ```

pub mod booster;
pub mod data;
pub mod error;
pub mod explain;
pub mod loss;
pub mod model;
pub mod uncertainty;

pub use booster::{train, train_with_observer, LogRecord, TrainConfig, TrainOutput, TrainingLog, UpdateKind};
pub use data::{
    assign_bin, bin_transform, build_bins, coarsen, load_csv, partition, read_feature_columns, BinLayout, Dataset, FeatureBins,
    FeatureKind, Partition, SplitScheme, Task, TaskKind,
};
pub use error::{Error, Result};
pub use explain::{elasticity, export_shapes, render_svg, ShapeGrid};
pub use loss::{derivatives, link_apply, loss_eval, loss_from_raw, DerivativeBatch};
pub use model::{ConstraintSpec, FeatureConstraint, ParameterStore, Side};
pub use uncertainty::{param_se, shape_ci, UncertaintyTable};
