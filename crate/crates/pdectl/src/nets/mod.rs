//! Convolutional predictor and corrector networks: a compact encoder-decoder
//! with residual blocks, a per-time-scale model bank for midpoint
//! prediction, and the force-estimator heads.

mod heads;
mod layers;
mod model;

pub use heads::{
    analytic_cfe_burger, analytic_cfe_burger_taped, cfe_infer_taped, op_predict, op_predict_taped,
    CfeMode, CfeOutput, OPModelBank,
};
pub use layers::{
    activation, concat_channels, conv, crop, dense, pad_reflect, slice_channels, upsample2x,
};
pub use model::{forward, init_params, padded_size, NetSpec, ParamSet, TapedParams};
