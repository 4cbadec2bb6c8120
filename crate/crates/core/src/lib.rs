//! Hypernetworks that map a dataset to the weights of a downstream predictor,
//! together with the generalization certificates for the predictors they emit.

pub mod bounds;
pub mod hypernet;
pub mod metalearn;
pub mod tasks;
pub mod tensor;
