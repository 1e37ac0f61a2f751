//! Linear regression and one-vs-one support vector machines.

pub mod linreg;
pub mod svm;

pub use linreg::{linreg_fit, linreg_fit_with, FitMethod, LinRegModel, LinRegOptions};
pub use svm::{
    svm_fit_binary, svm_fit_ovo, svm_predict_ovo, Kernel, OvoPrediction, SvmBinary, SvmOneVsOne, SvmOptions,
};
