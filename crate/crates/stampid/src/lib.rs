//! Stamp image classification by country and publication year.
//!
//! The pipeline decodes an image, resizes it to a canonical square,
//! turns it into one of three fixed-length descriptors (color
//! histogram, HOG, DAISY) or their concatenation, and classifies it
//! with a linear model (one-vs-rest SVM or multinomial logistic
//! regression) trained by seeded mini-batch gradient descent. The
//! `eval` module runs the repeated stratified-split protocol and
//! renders confusion-matrix reports; `cli` wires everything into the
//! `stampid` binary.

pub mod cli;
pub mod data;
pub mod eval;
pub mod features;
pub mod imgio;
pub mod learn;
pub mod synthetic;
