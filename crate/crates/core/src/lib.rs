//! milliMamba: a desk-scale radar-to-pose pipeline.
//!
//! The crate covers the whole chain: synthetic FMCW radar cubes
//! ([`radar_sim`]), the clutter-removal / subsampling / 3D-FFT preprocessing
//! ([`dsp`]), a cross-view bidirectional state-space encoder ([`encoder`]),
//! a multi-frame spatio-temporal attention decoder ([`decoder`]), OKS and
//! velocity objectives plus AP evaluation ([`objective`]), and the training
//! / inference workflows ([`pipeline`]). Everything runs on a hand-built
//! reverse-mode tensor core ([`tensor`]); no ML framework is involved.

pub mod decoder;
pub mod diagnostics;
pub mod dsp;
pub mod encoder;
pub mod nn;
pub mod objective;
pub mod pipeline;
pub mod pose;
pub mod radar_sim;
pub mod tensor;
