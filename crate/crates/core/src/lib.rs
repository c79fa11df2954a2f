pub mod dispersion;
pub mod error;
pub mod nonlinearity;
pub mod spectral;
pub mod boussinesq;
pub mod nls;
pub mod wave;
pub mod composer;
pub mod norms;
pub mod config;
pub mod harness;
pub mod io;
