//! Profiles, dyadic step functions, generator families and the discretized
//! synthesis operator.

pub mod discretize;
pub mod dyadic;
pub mod family;
pub(crate) mod poly;
pub mod profile;

pub use discretize::{discretize_synthesis, synthesis_stability, SynthesisMatrix, SynthesisStability};
pub use dyadic::DyadicFunction;
pub use family::{GeneratorFamily, GeneratorRule, ModulusBound, ProbeConfig, UniformGrid};
pub use profile::{Profile1D, Shape, TensorProfile};
