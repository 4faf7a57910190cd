pub mod error;
pub mod evolve;
pub mod grid;
pub mod interp;
pub mod modulation;
pub mod nonlinearity;
pub mod soliton;
pub mod spectral;
