pub mod chain;
pub mod linalg;
pub mod matching;
pub mod potential;
pub mod rational;
pub mod identity;
pub mod kernel;
pub mod lattice;
pub mod rotor;
pub mod z2;
pub mod transfinite;
pub mod abelian;
pub mod ppm;
pub mod stack;
pub mod bounds;
pub mod gen;
pub mod cli;
