pub mod broadcast;
pub mod cli;
pub mod erasure;
pub mod exactmath;
pub mod exchange;
pub mod infotools;
pub mod polyhedra;
pub mod region;
