pub mod boundary;
pub mod derivatives;
pub mod error;
pub mod evidence;
pub mod experiment;
pub mod forward;
pub mod geometry;
pub mod laplace;
pub mod map;
pub mod mcmc;
pub mod measure;
pub mod mie;
pub mod model;
pub mod samples;
pub mod special;
pub mod topo;
