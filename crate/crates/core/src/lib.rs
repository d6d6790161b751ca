pub mod autodiff;
pub mod instance;
pub mod model;
pub mod strategy;
pub mod zoo;
pub mod encoder;
pub mod features;
pub mod embed;
pub mod experiment;
