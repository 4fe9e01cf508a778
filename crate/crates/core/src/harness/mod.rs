pub mod corpus;
pub mod experiment;
pub mod report;
pub mod synth;
pub mod toy;
