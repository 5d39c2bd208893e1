pub mod bench;
pub mod bp;
pub mod channel;
pub mod cli;
pub mod codes;
pub mod gradsuite;
pub mod training;
pub mod transformer;
