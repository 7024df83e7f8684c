pub mod decode;
pub mod eval;
pub mod gen;
pub mod selftest;
pub mod tokenize;
pub mod train;
