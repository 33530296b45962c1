pub mod bessel;
pub mod linalg;
pub mod quad;
