pub mod manifest;
pub mod wxg1;
