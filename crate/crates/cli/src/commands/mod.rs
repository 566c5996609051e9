pub mod denoise;
pub mod equiv;
pub mod eval;
pub mod gradcheck;
pub mod plot;
pub mod train;
