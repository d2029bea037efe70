//! Synthetic phantoms, noise injection and file formats.

pub mod formats;
mod noise;
mod phantom;

pub use noise::{add_noise, NoiseSpec};
pub use phantom::{render_phantom, Phantom, PhantomKind};
