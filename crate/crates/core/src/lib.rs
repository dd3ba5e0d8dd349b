pub mod convolution;
pub mod data_fields;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod holder;
pub mod iteration;
pub mod kernels;
pub mod quadrature;
pub mod spectral;

pub use data_fields::{Family, Params, Point3};
pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField, TimeSlab, VectorField};

/// Sizes the worker pool used with the `parallel` feature. Call once, before
/// any computation; without the feature this does nothing.
pub fn init_threads(threads: usize) -> Result<()> {
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

/// `items.map(f)` in order, in parallel with the `parallel` feature.
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    items.iter().map(f).collect()
}
