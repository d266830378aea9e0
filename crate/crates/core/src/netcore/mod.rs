//! Generator and discriminator networks.
//!
//! Both networks keep their parameters in one flat vector (`θ_G`, `θ_D`) so
//! that meta-updates act on plain slices. Batch-norm running statistics live
//! in a separate buffer vector and are not parameters.

mod discriminator;
mod generator;
pub(crate) mod layers;

pub use discriminator::{DiscriminatorArch, DiscriminatorCache, DiscriminatorNet};
pub use generator::{GeneratorArch, GeneratorCache, GeneratorNet};
pub use layers::{commit_running_stats, Phase, RunningStat};

use crate::{Error, Result};

/// Shared surface of both networks.
pub trait Network {
    fn param_count(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn buffers(&self) -> &[f64];
    fn buffers_mut(&mut self) -> &mut [f64];

    /// Re-initialize parameters from `seed` and reset running statistics.
    fn init_params(&mut self, seed: u64) -> Vec<f64>;

    fn flatten_params(&self) -> Vec<f64> {
        self.params().to_vec()
    }

    fn load_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Length {
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        self.params_mut().copy_from_slice(flat);
        Ok(())
    }

    fn load_buffers(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.buffers().len() {
            return Err(Error::Length {
                expected: self.buffers().len(),
                actual: flat.len(),
            });
        }
        self.buffers_mut().copy_from_slice(flat);
        Ok(())
    }
}
