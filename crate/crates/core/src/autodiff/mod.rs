//! Reverse-mode differentiable array engine.
//!
//! A [`Tape`] records primitive operations during a forward pass;
//! [`Tape::backward`] replays them in reverse to accumulate exact
//! gradients for every tracked leaf. Parameters live in a [`ParamStore`]
//! and are bound onto a fresh tape each training step via [`Binder`];
//! [`AdamState`] applies the updates.

mod adam;
mod matmul;
pub mod ops;
mod params;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use ops::{binary_cross_entropy, causal_dilated_conv1d, concat, dropout, BCE_CLAMP};
pub use params::{Binder, Param, ParamStore};
pub use tape::{Gradients, Tape};
pub use tensor::Tensor;

use crate::container::Container;
use crate::error::Result;

/// Serialize a parameter store into a checkpoint container.
///
/// Entry names are `p{index:04}.{name}` so load order matches bind order
/// regardless of alphabetical layout.
pub fn params_to_container(store: &ParamStore) -> Result<Container> {
    let mut c = Container::new();
    for (i, p) in store.iter().enumerate() {
        c.insert(&format!("p{i:04}.{}", p.name), p.shape.clone(), p.values.clone())?;
    }
    Ok(c)
}

/// Restore values into a freshly built store with the same layout.
pub fn params_from_container(store: &mut ParamStore, c: &Container) -> Result<()> {
    use crate::error::Error;
    if c.len() != store.len() {
        return Err(Error::Contract(format!(
            "checkpoint has {} arrays, model wants {}",
            c.len(),
            store.len()
        )));
    }
    for i in 0..store.len() {
        let p = store.get_mut(i);
        let entry = c.get(&format!("p{i:04}.{}", p.name))?;
        if entry.shape != p.shape {
            return Err(Error::Contract(format!(
                "checkpoint shape {:?} does not match parameter `{}` {:?}",
                entry.shape, p.name, p.shape
            )));
        }
        p.values.clone_from(&entry.values);
    }
    Ok(())
}
