//! Name → strategy lookup shared by every pluggable family in the crate.

use std::collections::BTreeMap;
use std::fmt;

/// Lookup failure for an unregistered strategy name.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {family} '{name}' (available: {available})")]
pub struct UnknownStrategy {
    pub family: &'static str,
    pub name: String,
    pub available: String,
}

/// A registry of named factories.
///
/// `F` is usually a plain `fn` pointer returning a boxed trait object, so
/// registries can be built once and shared without locking.
pub struct Registry<F> {
    family: &'static str,
    entries: BTreeMap<&'static str, F>,
}

impl<F> Registry<F> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: &'static str, factory: F) -> &mut Self {
        self.entries.insert(name, factory);
        self
    }

    pub fn with(mut self, name: &'static str, factory: F) -> Self {
        self.register(name, factory);
        self
    }

    pub fn get(&self, name: &str) -> Result<&F, UnknownStrategy> {
        self.entries.get(name).ok_or_else(|| UnknownStrategy {
            family: self.family,
            name: name.to_string(),
            available: self.names().collect::<Vec<_>>().join(", "),
        })
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn family(&self) -> &'static str {
        self.family
    }
}

impl<F> fmt::Debug for Registry<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("names", &self.entries.keys().collect::<Vec<_>>())
            .finish()
    }
}
