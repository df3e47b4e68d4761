//! Name-keyed registries of interchangeable strategies.
//!
//! Each pluggable stage of the analysis (detrending, waiting-time binning,
//! synthetic market model) is a trait object. A [`Registry`] maps a
//! configuration name onto a factory that builds the boxed strategy from a
//! parameter struct, so runs can switch implementations from a config file
//! or CLI flag without touching the pipeline code.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

type Factory<T, P> = Box<dyn Fn(&P) -> Result<Box<T>> + Send + Sync>;

pub struct Registry<T: ?Sized, P> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T, P>>,
}

impl<T: ?Sized, P> Registry<T, P> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any earlier entry.
    pub fn register<F>(&mut self, name: &str, factory: F) -> &mut Self
    where
        F: Fn(&P) -> Result<Box<T>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_owned(), Box::new(factory));
        self
    }

    pub fn build(&self, name: &str, params: &P) -> Result<Box<T>> {
        match self.factories.get(name) {
            Some(factory) => factory(params),
            None => Err(Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_owned(),
                available: self.names().collect::<Vec<_>>().join(", "),
            }),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}
