//! Name-keyed registries of interchangeable strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} '{name}'; available: {available}")]
pub struct UnknownStrategy {
    pub kind: String,
    pub name: String,
    pub available: String,
}

/// Strategies behind a common trait object, looked up by name.
pub struct Registry<T: ?Sized> {
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Registers `item` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: impl Into<String>, item: Arc<T>) {
        self.entries.insert(name.into(), item);
    }

    pub fn get(&self, name: &str) -> Option<Arc<T>> {
        self.entries.get(name).cloned()
    }

    pub fn resolve(&self, kind: &str, name: &str) -> Result<Arc<T>, UnknownStrategy> {
        self.get(name).ok_or_else(|| UnknownStrategy {
            kind: kind.to_string(),
            name: name.to_string(),
            available: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }
}

impl<T: ?Sized> Default for Registry<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("names", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter: Send + Sync {
        fn hello(&self) -> String;
    }
    struct En;
    impl Greeter for En {
        fn hello(&self) -> String {
            "hello".into()
        }
    }

    #[test]
    fn lookup_and_unknown() {
        let mut r: Registry<dyn Greeter> = Registry::new();
        r.register("en", Arc::new(En));
        assert_eq!(r.get("en").unwrap().hello(), "hello");
        let err = r.resolve("greeter", "fr").err().unwrap();
        assert!(err.to_string().contains("available: en"));
    }
}
