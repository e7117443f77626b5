//! The seven navigational context classes and their canonical ordering.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of context classes.
pub const CLASS_COUNT: usize = 7;

/// Environment categories a vehicle traverses, ordered by label index 0..6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextClass {
    OpenSky,
    TreeLinedAvenue,
    SemiOutdoor,
    UrbanCanyon,
    ViaductDown,
    ShallowIndoor,
    DeepIndoor,
}

impl ContextClass {
    /// All classes in label order.
    pub const ALL: [ContextClass; CLASS_COUNT] = [
        ContextClass::OpenSky,
        ContextClass::TreeLinedAvenue,
        ContextClass::SemiOutdoor,
        ContextClass::UrbanCanyon,
        ContextClass::ViaductDown,
        ContextClass::ShallowIndoor,
        ContextClass::DeepIndoor,
    ];

    /// Label index in 0..=6.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Directory name used by the on-disk dataset layout.
    pub fn dir_name(self) -> &'static str {
        match self {
            ContextClass::OpenSky => "open_sky",
            ContextClass::TreeLinedAvenue => "tree_lined_avenue",
            ContextClass::SemiOutdoor => "semi_outdoor",
            ContextClass::UrbanCanyon => "urban_canyon",
            ContextClass::ViaductDown => "viaduct_down",
            ContextClass::ShallowIndoor => "shallow_indoor",
            ContextClass::DeepIndoor => "deep_indoor",
        }
    }

    pub fn from_dir_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.dir_name() == name)
    }

    /// Class names in label order, as stored in model files.
    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.dir_name().to_string()).collect()
    }
}

impl fmt::Display for ContextClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}
