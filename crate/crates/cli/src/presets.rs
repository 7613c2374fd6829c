//! Bundled experiment configs.

pub struct Preset {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! preset {
    ($name:literal) => {
        Preset { name: $name, text: include_str!(concat!("../configs/", $name, ".cfg")) }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!("group1"),
    preset!("group2"),
    preset!("group3"),
    preset!("group4"),
    preset!("group5"),
    preset!("group6"),
    preset!("group7"),
    preset!("bivariate_group1"),
    preset!("bivariate_group2"),
    preset!("bivariate_group3"),
];

pub fn find(name: &str) -> Option<&'static Preset> {
    let name = name.strip_suffix(".cfg").unwrap_or(name);
    PRESETS.iter().find(|p| p.name == name)
}

impl Preset {
    /// First comment line of the config.
    pub fn summary(&self) -> &'static str {
        self.text.lines().next().and_then(|l| l.strip_prefix('#')).map_or("", str::trim)
    }
}
