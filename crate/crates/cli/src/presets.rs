//! Named scenarios shipped with the crate (also in `presets/*.json`).

pub const PRESET_NAMES: [&str; 4] = ["qubit-equal", "three-level-weighted", "boson-2site", "two-species-mass"];

pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "qubit-equal" => Some(include_str!("../presets/qubit-equal.json")),
        "three-level-weighted" => Some(include_str!("../presets/three-level-weighted.json")),
        "boson-2site" => Some(include_str!("../presets/boson-2site.json")),
        "two-species-mass" => Some(include_str!("../presets/two-species-mass.json")),
        _ => None,
    }
}
