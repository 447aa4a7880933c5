//! The bundled example problems, compiled in from `scenarios/*.cfg`.

use std::path::Path;

use crate::config::Config;
use crate::error::{CrowdError, Result};

pub const BUNDLED: [(&str, &str); 4] = [
    ("corridor", include_str!("../../../scenarios/corridor.cfg")),
    (
        "room_with_door",
        include_str!("../../../scenarios/room_with_door.cfg"),
    ),
    (
        "two_exit_hall",
        include_str!("../../../scenarios/two_exit_hall.cfg"),
    ),
    (
        "uniform_source_box",
        include_str!("../../../scenarios/uniform_source_box.cfg"),
    ),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn config(name: &str) -> Result<Config> {
    let t = text(name).ok_or_else(|| {
        CrowdError::Parameter(format!(
            "no bundled scenario `{name}` (have {})",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    Config::parse(t, Path::new("."))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_velocity;

    #[test]
    fn bundled_scenarios_validate() {
        for name in names() {
            let spec = config(name).unwrap().to_spec().unwrap();
            assert_eq!((spec.grid.nx(), spec.grid.ny()), (64, 64), "{name}");
            let report = validate_velocity(&spec, 1e-12).unwrap();
            for c in &report.checks {
                if c.name != crate::domain::CHECK_BOUNDARY_LAYER {
                    assert!(c.passed, "{name}: {c:?}");
                }
            }
        }
        assert!(config("atrium").is_err());
    }
}
