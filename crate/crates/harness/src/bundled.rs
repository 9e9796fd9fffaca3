//! Scenarios shipped with the harness, with their frozen reports.

use crate::script::ScenarioScript;
use crate::HarnessError;

pub struct Bundled {
    pub name: &'static str,
    pub script: &'static str,
    golden: &'static str,
}

impl Bundled {
    pub fn parse(&self) -> Result<ScenarioScript, HarnessError> {
        ScenarioScript::parse(self.script)
    }

    /// `None` until the golden file has been generated.
    pub fn golden(&self) -> Option<&'static str> {
        (!self.golden.is_empty()).then_some(self.golden)
    }

    /// Path of the golden file inside the source tree.
    pub fn golden_path(&self) -> std::path::PathBuf {
        std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("golden")
            .join(format!("{}.json", self.name))
    }
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(Bundled {
            name: $name,
            script: include_str!(concat!("../scenarios/", $name, ".json")),
            golden: include_str!(concat!("../golden/", $name, ".json")),
        }),*]
    };
}

pub const SCENARIOS: &[Bundled] = bundled![
    "authoring-and-submit",
    "single-round-accept",
    "two-round-revise-accept",
    "reject-without-reviews",
    "reviewer-declines-and-replacement",
    "comment-approval-release",
];

/// Other names scenarios are known by.
const ALIASES: &[(&str, &str)] = &[("full-cycle-2-rounds", "two-round-revise-accept")];

pub fn find(name: &str) -> Option<&'static Bundled> {
    let name = ALIASES
        .iter()
        .find(|(alias, _)| *alias == name)
        .map_or(name, |(_, target)| target);
    SCENARIOS.iter().find(|b| b.name == name)
}
