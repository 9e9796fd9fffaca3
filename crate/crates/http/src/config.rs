use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Doc,
    Review,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Doc => "doc",
            Role::Review => "review",
        })
    }
}

impl FromStr for Role {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "doc" => Ok(Role::Doc),
            "review" => Ok(Role::Review),
            other => Err(ConfigError::Invalid {
                var: "role",
                value: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockMode {
    #[default]
    Real,
    /// Deterministic clock: every reading advances one second, sleeps are
    /// instantaneous.
    Scripted,
}

impl FromStr for ClockMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(ClockMode::Real),
            "scripted" => Ok(ClockMode::Scripted),
            other => Err(ConfigError::Invalid {
                var: "REVBRIDGE_CLOCK",
                value: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("environment variable {0} is required")]
    Missing(&'static str),
    #[error("invalid value {value:?} for {var}")]
    Invalid { var: &'static str, value: String },
}

/// Settings for one service process.
///
/// | variable                  | meaning                                         |
/// |---------------------------|-------------------------------------------------|
/// | `REVBRIDGE_PORT`          | listen port (default 8081 doc, 8082 review)     |
/// | `REVBRIDGE_SECRET`        | shared bridge secret (required)                 |
/// | `REVBRIDGE_STATE_FILE`    | JSON file the state is persisted to             |
/// | `REVBRIDGE_CLOCK`         | `real` or `scripted`                            |
/// | `REVBRIDGE_PEER_URL`      | base URL of the other service                   |
/// | `REVBRIDGE_DOC_URL`       | public doc-service URL used in login links      |
/// | `REVBRIDGE_SEED`          | seed for id and nonce generation                |
/// | `REVBRIDGE_TEST_ENDPOINTS`| `1` enables /outbox, /events and /admin routes  |
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub role: Role,
    pub port: u16,
    pub secret: String,
    pub state_file: Option<PathBuf>,
    pub clock: ClockMode,
    pub peer_url: String,
    pub doc_public_url: String,
    pub seed: Option<u64>,
    pub test_endpoints: bool,
}

impl ServiceConfig {
    pub fn from_env(role: Role) -> Result<Self, ConfigError> {
        Self::from_lookup(role, |k| std::env::var(k).ok())
    }

    pub fn from_lookup(
        role: Role,
        get: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ConfigError> {
        let parse = |var: &'static str| -> Result<Option<u64>, ConfigError> {
            get(var)
                .map(|v| {
                    v.parse().map_err(|_| ConfigError::Invalid { var, value: v })
                })
                .transpose()
        };
        let default_port = match role {
            Role::Doc => 8081,
            Role::Review => 8082,
        };
        let port = match parse("REVBRIDGE_PORT")? {
            Some(p) => u16::try_from(p).map_err(|_| ConfigError::Invalid {
                var: "REVBRIDGE_PORT",
                value: p.to_string(),
            })?,
            None => default_port,
        };
        let secret = get("REVBRIDGE_SECRET")
            .filter(|s| !s.is_empty())
            .ok_or(ConfigError::Missing("REVBRIDGE_SECRET"))?;
        let clock = get("REVBRIDGE_CLOCK")
            .map(|c| c.parse())
            .transpose()?
            .unwrap_or_default();
        let peer_default = match role {
            Role::Doc => "http://127.0.0.1:8082",
            Role::Review => "http://127.0.0.1:8081",
        };
        let peer_url = get("REVBRIDGE_PEER_URL").unwrap_or_else(|| peer_default.to_string());
        let doc_public_url = get("REVBRIDGE_DOC_URL").unwrap_or_else(|| match role {
            Role::Doc => format!("http://127.0.0.1:{port}"),
            Role::Review => peer_url.clone(),
        });
        Ok(Self {
            role,
            port,
            secret,
            state_file: get("REVBRIDGE_STATE_FILE").map(PathBuf::from),
            clock,
            peer_url,
            doc_public_url,
            seed: parse("REVBRIDGE_SEED")?,
            test_endpoints: get("REVBRIDGE_TEST_ENDPOINTS").is_some_and(|v| v == "1" || v == "true"),
        })
    }
}
