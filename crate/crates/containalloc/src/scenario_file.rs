//! Scenario ingestion from a TOML config file.
//!
//! The document has a `[cluster]` section (machine count, capacity classes,
//! fail rate, rack distances) and one `[[applications]]` table per
//! application, each with a `ureq` and a `[[applications.microservices]]`
//! table per service carrying the columns name, consumes, msreq, res, thr
//! and fail. `consumes` refers to other services of the same application by
//! name.
//!
//! ```toml
//! [cluster]
//! machine_count = 4
//! capacity_classes = [100.0, 200.0, 400.0, 800.0]
//! fail_rate = 0.025
//! intra_rack_distance = 1.0
//! inter_rack_distance = 4.0
//!
//! [[applications]]
//! ureq = 1.0
//!
//! [[applications.microservices]]
//! name = "payment"
//! consumes = []
//! msreq = 1.4
//! res = 0.1
//! thr = 10.0
//! fail = 0.0002
//! ```

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{
    build_two_rack_topology, ApplicationSpec, MicroserviceSpec, ModelError, Scenario,
};

#[derive(Debug, Error)]
pub enum ScenarioFileError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("application {app}, microservice `{service}`: missing field `{field}`")]
    MissingField {
        app: usize,
        service: String,
        field: &'static str,
    },
    #[error("application {app}: duplicate microservice name `{name}`")]
    DuplicateName { app: usize, name: String },
    #[error("application {app}, microservice `{service}`: consumes unknown service `{provider}`")]
    UnknownProvider {
        app: usize,
        service: String,
        provider: String,
    },
    #[error(transparent)]
    Validation(#[from] ModelError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    cluster: RawCluster,
    #[serde(default)]
    applications: Vec<RawApplication>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCluster {
    machine_count: usize,
    capacity_classes: Vec<f64>,
    fail_rate: f64,
    intra_rack_distance: f64,
    inter_rack_distance: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawApplication {
    ureq: f64,
    #[serde(default)]
    microservices: Vec<RawMicroservice>,
}

// Fields are optional at parse time so a missing entry can be reported with
// the service it belongs to rather than a line number alone.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMicroservice {
    name: Option<String>,
    consumes: Option<Vec<String>>,
    msreq: Option<f64>,
    res: Option<f64>,
    thr: Option<f64>,
    fail: Option<f64>,
}

fn convert_application(app_index: usize, raw: RawApplication) -> Result<ApplicationSpec, ScenarioFileError> {
    let mut names = Vec::with_capacity(raw.microservices.len());
    for (i, ms) in raw.microservices.iter().enumerate() {
        let name = ms
            .name
            .clone()
            .ok_or_else(|| ScenarioFileError::MissingField {
                app: app_index,
                service: format!("#{i}"),
                field: "name",
            })?;
        if names.contains(&name) {
            return Err(ScenarioFileError::DuplicateName {
                app: app_index,
                name,
            });
        }
        names.push(name);
    }

    let mut microservices = Vec::with_capacity(raw.microservices.len());
    for (i, ms) in raw.microservices.into_iter().enumerate() {
        let name = names[i].clone();
        let field = |field: &'static str| ScenarioFileError::MissingField {
            app: app_index,
            service: name.clone(),
            field,
        };
        let consumes = ms.consumes.ok_or_else(|| field("consumes"))?;
        let providers = consumes
            .iter()
            .map(|provider| {
                names.iter().position(|n| n == provider).ok_or_else(|| {
                    ScenarioFileError::UnknownProvider {
                        app: app_index,
                        service: name.clone(),
                        provider: provider.clone(),
                    }
                })
            })
            .collect::<Result<Vec<usize>, _>>()?;
        let msreq = ms.msreq.ok_or_else(|| field("msreq"))?;
        let res = ms.res.ok_or_else(|| field("res"))?;
        let thr = ms.thr.ok_or_else(|| field("thr"))?;
        let fail = ms.fail.ok_or_else(|| field("fail"))?;
        microservices.push(MicroserviceSpec {
            name,
            providers,
            msreq,
            res,
            thr,
            fail,
        });
    }
    Ok(ApplicationSpec {
        ureq: raw.ureq,
        microservices,
    })
}

/// Parses and validates a scenario document.
pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioFileError> {
    let raw: RawDocument = toml::from_str(text)?;
    let applications = raw
        .applications
        .into_iter()
        .enumerate()
        .map(|(i, app)| convert_application(i, app))
        .collect::<Result<Vec<_>, _>>()?;
    let topology = build_two_rack_topology(
        raw.cluster.machine_count,
        &raw.cluster.capacity_classes,
        raw.cluster.fail_rate,
        raw.cluster.intra_rack_distance,
        raw.cluster.inter_rack_distance,
    )?;
    Ok(Scenario::new(applications, topology)?)
}

/// Loads a scenario from a TOML file.
pub fn load_scenario_file(path: &Path) -> Result<Scenario, ScenarioFileError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text)
}
