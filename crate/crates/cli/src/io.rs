//! Instance and contract files.

use std::fs;
use std::path::Path;

use repurchase_core::{ClientDistribution, Contract, MarketInstance, Matrix, TypeGrid};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// On-disk market description shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub valuations: Vec<f64>,
    pub capacities: Vec<f64>,
    pub clients: Vec<ClientEntry>,
    pub alpha: f64,
    #[serde(rename = "penalty_M")]
    pub penalty_m: f64,
    #[serde(rename = "demand_floor_D")]
    pub demand_floor_d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// One client's `L x K` type distribution: rows by capacity, columns by
/// valuation, both ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientEntry {
    pub probs: Vec<Vec<f64>>,
}

impl InstanceFile {
    pub fn from_instance(instance: &MarketInstance) -> Self {
        InstanceFile {
            valuations: instance.grid().valuations().to_vec(),
            capacities: instance.grid().capacities().to_vec(),
            clients: instance
                .clients()
                .iter()
                .map(|c| ClientEntry { probs: c.probs().to_rows() })
                .collect(),
            alpha: instance.alpha(),
            penalty_m: instance.penalty(),
            demand_floor_d: instance.demand_floor(),
            epsilon: None,
            seed: None,
        }
    }

    pub fn to_instance(&self) -> Result<MarketInstance, CliError> {
        let grid = TypeGrid::new(self.valuations.clone(), self.capacities.clone())
            .map_err(|e| CliError::input(format!("valuations/capacities: {e}")))?;
        let (l, k) = (grid.num_capacities(), grid.num_valuations());
        let mut clients = Vec::with_capacity(self.clients.len());
        for (i, entry) in self.clients.iter().enumerate() {
            let probs = Matrix::from_rows(entry.probs.clone())
                .map_err(|e| CliError::input(format!("clients[{i}].probs: {e}")))?;
            if probs.shape() != (l, k) {
                return Err(CliError::input(format!(
                    "clients[{i}].probs: expected {l}x{k} (capacities x valuations), got {}x{}",
                    probs.rows(),
                    probs.cols()
                )));
            }
            let dist = ClientDistribution::new(probs)
                .map_err(|e| CliError::input(format!("clients[{i}]: {e}")))?;
            clients.push(dist);
        }
        if let Some(eps) = self.epsilon {
            if eps.is_nan() || eps <= 0.0 {
                return Err(CliError::input(format!("epsilon: {eps} must be positive")));
            }
        }
        MarketInstance::new(grid, clients, self.alpha, self.penalty_m, self.demand_floor_d).map_err(
            |e| {
                let msg = e.to_string();
                let msg = msg
                    .replace("invalid penalty", "invalid penalty_M")
                    .replace("invalid demand_floor", "invalid demand_floor_D");
                CliError::input(msg)
            },
        )
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractFile {
    allocation: Matrix,
    payment: Matrix,
}

/// A menu read from a contract file or from the `contract` field of a solve
/// report, plus the relaxation it was produced with when the file says so.
#[derive(Debug, Clone)]
pub struct LoadedContract {
    pub contract: Contract,
    pub epsilon: Option<f64>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn parse_instance(text: &str) -> Result<MarketInstance, CliError> {
    parse_instance_file(text)?.to_instance()
}

pub fn parse_instance_file(text: &str) -> Result<InstanceFile, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::input(format!("instance: {e}")))
}

pub fn load_instance(path: &Path) -> Result<(InstanceFile, MarketInstance), CliError> {
    let file = parse_instance_file(&read(path)?)
        .map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message)))?;
    let instance = file
        .to_instance()
        .map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message)))?;
    Ok((file, instance))
}

/// Accepts either `{allocation, payment}` or a report carrying them under
/// `contract`. Negative entries are kept so that hand-edited menus can be
/// audited.
pub fn parse_contract(text: &str) -> Result<LoadedContract, CliError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| CliError::input(format!("contract: {e}")))?;
    let (body, epsilon) = match value.get("contract") {
        Some(inner) => (inner.clone(), value.get("epsilon").and_then(Value::as_f64)),
        None => (value, None),
    };
    let file: ContractFile =
        serde_json::from_value(body).map_err(|e| CliError::input(format!("contract: {e}")))?;
    let contract = Contract::from_raw(file.allocation, file.payment)
        .map_err(|e| CliError::input(format!("contract: {e}")))?;
    Ok(LoadedContract { contract, epsilon })
}

pub fn load_contract(path: &Path) -> Result<LoadedContract, CliError> {
    parse_contract(&read(path)?)
        .map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message)))
}

/// Pretty JSON with a trailing newline. Floats use shortest round-trip form.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    text
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "valuations": [1.0, 2.0],
        "capacities": [3.0],
        "clients": [{"probs": [[0.5, 0.5]]}, {"probs": [[0.25, 0.75]]}],
        "alpha": 2.5, "penalty_M": 1.0, "demand_floor_D": 2.0, "seed": 7
    }"#;

    #[test]
    fn parses_sample() {
        let inst = parse_instance(SAMPLE).unwrap();
        assert_eq!(inst.num_clients(), 2);
        assert_eq!(inst.grid().valuations(), &[1.0, 2.0]);
        assert_eq!(inst.demand_floor(), 2.0);
        let back = InstanceFile::from_instance(&inst).to_instance().unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn bad_probabilities_name_the_client() {
        let text = SAMPLE.replace("[[0.25, 0.75]]", "[[0.25, 0.65]]");
        let err = parse_instance(&text).unwrap_err();
        assert!(err.message.contains("clients[1]"), "{}", err.message);
        assert_eq!(err.code, 2);
    }

    #[test]
    fn wrong_shape_names_the_client() {
        let text = SAMPLE.replace("[[0.5, 0.5]]", "[[0.5], [0.5]]");
        let err = parse_instance(&text).unwrap_err();
        assert!(err.message.contains("clients[0].probs"), "{}", err.message);
    }

    #[test]
    fn unknown_and_missing_keys_are_named() {
        let err = parse_instance(&SAMPLE.replace("\"alpha\"", "\"alfa\"")).unwrap_err();
        assert!(err.message.contains("alfa"), "{}", err.message);
        let err = parse_instance(&SAMPLE.replace("\"penalty_M\": 1.0,", "")).unwrap_err();
        assert!(err.message.contains("penalty_M"), "{}", err.message);
    }

    #[test]
    fn invalid_scalars_use_file_keys() {
        let err = parse_instance(&SAMPLE.replace("\"penalty_M\": 1.0", "\"penalty_M\": -1.0")).unwrap_err();
        assert!(err.message.contains("penalty_M"), "{}", err.message);
    }

    #[test]
    fn contract_from_report_or_bare() {
        let bare = r#"{"allocation": [[1.0], [0.5]], "payment": [[2.0], [-1.0]]}"#;
        let c = parse_contract(bare).unwrap();
        assert_eq!(c.contract.payment().to_rows(), vec![vec![2.0], vec![-1.0]]);
        assert_eq!(c.epsilon, None);
        let wrapped = format!(r#"{{"epsilon": 0.01, "contract": {bare}}}"#);
        let c = parse_contract(&wrapped).unwrap();
        assert_eq!(c.epsilon, Some(0.01));
        assert!(parse_contract(r#"{"allocation": [[1.0]], "payment": [[1.0, 2.0]]}"#).is_err());
    }
}
