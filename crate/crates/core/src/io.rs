//! Versioned JSON schemas for instances, piecewise objectives, and solutions,
//! plus the CCG iteration log as CSV.
//!
//! Files written by [`save_instance`] round-trip bit-exactly: loading and
//! re-saving reproduces the same bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kadapt::ccg::CcgState;
use crate::kadapt::multistage::MultistageSolution;
use crate::kadapt::pwl::PwlObjective;
use crate::kadapt::KAdaptSolution;
use crate::model::DdidInstance;

pub const INSTANCE_SCHEMA: &str = "ddid-v1";
pub const PWL_SCHEMA: &str = "ddid-pwl-v1";
pub const SOLUTION_SCHEMA: &str = "ddid-solution-v1";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema {found:?} (expected {expected:?})")]
    SchemaMismatch { found: String, expected: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    schema: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    metadata: Option<serde_json::Value>,
    instance: DdidInstance,
}

pub fn instance_to_string(inst: &DdidInstance, metadata: Option<serde_json::Value>) -> Result<String, IoError> {
    let file = InstanceFile { schema: INSTANCE_SCHEMA.into(), metadata, instance: inst.clone() };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn save_instance(
    path: impl AsRef<Path>,
    inst: &DdidInstance,
    metadata: Option<serde_json::Value>,
) -> Result<(), IoError> {
    std::fs::write(path, instance_to_string(inst, metadata)?)?;
    Ok(())
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<(DdidInstance, Option<serde_json::Value>), IoError> {
    let text = std::fs::read_to_string(path)?;
    instance_from_str(&text)
}

pub fn instance_from_str(text: &str) -> Result<(DdidInstance, Option<serde_json::Value>), IoError> {
    let file: InstanceFile = serde_json::from_str(text)?;
    if file.schema != INSTANCE_SCHEMA {
        return Err(IoError::SchemaMismatch { found: file.schema, expected: INSTANCE_SCHEMA.into() });
    }
    Ok((file.instance, file.metadata))
}

#[derive(Debug, Serialize, Deserialize)]
struct PwlFile {
    schema: String,
    pwl: PwlObjective,
}

pub fn save_pwl(path: impl AsRef<Path>, pwl: &PwlObjective) -> Result<(), IoError> {
    let file = PwlFile { schema: PWL_SCHEMA.into(), pwl: pwl.clone() };
    std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

pub fn load_pwl(path: impl AsRef<Path>) -> Result<PwlObjective, IoError> {
    let file: PwlFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.schema != PWL_SCHEMA {
        return Err(IoError::SchemaMismatch { found: file.schema, expected: PWL_SCHEMA.into() });
    }
    Ok(file.pwl)
}

/// Solution wrapper; infinities are encoded as the strings "inf" / "-inf".
#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    pub schema: String,
    #[serde(flatten)]
    pub solution: KAdaptSolution,
}

pub fn solution_to_string(sol: &KAdaptSolution) -> Result<String, IoError> {
    let file = SolutionFile { schema: SOLUTION_SCHEMA.into(), solution: sol.clone() };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

pub fn save_solution(path: impl AsRef<Path>, sol: &KAdaptSolution) -> Result<(), IoError> {
    std::fs::write(path, solution_to_string(sol)?)?;
    Ok(())
}

pub fn load_solution(path: impl AsRef<Path>) -> Result<KAdaptSolution, IoError> {
    let file: SolutionFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.schema != SOLUTION_SCHEMA {
        return Err(IoError::SchemaMismatch { found: file.schema, expected: SOLUTION_SCHEMA.into() });
    }
    Ok(file.solution)
}

/// Policy-tree JSON nested by branch path: each node carries the stage's
/// information base and recourse, children fan out over next-stage branches.
pub fn multistage_tree_json(sol: &MultistageSolution) -> serde_json::Value {
    fn node(sol: &MultistageSolution, t: usize, k: usize) -> serde_json::Value {
        let mut obj = serde_json::json!({
            "stage": t + 1,
            "branch": k + 1,
            "w": sol.w[t][k],
            "y": sol.y[t][k],
        });
        if t + 1 < sol.w.len() {
            let children: Vec<_> = (0..sol.w[t + 1].len()).map(|kn| node(sol, t + 1, kn)).collect();
            obj["children"] = serde_json::Value::Array(children);
        }
        obj
    }
    let roots: Vec<_> = (0..sol.w.first().map_or(0, |s| s.len())).map(|k| node(sol, 0, k)).collect();
    serde_json::json!({
        "schema": "ddid-mstree-v1",
        "status": sol.status,
        "value": sol.value.is_finite().then_some(sol.value),
        "tree": roots,
    })
}

/// One CSV line per CCG iteration: iteration, bounds, added index, wall time.
pub fn ccg_state_csv(state: &CcgState) -> String {
    let mut out = String::from("iter,lower_bound,upper_bound,index_added,wall_ms\n");
    for it in &state.iterations {
        let added = it
            .added
            .as_ref()
            .map(|ix| ix.i.iter().map(|p| (p + 1).to_string()).collect::<Vec<_>>().join(" "))
            .unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{:.3}\n", it.iter, it.lower, it.upper, added, it.wall_ms));
    }
    out
}
