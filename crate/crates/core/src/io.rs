//! Instance files.
//!
//! An instance file is TOML with `kind = "instance"` and `version = 1`. It
//! either lists dense steps:
//!
//! ```toml
//! kind = "instance"
//! version = 1
//! actions = [2, 2]
//!
//! [[steps]]
//! repeat = 10                                    # optional, default 1
//! rewards = [[0.1, 0.9], [0.5, 0.5]]             # rewards[s][a]
//! kernel = [[[1.0, 0.0], [0.0, 1.0]],            # kernel[s][a][s']
//!           [[0.5, 0.5], [1.0, 0.0]]]
//! ```
//!
//! or holds a `[generator]` table. An optional `[budgets]` table with
//! `reward` and `kernel` totals is checked against recomputation.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::envs::GeneratorSpec;
use crate::error::{Error, Result};
use crate::mdp::{validate_snapshot, Kernel, MdpSnapshot, NonStationaryInstance, Shape};

pub const INSTANCE_KIND: &str = "instance";
pub const FORMAT_VERSION: u32 = 1;

/// Relative tolerance when comparing stored and recomputed budget totals.
pub const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub kind: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<StepBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<BudgetTotals>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepBlock {
    #[serde(default = "one")]
    pub repeat: usize,
    pub rewards: Vec<Vec<f64>>,
    pub kernel: Vec<Vec<Vec<f64>>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetTotals {
    pub reward: f64,
    pub kernel: f64,
}

/// Outcome of checking an instance file.
#[derive(Debug, Clone, Default)]
pub struct InstanceCheck {
    /// Human-readable problems with their location; empty iff clean.
    pub problems: Vec<String>,
    pub instance: Option<NonStationaryInstance>,
}

pub fn parse_instance_file(text: &str) -> Result<InstanceFile> {
    let file: InstanceFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.kind != INSTANCE_KIND {
        return Err(Error::Parse(format!("field `kind`: expected \"{INSTANCE_KIND}\", got {:?}", file.kind)));
    }
    if file.version != FORMAT_VERSION {
        return Err(Error::Parse(format!(
            "field `version`: unsupported version {} (expected {FORMAT_VERSION})",
            file.version
        )));
    }
    Ok(file)
}

/// Builds the instance described by `file`, collecting every invariant
/// violation instead of stopping at the first.
pub fn check_instance_file(file: &InstanceFile) -> Result<InstanceCheck> {
    let mut problems = Vec::new();
    let inst = match (&file.generator, file.steps.is_empty()) {
        (Some(_), false) => {
            return Err(Error::Parse("give either `steps` or `[generator]`, not both".into()));
        }
        (None, true) => return Err(Error::Parse("missing `steps` or `[generator]`".into())),
        (Some(spec), true) => match spec.generate() {
            Ok(inst) => Some(inst),
            Err(e) => {
                problems.push(format!("generator: {e}"));
                None
            }
        },
        (None, false) => dense_instance(file, &mut problems)?,
    };
    if let (Some(inst), Some(stored)) = (&inst, &file.budgets) {
        let b = inst.budgets();
        for (name, got, want) in [("reward", stored.reward, b.reward), ("kernel", stored.kernel, b.kernel)] {
            if (got - want).abs() > BUDGET_TOL * want.abs().max(1.0) {
                problems.push(format!("budgets.{name}: stored {got} but recomputed {want}"));
            }
        }
    }
    Ok(InstanceCheck {
        problems,
        instance: inst,
    })
}

fn dense_instance(file: &InstanceFile, problems: &mut Vec<String>) -> Result<Option<NonStationaryInstance>> {
    let actions = file
        .actions
        .clone()
        .ok_or_else(|| Error::Parse("dense instances need an `actions` array".into()))?;
    let shape = Arc::new(Shape::new(actions).map_err(|e| Error::Parse(format!("field `actions`: {e}")))?);
    let n = shape.num_states();
    let mut snaps = Vec::new();
    let mut t = 1;
    for (b, block) in file.steps.iter().enumerate() {
        let at = format!("steps[{b}] (from step {t})");
        if block.repeat == 0 {
            return Err(Error::Parse(format!("{at}: `repeat` must be at least 1")));
        }
        if block.rewards.len() != n || block.kernel.len() != n {
            return Err(Error::Parse(format!("{at}: expected {n} states in `rewards` and `kernel`")));
        }
        let mut rewards = Vec::with_capacity(shape.num_pairs());
        let mut probs = Vec::with_capacity(shape.num_pairs() * n);
        for s in 0..n {
            let a_s = shape.num_actions(s);
            if block.rewards[s].len() != a_s || block.kernel[s].len() != a_s {
                return Err(Error::Parse(format!("{at}: state {s} needs {a_s} action entries")));
            }
            rewards.extend(&block.rewards[s]);
            for (a, row) in block.kernel[s].iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Parse(format!("{at}: kernel row ({s},{a}) needs {n} entries")));
                }
                probs.extend(row);
            }
        }
        let snap = MdpSnapshot::new_unchecked(Kernel::from_dense(shape.clone(), probs)?, rewards)?;
        for v in validate_snapshot(&snap) {
            problems.push(format!("{at}: {v}"));
        }
        let snap = Arc::new(snap);
        snaps.extend(std::iter::repeat_n(snap, block.repeat));
        t += block.repeat;
    }
    if !problems.is_empty() {
        return Ok(None);
    }
    Ok(Some(NonStationaryInstance::new(snaps, None)?))
}

/// Reads and builds an instance, failing on any problem.
pub fn load_instance(path: &Path) -> Result<NonStationaryInstance> {
    let text = std::fs::read_to_string(path)?;
    let file = parse_instance_file(&text)?;
    let check = check_instance_file(&file)?;
    if let Some(p) = check.problems.first() {
        return Err(Error::InvalidModel(format!(
            "{}: {p} ({} problem(s) total)",
            path.display(),
            check.problems.len()
        )));
    }
    Ok(check.instance.expect("clean check builds an instance"))
}

/// The file form of an instance: the generator when known, else dense
/// steps with runs of identical snapshots collapsed.
pub fn instance_to_file(inst: &NonStationaryInstance) -> InstanceFile {
    let b = inst.budgets();
    let budgets = Some(BudgetTotals {
        reward: b.reward,
        kernel: b.kernel,
    });
    if let Some(spec) = inst.generator() {
        return InstanceFile {
            kind: INSTANCE_KIND.into(),
            version: FORMAT_VERSION,
            actions: None,
            steps: Vec::new(),
            generator: Some(spec.clone()),
            budgets,
        };
    }
    let shape = inst.shape();
    let mut steps: Vec<StepBlock> = Vec::new();
    let snaps = inst.snapshots();
    let mut i = 0;
    while i < snaps.len() {
        let mut j = i + 1;
        while j < snaps.len() && (Arc::ptr_eq(&snaps[i], &snaps[j]) || snaps[i] == snaps[j]) {
            j += 1;
        }
        let m = &snaps[i];
        let rewards = (0..shape.num_states())
            .map(|s| shape.pairs_of(s).map(|p| m.rewards()[p]).collect())
            .collect();
        let kernel = (0..shape.num_states())
            .map(|s| shape.pairs_of(s).map(|p| m.kernel().row(p).to_vec()).collect())
            .collect();
        steps.push(StepBlock {
            repeat: j - i,
            rewards,
            kernel,
        });
        i = j;
    }
    InstanceFile {
        kind: INSTANCE_KIND.into(),
        version: FORMAT_VERSION,
        actions: Some(shape.actions().to_vec()),
        steps,
        generator: None,
        budgets,
    }
}

pub fn save_instance(inst: &NonStationaryInstance, path: &Path) -> Result<()> {
    let text = toml::to_string(&instance_to_file(inst)).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{gen_piecewise, Family};

    const DENSE: &str = r#"
kind = "instance"
version = 1
actions = [2, 1]

[[steps]]
repeat = 3
rewards = [[0.1, 0.9], [0.5]]
kernel = [[[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5]]]

[[steps]]
rewards = [[0.2, 0.9], [0.5]]
kernel = [[[1.0, 0.0], [0.0, 1.0]], [[0.5, 0.5]]]
"#;

    #[test]
    fn dense_file_parses() {
        let check = check_instance_file(&parse_instance_file(DENSE).unwrap()).unwrap();
        assert!(check.problems.is_empty());
        let inst = check.instance.unwrap();
        assert_eq!(inst.horizon(), 4);
        assert!((inst.budgets().reward - 0.1).abs() < 1e-12);
    }

    #[test]
    fn bad_row_is_located() {
        let text = DENSE.replace("[[0.5, 0.5]]]\n\n[[steps]]", "[[0.5, 0.6]]]\n\n[[steps]]");
        let check = check_instance_file(&parse_instance_file(&text).unwrap()).unwrap();
        assert_eq!(check.problems.len(), 1);
        assert!(check.problems[0].contains("row sum 1.1"), "{}", check.problems[0]);
        assert!(check.problems[0].contains("(1,0)"));
    }

    #[test]
    fn inconsistent_budgets_are_reported() {
        let text = format!("{DENSE}\n[budgets]\nreward = 0.5\nkernel = 0.0\n");
        let check = check_instance_file(&parse_instance_file(&text).unwrap()).unwrap();
        assert_eq!(check.problems.len(), 1);
        assert!(check.problems[0].starts_with("budgets.reward"));
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = parse_instance_file("kind = \"instance\"\nversion = \"x\"\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn dense_and_generator_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let inst = gen_piecewise(2, 2, 40, 2, 9).unwrap();
        let path = dir.path().join("gen.toml");
        save_instance(&inst, &path).unwrap();
        let back = load_instance(&path).unwrap();
        assert!(matches!(back.generator().unwrap().family, Family::Piecewise { changes: 2 }));
        assert_eq!(back.snapshots().len(), 40);

        let check = check_instance_file(&parse_instance_file(DENSE).unwrap()).unwrap();
        let dense = check.instance.unwrap();
        let path = dir.path().join("dense.toml");
        save_instance(&dense, &path).unwrap();
        let back = load_instance(&path).unwrap();
        for t in 1..=4 {
            assert_eq!(back.snapshot(t).as_ref(), dense.snapshot(t).as_ref());
        }
    }
}
