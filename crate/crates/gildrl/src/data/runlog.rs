use super::DataError;
use std::fs;
use std::path::Path;

/// One evaluation point: mean and std of dense returns over the
/// evaluation episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub step: u64,
    pub mean_dense_return: f64,
    pub std_dense_return: f64,
}

/// One training step's losses plus the wall-clock rate, expressed as
/// milliseconds per 1000 steps. Loss columns a variant or schedule
/// never produced on that step are zero-filled.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub gild_loss: f64,
    pub meta_loss: f64,
    pub wall_ms: f64,
}

/// Append-only metric records with monotone steps.
#[derive(Default)]
pub struct RunLog {
    pub eval: Vec<EvalRecord>,
    pub train: Vec<TrainRecord>,
}

impl RunLog {
    pub fn new() -> Self {
        RunLog::default()
    }

    pub fn push_eval(&mut self, r: EvalRecord) {
        if let Some(last) = self.eval.last() {
            assert!(r.step >= last.step, "eval steps must be monotone");
        }
        self.eval.push(r);
    }

    pub fn push_train(&mut self, r: TrainRecord) {
        if let Some(last) = self.train.last() {
            assert!(r.step >= last.step, "train steps must be monotone");
        }
        self.train.push(r);
    }
}

pub fn write_eval_csv(records: &[EvalRecord], path: &Path) -> Result<(), DataError> {
    let mut out = String::from("step,mean_dense_return,std_dense_return\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{}\n",
            r.step, r.mean_dense_return, r.std_dense_return
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_train_csv(records: &[TrainRecord], path: &Path) -> Result<(), DataError> {
    let mut out = String::from("step,critic_loss,actor_loss,gild_loss,meta_loss,wall_ms\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step, r.critic_loss, r.actor_loss, r.gild_loss, r.meta_loss, r.wall_ms
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_eval_csv(path: &Path) -> Result<Vec<EvalRecord>, DataError> {
    let text = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let f = parse_fields(&display, lineno + 1, line, 3)?;
        records.push(EvalRecord {
            step: f[0] as u64,
            mean_dense_return: f[1],
            std_dense_return: f[2],
        });
    }
    Ok(records)
}

pub fn load_train_csv(path: &Path) -> Result<Vec<TrainRecord>, DataError> {
    let text = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let f = parse_fields(&display, lineno + 1, line, 6)?;
        records.push(TrainRecord {
            step: f[0] as u64,
            critic_loss: f[1],
            actor_loss: f[2],
            gild_loss: f[3],
            meta_loss: f[4],
            wall_ms: f[5],
        });
    }
    Ok(records)
}

fn parse_fields(
    path: &str,
    line_no: usize,
    line: &str,
    expect: usize,
) -> Result<Vec<f64>, DataError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != expect {
        return Err(DataError::Parse {
            path: path.to_string(),
            line: line_no,
            detail: format!("expected {expect} fields, got {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|s| {
            s.parse::<f64>().map_err(|e| DataError::Parse {
                path: path.to_string(),
                line: line_no,
                detail: format!("bad float {s:?}: {e}"),
            })
        })
        .collect()
}
