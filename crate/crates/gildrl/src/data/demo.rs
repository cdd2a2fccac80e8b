use super::DataError;
use crate::numerics::Tensor;
use rand::Rng;
use std::fs;
use std::io::Write;
use std::path::Path;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DemoMetadata {
    pub env_id: String,
    pub behavior_return: f64,
    pub sample_count: usize,
    /// Checkpoint the pairs were collected from, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_checkpoint: Option<String>,
}

/// Demonstration state-action pairs plus collection metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct DemonstrationSet {
    state_dim: usize,
    action_dim: usize,
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub metadata: DemoMetadata,
}

impl DemonstrationSet {
    pub fn new(state_dim: usize, action_dim: usize, metadata: DemoMetadata) -> Self {
        DemonstrationSet {
            state_dim,
            action_dim,
            pairs: Vec::new(),
            metadata,
        }
    }

    pub fn push(&mut self, state: Vec<f64>, action: Vec<f64>) {
        assert_eq!(state.len(), self.state_dim);
        assert_eq!(action.len(), self.action_dim);
        self.pairs.push((state, action));
        self.metadata.sample_count = self.pairs.len();
    }

    pub fn pairs(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Uniform-with-replacement minibatch of (states, actions).
    pub fn sample_batch<R: Rng>(&self, n: usize, rng: &mut R) -> (Tensor, Tensor) {
        assert!(!self.pairs.is_empty(), "empty demonstration set");
        let (sd, ad) = (self.state_dim, self.action_dim);
        let mut states = Vec::with_capacity(n * sd);
        let mut actions = Vec::with_capacity(n * ad);
        for _ in 0..n {
            let i = rng.random_range(0..self.pairs.len());
            states.extend_from_slice(&self.pairs[i].0);
            actions.extend_from_slice(&self.pairs[i].1);
        }
        (
            Tensor::from_vec(vec![n, sd], states).expect("demo states"),
            Tensor::from_vec(vec![n, ad], actions).expect("demo actions"),
        )
    }

    /// CSV with header `s0,..,s{n-1},a0,..,a{m-1}`, one pair per row,
    /// full round-trip decimal; metadata in a `.meta.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let (sd, ad) = (self.state_dim, self.action_dim);
        let mut out = String::new();
        let header: Vec<String> = (0..sd)
            .map(|i| format!("s{i}"))
            .chain((0..ad).map(|i| format!("a{i}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (s, a) in &self.pairs {
            let row: Vec<String> = s.iter().chain(a.iter()).map(f64::to_string).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        let mut f = fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        let meta_path = sidecar_path(path);
        let meta = serde_json::to_string_pretty(&self.metadata)
            .map_err(|e| DataError::Format(e.to_string()))?;
        fs::write(meta_path, meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path)?;
        let display = path.display().to_string();
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| DataError::Parse {
            path: display.clone(),
            line: 1,
            detail: "missing header".to_string(),
        })?;
        let cols: Vec<&str> = header.split(',').collect();
        let sd = cols.iter().take_while(|c| c.starts_with('s')).count();
        let ad = cols.len() - sd;
        let valid = sd > 0
            && ad > 0
            && cols[..sd]
                .iter()
                .enumerate()
                .all(|(i, c)| **c == format!("s{i}"))
            && cols[sd..]
                .iter()
                .enumerate()
                .all(|(i, c)| **c == format!("a{i}"));
        if !valid {
            return Err(DataError::Parse {
                path: display,
                line: 1,
                detail: format!("malformed header {header:?}"),
            });
        }
        let mut pairs = Vec::new();
        for (lineno, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != sd + ad {
                return Err(DataError::Parse {
                    path: display,
                    line: lineno + 1,
                    detail: format!("expected {} fields, got {}", sd + ad, fields.len()),
                });
            }
            let mut values = Vec::with_capacity(sd + ad);
            for field in &fields {
                values.push(field.parse::<f64>().map_err(|e| DataError::Parse {
                    path: display.clone(),
                    line: lineno + 1,
                    detail: format!("bad float {field:?}: {e}"),
                })?);
            }
            pairs.push((values[..sd].to_vec(), values[sd..].to_vec()));
        }
        let meta_text = fs::read_to_string(sidecar_path(path))?;
        let metadata: DemoMetadata =
            serde_json::from_str(&meta_text).map_err(|e| DataError::Format(e.to_string()))?;
        Ok(DemonstrationSet {
            state_dim: sd,
            action_dim: ad,
            pairs,
            metadata,
        })
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".meta.json");
    std::path::PathBuf::from(os)
}
