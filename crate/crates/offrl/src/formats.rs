//! JSON and JSONL file formats.
//!
//! Nested arrays are checked for shape before the core constructors run, so
//! a malformed file is reported with the path of the offending entry
//! (`P[2][1]`, `probs[0][3]`, `episodes[5][2]`, ...).

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use offrl_core::anchor::AnchorLinearMdp;
use offrl_core::mdp::FiniteHorizon;
use offrl_core::multitask::RewardSet;
use offrl_core::trajectory::DatasetMeta;
use offrl_core::{EmpiricalModel, EpisodeDataset, Policy, TabularMdp, Transition};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{0}: expected {1} entries, found {2}")]
    Shape(String, usize, usize),
    #[error(transparent)]
    Invalid(#[from] offrl_core::Error),
}

pub type FormatResult<T> = Result<T, FormatError>;

fn read(path: &Path) -> FormatResult<String> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> FormatResult<T> {
    serde_json::from_str(text).map_err(|source| FormatError::Json {
        path: origin.to_string(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> FormatResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn expect_len<T>(path: impl FnOnce() -> String, items: &[T], expected: usize) -> FormatResult<()> {
    if items.len() != expected {
        return Err(FormatError::Shape(path(), expected, items.len()));
    }
    Ok(())
}

fn flatten2(name: &str, rows: &[Vec<f64>], outer: usize, inner: usize) -> FormatResult<Vec<f64>> {
    expect_len(|| name.to_string(), rows, outer)?;
    let mut out = Vec::with_capacity(outer * inner);
    for (i, row) in rows.iter().enumerate() {
        expect_len(|| format!("{name}[{i}]"), row, inner)?;
        out.extend_from_slice(row);
    }
    Ok(out)
}

fn flatten3(name: &str, cube: &[Vec<Vec<f64>>], d0: usize, d1: usize, d2: usize) -> FormatResult<Vec<f64>> {
    expect_len(|| name.to_string(), cube, d0)?;
    let mut out = Vec::with_capacity(d0 * d1 * d2);
    for (i, plane) in cube.iter().enumerate() {
        out.extend(flatten2(&format!("{name}[{i}]"), plane, d1, d2)?);
    }
    Ok(out)
}

fn nest2<T: Copy>(flat: &[T], inner: usize) -> Vec<Vec<T>> {
    flat.chunks(inner).map(|c| c.to_vec()).collect()
}

fn nest3<T: Copy>(flat: &[T], d1: usize, d2: usize) -> Vec<Vec<Vec<T>>> {
    flat.chunks(d1 * d2).map(|c| nest2(c, d2)).collect()
}

/// `{"S", "A", "H", "P": S×A×S, "r": S×A, "d1": S}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "P")]
    pub transition: Vec<Vec<Vec<f64>>>,
    pub r: Vec<Vec<f64>>,
    pub d1: Vec<f64>,
}

impl MdpFile {
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        let (s, a) = (mdp.num_states(), mdp.num_actions());
        Self {
            num_states: s,
            num_actions: a,
            horizon: mdp.horizon(),
            transition: nest3(mdp.transitions(), a, s),
            r: nest2(mdp.rewards(), a),
            d1: mdp.initial().to_vec(),
        }
    }

    pub fn into_mdp(self) -> FormatResult<TabularMdp> {
        let (s, a) = (self.num_states, self.num_actions);
        let p = flatten3("P", &self.transition, s, a, s)?;
        let r = flatten2("r", &self.r, s, a)?;
        expect_len(|| "d1".into(), &self.d1, s)?;
        Ok(TabularMdp::new(s, a, self.horizon, p, r, self.d1)?)
    }
}

pub fn load_mdp(path: &Path) -> FormatResult<TabularMdp> {
    parse::<MdpFile>(&read(path)?, &path.display().to_string())?.into_mdp()
}

pub fn save_mdp(path: &Path, mdp: &TabularMdp) -> FormatResult<()> {
    write_json(path, &MdpFile::from_mdp(mdp))
}

/// `{"H", "S", "A", "probs": H×S×A}`; a deterministic policy may instead give
/// `"actions": H×S`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyFile {
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<Vec<usize>>>,
}

impl PolicyFile {
    pub fn from_policy(pi: &Policy) -> Self {
        let (h, s, a) = (pi.horizon(), pi.num_states(), pi.num_actions());
        let actions = pi.is_deterministic().then(|| {
            (0..h)
                .map(|t| (0..s).map(|st| pi.action(t, st).expect("deterministic")).collect())
                .collect()
        });
        Self {
            horizon: h,
            num_states: s,
            num_actions: a,
            probs: Some(nest3(pi.probs(), s, a)),
            actions,
        }
    }

    pub fn into_policy(self) -> FormatResult<Policy> {
        let (h, s, a) = (self.horizon, self.num_states, self.num_actions);
        match (self.probs, self.actions) {
            (Some(probs), _) => Ok(Policy::new(h, s, a, flatten3("probs", &probs, h, s, a)?)?),
            (None, Some(actions)) => {
                expect_len(|| "actions".into(), &actions, h)?;
                let mut flat = Vec::with_capacity(h * s);
                for (t, row) in actions.iter().enumerate() {
                    expect_len(|| format!("actions[{t}]"), row, s)?;
                    flat.extend_from_slice(row);
                }
                Ok(Policy::deterministic(h, s, a, &flat)?)
            }
            (None, None) => Err(FormatError::Shape("probs".into(), h * s * a, 0)),
        }
    }
}

pub fn load_policy(path: &Path) -> FormatResult<Policy> {
    parse::<PolicyFile>(&read(path)?, &path.display().to_string())?.into_policy()
}

pub fn save_policy(path: &Path, pi: &Policy) -> FormatResult<()> {
    write_json(path, &PolicyFile::from_policy(pi))
}

/// First line of a dataset file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetHeader {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub episodes: usize,
    pub base_seed: u64,
    pub stream_index: u64,
}

/// Header line, then one line per episode holding `[[s, a, s'], ...]`.
pub fn write_dataset<W: Write>(mut out: W, data: &EpisodeDataset) -> std::io::Result<()> {
    let meta = data.meta();
    let header = DatasetHeader {
        num_states: meta.num_states,
        num_actions: meta.num_actions,
        horizon: meta.horizon,
        episodes: data.len(),
        base_seed: meta.base_seed,
        stream_index: meta.stream_index,
    };
    writeln!(out, "{}", serde_json::to_string(&header).expect("serializable"))?;
    let mut line = String::new();
    for ep in data.episodes() {
        line.clear();
        line.push('[');
        for (i, t) in ep.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("[{},{},{}]", t.state, t.action, t.next_state));
        }
        line.push(']');
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn save_dataset(path: &Path, data: &EpisodeDataset) -> FormatResult<()> {
    let io_err = |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);
    write_dataset(&mut out, data).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn read_dataset<R: BufRead>(input: R, origin: &str) -> FormatResult<EpisodeDataset> {
    let mut lines = input.lines();
    let io_err = |source| FormatError::Io {
        path: origin.to_string(),
        source,
    };
    let header_line = lines
        .next()
        .ok_or_else(|| FormatError::Shape(format!("{origin}: header"), 1, 0))?
        .map_err(io_err)?;
    let header: DatasetHeader = parse(&header_line, &format!("{origin}: header"))?;
    let mut episodes = Vec::with_capacity(header.episodes);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let steps: Vec<[usize; 3]> = parse(&line, &format!("{origin}: episodes[{i}]"))?;
        episodes.push(
            steps
                .into_iter()
                .map(|[state, action, next_state]| Transition {
                    state,
                    action,
                    next_state,
                })
                .collect(),
        );
    }
    expect_len(|| format!("{origin}: episodes"), &episodes, header.episodes)?;
    let meta = DatasetMeta {
        num_states: header.num_states,
        num_actions: header.num_actions,
        horizon: header.horizon,
        base_seed: header.base_seed,
        stream_index: header.stream_index,
    };
    Ok(EpisodeDataset::new(meta, episodes)?)
}

pub fn load_dataset(path: &Path) -> FormatResult<EpisodeDataset> {
    let file = fs::File::open(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(BufReader::new(file), &path.display().to_string())
}

/// Counts and derived estimates of a fitted plug-in model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDump {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub episodes: usize,
    pub n_sa: Vec<Vec<u64>>,
    pub counts: Vec<Vec<Vec<u64>>>,
    pub initial_counts: Vec<u64>,
    pub unvisited_pairs: usize,
    pub p_hat: Vec<Vec<Vec<f64>>>,
    pub d1_hat: Vec<f64>,
}

impl ModelDump {
    pub fn from_model(model: &EmpiricalModel) -> Self {
        let (s, a) = (model.num_states(), model.num_actions());
        Self {
            num_states: s,
            num_actions: a,
            horizon: model.horizon(),
            episodes: model.episodes(),
            n_sa: nest2(model.visits(), a),
            counts: nest3(model.transition_counts(), a, s),
            initial_counts: model.initial_counts().to_vec(),
            unvisited_pairs: model.unvisited_pairs(),
            p_hat: nest3(model.p_hat(), a, s),
            d1_hat: model.d1_hat().to_vec(),
        }
    }
}

/// A JSON list of `S×A` reward tables.
pub fn parse_rewards(text: &str, origin: &str, num_states: usize, num_actions: usize) -> FormatResult<RewardSet> {
    let tables: Vec<Vec<Vec<f64>>> = parse(text, origin)?;
    let mut flat = Vec::with_capacity(tables.len());
    for (k, table) in tables.iter().enumerate() {
        flat.push(flatten2(&format!("rewards[{k}]"), table, num_states, num_actions)?);
    }
    Ok(RewardSet::new(num_states, num_actions, flat, None)?)
}

pub fn load_rewards(path: &Path, num_states: usize, num_actions: usize) -> FormatResult<RewardSet> {
    parse_rewards(&read(path)?, &path.display().to_string(), num_states, num_actions)
}

/// `{"S", "A", "H", "phi": S×A×K, "psi": K×S, "anchors": [[s, a], ...], "r": S×A}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorFile {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub phi: Vec<Vec<Vec<f64>>>,
    pub psi: Vec<Vec<f64>>,
    pub anchors: Vec<(usize, usize)>,
    pub r: Vec<Vec<f64>>,
}

impl AnchorFile {
    pub fn from_mdp(mdp: &AnchorLinearMdp) -> Self {
        let (s, a, d) = (mdp.num_states(), mdp.num_actions(), mdp.feature_dim());
        Self {
            num_states: s,
            num_actions: a,
            horizon: mdp.horizon(),
            phi: nest3(mdp.phi(), a, d),
            psi: nest2(mdp.psi(), s),
            anchors: mdp.anchors().to_vec(),
            r: nest2(mdp.rewards(), a),
        }
    }

    pub fn into_mdp(self) -> FormatResult<AnchorLinearMdp> {
        let (s, a) = (self.num_states, self.num_actions);
        let d = self.psi.len();
        let phi = flatten3("phi", &self.phi, s, a, d)?;
        let psi = flatten2("psi", &self.psi, d, s)?;
        let r = flatten2("r", &self.r, s, a)?;
        Ok(AnchorLinearMdp::new(s, a, self.horizon, d, phi, psi, self.anchors, r)?)
    }
}

pub fn load_anchor(path: &Path) -> FormatResult<AnchorLinearMdp> {
    parse::<AnchorFile>(&read(path)?, &path.display().to_string())?.into_mdp()
}
