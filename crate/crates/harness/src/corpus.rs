//! The stream corpus the bound checks sweep over.

use std::path::Path;

use vartrack_core::stream::{make_generator, Stream, StreamKind, StreamSpec};
use vartrack_core::Eps;

use crate::error::{HarnessError, Result};
use crate::formats::load_replay;

pub const CORPUS_K: [usize; 4] = [1, 2, 4, 16];

pub fn corpus_eps() -> [Eps; 4] {
    [(1, 1), (1, 2), (1, 4), (1, 10)].map(|(n, d)| Eps::new(n, d).expect("valid eps"))
}

#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub label: String,
    pub stream: Stream,
}

/// Generated kinds at length `n`.
pub fn generated_kinds(n: usize) -> Vec<StreamKind> {
    vec![
        StreamKind::Monotone,
        StreamKind::UnbiasedWalk,
        StreamKind::BiasedWalk { mu: 0.5 },
        StreamKind::BiasedWalk { mu: 0.25 },
        StreamKind::NearlyMonotone { beta: 2.0 },
        StreamKind::DetFamily {
            m: 4,
            r: (n / 8) & !1,
        },
        StreamKind::DetFamily { m: 2, r: 4 },
        StreamKind::RandFamily {
            eps: Eps::new(1, 4).expect("valid eps"),
            v: 24,
        },
    ]
}

/// Every generated kind plus every `*.replay` file under `fixtures`, for `k` sites.
/// Replay site ids are folded into `0..k`.
pub fn corpus(n: usize, k: usize, seed: u64, fixtures: &Path) -> Result<Vec<CorpusEntry>> {
    let mut out = Vec::new();
    for kind in generated_kinds(n) {
        let label = format!("{kind:?}");
        let stream = make_generator(&StreamSpec::new(kind, n, k, seed))?;
        out.push(CorpusEntry { label, stream });
    }
    out.extend(replay_fixtures(k, fixtures)?);
    Ok(out)
}

pub fn replay_fixtures(k: usize, fixtures: &Path) -> Result<Vec<CorpusEntry>> {
    let mut paths: Vec<_> = std::fs::read_dir(fixtures)
        .map_err(|e| HarnessError::io(fixtures, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "replay"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let mut stream = load_replay(&path, 16, 0)?;
            for u in &mut stream.updates {
                u.site %= k;
            }
            stream.spec.k = k;
            let label = path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(CorpusEntry { label, stream })
        })
        .collect()
}
