//! Plot data: per-touch offsets, learned offsets and cluster rectangles as
//! CSV, ready for any external plotting tool.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::decoder::Decoder;
use crate::engine::EngineConfig;
use crate::error::Result;
use crate::layout::Offset;
use crate::par::{map_range, Execution};
use crate::simulator::{
    derive_seed, gen_user, rng_from, Archetype, PromptSampler, Session, SessionOutput,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSummary {
    pub touches: usize,
    /// Mean normalized offset over every recorded touch.
    pub grand_mean: Offset,
    pub clusters_per_user: Vec<usize>,
    pub files: Vec<PathBuf>,
}

/// Simulates `users` users typing `words` prompts each with touches recorded.
pub fn simulate_for_plots(
    decoder: &Arc<Decoder>,
    arch: &Archetype,
    engine: &EngineConfig,
    users: usize,
    words: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<SessionOutput>> {
    let sampler = PromptSampler::new(decoder.lm().lexicon());
    map_range(exec, users, |i| {
        let s = derive_seed(seed, i as u64);
        let user = gen_user(arch, decoder.layout(), derive_seed(s, 0));
        let prompts = sampler.sample(words, &mut rng_from(derive_seed(s, 1)));
        let mut session =
            Session::new(Arc::clone(decoder), engine.clone(), derive_seed(s, 2))?.record_touches();
        for p in &prompts {
            session.type_prompt(&user, p, true);
        }
        Ok(session.finish())
    })
    .into_iter()
    .collect()
}

pub fn touch_offsets_csv(sessions: &[SessionOutput]) -> String {
    let mut s = String::from("user,word,key,x,y,dx,dy\n");
    for (u, out) in sessions.iter().enumerate() {
        for t in &out.touches {
            writeln!(
                s,
                "{u},{},{},{},{},{},{}",
                t.word_index, t.key, t.x, t.y, t.offset.dx, t.offset.dy
            )
            .unwrap();
        }
    }
    s
}

pub fn learned_offsets_csv(sessions: &[SessionOutput]) -> String {
    let mut s = String::from("user,key,dx,dy,cluster\n");
    for (u, out) in sessions.iter().enumerate() {
        for (c, off) in out.model.offsets() {
            let cluster = out
                .model
                .tree()
                .leaf_index(*c)
                .map_or(String::new(), |i| i.to_string());
            writeln!(s, "{u},{c},{},{},{cluster}", off.dx, off.dy).unwrap();
        }
    }
    s
}

pub fn clusters_csv(sessions: &[SessionOutput]) -> String {
    let mut s = String::from("user,cluster,keys,x0,y0,x1,y1,n,mu_dx,mu_dy\n");
    for (u, out) in sessions.iter().enumerate() {
        for (i, leaf) in out.model.tree().leaves().enumerate() {
            let r = leaf.cluster.rect;
            let keys: String = leaf.cluster.keys.iter().collect();
            writeln!(
                s,
                "{u},{i},{keys},{},{},{},{},{},{},{}",
                r.x0, r.y0, r.x1, r.y1, leaf.stats.n, leaf.offset.dx, leaf.offset.dy
            )
            .unwrap();
        }
    }
    s
}

/// Writes `touch_offsets.csv`, `learned_offsets.csv` and `clusters.csv`.
pub fn emit_scatter(dir: &Path, sessions: &[SessionOutput]) -> Result<ScatterSummary> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (name, body) in [
        ("touch_offsets.csv", touch_offsets_csv(sessions)),
        ("learned_offsets.csv", learned_offsets_csv(sessions)),
        ("clusters.csv", clusters_csv(sessions)),
    ] {
        let p = dir.join(name);
        fs::write(&p, body)?;
        files.push(p);
    }
    let (mut n, mut sum) = (0usize, Offset::ZERO);
    for t in sessions.iter().flat_map(|s| &s.touches) {
        n += 1;
        sum = sum + t.offset;
    }
    let grand_mean = if n == 0 {
        Offset::ZERO
    } else {
        Offset::new(sum.dx / n as f64, sum.dy / n as f64)
    };
    Ok(ScatterSummary {
        touches: n,
        grand_mean,
        clusters_per_user: sessions
            .iter()
            .map(|s| s.model.tree().leaf_count())
            .collect(),
        files,
    })
}
