use gensim_core::dsl::{Diagnostic, TaskSpec};
use gensim_core::oracle::{run_episode_frames, DemonstrationEpisode};
use gensim_core::world::{Pose, SceneSnapshot};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub pick: Pose,
    pub place: Pose,
    pub lang_goal: String,
    pub reward_after: f64,
}

/// Scene before any step (`annotation` empty) or after step `step - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayFrame {
    pub step: usize,
    pub scene: SceneSnapshot,
    pub annotation: Option<Annotation>,
}

pub fn replay(spec: &TaskSpec, seed: u64) -> Result<(DemonstrationEpisode, Vec<ReplayFrame>), Vec<Diagnostic>> {
    let (ep, scenes) = run_episode_frames(spec, seed)?;
    let frames = scenes
        .into_iter()
        .enumerate()
        .map(|(i, scene)| ReplayFrame {
            step: i,
            scene,
            annotation: i.checked_sub(1).map(|s| {
                let st = &ep.steps[s];
                Annotation {
                    pick: st.pick,
                    place: st.place,
                    lang_goal: st.lang.clone(),
                    reward_after: st.reward_after,
                }
            }),
        })
        .collect();
    Ok((ep, frames))
}
