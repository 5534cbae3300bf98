pub mod curate;
pub mod eval;
pub mod render_cond;
pub mod scc;
pub mod synth;
pub mod traj;

use crate::StageError;
use anyhow::anyhow;
use nalgebra::Vector3;
use rgbd_core::geometry::Pose;

pub fn thread_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    let jobs = jobs.max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))
}

/// Translate camera poses by `tau` along the ego lateral (y) axis.
pub fn shift_cameras_lateral(
    cams: &[(Pose, rgbd_core::geometry::Intrinsics)],
    ego: &rgbd_core::geometry::RelativeTransform,
    tau: f64,
) -> Vec<Pose> {
    let lateral: Vector3<f64> = ego.rotation().column(1).into_owned();
    cams.iter()
        .map(|(pose, _)| {
            Pose::new(*pose.rotation(), pose.translation() + lateral * tau)
                .expect("rotation unchanged")
        })
        .collect()
}

pub fn stage_err(stage: &str, err: impl Into<anyhow::Error>) -> anyhow::Error {
    anyhow::Error::new(StageError { stage: stage.to_string(), source: err.into() })
}

/// Map a curation error to a stage error, preserving the stage name it
/// already carries.
pub fn curation_stage_err(err: rgbd_core::curation::CurationError) -> anyhow::Error {
    let stage = match &err {
        rgbd_core::curation::CurationError::Stage { stage, .. } => stage.to_string(),
        _ => "curate".to_string(),
    };
    anyhow::Error::new(StageError { stage, source: anyhow!(err.to_string()) })
}
