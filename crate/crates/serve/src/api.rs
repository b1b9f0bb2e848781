use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, TryLockError};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lsmo_core::world::{Obstacle, Scene};
use lsmo_pipeline::config::{ArmFile, SceneFile};
use lsmo_pipeline::homotopy::Anchors;
use lsmo_pipeline::sweep::{sweep_grid, SweepConfig};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use crate::session::{quantize, unquantize, CacheEntry, Session, Solution, Store, Z_GRID, Z_LIMIT};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("model is still loading")]
    NotReady,
    #[error("scene edit in progress")]
    Busy,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotReady => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Busy => StatusCode::CONFLICT,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::Internal(e.to_string())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(internal)?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub latent_dim: usize,
    /// Recommended slider range.
    pub z_range: [f64; 2],
    pub z_limit: f64,
    pub z_grid: f64,
    pub steps: usize,
    pub dof: usize,
    pub basis_count: usize,
    pub q_start: Vec<f64>,
    pub q_goal: Vec<f64>,
    pub arm: ArmFile,
    pub obstacles: Vec<Obstacle>,
    pub bounds: [[f64; 2]; 2],
    pub margin: f64,
    pub alpha_smooth: f64,
    pub anchors: Anchors,
}

async fn meta(State(store): State<Arc<Store>>) -> Result<Json<Meta>, ApiError> {
    let guard = store.session.read().map_err(internal)?;
    let s = guard.as_ref().ok_or(ApiError::NotReady)?;
    let ctx = &s.context;
    Ok(Json(Meta {
        latent_dim: s.model.latent_dim,
        z_range: [s.sweep.z_min, s.sweep.z_max],
        z_limit: Z_LIMIT,
        z_grid: Z_GRID,
        steps: ctx.steps,
        dof: ctx.arm.dof(),
        basis_count: s.rtp.basis_count(),
        q_start: ctx.q_start.clone(),
        q_goal: ctx.q_goal.clone(),
        arm: ArmFile {
            links: ctx.arm.link_lengths.clone(),
            body_point_spacing: ctx.arm.body_point_spacing,
            base: ctx.arm.base,
        },
        obstacles: ctx.scene.obstacles.clone(),
        bounds: ctx.scene.bounds,
        margin: ctx.cost.margin,
        alpha_smooth: ctx.cost.alpha_smooth,
        anchors: ctx.anchors.clone(),
    }))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateRequest {
    pub z: Vec<f64>,
    #[serde(default)]
    pub finetune: bool,
}

/// Generates (or fetches from the cache) the solution for `z`. The read
/// lock is only tried, so a concurrent scene edit yields `Busy`.
fn generate_blocking(store: &Store, z: &[f64], finetune: bool) -> Result<Solution, ApiError> {
    let guard = match store.session.try_read() {
        Ok(g) => g,
        Err(TryLockError::WouldBlock) => return Err(ApiError::Busy),
        Err(TryLockError::Poisoned(e)) => return Err(internal(e)),
    };
    let s = guard.as_ref().ok_or(ApiError::NotReady)?;
    if z.len() != s.model.latent_dim {
        return Err(ApiError::BadRequest(format!(
            "z needs {} values, got {}",
            s.model.latent_dim,
            z.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::BadRequest("z must be finite".into()));
    }
    let key = (quantize(z), finetune);
    if let Some(hit) = store.cache.lock().map_err(internal)?.get(&key) {
        if !(finetune && hit.stale) {
            return Ok(hit.solution.clone());
        }
    }
    let snapped = unquantize(&key.0);
    let solution = s.solve(&snapped, finetune).map_err(internal)?;
    store.cache.lock().map_err(internal)?.insert(
        key,
        CacheEntry {
            solution: solution.clone(),
            stale: false,
        },
    );
    Ok(solution)
}

async fn generate(State(store): State<Arc<Store>>, Json(req): Json<GenerateRequest>) -> Result<Json<Solution>, ApiError> {
    let s = blocking(move || generate_blocking(&store, &req.z, req.finetune)).await?;
    Ok(Json(s))
}

/// One scene edit. Indices refer to the current obstacle list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum SceneEdit {
    Add {
        obstacle: Obstacle,
    },
    Remove {
        index: usize,
    },
    Move {
        index: usize,
        center: [f64; 2],
        #[serde(default)]
        radius: Option<f64>,
    },
}

impl SceneEdit {
    fn apply(&self, scene: &Scene) -> Result<Scene, ApiError> {
        let mut next = scene.clone();
        let bad_index = |i: usize| ApiError::BadRequest(format!("no obstacle {i}"));
        match self {
            SceneEdit::Add { obstacle } => next.obstacles.push(*obstacle),
            SceneEdit::Remove { index } => {
                if *index >= next.obstacles.len() {
                    return Err(bad_index(*index));
                }
                next.obstacles.remove(*index);
            }
            SceneEdit::Move { index, center, radius } => {
                let o = next.obstacles.get_mut(*index).ok_or_else(|| bad_index(*index))?;
                o.center = *center;
                if let Some(r) = radius {
                    o.radius = *r;
                }
            }
        }
        next.validate().map_err(|e| ApiError::BadRequest(e.to_string()))?;
        Ok(next)
    }
}

/// What a scene edit did to the cached solutions. Nothing is dropped; flags
/// and scores are recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revalidation {
    pub cached: usize,
    pub collision_free: usize,
    pub flags_changed: usize,
    /// Collision-free cached solutions per homotopy label.
    pub class_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneUpdate {
    pub scene: SceneFile,
    pub revalidation: Revalidation,
}

fn edit_blocking(store: &Store, edit: &SceneEdit) -> Result<SceneUpdate, ApiError> {
    let mut guard = store.session.write().map_err(internal)?;
    let s: &mut Session = guard.as_mut().ok_or(ApiError::NotReady)?;
    s.context.scene = edit.apply(&s.context.scene)?;
    let mut cache = store.cache.lock().map_err(internal)?;
    let mut r = Revalidation {
        cached: cache.len(),
        collision_free: 0,
        flags_changed: 0,
        class_counts: BTreeMap::new(),
    };
    for entry in cache.values_mut() {
        let changed = s.revalidate(&mut entry.solution).map_err(internal)?;
        if changed {
            r.flags_changed += 1;
        }
        entry.stale |= changed && !entry.solution.collision_free;
        if entry.solution.collision_free {
            r.collision_free += 1;
            let label = entry.solution.record.homotopy_label.clone().unwrap_or_default();
            *r.class_counts.entry(label).or_insert(0) += 1;
        }
    }
    Ok(SceneUpdate {
        scene: SceneFile::from_scene(&s.context.scene),
        revalidation: r,
    })
}

async fn edit_scene(State(store): State<Arc<Store>>, Json(edit): Json<SceneEdit>) -> Result<Json<SceneUpdate>, ApiError> {
    Ok(Json(blocking(move || edit_blocking(&store, &edit)).await?))
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct SweepQuery {
    #[serde(default)]
    pub finetune: bool,
    /// Points per latent dimension; defaults to the configured count.
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub z_values: Vec<Vec<f64>>,
    pub solutions: Vec<Solution>,
}

const MAX_SWEEP_COUNT: usize = 200;

fn sweep_blocking(store: &Store, q: &SweepQuery) -> Result<SweepResponse, ApiError> {
    let (latent_dim, cfg) = {
        let guard = store.session.read().map_err(internal)?;
        let s = guard.as_ref().ok_or(ApiError::NotReady)?;
        let mut cfg: SweepConfig = s.sweep.clone();
        if let Some(c) = q.count {
            if !(2..=MAX_SWEEP_COUNT).contains(&c) {
                return Err(ApiError::BadRequest(format!("count must lie in 2..={MAX_SWEEP_COUNT}")));
            }
            cfg.count = c;
        }
        (s.model.latent_dim, cfg)
    };
    let z_values: Vec<Vec<f64>> = sweep_grid(latent_dim, &cfg).iter().map(|z| unquantize(&quantize(z))).collect();
    let solutions = z_values
        .iter()
        .map(|z| generate_blocking(store, z, q.finetune))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResponse { z_values, solutions })
}

async fn sweep(State(store): State<Arc<Store>>, Query(q): Query<SweepQuery>) -> Result<Json<SweepResponse>, ApiError> {
    Ok(Json(blocking(move || sweep_blocking(&store, &q)).await?))
}

/// API routes, permissive CORS, and optionally the explorer's static files
/// for every other path.
pub fn router(store: Arc<Store>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/meta", get(meta))
        .route("/api/generate", post(generate))
        .route("/api/scene/obstacles", post(edit_scene))
        .route("/api/sweep", get(sweep))
        .with_state(store);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(CorsLayer::permissive())
}
