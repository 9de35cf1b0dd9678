//! JSON API over a [`SessionHub`]. Human sessions use the same session and
//! archive code as synthetic agents.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use picbreeder::archive::{ArchiveEntry, Category, EntryId};
use picbreeder::orchestrator::{HubError, SessionHub, SessionView};
use picbreeder::session::Action;
use picbreeder::MutationMode;

pub struct ApiError {
    status: StatusCode,
    reason: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, reason: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            reason,
            message: message.into(),
        }
    }
}

impl From<HubError> for ApiError {
    fn from(e: HubError) -> Self {
        let status = StatusCode::from_u16(e.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        ApiError::new(status, e.reason(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.reason, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Serialize)]
pub struct EntrySummary {
    pub id: EntryId,
    pub title: String,
    pub parent: Option<EntryId>,
    pub color_mode: bool,
    pub agent_id: String,
    pub branch_count: u64,
    pub mean_rating: Option<f64>,
    pub ratings: usize,
    pub image_url: String,
}

impl EntrySummary {
    fn of(e: &ArchiveEntry) -> Self {
        EntrySummary {
            id: e.id,
            title: e.title.clone(),
            parent: e.parent_id,
            color_mode: e.color_mode,
            agent_id: e.agent_id.clone(),
            branch_count: e.branch_count,
            mean_rating: e.mean_rating(),
            ratings: e.ratings.len(),
            image_url: format!("/archive/entries/{}/image.png", e.id),
        }
    }
}

#[derive(Debug, Serialize)]
struct SessionBody {
    #[serde(flatten)]
    view: SessionView,
    image_urls: Vec<String>,
}

fn session_body(view: SessionView) -> Json<SessionBody> {
    let image_urls = (0..view.population_size)
        .map(|i| format!("/sessions/{}/images/{i}.png", view.id))
        .collect();
    Json(SessionBody { view, image_urls })
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum OriginRequest {
    Fresh,
    Branch(EntryId),
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    #[serde(default)]
    origin: Option<OriginRequestOrWord>,
    #[serde(default)]
    user: Option<String>,
}

/// `"fresh"` or `{"branch": 7}`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OriginRequestOrWord {
    Word(String),
    Tagged(OriginRequest),
}

#[derive(Debug, Deserialize)]
enum ActionRequest {
    ToggleColor,
    Select {
        #[serde(alias = "parents")]
        indices: Vec<usize>,
        #[serde(default)]
        strength: Option<f64>,
        #[serde(default)]
        mode: Option<MutationMode>,
    },
}

#[derive(Debug, Deserialize)]
struct PublishRequest {
    index: usize,
    title: String,
    #[serde(default)]
    rationale: String,
}

#[derive(Debug, Deserialize)]
struct RatingsRequest {
    scores: BTreeMap<EntryId, i64>,
    #[serde(default)]
    rater: Option<String>,
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn entry_or_404(hub: &SessionHub, id: u64) -> ApiResult<ArchiveEntry> {
    hub.archive()
        .read()
        .get(EntryId(id))
        .cloned()
        .ok_or_else(|| HubError::Archive(picbreeder::archive::ArchiveError::UnknownEntry(EntryId(id))).into())
}

async fn archive_sample(State(hub): State<Arc<SessionHub>>) -> ApiResult<Json<serde_json::Value>> {
    let sample = match hub.sample() {
        Ok(s) => s,
        Err(HubError::Archive(picbreeder::archive::ArchiveError::Empty)) => Default::default(),
        Err(e) => return Err(e.into()),
    };
    let archive = hub.archive().read();
    let mut body = serde_json::Map::new();
    for c in Category::ALL {
        let items: Vec<EntrySummary> = sample
            .category(c)
            .iter()
            .filter_map(|id| archive.get(*id).map(EntrySummary::of))
            .collect();
        body.insert(c.name().to_string(), serde_json::to_value(items).expect("serializable"));
    }
    Ok(Json(body.into()))
}

async fn archive_entries(State(hub): State<Arc<SessionHub>>) -> Json<Vec<EntrySummary>> {
    Json(hub.archive().read().entries().iter().map(EntrySummary::of).collect())
}

async fn archive_entry(State(hub): State<Arc<SessionHub>>, Path(id): Path<u64>) -> ApiResult<Json<serde_json::Value>> {
    let e = entry_or_404(&hub, id)?;
    let mut value = serde_json::to_value(EntrySummary::of(&e)).expect("serializable");
    value["rationale"] = json!(e.rationale);
    value["genome_hash"] = json!(e.genome.content_hash());
    Ok(Json(value))
}

async fn entry_image(State(hub): State<Arc<SessionHub>>, Path(id): Path<u64>) -> ApiResult<Response> {
    Ok(png(entry_or_404(&hub, id)?.image_png.to_vec()))
}

/// Ancestors from the root down to the entry itself.
async fn entry_lineage(State(hub): State<Arc<SessionHub>>, Path(id): Path<u64>) -> ApiResult<Json<Vec<EntrySummary>>> {
    entry_or_404(&hub, id)?;
    let archive = hub.archive().read();
    let mut chain = Vec::new();
    let mut cur = archive.get(EntryId(id));
    while let Some(e) = cur {
        chain.push(EntrySummary::of(e));
        cur = e.parent_id.and_then(|p| archive.get(p));
    }
    chain.reverse();
    Ok(Json(chain))
}

async fn create_session(
    State(hub): State<Arc<SessionHub>>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<SessionBody>)> {
    let req = body.map(|Json(b)| b).unwrap_or(CreateSession {
        origin: None,
        user: None,
    });
    let parent = match req.origin {
        None | Some(OriginRequestOrWord::Tagged(OriginRequest::Fresh)) => None,
        Some(OriginRequestOrWord::Word(w)) if w == "fresh" => None,
        Some(OriginRequestOrWord::Word(w)) => {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_origin", format!("unknown origin {w:?}")))
        }
        Some(OriginRequestOrWord::Tagged(OriginRequest::Branch(id))) => Some(id),
    };
    let user = req.user.unwrap_or_else(|| "human".to_string());
    let view = hub.create(parent, &user)?;
    Ok((StatusCode::CREATED, session_body(view)))
}

async fn get_session(State(hub): State<Arc<SessionHub>>, Path(sid): Path<String>) -> ApiResult<Json<SessionBody>> {
    Ok(session_body(hub.view(&sid)?))
}

async fn session_image(
    State(hub): State<Arc<SessionHub>>,
    Path((sid, file)): Path<(String, String)>,
) -> ApiResult<Response> {
    let index: usize = file
        .strip_suffix(".png")
        .unwrap_or(&file)
        .parse()
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "invalid_index", format!("bad image name {file:?}")))?;
    let hub2 = hub.clone();
    let bytes = tokio::task::spawn_blocking(move || hub2.image(&sid, index))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(png(bytes))
}

async fn session_action(
    State(hub): State<Arc<SessionHub>>,
    Path(sid): Path<String>,
    Json(req): Json<ActionRequest>,
) -> ApiResult<Json<SessionBody>> {
    let action = match req {
        ActionRequest::ToggleColor => Action::ToggleColor,
        ActionRequest::Select {
            indices,
            strength,
            mode,
        } => Action::Select {
            parents: indices,
            strength,
            mode,
        },
    };
    let (view, _) = tokio::task::spawn_blocking(move || hub.act(&sid, &action, ""))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(session_body(view))
}

async fn session_publish(
    State(hub): State<Arc<SessionHub>>,
    Path(sid): Path<String>,
    Json(req): Json<PublishRequest>,
) -> ApiResult<Json<serde_json::Value>> {
    let action = Action::Publish {
        index: req.index,
        title: req.title,
    };
    let (view, entry) = tokio::task::spawn_blocking(move || hub.act(&sid, &action, &req.rationale))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(json!({ "entry_id": entry, "session": view })))
}

async fn post_ratings(
    State(hub): State<Arc<SessionHub>>,
    Json(req): Json<RatingsRequest>,
) -> ApiResult<Json<serde_json::Value>> {
    let rater = req.rater.unwrap_or_else(|| "human".to_string());
    let report = hub.rate(&req.scores, &rater)?;
    let rejected: Vec<String> = report.rejected.iter().map(|e| e.to_string()).collect();
    Ok(Json(json!({ "applied": report.applied, "rejected": rejected })))
}

async fn metrics_summary(State(hub): State<Arc<SessionHub>>) -> ApiResult<Json<serde_json::Value>> {
    let summary = tokio::task::spawn_blocking(move || hub.summary())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(serde_json::to_value(summary).expect("serializable")))
}

pub fn router(hub: Arc<SessionHub>) -> Router {
    Router::new()
        .route("/archive/sample", get(archive_sample))
        .route("/archive/entries", get(archive_entries))
        .route("/archive/entries/{id}", get(archive_entry))
        .route("/archive/entries/{id}/image.png", get(entry_image))
        .route("/archive/entries/{id}/lineage", get(entry_lineage))
        .route("/sessions", post(create_session))
        .route("/sessions/{sid}", get(get_session))
        .route("/sessions/{sid}/images/{file}", get(session_image))
        .route("/sessions/{sid}/action", post(session_action))
        .route("/sessions/{sid}/publish", post(session_publish))
        .route("/ratings", post(post_ratings))
        .route("/metrics/summary", get(metrics_summary))
        .with_state(hub)
}
