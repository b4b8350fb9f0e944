#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tower::ServiceExt;

use msynth_core::dataio::{write_slice_file, SliceStack};
use msynth_study::{plan_study, router, ImagePair, ImagePools, RatingStore, StudyPlan, StudyState};

pub const TOKEN: &str = "s3cret";

/// Writes a small image pool (2 synthetic conditions, 4 images each, and 4
/// real images) under `root` and returns it.
pub fn write_pools(root: &Path) -> ImagePools {
    let mut k = 0;
    let mut pair = |tag: &str, i: usize| {
        let mut write = |name: String| {
            k += 1;
            let data = (0..64).map(|p| ((p * k) % 17) as f32 / 17.0).collect();
            write_slice_file(&root.join(&name), &SliceStack::unnamed(1, 8, 8, data).unwrap()).unwrap();
            name
        };
        ImagePair {
            left: write(format!("src_{tag}_{i}.msl")),
            right: write(format!("cand_{tag}_{i}.msl")),
        }
    };
    let mut pools = ImagePools::default();
    for cond in ["t1+t2", "flair"] {
        let v = (0..4).map(|i| pair(if cond == "flair" { "a" } else { "b" }, i)).collect();
        pools.synthetic.insert(cond.to_string(), v);
    }
    pools.real = (0..4).map(|i| pair("c", i)).collect();
    pools
}

pub fn raters() -> Vec<String> {
    vec!["ann".into(), "bo".into(), "cy".into()]
}

/// 2 + 2 synthetic and 2 real trials per rater.
pub fn make_plan(root: &Path) -> StudyPlan {
    plan_study(&write_pools(root), 2, 2, 42, &raters()).unwrap()
}

pub fn state(dir: &Path, plan: StudyPlan) -> Arc<StudyState> {
    Arc::new(StudyState {
        store: RatingStore::open(&dir.join("state"), plan).unwrap(),
        image_root: dir.to_path_buf(),
        admin_token: Some(TOKEN.into()),
    })
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

pub async fn call(app: &Router, req: Request<Body>) -> Reply {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn rate(app: &Router, rater: &str, trial: usize, stars: i64) -> Reply {
    let body = serde_json::json!({ "trial_id": trial, "stars": stars }).to_string();
    let req = Request::post(format!("/api/raters/{rater}/ratings"))
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    call(app, req).await
}

pub async fn export(app: &Router, token: Option<&str>) -> Reply {
    let mut req = Request::get("/api/export");
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    call(app, req.body(Body::empty()).unwrap()).await
}

pub fn app(st: Arc<StudyState>) -> Router {
    router(st)
}
