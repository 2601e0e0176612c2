//! Black-box checks of the HTTP API against live instances, driven over a
//! real socket with an ordinary HTTP client. No annotator bundle is needed.

use std::path::Path;
use std::time::{Duration, Instant};

use orcaclass_core::audio::{wav_info, write_wav, AudioBuffer};
use orcaclass_core::classifier::TrainParams;
use orcaclass_core::dataset::{save_manifest, ManifestEntry, ManifestSource};
use orcaclass_core::features::FrameSpec;
use orcaclass_core::segmenter::SegmentTimeline;
use orcaclass_experiments::{
    generate_long_recordings, generate_synthetic_corpus, train_segmentation_model, LongRecordingSpec,
    SyntheticCorpusSpec, SEGMENTATION_MEMORY,
};
use orcaclass_service::{spawn, RunningService, ServiceConfig, DB_FLOOR};
use reqwest::StatusCode;
use serde_json::{json, Value};

pub const TONE_HZ: f64 = 3000.0;
const SR: u32 = 44_100;
const MODEL_ID: &str = "synthetic";
const LONG_ID: &str = "rec-0000";

#[derive(Debug, Clone)]
pub struct ContractCheck {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct ContractReport {
    pub checks: Vec<ContractCheck>,
    pub elapsed: Duration,
}

impl ContractReport {
    pub fn passes(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&ContractCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Fixture {
    cfg: ServiceConfig,
    empty_cfg: ServiceConfig,
    entries: Vec<ManifestEntry>,
}

/// A three-class synthetic corpus, one 30 s long recording, a tone and a
/// silent file, plus a segmentation model trained on the corpus.
fn build_fixture(dir: &Path) -> Result<Fixture, String> {
    let s = |e: &dyn std::fmt::Display| e.to_string();
    let corpus = generate_synthetic_corpus(&SyntheticCorpusSpec::three_class(10, 5), &dir.join("corpus")).map_err(|e| s(&e))?;
    let long = generate_long_recordings(&LongRecordingSpec::new(1, 30.0, 9), &dir.join("long")).map_err(|e| s(&e))?;

    let tone: Vec<f64> = (0..5 * SR as usize)
        .map(|i| 0.5 * (std::f64::consts::TAU * TONE_HZ * i as f64 / SR as f64).sin())
        .collect();
    let mut entries = corpus.entries.clone();
    entries.extend(long.entries.iter().cloned());
    for (id, samples) in [("tone", tone), ("silence", vec![0.0; 3 * SR as usize])] {
        let path = dir.join(format!("{id}.wav"));
        let buffer = AudioBuffer::new(samples, SR).map_err(|e| s(&e))?;
        write_wav(&path, &buffer).map_err(|e| s(&e))?;
        entries.push(ManifestEntry {
            recording_id: id.into(),
            path,
            duration_s: buffer.duration_s(),
        });
    }
    save_manifest(&dir.join("manifest.json"), &entries).map_err(|e| s(&e))?;
    save_manifest(&dir.join("empty.json"), &[]).map_err(|e| s(&e))?;

    let models = dir.join("models");
    std::fs::create_dir_all(&models).map_err(|e| s(&e))?;
    let src = ManifestSource::new(&corpus.entries);
    let (model, _) = train_segmentation_model(
        &corpus.annotation_records,
        &src,
        &FrameSpec::default(),
        SEGMENTATION_MEMORY,
        &corpus.label_set,
        100,
        &TrainParams::default(),
    )
    .map_err(|e| s(&e))?;
    model.save(&models.join(format!("{MODEL_ID}.json"))).map_err(|e| s(&e))?;

    let cfg = ServiceConfig::new(&dir.join("manifest.json"), &dir.join("annotations.jsonl"), &models);
    let empty_cfg = ServiceConfig::new(&dir.join("empty.json"), &dir.join("empty-annotations.jsonl"), &models);
    Ok(Fixture { cfg, empty_cfg, entries })
}

struct Api {
    http: reqwest::Client,
    svc: RunningService,
}

impl Api {
    async fn start(cfg: ServiceConfig) -> Result<Self, String> {
        let svc = spawn(cfg).await.map_err(|e| e.to_string())?;
        Ok(Self {
            http: reqwest::Client::new(),
            svc,
        })
    }

    async fn get(&self, path: &str) -> Result<(StatusCode, Value), String> {
        let res = self.http.get(self.svc.url(path)).send().await.map_err(|e| e.to_string())?;
        let status = res.status();
        Ok((status, res.json().await.unwrap_or(Value::Null)))
    }

    async fn get_bytes(&self, path: &str) -> Result<(StatusCode, Vec<u8>), String> {
        let res = self.http.get(self.svc.url(path)).send().await.map_err(|e| e.to_string())?;
        let status = res.status();
        Ok((status, res.bytes().await.map_err(|e| e.to_string())?.to_vec()))
    }

    async fn post(&self, path: &str, body: Value) -> Result<(StatusCode, Value), String> {
        let res = self
            .http
            .post(self.svc.url(path))
            .json(&body)
            .send()
            .await
            .map_err(|e| e.to_string())?;
        let status = res.status();
        Ok((status, res.json().await.unwrap_or(Value::Null)))
    }

    async fn delete(&self, path: &str) -> Result<(StatusCode, Value), String> {
        let res = self.http.delete(self.svc.url(path)).send().await.map_err(|e| e.to_string())?;
        let status = res.status();
        Ok((status, res.json().await.unwrap_or(Value::Null)))
    }
}

fn expect_status(got: StatusCode, want: StatusCode, body: &Value) -> Result<(), String> {
    ensure(got == want, || format!("status {got}, expected {want}: {body}"))
}

fn tile_rows(v: &Value) -> Result<Vec<Vec<f64>>, String> {
    serde_json::from_value(v["bins"].clone()).map_err(|e| format!("bad tile payload: {e}"))
}

fn check_timeline(t: &SegmentTimeline, duration_s: f64) -> Result<(), String> {
    ensure(!t.segments.is_empty(), || "no segments".into())?;
    ensure(t.segments[0].start_s == 0.0, || "timeline does not start at 0".into())?;
    for w in t.segments.windows(2) {
        ensure(w[0].end_s == w[1].start_s && w[0].label != w[1].label, || {
            format!("segments not contiguous and distinct: {:?}", w)
        })?;
    }
    let end = t.segments.last().map_or(0.0, |s| s.end_s);
    ensure(end <= duration_s + 1e-9 && end > duration_s - 1.0, || {
        format!("timeline ends at {end}, recording is {duration_s} s")
    })
}

async fn recordings_checks(api: &Api, empty: &Api, entries: &[ManifestEntry], out: &mut Vec<(&'static str, Check)>) {
    out.push(("GET /recordings on an empty manifest is []", async {
        let (status, body) = empty.get("/recordings").await?;
        expect_status(status, StatusCode::OK, &body)?;
        ensure(body == json!([]), || format!("got {body}"))?;
        Ok("[]".into())
    }
    .await));

    out.push(("GET /recordings lists every entry with header durations", async {
        let (status, body) = api.get("/recordings").await?;
        expect_status(status, StatusCode::OK, &body)?;
        let list = body.as_array().ok_or("not an array")?;
        ensure(list.len() == entries.len(), || format!("{} entries, expected {}", list.len(), entries.len()))?;
        for (item, e) in list.iter().zip(entries) {
            let info = wav_info(&e.path).map_err(|e| e.to_string())?;
            ensure(item["recording_id"] == e.recording_id.as_str(), || format!("order differs at {item}"))?;
            ensure(item["duration_s"].as_f64() == Some(info.duration_s()), || format!("duration of {item}"))?;
            ensure(item["sample_rate_hz"].as_u64() == Some(info.sample_rate_hz as u64), || format!("rate of {item}"))?;
        }
        Ok(format!("{} entries", list.len()))
    }
    .await));

    out.push(("GET /recordings is read-only and repeatable", async {
        let (_, a) = api.get("/recordings").await?;
        let (_, b) = api.get("/recordings").await?;
        ensure(a == b, || "listings differ".into())?;
        Ok("identical".into())
    }
    .await));

    out.push(("GET /config exposes the label palette", async {
        let (status, body) = api.get("/config").await?;
        expect_status(status, StatusCode::OK, &body)?;
        ensure(body["labels"] == json!(["orca", "background", "voice"]), || format!("{body}"))?;
        Ok(body["labels"].to_string())
    }
    .await));
}

async fn spectrogram_checks(api: &Api, out: &mut Vec<(&'static str, Check)>) {
    out.push(("spectrogram of silence sits at the -80 dB floor", async {
        let (status, body) = api.get("/recordings/silence/spectrogram?start=0.5&end=2.5&time_px=64&freq_bins=32").await?;
        expect_status(status, StatusCode::OK, &body)?;
        let rows = tile_rows(&body)?;
        ensure(rows.len() == 64 && rows.iter().all(|r| r.len() == 32), || "tile shape".into())?;
        ensure(rows.iter().flatten().all(|&v| v == DB_FLOOR), || "non-floor value in silence".into())?;
        Ok("64x32 at floor".into())
    }
    .await));

    out.push(("spectrogram of a pure tone has its ridge on the tone's row", async {
        let (status, body) = api.get("/recordings/tone/spectrogram?start=1&end=4&time_px=100&freq_bins=256").await?;
        expect_status(status, StatusCode::OK, &body)?;
        let rows = tile_rows(&body)?;
        let row_hz = body["row_hz"].as_f64().ok_or("no row_hz")?;
        let want = (TONE_HZ / row_hz).floor() as usize;
        for col in &rows {
            let top = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap_or(0);
            ensure(top.abs_diff(want) <= 1, || format!("ridge at row {top}, tone is row {want}"))?;
            ensure(col.iter().all(|&v| v >= DB_FLOOR), || "value below floor".into())?;
        }
        Ok(format!("ridge at row {want} ({row_hz:.1} Hz rows)"))
    }
    .await));

    out.push(("spectrogram rejects end > duration with 400", async {
        let (status, body) = api.get("/recordings/tone/spectrogram?start=0&end=9").await?;
        expect_status(status, StatusCode::BAD_REQUEST, &body)?;
        let (status, body) = api.get("/recordings/tone/spectrogram?start=2&end=1").await?;
        expect_status(status, StatusCode::BAD_REQUEST, &body)?;
        let (status, body) = api.get("/recordings/tone/spectrogram?time_px=5000").await?;
        expect_status(status, StatusCode::BAD_REQUEST, &body)?;
        let (status, body) = api.get("/recordings/tone/spectrogram?freq_bins=2048").await?;
        expect_status(status, StatusCode::BAD_REQUEST, &body)?;
        Ok("400".into())
    }
    .await));

    out.push(("spectrogram of an unknown recording is 404", async {
        let (status, body) = api.get("/recordings/nope/spectrogram").await?;
        expect_status(status, StatusCode::NOT_FOUND, &body)?;
        Ok("404".into())
    }
    .await));

    out.push(("spectrogram endpoint is pure", async {
        let q = "/recordings/rec-0000/spectrogram?start=3&end=9&time_px=200&freq_bins=64";
        let (_, a) = api.get_bytes(q).await?;
        let (_, b) = api.get_bytes(q).await?;
        ensure(a == b && !a.is_empty(), || "payloads differ".into())?;
        Ok(format!("{} identical bytes", a.len()))
    }
    .await));

    out.push(("audio endpoint serves byte ranges of the WAV", async {
        let res = api
            .http
            .get(api.svc.url("/recordings/tone/audio"))
            .header("range", "bytes=0-43")
            .send()
            .await
            .map_err(|e| e.to_string())?;
        ensure(res.status() == StatusCode::PARTIAL_CONTENT, || format!("status {}", res.status()))?;
        let bytes = res.bytes().await.map_err(|e| e.to_string())?;
        ensure(bytes.len() == 44 && &bytes[..4] == b"RIFF", || "not the WAV header".into())?;
        Ok("206, RIFF header".into())
    }
    .await));
}

async fn annotation_checks(api: &Api, out: &mut Vec<(&'static str, Check)>) -> Option<Value> {
    let mut listing = None;
    let created = async {
        let (status, body) = api
            .post(
                "/annotations",
                json!({"recording_id": "tone", "start_s": 1.0, "end_s": 2.5, "label": "orca", "author": "contract"}),
            )
            .await?;
        expect_status(status, StatusCode::CREATED, &body)?;
        let id = body["id"].as_str().ok_or("no id returned")?.to_string();
        let created_at = body["created_at"].as_str().unwrap_or("");
        ensure(created_at.ends_with('Z'), || format!("timestamp {created_at} is not UTC ISO-8601"))?;
        let (_, list) = api.get("/annotations?recording_id=tone").await?;
        let ids: Vec<&str> = list.as_array().ok_or("not an array")?.iter().filter_map(|a| a["id"].as_str()).collect();
        ensure(ids.contains(&id.as_str()), || format!("{id} missing from {ids:?}"))?;
        Ok::<_, String>(id)
    }
    .await;
    out.push(("POST then GET /annotations returns the new annotation", created.clone().map(|id| format!("id {id}"))));

    out.push(("POST with end_s <= start_s or an unknown label is 422", async {
        for body in [
            json!({"recording_id": "tone", "start_s": 2.0, "end_s": 2.0, "label": "orca", "author": "c"}),
            json!({"recording_id": "tone", "start_s": 2.0, "end_s": 1.0, "label": "orca", "author": "c"}),
            json!({"recording_id": "tone", "start_s": 0.0, "end_s": 1.0, "label": "seal", "author": "c"}),
            json!({"recording_id": "tone", "start_s": 0.0, "end_s": 99.0, "label": "orca", "author": "c"}),
        ] {
            let (status, res) = api.post("/annotations", body.clone()).await?;
            expect_status(status, StatusCode::UNPROCESSABLE_ENTITY, &res).map_err(|e| format!("{body}: {e}"))?;
        }
        Ok("422".into())
    }
    .await));

    out.push(("POST with a client id is safely repeatable", async {
        let body = json!({"id": "client-1", "recording_id": "silence", "start_s": 0.0, "end_s": 1.0, "label": "background", "author": "c"});
        let (s1, a) = api.post("/annotations", body.clone()).await?;
        expect_status(s1, StatusCode::CREATED, &a)?;
        let (s2, b) = api.post("/annotations", body).await?;
        expect_status(s2, StatusCode::OK, &b)?;
        ensure(a == b, || format!("{a} vs {b}"))?;
        let (s3, c) = api
            .post(
                "/annotations",
                json!({"id": "client-1", "recording_id": "silence", "start_s": 0.0, "end_s": 2.0, "label": "background", "author": "c"}),
            )
            .await?;
        expect_status(s3, StatusCode::CONFLICT, &c)?;
        Ok("201, 200 on repeat, 409 on changed content".into())
    }
    .await));

    if let Ok(id) = &created {
        out.push(("DELETE removes the annotation and logs a tombstone", async {
            let (status, body) = api.delete(&format!("/annotations/{id}")).await?;
            expect_status(status, StatusCode::OK, &body)?;
            ensure(body["deleted_id"] == id.as_str(), || format!("{body}"))?;
            let (_, list) = api.get("/annotations").await?;
            ensure(!list.to_string().contains(id.as_str()), || "still listed".into())?;
            Ok("tombstoned".into())
        }
        .await));
    }

    out.push(("DELETE of an unknown id is 404", async {
        let (status, body) = api.delete("/annotations/no-such-id").await?;
        expect_status(status, StatusCode::NOT_FOUND, &body)?;
        Ok("404".into())
    }
    .await));

    if let Ok((_, v)) = api.get("/annotations").await {
        listing = Some(v);
    }
    listing
}

async fn segment_checks(api: &Api, duration_s: f64, out: &mut Vec<(&'static str, Check)>) -> Option<SegmentTimeline> {
    let mut timeline = None;
    out.push(("GET /models lists the stored model", async {
        let (status, body) = api.get("/models").await?;
        expect_status(status, StatusCode::OK, &body)?;
        let ids: Vec<&str> = body.as_array().ok_or("not an array")?.iter().filter_map(|m| m["model_id"].as_str()).collect();
        ensure(ids == [MODEL_ID], || format!("{ids:?}"))?;
        Ok(format!("{ids:?}"))
    }
    .await));

    let first = async {
        let (status, body) = api.post(&format!("/recordings/{LONG_ID}/segment"), json!({"model_id": MODEL_ID})).await?;
        expect_status(status, StatusCode::OK, &body)?;
        let t: SegmentTimeline = serde_json::from_value(body).map_err(|e| e.to_string())?;
        check_timeline(&t, duration_s)?;
        Ok::<_, String>(t)
    }
    .await;
    out.push(("segmenting a 30 s synthetic recording returns a timeline", first.as_ref().map(|t| format!("{} segments", t.segments.len())).map_err(Clone::clone)));

    if let Ok(t) = first {
        out.push(("repeated segmentation returns the cached identical result", async {
            let (status, body) = api.post(&format!("/recordings/{LONG_ID}/segment"), json!({"model_id": MODEL_ID})).await?;
            expect_status(status, StatusCode::OK, &body)?;
            let again: SegmentTimeline = serde_json::from_value(body).map_err(|e| e.to_string())?;
            ensure(again == t, || "timelines differ".into())?;
            Ok("identical".into())
        }
        .await));
        timeline = Some(t);
    }

    out.push(("segmentation with an unknown model or recording is 404", async {
        let (status, body) = api.post(&format!("/recordings/{LONG_ID}/segment"), json!({"model_id": "missing"})).await?;
        expect_status(status, StatusCode::NOT_FOUND, &body)?;
        let (status, body) = api.post("/recordings/nope/segment", json!({"model_id": MODEL_ID})).await?;
        expect_status(status, StatusCode::NOT_FOUND, &body)?;
        let (status, body) = api.get("/jobs/nope").await?;
        expect_status(status, StatusCode::NOT_FOUND, &body)?;
        Ok("404".into())
    }
    .await));
    timeline
}

/// Long recordings go through the job queue; a zero sync limit forces that
/// path for the 30 s file.
async fn job_check(cfg: &ServiceConfig, expected: Option<&SegmentTimeline>) -> Check {
    let mut cfg = cfg.clone();
    cfg.sync_limit_s = 0.0;
    let api = Api::start(cfg).await?;
    let result = async {
        let (status, job) = api.post(&format!("/recordings/{LONG_ID}/segment"), json!({"model_id": MODEL_ID})).await?;
        expect_status(status, StatusCode::ACCEPTED, &job)?;
        let id = job["id"].as_str().ok_or("no job id")?.to_string();
        let deadline = Instant::now() + Duration::from_secs(120);
        loop {
            let (_, j) = api.get(&format!("/jobs/{id}")).await?;
            match j["state"].as_str() {
                Some("done") => {
                    let t: SegmentTimeline = serde_json::from_value(j["result"].clone()).map_err(|e| e.to_string())?;
                    if let Some(e) = expected {
                        ensure(&t == e, || "job result differs from the synchronous timeline".into())?;
                    }
                    return Ok(format!("job {id} done"));
                }
                Some("failed") => return Err(format!("job failed: {j}")),
                Some("queued" | "running") if Instant::now() < deadline => {
                    tokio::time::sleep(Duration::from_millis(20)).await
                }
                _ => return Err(format!("unexpected job state {j}")),
            }
        }
    }
    .await;
    api.svc.stop().await;
    result
}

async fn static_check(cfg: &ServiceConfig, dir: &Path) -> Check {
    let bundle = dir.join("bundle");
    std::fs::create_dir_all(&bundle).map_err(|e| e.to_string())?;
    std::fs::write(bundle.join("index.html"), "<!doctype html><title>annotator</title>").map_err(|e| e.to_string())?;
    let mut cfg = cfg.clone();
    cfg.static_dir = Some(bundle);
    let api = Api::start(cfg).await?;
    let result = async {
        let (status, body) = api.get_bytes("/").await?;
        ensure(status == StatusCode::OK && String::from_utf8_lossy(&body).contains("annotator"), || {
            format!("status {status}")
        })?;
        let (status, _) = api.get("/recordings").await?;
        ensure(status == StatusCode::OK, || "API shadowed by static route".into())?;
        Ok("bundle served beside the API".into())
    }
    .await;
    api.svc.stop().await;
    result
}

/// Builds the fixture under `work_dir`, runs every check and stops all
/// instances it started.
pub fn contract_suite(work_dir: &Path) -> ContractReport {
    let start = Instant::now();
    let mut out: Vec<(&'static str, Check)> = Vec::new();
    match build_fixture(work_dir) {
        Err(e) => out.push(("fixture", Err(e))),
        Ok(fx) => {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(4)
                .enable_all()
                .build()
                .expect("tokio runtime");
            rt.block_on(run_all(&fx, work_dir, &mut out));
        }
    }
    ContractReport {
        checks: out
            .into_iter()
            .map(|(name, r)| match r {
                Ok(detail) => ContractCheck { name, pass: true, detail },
                Err(detail) => ContractCheck { name, pass: false, detail },
            })
            .collect(),
        elapsed: start.elapsed(),
    }
}

async fn run_all(fx: &Fixture, work_dir: &Path, out: &mut Vec<(&'static str, Check)>) {
    let (api, empty) = match (Api::start(fx.cfg.clone()).await, Api::start(fx.empty_cfg.clone()).await) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            out.push(("service starts", Err(e)));
            return;
        }
    };
    recordings_checks(&api, &empty, &fx.entries, out).await;
    spectrogram_checks(&api, out).await;
    let before = annotation_checks(&api, out).await;
    let long_duration = fx
        .entries
        .iter()
        .find(|e| e.recording_id == LONG_ID)
        .map_or(0.0, |e| e.duration_s);
    let timeline = segment_checks(&api, long_duration, out).await;
    api.svc.stop().await;
    empty.svc.stop().await;

    out.push(("annotation log survives a restart", async {
        let before = before.ok_or("no listing before restart")?;
        let again = Api::start(fx.cfg.clone()).await?;
        let (_, after) = again.get("/annotations").await?;
        again.svc.stop().await;
        ensure(after == before, || format!("before {before}\nafter {after}"))?;
        let log = std::fs::read_to_string(&fx.cfg.annotations).map_err(|e| e.to_string())?;
        ensure(log.contains("deleted_id"), || "no tombstone in the log file".into())?;
        Ok(format!("{} annotations", after.as_array().map_or(0, Vec::len)))
    }
    .await));
    out.push(("long recordings run as pollable jobs", job_check(&fx.cfg, timeline.as_ref()).await));
    out.push(("static annotator bundle is served when configured", static_check(&fx.cfg, work_dir).await));
}
