mod common;

use std::net::UdpSocket;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use common::{phantom_service, url};
use futures_util::StreamExt;
use peakvol_core::interaction::{Buttons, ControllerSample, Device};
use peakvol_core::net::encode;
use peakvol_core::transfer::{ColorRgb, Peak, TransferFunction};
use peakvol_core::volume::{generate_phantom, Histogram};
use peakvol_service::protocol::ErrorBody;
use tokio_tungstenite::tungstenite::Message;

fn nav(buttons: Buttons, t: u64) -> ControllerSample {
    ControllerSample {
        buttons,
        ..ControllerSample::idle(Device::NavPad, t)
    }
}

#[tokio::test]
async fn histogram_matches_the_volume() {
    let svc = phantom_service(32, 32);
    let h: Histogram = reqwest::get(url(&svc, "/state/histogram")).await.unwrap().json().await.unwrap();
    assert_eq!(h.nonzero_bins(), 4);
    assert_eq!(h, generate_phantom([32; 3]).unwrap().histogram());
}

#[tokio::test]
async fn set_tf_validates_and_keeps_prior_state() {
    let svc = phantom_service(16, 16);
    let client = reqwest::Client::new();
    let before = reqwest::get(url(&svc, "/state/tf")).await.unwrap().text().await.unwrap();

    let nine: Vec<_> = (0..9).map(|i| format!(r#"{{"center": 0.{i}, "width": 0.1, "height": 0.5, "color": [1,1,1], "enabled": true}}"#)).collect();
    let body = format!(r#"{{"peaks": [{}], "selected": null}}"#, nine.join(","));
    let res = client.put(url(&svc, "/state/tf")).body(body).send().await.unwrap();
    assert_eq!(res.status(), 422);
    let err: ErrorBody = res.json().await.unwrap();
    assert_eq!(err.error, "capacity");

    let res = client.put(url(&svc, "/state/tf")).body("{\n  \"peaks\": [}").send().await.unwrap();
    assert_eq!(res.status(), 400);
    let err: ErrorBody = res.json().await.unwrap();
    assert_eq!((err.error.as_str(), err.line), ("parse", Some(2)));

    let after = reqwest::get(url(&svc, "/state/tf")).await.unwrap().text().await.unwrap();
    assert_eq!(before, after);

    let tf = TransferFunction::from_parts(vec![Peak::new(0.3, 0.1, 0.7, ColorRgb::new(0.0, 1.0, 1.0)).unwrap()], Some(0)).unwrap();
    let res = client.put(url(&svc, "/state/tf")).body(tf.to_json()).send().await.unwrap();
    assert_eq!(res.status(), 200);
    assert_eq!(res.text().await.unwrap(), tf.to_json());
    assert_eq!(reqwest::get(url(&svc, "/state/tf")).await.unwrap().text().await.unwrap(), tf.to_json());
}

#[tokio::test]
async fn injected_add_edge_adds_a_peak_and_one_frame() {
    let svc = phantom_service(16, 24);
    let client = reqwest::Client::new();
    let n0 = TransferFunction::from_json(&reqwest::get(url(&svc, "/state/tf")).await.unwrap().text().await.unwrap()).unwrap().len();
    let frames0 = svc.stats().frames_published;
    assert_eq!(frames0, 1);

    for (i, b) in [Buttons::empty(), Buttons::ADD, Buttons::empty()].into_iter().enumerate() {
        let res = client
            .post(url(&svc, "/input/sample"))
            .body(serde_json::to_string(&nav(b, i as u64)).unwrap())
            .send()
            .await
            .unwrap();
        assert_eq!(res.status(), 202);
    }
    assert!(svc.wait_idle(Duration::from_secs(10)));
    let tf = TransferFunction::from_json(&reqwest::get(url(&svc, "/state/tf")).await.unwrap().text().await.unwrap()).unwrap();
    assert_eq!(tf.len(), n0 + 1);
    let stats = svc.stats();
    assert_eq!(stats.injected, 3);
    assert!(stats.frames_published > frames0);

    let res = client.post(url(&svc, "/input/sample")).body(r#"{"device": "NavPad"}"#).send().await.unwrap();
    assert_eq!(res.status(), 400);
    let mut bad = nav(Buttons::empty(), 9);
    bad.trigger = 3.0;
    let res = client.post(url(&svc, "/input/sample")).body(serde_json::to_string(&bad).unwrap()).send().await.unwrap();
    assert_eq!(res.status(), 422);
}

#[tokio::test]
async fn idle_service_publishes_nothing_new() {
    let svc = phantom_service(16, 16);
    let res = reqwest::get(url(&svc, "/frame/latest")).await.unwrap();
    assert_eq!(res.status(), 200);
    assert_eq!(res.headers()["content-type"], "image/png");
    let first = res.bytes().await.unwrap();
    assert_eq!(&first[1..4], b"PNG");
    // Samples that change nothing must not trigger renders.
    for t in 0..20 {
        svc.inject(ControllerSample::idle(Device::MainController, t));
    }
    assert!(svc.wait_idle(Duration::from_secs(5)));
    tokio::time::sleep(Duration::from_millis(200)).await;
    let s = svc.stats();
    assert_eq!((s.frames_published, s.state_version), (1, 0));
    let again = reqwest::get(url(&svc, "/frame/latest")).await.unwrap().bytes().await.unwrap();
    assert_eq!(first, again);
}

#[tokio::test]
async fn malformed_storm_is_survived_and_counted() {
    let svc = phantom_service(16, 16);
    let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
    for i in 0..500u32 {
        let junk = vec![(i % 251) as u8; (i % 97) as usize];
        tx.send_to(&junk, svc.udp_addr()).unwrap();
        // Stay under the socket buffer; loss would be legal but uncountable.
        if i % 25 == 24 {
            std::thread::sleep(Duration::from_millis(2));
        }
    }
    tx.send_to(&encode(&nav(Buttons::ADD, 1), 1), svc.udp_addr()).unwrap();
    let deadline = std::time::Instant::now() + Duration::from_secs(5);
    while svc.stats().udp.malformed < 500 && std::time::Instant::now() < deadline {
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert!(svc.wait_idle(Duration::from_secs(5)));
    let s = svc.stats();
    assert_eq!((s.udp.malformed, s.udp.received), (500, 1));
    assert_eq!(reqwest::get(url(&svc, "/stats")).await.unwrap().status(), 200);
}

#[tokio::test]
async fn stream_delivers_state_events_and_frames() {
    let svc = phantom_service(16, 16);
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/stream", svc.http_addr())).await.unwrap();
    let next_text = |m: Message| -> serde_json::Value {
        match m {
            Message::Text(t) => serde_json::from_str(&t).unwrap(),
            other => panic!("expected text, got {other:?}"),
        }
    };
    let greeting = next_text(ws.next().await.unwrap().unwrap());
    assert_eq!(greeting["type"], "state");
    assert_eq!(greeting["tf"]["peaks"].as_array().unwrap().len(), 3);
    let frame_meta = next_text(ws.next().await.unwrap().unwrap());
    assert_eq!(frame_meta["type"], "frame");
    match ws.next().await.unwrap().unwrap() {
        Message::Binary(b) => assert_eq!(b.len() as u64, frame_meta["bytes"].as_u64().unwrap()),
        other => panic!("{other:?}"),
    }

    svc.inject(nav(Buttons::empty(), 0));
    svc.inject(nav(Buttons::ADD, 1));
    let mut saw = (false, false, false);
    let deadline = tokio::time::Instant::now() + Duration::from_secs(10);
    while !(saw.0 && saw.1 && saw.2) {
        let msg = tokio::time::timeout_at(deadline, ws.next()).await.expect("stream message").unwrap().unwrap();
        match msg {
            Message::Text(t) => {
                let v: serde_json::Value = serde_json::from_str(&t).unwrap();
                match v["type"].as_str().unwrap() {
                    "event" if v["event"]["event"] == "peak_added" => saw.0 = true,
                    "state" if v["tf"]["peaks"].as_array().unwrap().len() == 4 => saw.1 = true,
                    _ => {}
                }
            }
            Message::Binary(b) => {
                assert_eq!(&b[1..4], b"PNG");
                saw.2 = saw.1;
            }
            _ => {}
        }
    }
}

#[tokio::test]
async fn readers_never_see_an_invalid_tf() {
    let svc = phantom_service(16, 16);
    let base = url(&svc, "/state/tf");
    let stop = Arc::new(AtomicBool::new(false));
    let readers: Vec<_> = (0..3)
        .map(|_| {
            let (base, stop) = (base.clone(), Arc::clone(&stop));
            tokio::spawn(async move {
                let mut n = 0;
                while !stop.load(Ordering::Relaxed) {
                    let text = reqwest::get(&base).await.unwrap().text().await.unwrap();
                    TransferFunction::from_json(&text).expect("valid TF");
                    n += 1;
                }
                n
            })
        })
        .collect();
    let client = reqwest::Client::new();
    for i in 0..40 {
        let peaks = (0..=(i % 8)).map(|k| Peak::new(k as f64 / 8.0, 0.05 + 0.01 * k as f64, 0.5, ColorRgb::new(1.0, 0.0, 0.0)).unwrap()).collect();
        let tf = TransferFunction::from_parts(peaks, Some(0)).unwrap();
        let body = if i % 3 == 0 { r#"{"peaks": [], "selected": 4}"#.to_string() } else { tf.to_json() };
        client.put(&base).body(body).send().await.unwrap();
    }
    stop.store(true, Ordering::Relaxed);
    for r in readers {
        assert!(r.await.unwrap() > 0);
    }
}
