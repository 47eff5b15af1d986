//! GatewayStore against a minimal in-process daemon speaking the add/cat API.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use omnilingo::cas::{compute_cid, BlockStore, CasError, GatewayStore, Verification};

#[derive(Default)]
struct Daemon {
    blocks: Mutex<HashMap<String, Vec<u8>>>,
    tamper: AtomicBool,
}

fn multipart_content(body: &[u8], boundary: &str) -> Vec<u8> {
    let start = body.windows(4).position(|w| w == b"\r\n\r\n").unwrap() + 4;
    let closing = format!("\r\n--{boundary}");
    let len = body[start..]
        .windows(closing.len())
        .position(|w| w == closing.as_bytes())
        .unwrap();
    body[start..start + len].to_vec()
}

fn handle(daemon: &Daemon, stream: TcpStream) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    reader.read_line(&mut request_line).unwrap();
    let mut content_length = 0;
    let mut boundary = String::new();
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let (name, value) = line.split_once(':').unwrap();
        match name.to_ascii_lowercase().as_str() {
            "content-length" => content_length = value.trim().parse().unwrap(),
            "content-type" => {
                if let Some((_, b)) = value.split_once("boundary=") {
                    boundary = b.trim().to_owned();
                }
            }
            _ => {}
        }
    }
    let mut body = vec![0; content_length];
    reader.read_exact(&mut body).unwrap();

    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap(), parts.next().unwrap());
    let (status, payload) = if method == "POST" && path.starts_with("/api/v0/add") {
        let content = multipart_content(&body, &boundary);
        let cid = compute_cid(&content).to_string();
        daemon.blocks.lock().unwrap().insert(cid.clone(), content);
        ("200 OK", format!(r#"{{"Name":"blob","Hash":"{cid}","Size":"1"}}"#).into_bytes())
    } else if let Some(cid) = path.strip_prefix("/ipfs/") {
        match daemon.blocks.lock().unwrap().get(cid) {
            Some(bytes) => {
                let mut bytes = bytes.clone();
                if daemon.tamper.load(Ordering::SeqCst) && !bytes.is_empty() {
                    bytes[0] ^= 1;
                }
                ("200 OK", bytes)
            }
            None => ("404 Not Found", b"not found".to_vec()),
        }
    } else {
        ("400 Bad Request", Vec::new())
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        payload.len()
    )
    .unwrap();
    stream.write_all(&payload).unwrap();
}

fn spawn() -> (Arc<Daemon>, String) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let daemon = Arc::new(Daemon::default());
    let served = daemon.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let daemon = served.clone();
            std::thread::spawn(move || handle(&daemon, stream.unwrap()));
        }
    });
    (daemon, url)
}

#[test]
fn round_trip_through_daemon() {
    let (_daemon, url) = spawn();
    let store = GatewayStore::new(&url).with_verification(Verification::Sha256);
    for blob in [&b""[..], b"hello world", &[0xa5; 70_000]] {
        let cid = store.put(blob).unwrap();
        assert_eq!(cid, compute_cid(blob));
        assert_eq!(store.get(&cid).unwrap(), blob);
    }
    assert!(matches!(store.get(&compute_cid(b"absent")), Err(CasError::NotFound(_))));
}

#[test]
fn tampered_content_is_caught_when_verifying() {
    let (daemon, url) = spawn();
    let verifying = GatewayStore::new(&url).with_verification(Verification::Sha256);
    let cid = verifying.put(b"trust but verify").unwrap();
    daemon.tamper.store(true, Ordering::SeqCst);
    assert!(matches!(verifying.get(&cid), Err(CasError::Integrity(_))));

    // the default mode passes the daemon's bytes through untouched
    let opaque = GatewayStore::new(&url);
    assert_eq!(opaque.get(&cid).unwrap(), b"urust but verify");
}
