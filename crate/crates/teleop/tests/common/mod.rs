#![allow(dead_code)]

use std::net::SocketAddr;

use hapdrive_teleop::SUBPROTOCOL;
use tokio_tungstenite::tungstenite::client::IntoClientRequest;

pub type Ws =
    tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

pub async fn connect(addr: SocketAddr) -> Ws {
    let mut req = format!("ws://{addr}/trial").into_client_request().unwrap();
    req.headers_mut()
        .insert("Sec-WebSocket-Protocol", SUBPROTOCOL.parse().unwrap());
    let (ws, resp) = tokio_tungstenite::connect_async(req).await.unwrap();
    assert_eq!(resp.headers()["sec-websocket-protocol"], SUBPROTOCOL);
    ws
}

/// Lateral controller a scripted cockpit could run from the state frames alone.
pub fn steer_target(track: &hapdrive_core::Track, x: f64, y: f64, phi: f64) -> f64 {
    let p = track.project([x, y]).unwrap();
    let psi = hapdrive_core::scalar::wrap_angle(phi - track.heading(p.s));
    let kappa = track.curvature(p.s);
    let delta = (2.7 * kappa).atan() - 0.3 * (p.d + 1.5) - 1.2 * psi;
    (delta / 0.6).clamp(-1.0, 1.0)
}
