//! Async TCP termination of the edge protocol.

use std::sync::Arc;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

use super::IngestCore;
use crate::protocol::{Envelope, FrameDecoder, FrameKind, Hello};

/// Accepts agent connections until `shutdown` resolves.
pub async fn serve_wire(
    listener: TcpListener,
    core: Arc<IngestCore>,
    shutdown: impl std::future::Future<Output = ()>,
) {
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => break,
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    let core = core.clone();
                    tokio::spawn(async move {
                        if let Err(e) = handle_connection(stream, core).await {
                            tracing::debug!(%peer, error = %e, "agent connection closed");
                        }
                    });
                }
                Err(e) => tracing::warn!(error = %e, "accept failed"),
            },
        }
    }
}

async fn next_frame(
    stream: &mut TcpStream,
    dec: &mut FrameDecoder,
) -> std::io::Result<Option<Envelope>> {
    let mut chunk = [0u8; 8192];
    loop {
        if let Some(env) = dec
            .next_frame()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?
        {
            return Ok(Some(env));
        }
        let n = stream.read(&mut chunk).await?;
        if n == 0 {
            // A partial frame left in the decoder is simply discarded.
            return Ok(None);
        }
        dec.push(&chunk[..n]);
    }
}

async fn handle_connection(mut stream: TcpStream, core: Arc<IngestCore>) -> std::io::Result<()> {
    let _ = stream.set_nodelay(true);
    let mut dec = FrameDecoder::new();
    let invalid = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidData, m);

    let Some(first) = next_frame(&mut stream, &mut dec).await? else {
        return Ok(());
    };
    if first.kind != FrameKind::Hello {
        return Err(invalid(format!("expected hello, got {:?}", first.kind)));
    }
    let hello: Hello = first.parse().map_err(|e| invalid(e.to_string()))?;
    if hello.agent_id.trim().is_empty() {
        return Err(invalid("empty agent id".into()));
    }
    let ok = core
        .handshake(&hello)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    stream
        .write_all(&Envelope::json(FrameKind::HelloOk, &ok).encode())
        .await?;

    while let Some(env) = next_frame(&mut stream, &mut dec).await? {
        if env.kind != FrameKind::Bundle {
            return Err(invalid(format!("unexpected {:?} frame", env.kind)));
        }
        let ack = core
            .handle_bundle(&hello.agent_id, &env.payload)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        stream
            .write_all(&Envelope::json(FrameKind::Ack, &ack).encode())
            .await?;
    }
    Ok(())
}
