//! Serves a bundle root over HTTP until Ctrl-C.
//!
//! `cargo run --example serve_bundle -- [root] [port]`

use std::net::SocketAddr;

use ctprev::pipeline::BundleStore;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_env_filter("info").init();
    let mut args = std::env::args().skip(1);
    let root = args.next().unwrap_or_else(|| "bundles".into());
    let port: u16 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(8080);
    let store = BundleStore::open(root)?;
    for b in store.list()? {
        println!("http://127.0.0.1:{port}/api/datasets/{}", b.meta.id);
    }
    ctprev::service::serve(store, SocketAddr::from(([127, 0, 0, 1], port)), None).await?;
    Ok(())
}
