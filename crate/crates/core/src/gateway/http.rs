use std::sync::OnceLock;
use std::time::Duration;

use super::{ChatBody, HttpReply, SecretString, Transport};
use crate::error::GatewayError;

/// Blocking HTTPS transport.
///
/// The underlying client is built lazily on first use so that the transport
/// can be constructed inside an async runtime and used from blocking threads.
#[derive(Debug, Default)]
pub struct HttpTransport {
    client: OnceLock<reqwest::blocking::Client>,
}

impl HttpTransport {
    pub fn new() -> Result<Self, GatewayError> {
        Ok(HttpTransport::default())
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(reqwest::blocking::Client::new)
    }
}

impl Transport for HttpTransport {
    fn post(&self, url: &str, api_key: &SecretString, body: &ChatBody, timeout: Duration) -> Result<HttpReply, String> {
        let mut request = self.client().post(url).timeout(timeout).json(body);
        if !api_key.is_empty() {
            request = request.bearer_auth(api_key.expose());
        }
        let response = request.send().map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}
