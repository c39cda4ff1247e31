/// One raw ride-request event.
#[derive(Debug, Clone, PartialEq)]
pub struct RideRequest {
    pub request_id: String,
    pub passenger_id: String,
    /// UTC seconds since the Unix epoch.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
    /// Seconds between request and cancellation; `None` if never canceled.
    pub cancel_delay: Option<f64>,
}
