use crate::error::{invalid, Result};
use crate::linalg::CVector;

/// Sum of per-user rates in bps/Hz with treating interference as noise,
/// using the gains `h_j^T v_m`.
pub fn sum_rate(channels: &[CVector], precoders: &[CVector], sigma_n2: f64) -> Result<f64> {
    if channels.len() != precoders.len() {
        return invalid(format!("{} channels but {} precoders", channels.len(), precoders.len()));
    }
    if let Some(n) = channels.first().map(|h| h.len()) {
        if channels.iter().chain(precoders).any(|x| x.len() != n) {
            return invalid("channels and precoders must share one dimension");
        }
    }
    let mut total = 0.0;
    for (j, h) in channels.iter().enumerate() {
        let gains: Vec<f64> = precoders.iter().map(|v| h.dot(v).norm_sqr()).collect();
        let interference: f64 = gains.iter().enumerate().filter(|&(m, _)| m != j).map(|(_, g)| g).sum::<f64>() + sigma_n2;
        if gains[j] > 0.0 {
            total += (gains[j] / interference).ln_1p() / std::f64::consts::LN_2;
        }
    }
    Ok(total)
}
