use super::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: f64,
    /// Population standard deviation (divides by N).
    pub std: f64,
    /// Set when every element of the channel is equal, so `std == 0`.
    pub constant: bool,
}

/// Mean and population std of each channel over batch and spatial positions.
pub fn channel_stats(feat: &Tensor4) -> Vec<ChannelStats> {
    let [n, c, _, _] = feat.dims();
    (0..c)
        .map(|ch| {
            let values = || (0..n).flat_map(move |b| feat.plane(b, ch).iter().map(|v| *v as f64));
            let count = (n * feat.height() * feat.width()) as f64;
            let mean = values().sum::<f64>() / count;
            let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
            let first = feat.plane(0, ch)[0];
            let constant = (0..n).all(|b| feat.plane(b, ch).iter().all(|v| *v == first));
            ChannelStats {
                mean,
                std: if constant { 0.0 } else { var.sqrt() },
                constant,
            }
        })
        .collect()
}
