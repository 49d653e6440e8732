use super::ChunkOutcome;
use crate::error::{input_err, Result};

/// Weight of rebuffering seconds in the reward.
pub const DEFAULT_REWARD_ALPHA: f64 = 33.0;
/// Weight of the outside-prediction error in the reward.
pub const DEFAULT_REWARD_BETA: f64 = 1.0;

/// Session reward: total quality, minus weighted stalls and outside-prediction
/// error, minus the total absolute quality change between consecutive chunks.
pub fn reward(outcomes: &[ChunkOutcome], alpha: f64, beta: f64) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(input_err!("reward needs at least one chunk"));
    }
    let quality: f64 = outcomes.iter().map(|o| o.psnr_of).sum();
    let stalls: f64 = outcomes.iter().map(|o| o.rebuffer).sum();
    let ratio: f64 = outcomes.iter().map(|o| o.ratio).sum();
    let smooth: f64 = outcomes.windows(2).map(|w| (w[1].psnr_of - w[0].psnr_of).abs()).sum();
    Ok(quality - alpha * stalls - beta * ratio - smooth)
}

/// The share of [`reward`] attributed to one chunk; the smoothness penalty is
/// charged against the previous chunk's quality when there is one. Summing
/// this over a session gives [`reward`].
pub fn chunk_reward(prev_psnr: Option<f64>, outcome: &ChunkOutcome, alpha: f64, beta: f64) -> f64 {
    let smooth = prev_psnr.map_or(0.0, |p| (outcome.psnr_of - p).abs());
    outcome.psnr_of - alpha * outcome.rebuffer - beta * outcome.ratio - smooth
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(p: f64, rt: f64, ratio: f64) -> ChunkOutcome {
        ChunkOutcome { psnr_of: p, rebuffer: rt, ratio, area_bitrates: [0.0; 3], download_time: 0.0, bytes: 0 }
    }

    #[test]
    fn examples() {
        assert_eq!(reward(&[outcome(70.0, 0.0, 0.0)], 33.0, 1.0).unwrap(), 70.0);
        let two = [outcome(70.0, 0.0, 0.0), outcome(60.0, 0.0, 0.0)];
        assert_eq!(reward(&two, 33.0, 1.0).unwrap(), 120.0);
        let r = reward(&[outcome(70.0, 0.5, 0.1)], 33.0, 1.0).unwrap();
        assert!((r - 53.4).abs() < 1e-12);
        assert!(reward(&[], 33.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn shift_adds_n_times_c(ps in proptest::collection::vec(0.0f64..100.0, 1..20), c in -20.0f64..20.0) {
            let base: Vec<_> = ps.iter().map(|&p| outcome(p, 0.1, 0.2)).collect();
            let shifted: Vec<_> = ps.iter().map(|&p| outcome(p + c, 0.1, 0.2)).collect();
            let d = reward(&shifted, 33.0, 1.0).unwrap() - reward(&base, 33.0, 1.0).unwrap();
            prop_assert!((d - ps.len() as f64 * c).abs() < 1e-8);
        }

        #[test]
        fn chunk_rewards_sum_to_total(ps in proptest::collection::vec((0.0f64..100.0, 0.0f64..2.0, 0.0f64..1.0), 1..20)) {
            let outs: Vec<_> = ps.iter().map(|&(p, rt, ra)| outcome(p, rt, ra)).collect();
            let mut prev = None;
            let mut sum = 0.0;
            for o in &outs {
                sum += chunk_reward(prev, o, 33.0, 1.0);
                prev = Some(o.psnr_of);
            }
            prop_assert!((sum - reward(&outs, 33.0, 1.0).unwrap()).abs() < 1e-8);
        }
    }
}
