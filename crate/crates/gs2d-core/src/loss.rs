//! Pixel losses shared by the fitter and the gradient checker.

use core::str::FromStr;

use crate::error::Error;
use crate::image::ImageBuffer;
use crate::math;

/// Pixel loss, averaged over every pixel and channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Loss {
    #[default]
    L1,
    L2,
}

impl Loss {
    pub fn name(&self) -> &'static str {
        match self {
            Loss::L1 => "l1",
            Loss::L2 => "l2",
        }
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "l1" | "L1" => Ok(Loss::L1),
            "l2" | "L2" => Ok(Loss::L2),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown loss {other:?} (expected l1 or l2)"
            ))),
        }
    }
}

/// Mean loss value between `output` and `target`.
pub fn loss_value(loss: Loss, output: &ImageBuffer, target: &ImageBuffer) -> Result<f64, Error> {
    output.same_dims(target)?;
    let count = (output.pixels().len() * 3) as f64;
    let mut acc = 0.0;
    for (o, t) in output.pixels().iter().zip(target.pixels()) {
        for c in 0..3 {
            let d = o[c] - t[c];
            acc += match loss {
                Loss::L1 => math::abs(d),
                Loss::L2 => d * d,
            };
        }
    }
    Ok(acc / count)
}

/// Mean loss value and its per-pixel gradient with respect to `output`.
///
/// The L1 subgradient at an exactly zero residual is 0.
pub fn loss_value_and_grad(
    loss: Loss,
    output: &ImageBuffer,
    target: &ImageBuffer,
) -> Result<(f64, ImageBuffer), Error> {
    output.same_dims(target)?;
    let count = (output.pixels().len() * 3) as f64;
    let inv = 1.0 / count;
    let mut acc = 0.0;
    let mut grad = ImageBuffer::zeros(output.height(), output.width());
    for ((o, t), g) in output
        .pixels()
        .iter()
        .zip(target.pixels())
        .zip(grad.pixels_mut())
    {
        for c in 0..3 {
            let d = o[c] - t[c];
            match loss {
                Loss::L1 => {
                    acc += math::abs(d);
                    g[c] = if d > 0.0 {
                        inv
                    } else if d < 0.0 {
                        -inv
                    } else {
                        0.0
                    };
                }
                Loss::L2 => {
                    acc += d * d;
                    g[c] = 2.0 * d * inv;
                }
            }
        }
    }
    Ok((acc * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_match_hand_computation() {
        let a = ImageBuffer::from_data(1, 2, alloc::vec![[0.0, 0.5, 1.0], [0.25, 0.25, 0.25]])
            .unwrap();
        let b = ImageBuffer::from_data(1, 2, alloc::vec![[0.5, 0.5, 0.5], [0.25, 0.75, 0.25]])
            .unwrap();
        let l1 = loss_value(Loss::L1, &a, &b).unwrap();
        assert!((l1 - (0.5 + 0.0 + 0.5 + 0.0 + 0.5 + 0.0) / 6.0).abs() < 1e-15);
        let l2 = loss_value(Loss::L2, &a, &b).unwrap();
        assert!((l2 - (0.25 * 3.0) / 6.0).abs() < 1e-15);
    }

    #[test]
    fn l1_gradient_is_zero_at_zero_residual() {
        let a = ImageBuffer::constant(2, 2, [0.3; 3]);
        let (_, g) = loss_value_and_grad(Loss::L1, &a, &a).unwrap();
        assert!(g.pixels().iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut a = ImageBuffer::constant(1, 2, [0.4; 3]);
        let b = ImageBuffer::from_data(1, 2, alloc::vec![[0.1, 0.9, 0.4], [0.6, 0.2, 0.8]])
            .unwrap();
        let h = 1e-6;
        for loss in [Loss::L1, Loss::L2] {
            let (_, g) = loss_value_and_grad(loss, &a, &b).unwrap();
            for px in 0..2 {
                for c in 0..3 {
                    let orig = a.pixels()[px][c];
                    a.pixels_mut()[px][c] = orig + h;
                    let up = loss_value(loss, &a, &b).unwrap();
                    a.pixels_mut()[px][c] = orig - h;
                    let down = loss_value(loss, &a, &b).unwrap();
                    a.pixels_mut()[px][c] = orig;
                    let fd = (up - down) / (2.0 * h);
                    assert!((g.pixels()[px][c] - fd).abs() < 1e-9, "{loss:?} {px} {c}");
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = ImageBuffer::zeros(2, 2);
        let b = ImageBuffer::zeros(2, 3);
        assert!(loss_value(Loss::L1, &a, &b).is_err());
    }
}
