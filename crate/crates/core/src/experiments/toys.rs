//! Small mixtures with known structure. Each phrase names a set of components.

use crate::denoise::{GaussianComponent, GmmModel, Variance};
use crate::error::Result;
use crate::field::Shape;

/// Mutual information between the component label and `x` for [`two_component`]
/// under condition `c0`, averaged over `x ~ p(x | c0)`. Computed by quadrature.
pub const TWO_COMPONENT_MI: f64 = 0.63272;

/// Equal-weight scalar mixture of `N(-1, 0.25)` (phrase `c0`) and `N(+1, 0.25)` (phrase `c1`).
pub fn two_component() -> GmmModel {
    GmmModel::scalar(&[(0.5, -1.0, 0.5), (0.5, 1.0, 0.5)])
        .and_then(|m| m.with_phrase_components("c0", &[0]))
        .and_then(|m| m.with_phrase_components("c1", &[1]))
        .expect("valid mixture")
}

/// A ±`amplitude` pattern over a 4×4 grid, one sign flip per bit of the pixel index.
fn pattern(k: usize, amplitude: f64) -> Vec<f64> {
    (0..16usize)
        .map(|p| if (p >> k) & 1 == 1 { amplitude } else { -amplitude })
        .collect()
}

fn grid_mixture(means: Vec<Vec<f64>>, weights: &[f64], variance: f64) -> Result<GmmModel> {
    let components = means
        .into_iter()
        .zip(weights)
        .map(|(mean, &weight)| GaussianComponent {
            weight,
            mean,
            variance: Variance::Isotropic(variance),
        })
        .collect();
    GmmModel::new(Shape::new(1, 4, 4)?, components)
}

/// Three objects on a 4×4 grid. `car` and `automobile` name the same component.
pub fn synonym_scene() -> GmmModel {
    grid_mixture((0..3).map(|k| pattern(k, 1.0)).collect(), &[1.0; 3], 0.25)
        .and_then(|m| m.with_phrase_components("car", &[0]))
        .and_then(|m| m.with_phrase_components("automobile", &[0]))
        .and_then(|m| m.with_phrase_components("tree", &[1]))
        .and_then(|m| m.with_phrase_components("house", &[2]))
        .expect("valid mixture")
}

/// Two binary phrases whose exclusive-or decides the sign of the image.
/// Component `2*y1 + y2` has `y1` from `a0`/`a1` and `y2` from `b0`/`b1`.
pub fn xor_scene() -> GmmModel {
    let means = (0..4)
        .map(|k| {
            let sign = if (k >> 1) ^ (k & 1) == 1 { 1.0 } else { -1.0 };
            pattern(0, sign)
        })
        .collect();
    grid_mixture(means, &[1.0; 4], 0.25)
        .and_then(|m| m.with_phrase_components("a0", &[0, 1]))
        .and_then(|m| m.with_phrase_components("a1", &[2, 3]))
        .and_then(|m| m.with_phrase_components("b0", &[0, 2]))
        .and_then(|m| m.with_phrase_components("b1", &[1, 3]))
        .expect("valid mixture")
}

/// Occupations and genders. Doctors are rare and mostly male, so `male`
/// shares most of its mass with `doctor` while `female` mostly overlaps `nurse`.
///
/// Components: male doctor, female doctor, male nurse, female nurse.
pub fn bias_scene() -> GmmModel {
    GmmModel::scalar(&[(0.25, 3.0, 0.4), (0.05, 1.0, 0.4), (0.05, -1.0, 0.4), (0.65, -3.0, 0.4)])
        .and_then(|m| m.with_phrase_components("doctor", &[0, 1]))
        .and_then(|m| m.with_phrase_components("nurse", &[2, 3]))
        .and_then(|m| m.with_phrase_components("male", &[0, 2]))
        .and_then(|m| m.with_phrase_components("female", &[1, 3]))
        .expect("valid mixture")
}

/// Brown and black dogs and cats on a 4×4 grid. In the prompt `brown dog animal`
/// the word `animal` is redundant while `brown` changes the selection.
pub fn redundancy_probe() -> GmmModel {
    grid_mixture((0..4).map(|k| pattern(k, 1.5)).collect(), &[1.0; 4], 0.01)
        .and_then(|m| m.with_phrase_components("dog", &[0, 1]))
        .and_then(|m| m.with_phrase_components("cat", &[2, 3]))
        .and_then(|m| m.with_phrase_components("brown", &[0, 2]))
        .and_then(|m| m.with_phrase_components("black", &[1, 3]))
        .and_then(|m| m.with_phrase_components("animal", &[0, 1, 2, 3]))
        .expect("valid mixture")
}
