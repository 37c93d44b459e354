use serde::{Deserialize, Serialize};

use super::{ForgeError, LesionOrganTriplet};

/// What to do with a lesion whose organ could not be assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnassignedPolicy {
    /// Drop the annotation and count it as skipped.
    #[default]
    Skip,
    /// Keep it with an organ-free seed sentence.
    OrganFree,
}

/// The factual seed sentence for an assigned lesion.
pub fn seed_from_triplet(triplet: &LesionOrganTriplet) -> Result<String, ForgeError> {
    match &triplet.organ_label {
        Some(organ) => Ok(format!("There is a {} in the {}.", triplet.lesion_class, organ)),
        None => Err(ForgeError::Unassigned {
            lesion_class: triplet.lesion_class.clone(),
        }),
    }
}

pub fn organ_free_seed(lesion_class: &str) -> String {
    format!("There is a {lesion_class}.")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::BBox;

    fn triplet(lesion: &str, organ: Option<&str>) -> LesionOrganTriplet {
        LesionOrganTriplet {
            lesion_class: lesion.into(),
            bbox: BBox::full(),
            organ_label: organ.map(Into::into),
            iou_score: if organ.is_some() { 0.5 } else { 0.0 },
        }
    }

    #[test]
    fn fills_the_fixed_template() {
        assert_eq!(
            seed_from_triplet(&triplet("mass", Some("liver"))).unwrap(),
            "There is a mass in the liver."
        );
        assert_eq!(
            seed_from_triplet(&triplet("nodule", Some("left lung"))).unwrap(),
            "There is a nodule in the left lung."
        );
    }

    #[test]
    fn unassigned_is_rejected() {
        assert!(matches!(
            seed_from_triplet(&triplet("mass", None)),
            Err(ForgeError::Unassigned { .. })
        ));
        assert_eq!(organ_free_seed("mass"), "There is a mass.");
    }
}
