use rand_chacha::ChaCha8Rng;

use super::place::{nest_objects, place_base, stack_objects, BaseLayout, Layout, SlotRequirement};
use super::{SceneGenError, SceneRecipe};
use crate::registry::Registry;

/// Builds one scene layout for a difficulty level.
pub trait SceneComposer: Send + Sync {
    fn compose(&self, layout: &mut Layout, recipe: &SceneRecipe, rng: &mut ChaCha8Rng) -> Result<(), SceneGenError>;
}

/// Four objects spread on the plane, clear of each other.
pub struct Easy;

/// Four base objects slid close together, two stacked on top.
pub struct Medium;

/// Four tightly packed base objects, two stacked and two nested.
pub struct Hard;

impl SceneComposer for Easy {
    fn compose(&self, layout: &mut Layout, recipe: &SceneRecipe, rng: &mut ChaCha8Rng) -> Result<(), SceneGenError> {
        place_base(layout, recipe, BaseLayout::Spread { clearance: 5.0 }, &[], rng)
    }
}

impl SceneComposer for Medium {
    fn compose(&self, layout: &mut Layout, recipe: &SceneRecipe, rng: &mut ChaCha8Rng) -> Result<(), SceneGenError> {
        let slots = [SlotRequirement::UprightSupport];
        place_base(layout, recipe, BaseLayout::Packed { gap: (0.5, 3.0) }, &slots, rng)?;
        stack_objects(layout, recipe, recipe.stacked_count, rng)
    }
}

impl SceneComposer for Hard {
    fn compose(&self, layout: &mut Layout, recipe: &SceneRecipe, rng: &mut ChaCha8Rng) -> Result<(), SceneGenError> {
        let slots = [
            SlotRequirement::UprightContainer,
            SlotRequirement::UprightSupport,
            SlotRequirement::UprightContainer,
        ];
        place_base(layout, recipe, BaseLayout::Packed { gap: (0.0, 0.0) }, &slots, rng)?;
        // nest first so the smallest objects are still free for the containers
        nest_objects(layout, recipe, recipe.nested_count, rng)?;
        stack_objects(layout, recipe, recipe.stacked_count, rng)
    }
}

pub fn composers() -> Registry<dyn SceneComposer> {
    let mut r: Registry<dyn SceneComposer> = Registry::new("scene composer");
    r.register("easy", Box::new(Easy))
        .register("medium", Box::new(Medium))
        .register("hard", Box::new(Hard));
    r
}
