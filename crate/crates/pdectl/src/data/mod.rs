//! Dataset generation, the PDTF tensor format, experiment manifests and
//! frame export.

mod gen;
mod manifest;
mod pdtf;
mod pgm;
mod shapes;

pub use gen::{
    bucket_mask, draw_burger_example, draw_fluid_indirect_example, draw_fluid_natural_example,
    draw_fluid_shapes_example, example_rng, fluid_indirect_domain, gen_burger, gen_fluid_indirect,
    gen_fluid_natural, gen_fluid_shapes, load_burger_example, BurgerSample, IndirectExample,
    NaturalFlowExample, ShapePair,
};
pub use manifest::{ExperimentKind, ExperimentManifest, FileEntry};
pub use pdtf::{
    file_sha256, load_bundle, load_centered, load_params, load_staggered, load_tensor, save_bundle,
    save_centered, save_params, save_staggered, save_tensor,
};
pub use pgm::{read_bounds, write_pgm};
pub use shapes::{match_mass, Shape, ALL_SHAPES};
