//! Annotated frame sets, model files and the synthetic scene generator.

mod annotations;
mod model_io;
mod synth;

pub use annotations::{
    assign_splits, frame_counts, load_annotations, read_annotations, write_annotations, AnnotatedFrame, LoadOptions,
    Split,
};
pub use model_io::{load_model, model_from_json, model_to_json, save_model, FORMAT_VERSION};
pub use synth::{
    place_face, render_frame, synth_dataset, write_synth_dataset, CropSide, Placement, SynthFrame, SynthManifest,
    SynthSpec,
};
