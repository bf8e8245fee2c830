//! Model configurations as data and the builders that turn them into
//! runnable models.

mod catalog;
mod model;

pub use catalog::{catalog, load_preset, Layers, ModelPreset, PresetOverrides, Task};
pub use model::{
    build_model, param_count, LayerModel, Mode, ModelBuilder, ModelRegistry, SpeechModel, Workload, LAYER_PREFIX,
    TTS_PROMPT_LEN,
};
