mod data;
mod evaluate;
mod train;
mod translate;

pub use data::{align, bootstrap, preprocess, AlignArgs, BootstrapArgs, PreprocessArgs};
pub use evaluate::{evaluate, EvaluateArgs};
pub use train::{adapt, train, AdaptArgs, TrainArgs};
pub use translate::{topicdist, translate, TopicdistArgs, TranslateArgs};
