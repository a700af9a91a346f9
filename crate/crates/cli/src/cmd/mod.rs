pub mod align;
pub mod detect;
pub mod eval;
pub mod prep;
pub mod synth;
pub mod train;

use std::path::Path;

use tabext_core::ingest::{featurize_table, CharClassTagger, TableWords, Vocab};
use tabext_nn::{build_model, load_weights, ModelConfig, SegModel, Variant};

use crate::error::{CliError, Result};
use crate::open;

/// A segmentation model with the vocabulary it was trained against. Without
/// a weight file this is the unsupervised baseline that closes a segment
/// after every token.
pub(crate) struct Segmenter {
    model: SegModel,
    vocab: Option<Vocab>,
}

impl Segmenter {
    pub fn load(model: Option<&Path>, vocab: Option<&Path>) -> Result<Self> {
        let Some(model_path) = model else {
            return Ok(Self { model: build_model(ModelConfig::new(Variant::Unsup), 0)?, vocab: None });
        };
        let model = load_weights(open(model_path)?)
            .map_err(|e| CliError::input(format!("{}: {e}", model_path.display())))?;
        if model.variant() == Variant::Unsup {
            return Ok(Self { model, vocab: None });
        }
        let vocab_path = vocab.ok_or_else(|| CliError::input("--model needs a matching --vocab file"))?;
        let vocab = Vocab::read(open(vocab_path)?)
            .map_err(|e| CliError::input(format!("{}: {e}", vocab_path.display())))?;
        if vocab.len() > model.config().vocab_size {
            return Err(CliError::input(format!(
                "vocabulary has {} entries but the model embeds only {}",
                vocab.len(),
                model.config().vocab_size
            )));
        }
        Ok(Self { model, vocab: Some(vocab) })
    }

    pub fn variant(&self) -> Variant {
        self.model.variant()
    }

    pub fn param_count(&self) -> usize {
        self.model.param_count()
    }

    /// Segment-end probability per token, in row-major order.
    pub fn probs(&self, words: &TableWords) -> Result<Vec<f64>> {
        match &self.vocab {
            None => Ok(vec![1.0; words.token_count()]),
            Some(vocab) => {
                let feats = featurize_table(words, vocab, &CharClassTagger, None)?;
                Ok(self.model.forward(&feats)?)
            }
        }
    }
}
