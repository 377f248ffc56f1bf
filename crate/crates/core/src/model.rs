//! The full noise predictor: conditioning, both auxiliaries and the U-Net.

use diqp_tensor::{Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{DiqpError, Result};
use crate::look_ahead::{LookAhead, LookAheadInput};
use crate::look_around::LookAround;
use crate::lost::{ConditionalInfo, Lost};
use crate::nn::{Graph, ParamStore};
use crate::unet::{ShapeLedger, Unet};

/// Everything one forward pass consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    /// Degraded window clip `[3, side, side, 3]`.
    pub clip: Tensor,
    pub info: ConditionalInfo,
    /// Downscaled degraded full frames `[3, H', W', 3]`.
    pub downscaled: Tensor,
    pub look_ahead: Option<LookAheadInput>,
}

#[derive(Clone, Debug)]
pub struct DiqpModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub lost: Lost,
    pub look_around: Option<LookAround>,
    pub look_ahead: Option<LookAhead>,
    pub unet: Unet,
}

pub struct Forward {
    pub noise: Var,
    pub ledger: ShapeLedger,
    pub look_around: Vec<Var>,
    pub look_ahead: Vec<Var>,
}

impl DiqpModel {
    /// Build and initialise from `seed`; the output convolution starts at zero.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let lost = Lost::new(&mut store, &mut rng, config);
        let look_around = config
            .look_around
            .enabled
            .then(|| LookAround::new(&mut store, &mut rng, config));
        let look_ahead = config
            .look_ahead
            .enabled
            .then(|| LookAhead::new(&mut store, &mut rng, config));
        let unet = Unet::new(&mut store, &mut rng, config);
        Ok(Self {
            config: config.clone(),
            store,
            lost,
            look_around,
            look_ahead,
            unet,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.store.count()
    }

    pub fn forward(&self, g: &mut Graph, input: &ModelInput) -> Result<Forward> {
        let cfg = &self.config;
        let base = self.lost.base(g, &input.info)?;
        let tiles = (0..=cfg.stages)
            .map(|i| self.lost.tile(g, base, cfg.side(i), cfg.clip_len))
            .collect::<Result<Vec<_>>>()?;
        let look_around = match &self.look_around {
            Some(la) => {
                let ds = g.input(input.downscaled.clone());
                la.forward(g, ds)?
            }
            None => Vec::new(),
        };
        let look_ahead = match (&self.look_ahead, &input.look_ahead) {
            (Some(la), Some(inp)) => la.forward(g, inp)?,
            (Some(_), None) => {
                return Err(DiqpError::Invalid("model expects look-ahead input but none was given".into()))
            }
            (None, _) => Vec::new(),
        };
        let clip = g.input(input.clip.clone());
        let ar = self.look_around.as_ref().map(|_| look_around.as_slice());
        let ah = self.look_ahead.as_ref().map(|_| look_ahead.as_slice());
        let (noise, ledger) = self.unet.forward(g, clip, &tiles, ar, ah)?;
        Ok(Forward {
            noise,
            ledger,
            look_around,
            look_ahead,
        })
    }

    /// Inference-only noise prediction.
    pub fn predict(&self, input: &ModelInput) -> Result<Tensor> {
        let mut g = Graph::new(&self.store, false);
        let out = self.forward(&mut g, input)?;
        Ok(g.value(out.noise).clone())
    }
}

pub fn count_parameters(model: &DiqpModel) -> usize {
    model.parameter_count()
}
