use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::ImageBuffer;
use crate::numeric::{AdamState, Inputs, Tensor};

use super::checkpoint::Checkpoint;
use super::config::TrainSettings;
use super::loss::{
    noise, objective_inputs, DiscriminatorObjective, GeneratorObjective, LossBreakdown,
    TranslationPass, EPS_A, EPS_B, FAKE_A, FAKE_B, INPUT_A, INPUT_B, REAL_A, REAL_B,
};
use super::net::{images_to_tensor, UnitModel};
use super::ModelError;

/// One domain's images, pre-converted to network input planes.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    planes: Vec<Vec<f32>>,
    size: usize,
}

impl TrainingSet {
    pub fn new(model: &UnitModel, images: &[ImageBuffer]) -> Result<Self, ModelError> {
        if images.is_empty() {
            return Err(ModelError::Data("training domain is empty".into()));
        }
        let planes = images
            .iter()
            .map(|img| {
                model.check_image(img)?;
                Ok(images_to_tensor(&[img]).into_data())
            })
            .collect::<Result<_, ModelError>>()?;
        Ok(TrainingSet {
            planes,
            size: model.config.image_size as usize,
        })
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    fn batch(&self, rng: &mut ChaCha8Rng, n: usize) -> Tensor {
        let mut data = Vec::with_capacity(n * self.planes[0].len());
        for _ in 0..n {
            let i = rng.random_range(0..self.planes.len());
            data.extend_from_slice(&self.planes[i]);
        }
        Tensor::new(vec![n, 3, self.size, self.size], data).expect("uniform planes")
    }
}

/// Losses recorded after one training step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    /// 1-based count of completed steps.
    pub step: u64,
    pub gen: LossBreakdown,
    pub disc: f64,
}

pub const TRACE_HEADER: [&str; 13] = [
    "step", "gan_a", "gan_b", "kl_a", "kl_b", "rec_a", "rec_b", "cc_kl_a", "cc_kl_b", "cc_rec_a",
    "cc_rec_b", "total", "disc",
];

/// Writes the trace as CSV at full precision.
pub fn write_trace<W: Write>(sink: W, rows: &[TraceRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        let mut rec = vec![r.step.to_string()];
        rec.extend(r.gen.terms().iter().map(f64::to_string));
        rec.push(r.gen.total.to_string());
        rec.push(r.disc.to_string());
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Alternating discriminator / encoder-generator updates with all randomness
/// drawn from one seeded stream.
pub struct Trainer {
    model: UnitModel,
    settings: TrainSettings,
    adam_gen: AdamState,
    adam_disc: AdamState,
    rng: ChaCha8Rng,
    step: u64,
    gen_obj: GeneratorObjective,
    disc_obj: DiscriminatorObjective,
    pass: TranslationPass,
}

impl Trainer {
    pub fn new(model: UnitModel, settings: TrainSettings) -> Result<Self, ModelError> {
        settings.validate()?;
        let adam_gen = AdamState::new(settings.adam(), &model.params, &model.vae_params());
        let adam_disc = AdamState::new(settings.adam(), &model.params, &model.disc_params());
        let rng = ChaCha8Rng::seed_from_u64(settings.seed);
        Ok(Self::assemble(model, settings, adam_gen, adam_disc, rng, 0))
    }

    pub(crate) fn assemble(
        model: UnitModel,
        settings: TrainSettings,
        adam_gen: AdamState,
        adam_disc: AdamState,
        rng: ChaCha8Rng,
        step: u64,
    ) -> Self {
        let gen_obj = GeneratorObjective::build(&model);
        let disc_obj = DiscriminatorObjective::build(&model);
        let pass = TranslationPass::build(&model);
        Trainer {
            model,
            settings,
            adam_gen,
            adam_disc,
            rng,
            step,
            gen_obj,
            disc_obj,
            pass,
        }
    }

    pub fn model(&self) -> &UnitModel {
        &self.model
    }

    pub fn into_model(self) -> UnitModel {
        self.model
    }

    pub fn settings(&self) -> &TrainSettings {
        &self.settings
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub(crate) fn optimizers(&self) -> (&AdamState, &AdamState) {
        (&self.adam_gen, &self.adam_disc)
    }

    /// One discriminator update followed by one encoder/generator update.
    pub fn step(&mut self, a: &TrainingSet, b: &TrainingSet) -> Result<TraceRow, ModelError> {
        let n = self.settings.batch_size;
        let xa = a.batch(&mut self.rng, n);
        let xb = b.batch(&mut self.rng, n);
        let step = self.step + 1;

        let mut inputs = Inputs::new();
        inputs.insert(EPS_A.into(), noise(&self.model.latent_shape(n), &mut self.rng));
        inputs.insert(EPS_B.into(), noise(&self.model.latent_shape(n), &mut self.rng));
        inputs.insert(INPUT_A.into(), xa.clone());
        inputs.insert(INPUT_B.into(), xb.clone());
        let ev = self.pass.graph.forward(&self.model.params, &inputs)?;
        let fake_b = ev.value(self.pass.ab).expect("evaluated").clone();
        let fake_a = ev.value(self.pass.ba).expect("evaluated").clone();

        let mut inputs = Inputs::new();
        inputs.insert(REAL_A.into(), xa.clone());
        inputs.insert(REAL_B.into(), xb.clone());
        inputs.insert(FAKE_A.into(), fake_a);
        inputs.insert(FAKE_B.into(), fake_b);
        let ev = self.disc_obj.graph.forward(&self.model.params, &inputs)?;
        let disc = ev.scalar(self.disc_obj.loss).unwrap_or(f64::NAN);
        if !disc.is_finite() {
            return Err(ModelError::NonFinite {
                step,
                term: "disc_total".into(),
            });
        }
        let grads = self
            .disc_obj
            .graph
            .backward(&self.model.params, &ev, self.disc_obj.loss)?;
        self.adam_disc.update(&mut self.model.params, &grads)?;

        let inputs = objective_inputs(&self.model, xa, xb, &mut self.rng);
        let ev = self.gen_obj.graph.forward(&self.model.params, &inputs)?;
        let gen = self.gen_obj.breakdown(&ev, &self.model.config.lambdas);
        if let Some(term) = gen.first_non_finite() {
            return Err(ModelError::NonFinite {
                step,
                term: term.into(),
            });
        }
        let grads = self
            .gen_obj
            .graph
            .backward(&self.model.params, &ev, self.gen_obj.total)?;
        self.adam_gen.update(&mut self.model.params, &grads)?;
        self.step = step;
        Ok(TraceRow { step, gen, disc })
    }

    /// Runs `steps` updates, keeping every `trace_every`-th row.
    pub fn run(
        &mut self,
        a: &TrainingSet,
        b: &TrainingSet,
        steps: u64,
        trace_every: u64,
    ) -> Result<Vec<TraceRow>, ModelError> {
        let every = trace_every.max(1);
        let mut trace = Vec::new();
        for _ in 0..steps {
            let row = self.step(a, b)?;
            if row.step % every == 0 {
                trace.push(row);
            }
        }
        Ok(trace)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_trainer(self)
    }
}

/// Trains a fresh trainer for `steps` updates and returns its final
/// checkpoint together with the per-step trace.
pub fn train(
    model: UnitModel,
    domain_a: &[ImageBuffer],
    domain_b: &[ImageBuffer],
    steps: u64,
    settings: TrainSettings,
) -> Result<(Checkpoint, Vec<TraceRow>), ModelError> {
    if steps == 0 {
        return Err(ModelError::Config("steps must be ≥ 1".into()));
    }
    let a = TrainingSet::new(&model, domain_a)?;
    let b = TrainingSet::new(&model, domain_b)?;
    let mut trainer = Trainer::new(model, settings)?;
    let trace = trainer.run(&a, &b, steps, 1)?;
    Ok((trainer.checkpoint(), trace))
}
