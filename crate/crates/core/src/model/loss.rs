use rand::Rng;

use crate::dataset::ImageBuffer;
use crate::numeric::{Evaluation, Graph, Inputs, NodeId, Tensor};

use super::config::Lambdas;
use super::net::{
    discriminator_graph, encoder_graph, generator_graph, images_to_tensor, Domain, Mode, UnitModel,
};
use super::ModelError;

/// Per-term values of the encoder/generator objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub gan_a: f64,
    pub gan_b: f64,
    pub kl_a: f64,
    pub kl_b: f64,
    pub rec_a: f64,
    pub rec_b: f64,
    pub cc_kl_a: f64,
    pub cc_kl_b: f64,
    pub cc_rec_a: f64,
    pub cc_rec_b: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const TERMS: [&'static str; 10] = [
        "gan_a", "gan_b", "kl_a", "kl_b", "rec_a", "rec_b", "cc_kl_a", "cc_kl_b", "cc_rec_a",
        "cc_rec_b",
    ];

    /// Builds a breakdown from the ten terms in [`Self::TERMS`] order and
    /// computes the weighted total.
    pub fn from_terms(t: [f64; 10], l: &Lambdas) -> Self {
        let w = l.to_array().map(f64::from);
        let total = w[0] * (t[0] + t[1])
            + w[1] * (t[2] + t[3])
            + w[2] * (t[4] + t[5])
            + w[3] * (t[6] + t[7])
            + w[4] * (t[8] + t[9]);
        LossBreakdown {
            gan_a: t[0],
            gan_b: t[1],
            kl_a: t[2],
            kl_b: t[3],
            rec_a: t[4],
            rec_b: t[5],
            cc_kl_a: t[6],
            cc_kl_b: t[7],
            cc_rec_a: t[8],
            cc_rec_b: t[9],
            total,
        }
    }

    pub fn terms(&self) -> [f64; 10] {
        [
            self.gan_a,
            self.gan_b,
            self.kl_a,
            self.kl_b,
            self.rec_a,
            self.rec_b,
            self.cc_kl_a,
            self.cc_kl_b,
            self.cc_rec_a,
            self.cc_rec_b,
        ]
    }

    /// First non-finite entry, terms before the total.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.terms()
            .iter()
            .zip(Self::TERMS)
            .find(|(v, _)| !v.is_finite())
            .map(|(_, n)| n)
            .or_else(|| (!self.total.is_finite()).then_some("total"))
    }
}

/// Input names of the encoder/generator objective graph.
pub(crate) const INPUT_A: &str = "a";
pub(crate) const INPUT_B: &str = "b";
pub(crate) const EPS_A: &str = "eps_a";
pub(crate) const EPS_B: &str = "eps_b";
pub(crate) const EPS_AB: &str = "eps_ab";
pub(crate) const EPS_BA: &str = "eps_ba";

fn mean_abs_diff(g: &mut Graph, x: NodeId, y: NodeId) -> NodeId {
    let d = g.sub(x, y);
    let a = g.abs(d);
    g.mean(a)
}

fn mean_square(g: &mut Graph, x: NodeId) -> NodeId {
    let s = g.square(x);
    g.mean(s)
}

/// `mean((x - target)²)`
fn least_squares(g: &mut Graph, x: NodeId, target: f32) -> NodeId {
    if target == 0.0 {
        return mean_square(g, x);
    }
    let t = g.constant(Tensor::scalar(-target));
    let d = g.add(x, t);
    mean_square(g, d)
}

/// Encoder/generator objective. Discriminator weights are read but not
/// differentiated.
pub struct GeneratorObjective {
    pub graph: Graph,
    pub terms: [NodeId; 10],
    pub total: NodeId,
    pub ab: NodeId,
    pub ba: NodeId,
}

impl GeneratorObjective {
    pub fn build(model: &UnitModel) -> Self {
        let cfg = &model.config;
        let mut g = Graph::new();
        let xa = g.input(INPUT_A);
        let xb = g.input(INPUT_B);
        let eps_a = g.input(EPS_A);
        let eps_b = g.input(EPS_B);
        let eps_ab = g.input(EPS_AB);
        let eps_ba = g.input(EPS_BA);

        let enc = |g: &mut Graph, d: Domain, x: NodeId| {
            encoder_graph(g, model.encoder(d), x, cfg, Mode::Train)
        };
        let gen = |g: &mut Graph, d: Domain, z: NodeId| {
            generator_graph(g, model.generator(d), z, Mode::Train)
        };

        let mu_a = enc(&mut g, Domain::A, xa);
        let mu_b = enc(&mut g, Domain::B, xb);
        let za = g.add(mu_a, eps_a);
        let zb = g.add(mu_b, eps_b);
        let aa = gen(&mut g, Domain::A, za);
        let bb = gen(&mut g, Domain::B, zb);
        let ab = gen(&mut g, Domain::B, za);
        let ba = gen(&mut g, Domain::A, zb);
        g.label(ab, "a→b");
        g.label(ba, "b→a");

        let mu_ab = enc(&mut g, Domain::B, ab);
        let mu_ba = enc(&mut g, Domain::A, ba);
        let z_ab = g.add(mu_ab, eps_ab);
        let z_ba = g.add(mu_ba, eps_ba);
        let aba = gen(&mut g, Domain::A, z_ab);
        let bab = gen(&mut g, Domain::B, z_ba);

        let d_ba = discriminator_graph(&mut g, model.discriminator(Domain::A), ba, Mode::Frozen);
        let d_ab = discriminator_graph(&mut g, model.discriminator(Domain::B), ab, Mode::Frozen);

        let terms = [
            least_squares(&mut g, d_ba, 1.0),
            least_squares(&mut g, d_ab, 1.0),
            mean_square(&mut g, mu_a),
            mean_square(&mut g, mu_b),
            mean_abs_diff(&mut g, aa, xa),
            mean_abs_diff(&mut g, bb, xb),
            mean_square(&mut g, mu_ab),
            mean_square(&mut g, mu_ba),
            mean_abs_diff(&mut g, aba, xa),
            mean_abs_diff(&mut g, bab, xb),
        ];
        for (node, name) in terms.iter().zip(LossBreakdown::TERMS) {
            g.label(*node, name);
        }
        let l = cfg.lambdas.to_array();
        let mut total: Option<NodeId> = None;
        for (i, pair) in terms.chunks(2).enumerate() {
            let s = g.add(pair[0], pair[1]);
            let weighted = g.scale(s, l[i]);
            total = Some(match total {
                None => weighted,
                Some(t) => g.add(t, weighted),
            });
        }
        let total = g.label(total.expect("five groups"), "total");
        GeneratorObjective {
            graph: g,
            terms,
            total,
            ab,
            ba,
        }
    }

    pub fn breakdown(&self, ev: &Evaluation, lambdas: &Lambdas) -> LossBreakdown {
        let t = self.terms.map(|n| ev.scalar(n).unwrap_or(f64::NAN));
        LossBreakdown::from_terms(t, lambdas)
    }
}

pub(crate) const REAL_A: &str = "real_a";
pub(crate) const REAL_B: &str = "real_b";
pub(crate) const FAKE_A: &str = "fake_a";
pub(crate) const FAKE_B: &str = "fake_b";

/// Least-squares discriminator objective: real → 1, translated → 0,
/// weighted by the adversarial λ.
pub struct DiscriminatorObjective {
    pub graph: Graph,
    pub loss: NodeId,
}

impl DiscriminatorObjective {
    pub fn build(model: &UnitModel) -> Self {
        let mut g = Graph::new();
        let side = |g: &mut Graph, d: Domain, real: &str, fake: &str| {
            let (r, f) = (g.input(real), g.input(fake));
            let disc = model.discriminator(d);
            let dr = discriminator_graph(g, disc, r, Mode::Train);
            let df = discriminator_graph(g, disc, f, Mode::Train);
            let lr = least_squares(g, dr, 1.0);
            let lf = least_squares(g, df, 0.0);
            g.add(lr, lf)
        };
        let la = side(&mut g, Domain::A, REAL_A, FAKE_A);
        let lb = side(&mut g, Domain::B, REAL_B, FAKE_B);
        let sum = g.add(la, lb);
        let loss = g.scale(sum, model.config.lambdas.gan);
        let loss = g.label(loss, "disc_total");
        DiscriminatorObjective { graph: g, loss }
    }
}

/// Cross-domain translation with sampled latent noise, used to produce the
/// discriminator's fake batches.
pub struct TranslationPass {
    pub graph: Graph,
    pub ab: NodeId,
    pub ba: NodeId,
}

impl TranslationPass {
    pub fn build(model: &UnitModel) -> Self {
        let cfg = &model.config;
        let mut g = Graph::new();
        let xa = g.input(INPUT_A);
        let xb = g.input(INPUT_B);
        let eps_a = g.input(EPS_A);
        let eps_b = g.input(EPS_B);
        let mu_a = encoder_graph(&mut g, model.encoder(Domain::A), xa, cfg, Mode::Frozen);
        let mu_b = encoder_graph(&mut g, model.encoder(Domain::B), xb, cfg, Mode::Frozen);
        let za = g.add(mu_a, eps_a);
        let zb = g.add(mu_b, eps_b);
        let ab = generator_graph(&mut g, model.generator(Domain::B), za, Mode::Frozen);
        let ba = generator_graph(&mut g, model.generator(Domain::A), zb, Mode::Frozen);
        TranslationPass { graph: g, ab, ba }
    }
}

/// Standard-normal noise tensor.
pub(crate) fn noise<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

/// Inputs for the generator objective with fresh latent noise.
pub fn objective_inputs<R: Rng + ?Sized>(
    model: &UnitModel,
    a: Tensor,
    b: Tensor,
    rng: &mut R,
) -> Inputs {
    let (na, nb) = (a.shape()[0], b.shape()[0]);
    let mut inputs = Inputs::new();
    inputs.insert(EPS_A.into(), noise(&model.latent_shape(na), rng));
    inputs.insert(EPS_B.into(), noise(&model.latent_shape(nb), rng));
    inputs.insert(EPS_AB.into(), noise(&model.latent_shape(na), rng));
    inputs.insert(EPS_BA.into(), noise(&model.latent_shape(nb), rng));
    inputs.insert(INPUT_A.into(), a);
    inputs.insert(INPUT_B.into(), b);
    inputs
}

fn batch_tensor(model: &UnitModel, batch: &[ImageBuffer]) -> Result<Tensor, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::Data("empty batch".into()));
    }
    for img in batch {
        model.check_image(img)?;
    }
    let refs: Vec<&ImageBuffer> = batch.iter().collect();
    Ok(images_to_tensor(&refs))
}

/// Evaluates every term of the encoder/generator objective on one pair of batches.
pub fn compute_loss<R: Rng + ?Sized>(
    model: &UnitModel,
    batch_a: &[ImageBuffer],
    batch_b: &[ImageBuffer],
    rng: &mut R,
) -> Result<LossBreakdown, ModelError> {
    let a = batch_tensor(model, batch_a)?;
    let b = batch_tensor(model, batch_b)?;
    let obj = GeneratorObjective::build(model);
    let inputs = objective_inputs(model, a, b, rng);
    let ev = obj.graph.forward(&model.params, &inputs)?;
    Ok(obj.breakdown(&ev, &model.config.lambdas))
}
