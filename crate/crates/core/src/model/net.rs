//! Parameter layout of the two encoders, two generators and two
//! discriminators, and the graph fragments that wire them up.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{round_to_u8, ImageBuffer};
use crate::numeric::{Graph, Inputs, NodeId, ParamId, ParamStore, Tensor, LEAKY_SLOPE, NORM_EPS};

use super::config::ModelConfig;
use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

/// `x + IN(conv(lrelu(IN(conv(x)))))`
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResBlock {
    pub conv1: Conv,
    pub conv2: Conv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Encoder {
    pub down: [Conv; 3],
    pub private: ResBlock,
    /// Same parameters for both encoders.
    pub shared: ResBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Generator {
    /// Same parameters for both generators.
    pub shared: ResBlock,
    pub private: ResBlock,
    pub up: [Conv; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Discriminator {
    pub convs: [Conv; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    A,
    B,
}

impl Domain {
    pub fn other(self) -> Domain {
        match self {
            Domain::A => Domain::B,
            Domain::B => Domain::A,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    AToB,
    BToA,
}

impl Direction {
    pub fn source(self) -> Domain {
        match self {
            Direction::AToB => Domain::A,
            Direction::BToA => Domain::B,
        }
    }

    pub fn target(self) -> Domain {
        self.source().other()
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::AToB => "A→B",
            Direction::BToA => "B→A",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    Sample,
    Zero,
}

/// Two VAEs sharing their deepest encoder stage and first generator stage,
/// plus one discriminator per domain.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub enc_a: Encoder,
    pub enc_b: Encoder,
    pub gen_a: Generator,
    pub gen_b: Generator,
    pub disc_a: Discriminator,
    pub disc_b: Discriminator,
}

struct Init {
    store: ParamStore,
    rng: ChaCha8Rng,
    std: f32,
}

impl Init {
    fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: usize, bias: bool) -> Conv {
        self.weight(name, [c_out, c_in, k, k], c_out, bias)
    }

    fn conv_t(&mut self, name: &str, c_in: usize, c_out: usize, k: usize, bias: bool) -> Conv {
        self.weight(name, [c_in, c_out, k, k], c_out, bias)
    }

    fn weight(&mut self, name: &str, shape: [usize; 4], c_out: usize, bias: bool) -> Conv {
        let w = Tensor::randn(&shape, self.std, &mut self.rng);
        let weight = self.store.add(format!("{name}.w"), w);
        let bias = bias.then(|| self.store.add(format!("{name}.b"), Tensor::zeros(&[c_out])));
        Conv { weight, bias }
    }

    /// Convolutions followed by instance norm carry no bias; it would be normalized away.
    fn res(&mut self, name: &str, c: usize) -> ResBlock {
        ResBlock {
            conv1: self.conv(&format!("{name}.conv1"), c, c, 3, false),
            conv2: self.conv(&format!("{name}.conv2"), c, c, 3, false),
        }
    }
}

impl UnitModel {
    pub fn build(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut init = Init {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            std: config.init_std,
        };
        let (c, l, d) = (
            config.base_channels,
            config.latent_channels,
            config.disc_channels,
        );
        let bias = !config.down_norm;
        let shared_enc = init.res("shared_enc", l);
        let shared_gen = init.res("shared_gen", l);
        let encoder = |init: &mut Init, side: &str| Encoder {
            down: [
                init.conv(&format!("enc_{side}.down0"), c, 3, 3, bias),
                init.conv(&format!("enc_{side}.down1"), 2 * c, c, 3, bias),
                init.conv(&format!("enc_{side}.down2"), l, 2 * c, 3, bias),
            ],
            private: init.res(&format!("enc_{side}.res"), l),
            shared: shared_enc,
        };
        let enc_a = encoder(&mut init, "a");
        let enc_b = encoder(&mut init, "b");
        let generator = |init: &mut Init, side: &str| Generator {
            shared: shared_gen,
            private: init.res(&format!("gen_{side}.res"), l),
            up: [
                init.conv_t(&format!("gen_{side}.up0"), l, 2 * c, 4, false),
                init.conv_t(&format!("gen_{side}.up1"), 2 * c, c, 4, false),
                init.conv_t(&format!("gen_{side}.up2"), c, 3, 4, true),
            ],
        };
        let gen_a = generator(&mut init, "a");
        let gen_b = generator(&mut init, "b");
        let discriminator = |init: &mut Init, side: &str| Discriminator {
            convs: [
                init.conv(&format!("disc_{side}.conv0"), d, 3, 4, true),
                init.conv(&format!("disc_{side}.conv1"), 2 * d, d, 4, true),
                init.conv(&format!("disc_{side}.conv2"), 4 * d, 2 * d, 4, true),
                init.conv(&format!("disc_{side}.conv3"), 1, 4 * d, 4, true),
            ],
        };
        let disc_a = discriminator(&mut init, "a");
        let disc_b = discriminator(&mut init, "b");
        Ok(UnitModel {
            config: config.clone(),
            params: init.store,
            enc_a,
            enc_b,
            gen_a,
            gen_b,
            disc_a,
            disc_b,
        })
    }

    pub fn encoder(&self, d: Domain) -> &Encoder {
        match d {
            Domain::A => &self.enc_a,
            Domain::B => &self.enc_b,
        }
    }

    pub fn generator(&self, d: Domain) -> &Generator {
        match d {
            Domain::A => &self.gen_a,
            Domain::B => &self.gen_b,
        }
    }

    pub fn discriminator(&self, d: Domain) -> &Discriminator {
        match d {
            Domain::A => &self.disc_a,
            Domain::B => &self.disc_b,
        }
    }

    fn ids_with_prefix(&self, prefixes: &[&str]) -> Vec<ParamId> {
        self.params
            .iter()
            .filter(|(_, name, _)| prefixes.iter().any(|p| name.starts_with(p)))
            .map(|(id, _, _)| id)
            .collect()
    }

    /// Encoder and generator parameters, shared stages included once.
    pub fn vae_params(&self) -> Vec<ParamId> {
        self.ids_with_prefix(&["enc_", "gen_", "shared_"])
    }

    pub fn disc_params(&self) -> Vec<ParamId> {
        self.ids_with_prefix(&["disc_"])
    }

    /// Latent tensor shape for a batch of `n`.
    pub fn latent_shape(&self, n: usize) -> [usize; 4] {
        let s = self.config.latent_size();
        [n, self.config.latent_channels, s, s]
    }

    pub fn check_image(&self, img: &ImageBuffer) -> Result<(), ModelError> {
        let s = self.config.image_size;
        if img.dims() != (s, s) {
            return Err(ModelError::ImageSize {
                expected: s,
                width: img.width(),
                height: img.height(),
            });
        }
        Ok(())
    }

    /// Mean latent code and `mu + ε`.
    pub fn encode(
        &self,
        domain: Domain,
        x: &ImageBuffer,
        noise: Noise,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Tensor), ModelError> {
        self.check_image(x)?;
        let mut g = Graph::new();
        let input = g.input("x");
        let mu = encoder_graph(&mut g, self.encoder(domain), input, &self.config, Mode::Train);
        let mut inputs = Inputs::new();
        inputs.insert("x".into(), images_to_tensor(&[x]));
        let ev = g.forward(&self.params, &inputs)?;
        let mu = ev.value(mu).expect("evaluated").clone();
        let z = match noise {
            Noise::Zero => mu.clone(),
            Noise::Sample => {
                let eps = Tensor::randn(mu.shape(), 1.0, rng);
                let data = mu.data().iter().zip(eps.data()).map(|(m, e)| m + e).collect();
                Tensor::new(mu.shape().to_vec(), data)?
            }
        };
        Ok((mu, z))
    }

    /// Decodes a latent tensor with one generator.
    pub fn decode(&self, domain: Domain, z: &Tensor) -> Result<Vec<ImageBuffer>, ModelError> {
        let mut g = Graph::new();
        let input = g.input("z");
        let out = generator_graph(&mut g, self.generator(domain), input, Mode::Train);
        let mut inputs = Inputs::new();
        inputs.insert("z".into(), z.clone());
        let ev = g.forward(&self.params, &inputs)?;
        Ok(tensor_to_images(ev.value(out).expect("evaluated")))
    }

    fn pass(&self, from: Domain, to: Domain, x: &ImageBuffer) -> Result<ImageBuffer, ModelError> {
        self.check_image(x)?;
        let mut g = Graph::new();
        let input = g.input("x");
        let mu = encoder_graph(&mut g, self.encoder(from), input, &self.config, Mode::Train);
        let out = generator_graph(&mut g, self.generator(to), mu, Mode::Train);
        let mut inputs = Inputs::new();
        inputs.insert("x".into(), images_to_tensor(&[x]));
        let ev = g.forward(&self.params, &inputs)?;
        Ok(tensor_to_images(ev.value(out).expect("evaluated")).remove(0))
    }

    /// Encodes with the source encoder (no noise) and decodes in the other domain.
    pub fn translate(&self, x: &ImageBuffer, direction: Direction) -> Result<ImageBuffer, ModelError> {
        self.pass(direction.source(), direction.target(), x)
    }

    /// Encodes and decodes within one domain (no noise).
    pub fn reconstruct(&self, x: &ImageBuffer, domain: Domain) -> Result<ImageBuffer, ModelError> {
        self.pass(domain, domain, x)
    }
}

/// Whether discriminator parameters take part in differentiation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mode {
    Train,
    Frozen,
}

fn param(g: &mut Graph, id: ParamId, mode: Mode) -> NodeId {
    match mode {
        Mode::Train => g.param(id),
        Mode::Frozen => g.frozen_param(id),
    }
}

fn conv(g: &mut Graph, c: &Conv, x: NodeId, stride: usize, pad: usize, mode: Mode) -> NodeId {
    let w = param(g, c.weight, mode);
    let b = c.bias.map(|b| param(g, b, mode));
    g.conv2d(x, w, b, stride, pad)
}

fn conv_t(g: &mut Graph, c: &Conv, x: NodeId, mode: Mode) -> NodeId {
    let w = param(g, c.weight, mode);
    let b = c.bias.map(|b| param(g, b, mode));
    g.conv_transpose2d(x, w, b, 2, 1)
}

fn res_block(g: &mut Graph, r: &ResBlock, x: NodeId, mode: Mode) -> NodeId {
    let h = conv(g, &r.conv1, x, 1, 1, mode);
    let h = g.instance_norm(h, NORM_EPS);
    let h = g.leaky_relu(h, LEAKY_SLOPE);
    let h = conv(g, &r.conv2, h, 1, 1, mode);
    let h = g.instance_norm(h, NORM_EPS);
    g.add(x, h)
}

/// Image in [-1, 1] to the latent mean.
pub(crate) fn encoder_graph(
    g: &mut Graph,
    e: &Encoder,
    x: NodeId,
    config: &ModelConfig,
    mode: Mode,
) -> NodeId {
    let mut h = x;
    for c in &e.down {
        h = conv(g, c, h, 2, 1, mode);
        if config.down_norm {
            h = g.instance_norm(h, NORM_EPS);
        }
        h = g.leaky_relu(h, LEAKY_SLOPE);
    }
    let h = res_block(g, &e.private, h, mode);
    res_block(g, &e.shared, h, mode)
}

/// Latent code to an image in [-1, 1].
pub(crate) fn generator_graph(g: &mut Graph, gen: &Generator, z: NodeId, mode: Mode) -> NodeId {
    let h = res_block(g, &gen.shared, z, mode);
    let mut h = res_block(g, &gen.private, h, mode);
    for c in &gen.up[..2] {
        h = conv_t(g, c, h, mode);
        h = g.instance_norm(h, NORM_EPS);
        h = g.leaky_relu(h, LEAKY_SLOPE);
    }
    let h = conv_t(g, &gen.up[2], h, mode);
    g.tanh(h)
}

/// Patch map of least-squares real/fake scores.
pub(crate) fn discriminator_graph(g: &mut Graph, d: &Discriminator, x: NodeId, mode: Mode) -> NodeId {
    let mut h = x;
    for (i, c) in d.convs.iter().enumerate() {
        h = conv(g, c, h, 2, 1, mode);
        if i + 1 < d.convs.len() {
            h = g.leaky_relu(h, LEAKY_SLOPE);
        }
    }
    h
}

/// Stacks images into `[n, 3, h, w]` scaled to [-1, 1].
pub fn images_to_tensor(images: &[&ImageBuffer]) -> Tensor {
    let (w, h) = images[0].dims();
    let plane = (w * h) as usize;
    let mut data = vec![0.0f32; images.len() * 3 * plane];
    for (n, img) in images.iter().enumerate() {
        let base = n * 3 * plane;
        for (p, px) in img.pixels().enumerate() {
            for c in 0..3 {
                data[base + c * plane + p] = px[c] as f32 / 127.5 - 1.0;
            }
        }
    }
    Tensor::new(vec![images.len(), 3, h as usize, w as usize], data).expect("sized above")
}

/// Inverse of [`images_to_tensor`], clamping and rounding to 8 bits.
pub fn tensor_to_images(t: &Tensor) -> Vec<ImageBuffer> {
    let s = t.shape();
    let (n, h, w) = (s[0], s[2], s[3]);
    let plane = h * w;
    (0..n)
        .map(|i| {
            let base = i * 3 * plane;
            ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
                let p = y as usize * w + x as usize;
                [0, 1, 2].map(|c| round_to_u8((t.data()[base + c * plane + p] as f64 + 1.0) * 127.5))
            })
        })
        .collect()
}
