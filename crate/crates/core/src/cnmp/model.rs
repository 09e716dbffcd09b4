//! Encoder, aggregation and decoder of the conditional neural movement
//! primitive.
//!
//! Observations `(t, gamma, sm)` are encoded independently, averaged into one
//! representation, and the decoder maps `(representation, t_q, gamma)` to a
//! Gaussian over the sensorimotor value at `t_q`.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cnmp::trajectory::Trajectory;
use crate::error::{check_len, Error, Result};
use crate::nn::snapshot::{read_mlp_from, write_mlp, Lines};
use crate::nn::{
    effective_sigma, Activation, ForwardRecord, GradientVector, Mlp, MlpSpec, NllGrad,
};

/// Which side of the network receives the task parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GammaRouting {
    #[default]
    Both,
    Encoder,
    Decoder,
    /// Task parameters are carried in the data but ignored by the network.
    None,
}

impl GammaRouting {
    pub fn to_encoder(self) -> bool {
        matches!(self, GammaRouting::Both | GammaRouting::Encoder)
    }

    pub fn to_decoder(self) -> bool {
        matches!(self, GammaRouting::Both | GammaRouting::Decoder)
    }

    pub fn name(self) -> &'static str {
        match self {
            GammaRouting::Both => "both",
            GammaRouting::Encoder => "encoder",
            GammaRouting::Decoder => "decoder",
            GammaRouting::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(GammaRouting::Both),
            "encoder" => Ok(GammaRouting::Encoder),
            "decoder" => Ok(GammaRouting::Decoder),
            "none" => Ok(GammaRouting::None),
            other => Err(Error::Parse(format!("unknown gamma routing `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnmpDims {
    /// D
    pub sm_width: usize,
    /// G
    pub gamma_width: usize,
    /// L
    pub latent_width: usize,
}

/// Layer output widths: the encoder list ends with the latent width and the
/// decoder list with `2 * sm_width`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnmpArchitecture {
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
}

impl CnmpArchitecture {
    pub fn new(encoder: &[usize], decoder: &[usize]) -> Self {
        CnmpArchitecture {
            encoder: encoder.to_vec(),
            decoder: decoder.to_vec(),
        }
    }

    pub fn latent_width(&self) -> usize {
        self.encoder.last().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPoint {
    pub t: f64,
    pub gamma: Vec<f64>,
    pub sm: Vec<f64>,
}

impl ObservationPoint {
    pub fn new(t: f64, gamma: Vec<f64>, sm: Vec<f64>) -> Self {
        ObservationPoint { t, gamma, sm }
    }

    /// The `i`-th sample of a trajectory, carrying its task parameters.
    pub fn from_trajectory(traj: &Trajectory, i: usize) -> Self {
        let (t, sm) = traj.point(i);
        ObservationPoint::new(t, traj.task_params.clone(), sm.to_vec())
    }

    /// The trajectory's interpolated value at `t`.
    pub fn at_time(traj: &Trajectory, t: f64) -> Self {
        ObservationPoint::new(t, traj.task_params.clone(), traj.interpolate(t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrediction {
    pub mu: Vec<f64>,
    pub sigma_raw: Vec<f64>,
}

impl GaussianPrediction {
    pub fn sigma(&self) -> Vec<f64> {
        self.sigma_raw.iter().map(|&r| effective_sigma(r)).collect()
    }
}

/// Per-network gradients of a CNMP loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CnmpGrads {
    pub encoder: GradientVector,
    pub decoder: GradientVector,
}

impl CnmpGrads {
    pub fn scale(&mut self, factor: f64) {
        self.encoder.scale(factor);
        self.decoder.scale(factor);
    }

    pub fn add_scaled(&mut self, other: &CnmpGrads, factor: f64) {
        self.encoder.add_scaled(&other.encoder, factor);
        self.decoder.add_scaled(&other.decoder, factor);
    }

    pub fn norm(&self) -> f64 {
        (self.encoder.norm_squared() + self.decoder.norm_squared()).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.encoder.as_slice().iter().all(|&v| v == 0.0)
            && self.decoder.as_slice().iter().all(|&v| v == 0.0)
    }
}

/// Encoder forward passes kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ConditionedPass {
    records: Vec<ForwardRecord>,
    pub latent: LatentVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnmpModel {
    pub dims: CnmpDims,
    pub routing: GammaRouting,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

/// Sum with a fixed pairwise tree.
fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Element-wise mean of the latents. Each coordinate is summed over its values
/// in sorted order, so the result is bit-identical for every ordering of the
/// input list.
pub fn aggregate(latents: &[LatentVector]) -> Result<LatentVector> {
    let first = latents
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot aggregate an empty latent list".into()))?;
    let width = first.values.len();
    for l in latents {
        check_len("latent width", width, l.values.len())?;
    }
    let n = latents.len() as f64;
    let mut column = Vec::with_capacity(latents.len());
    let values = (0..width)
        .map(|j| {
            column.clear();
            column.extend(latents.iter().map(|l| l.values[j]));
            column.sort_by(f64::total_cmp);
            pairwise_sum(&column) / n
        })
        .collect();
    Ok(LatentVector { values })
}

impl CnmpModel {
    pub fn new<R: Rng + ?Sized>(
        sm_width: usize,
        gamma_width: usize,
        routing: GammaRouting,
        arch: &CnmpArchitecture,
        rng: &mut R,
    ) -> Result<Self> {
        let latent_width = arch.latent_width();
        if latent_width == 0 || arch.decoder.is_empty() {
            return Err(Error::InvalidInput("encoder and decoder need layers".into()));
        }
        if *arch.decoder.last().unwrap() != 2 * sm_width {
            return Err(Error::InvalidInput(format!(
                "decoder must end with 2*D = {} outputs, got {}",
                2 * sm_width,
                arch.decoder.last().unwrap()
            )));
        }
        let dims = CnmpDims {
            sm_width,
            gamma_width,
            latent_width,
        };
        let enc_in = 1 + sm_width + if routing.to_encoder() { gamma_width } else { 0 };
        let dec_in = latent_width + 1 + if routing.to_decoder() { gamma_width } else { 0 };
        let encoder = Mlp::init(
            MlpSpec::chain(enc_in, &arch.encoder, Activation::Relu, Activation::Identity)?,
            rng,
        );
        let decoder = Mlp::init(
            MlpSpec::chain(dec_in, &arch.decoder, Activation::Relu, Activation::Identity)?,
            rng,
        );
        let model = CnmpModel {
            dims,
            routing,
            encoder,
            decoder,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the width relations between the two networks and `dims`.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        let g_enc = if self.routing.to_encoder() { d.gamma_width } else { 0 };
        let g_dec = if self.routing.to_decoder() { d.gamma_width } else { 0 };
        check_len("encoder input width", 1 + g_enc + d.sm_width, self.encoder.spec.input_width())?;
        check_len("latent width", d.latent_width, self.encoder.spec.output_width())?;
        check_len("decoder input width", d.latent_width + 1 + g_dec, self.decoder.spec.input_width())?;
        check_len("decoder output width", 2 * d.sm_width, self.decoder.spec.output_width())
    }

    pub fn architecture(&self) -> CnmpArchitecture {
        CnmpArchitecture {
            encoder: self.encoder.spec.widths(),
            decoder: self.decoder.spec.widths(),
        }
    }

    pub fn zero_grads(&self) -> CnmpGrads {
        CnmpGrads {
            encoder: self.encoder.zero_grad(),
            decoder: self.decoder.zero_grad(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoder.params.len() + self.decoder.params.len()
    }

    fn encoder_input(&self, obs: &ObservationPoint) -> Result<Vec<f64>> {
        check_len("observation gamma", self.dims.gamma_width, obs.gamma.len())?;
        check_len("observation sensorimotor value", self.dims.sm_width, obs.sm.len())?;
        let mut input = Vec::with_capacity(self.encoder.spec.input_width());
        input.push(obs.t);
        if self.routing.to_encoder() {
            input.extend_from_slice(&obs.gamma);
        }
        input.extend_from_slice(&obs.sm);
        Ok(input)
    }

    fn decoder_input(&self, rep: &LatentVector, t_q: f64, gamma: &[f64]) -> Result<Vec<f64>> {
        check_len("representation", self.dims.latent_width, rep.values.len())?;
        check_len("query gamma", self.dims.gamma_width, gamma.len())?;
        let mut input = Vec::with_capacity(self.decoder.spec.input_width());
        input.extend_from_slice(&rep.values);
        input.push(t_q);
        if self.routing.to_decoder() {
            input.extend_from_slice(gamma);
        }
        Ok(input)
    }

    fn split_output(&self, out: &[f64]) -> GaussianPrediction {
        let (mu, sigma_raw) = out.split_at(self.dims.sm_width);
        GaussianPrediction {
            mu: mu.to_vec(),
            sigma_raw: sigma_raw.to_vec(),
        }
    }

    pub fn encode(&self, obs: &ObservationPoint) -> Result<LatentVector> {
        let values = self.encoder.forward(&self.encoder_input(obs)?)?;
        Ok(LatentVector { values })
    }

    /// Encodes and aggregates a non-empty observation set.
    pub fn condition(&self, observations: &[ObservationPoint]) -> Result<LatentVector> {
        let latents = observations
            .iter()
            .map(|o| self.encode(o))
            .collect::<Result<Vec<_>>>()?;
        aggregate(&latents)
    }

    pub fn decode(&self, rep: &LatentVector, t_q: f64, gamma: &[f64]) -> Result<GaussianPrediction> {
        let out = self.decoder.forward(&self.decoder_input(rep, t_q, gamma)?)?;
        Ok(self.split_output(&out))
    }

    /// Predictions at every query time from one aggregated representation.
    pub fn predict(
        &self,
        conditioning: &[ObservationPoint],
        gamma: &[f64],
        query_times: &[f64],
    ) -> Result<Vec<GaussianPrediction>> {
        let rep = self.condition(conditioning)?;
        self.predict_from_latent(&rep, gamma, query_times)
    }

    pub fn predict_from_latent(
        &self,
        rep: &LatentVector,
        gamma: &[f64],
        query_times: &[f64],
    ) -> Result<Vec<GaussianPrediction>> {
        query_times
            .iter()
            .map(|&t| self.decode(rep, t, gamma))
            .collect()
    }

    pub fn condition_recorded(&self, observations: &[ObservationPoint]) -> Result<ConditionedPass> {
        if observations.is_empty() {
            return Err(Error::InvalidInput("at least one observation is required".into()));
        }
        let mut records = Vec::with_capacity(observations.len());
        let mut latents = Vec::with_capacity(observations.len());
        for obs in observations {
            let record = self.encoder.forward_recorded(&self.encoder_input(obs)?)?;
            latents.push(LatentVector {
                values: record.output().to_vec(),
            });
            records.push(record);
        }
        Ok(ConditionedPass {
            records,
            latent: aggregate(&latents)?,
        })
    }

    /// Backpropagates `d loss / d representation` through the mean and every
    /// recorded encoder pass.
    pub fn backprop_latent(
        &self,
        pass: &ConditionedPass,
        d_latent: &[f64],
        grads: &mut GradientVector,
    ) -> Result<()> {
        check_len("latent gradient", self.dims.latent_width, d_latent.len())?;
        let share: Vec<f64> = d_latent
            .iter()
            .map(|g| g / pass.records.len() as f64)
            .collect();
        for record in &pass.records {
            self.encoder.backward(record, &share, grads)?;
        }
        Ok(())
    }

    /// Runs the decoder at each query, asks `loss_at` for the loss and its
    /// derivatives with respect to the prediction, and accumulates parameter
    /// gradients. Returns the summed loss and `d loss / d representation`.
    pub fn backprop_queries<F>(
        &self,
        rep: &LatentVector,
        gamma: &[f64],
        query_times: &[f64],
        mut loss_at: F,
        grads: &mut CnmpGrads,
    ) -> Result<(f64, Vec<f64>)>
    where
        F: FnMut(usize, &GaussianPrediction) -> Result<NllGrad>,
    {
        let mut total = 0.0;
        let mut d_latent = vec![0.0; self.dims.latent_width];
        let mut grad_out = Vec::with_capacity(2 * self.dims.sm_width);
        for (k, &t_q) in query_times.iter().enumerate() {
            let record = self
                .decoder
                .forward_recorded(&self.decoder_input(rep, t_q, gamma)?)?;
            let pred = self.split_output(record.output());
            let g = loss_at(k, &pred)?;
            total += g.loss;
            grad_out.clear();
            grad_out.extend_from_slice(&g.d_mu);
            grad_out.extend_from_slice(&g.d_sigma_raw);
            let d_in = self.decoder.backward(&record, &grad_out, &mut grads.decoder)?;
            for (acc, v) in d_latent.iter_mut().zip(&d_in) {
                *acc += v;
            }
        }
        Ok((total, d_latent))
    }

    /// Full loss-and-gradient through decoder, aggregation and encoder.
    pub fn loss_and_grad<F>(
        &self,
        observations: &[ObservationPoint],
        gamma: &[f64],
        query_times: &[f64],
        loss_at: F,
        grads: &mut CnmpGrads,
    ) -> Result<f64>
    where
        F: FnMut(usize, &GaussianPrediction) -> Result<NllGrad>,
    {
        let pass = self.condition_recorded(observations)?;
        let (loss, d_latent) =
            self.backprop_queries(&pass.latent, gamma, query_times, loss_at, grads)?;
        self.backprop_latent(&pass, &d_latent, &mut grads.encoder)?;
        Ok(loss)
    }

    pub fn write_snapshot<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}")?;
        writeln!(out, "sm_width {}", self.dims.sm_width)?;
        writeln!(out, "gamma_width {}", self.dims.gamma_width)?;
        writeln!(out, "latent_width {}", self.dims.latent_width)?;
        writeln!(out, "gamma_routing {}", self.routing.name())?;
        writeln!(out, "encoder")?;
        write_mlp(out, &self.encoder)?;
        writeln!(out, "decoder")?;
        write_mlp(out, &self.decoder)?;
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = Lines::new(input);
        let header = lines.next_line()?.to_string();
        if header != format!("{MODEL_MAGIC} {MODEL_VERSION}") {
            return Err(lines.error("not a CNMP snapshot (or unsupported version)"));
        }
        let sm_width = lines.keyed("sm_width")?;
        let gamma_width = lines.keyed("gamma_width")?;
        let latent_width = lines.keyed("latent_width")?;
        let routing: String = lines.keyed("gamma_routing")?;
        let routing = GammaRouting::parse(&routing)?;
        if lines.next_line()? != "encoder" {
            return Err(lines.error("expected `encoder`"));
        }
        let encoder = read_mlp_from(&mut lines)?;
        if lines.next_line()? != "decoder" {
            return Err(lines.error("expected `decoder`"));
        }
        let decoder = read_mlp_from(&mut lines)?;
        let model = CnmpModel {
            dims: CnmpDims {
                sm_width,
                gamma_width,
                latent_width,
            },
            routing,
            encoder,
            decoder,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_snapshot(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        CnmpModel::read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub const MODEL_MAGIC: &str = "acnmp-cnmp";
pub const MODEL_VERSION: u32 = 1;
