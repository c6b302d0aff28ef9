//! Full model: temporal extractor, common and individual graph branches,
//! optional pooling modules, and a node-mean classifier head.
//!
//! The six ablation variants differ only in which parameter groups exist:
//!
//! | variant | common branch | individual branch | pooling on |
//! |---------|---------------|-------------------|------------|
//! | `a`     | yes           | no                | -          |
//! | `b`     | no            | yes               | -          |
//! | `c`     | yes           | yes               | -          |
//! | `d`     | yes           | yes               | common     |
//! | `e`     | yes           | yes               | both       |
//! | `full`  | yes           | yes               | individual |

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::{
    common_adjacency, individual_adjacency, normalize_adjacency, CommonAdjacencyParams, IndividualAdjacencyParams,
    SoftmaxAxis,
};
use crate::error::{Error, Result};
use crate::extractor::{default_conv_specs, extract_features, zscore_rows, BoundExtractor, ConvSpec, ExtractorParams};
use crate::gcn::{branch_outputs, GcnStack};
use crate::gpum::{apply_gpum, BoundGpum, GpumParams};
use crate::graph::{Graph, Var};
use crate::rng::glorot;
use crate::tensor::Tensor;

/// Number of output classes (healthy control, depression).
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    A,
    B,
    C,
    D,
    E,
    #[default]
    Full,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::A, Variant::B, Variant::C, Variant::D, Variant::E, Variant::Full];

    pub fn has_common(self) -> bool {
        self != Variant::B
    }

    pub fn has_individual(self) -> bool {
        self != Variant::A
    }

    pub fn pools_common(self) -> bool {
        matches!(self, Variant::D | Variant::E)
    }

    pub fn pools_individual(self) -> bool {
        matches!(self, Variant::E | Variant::Full)
    }

    pub fn description(self) -> &'static str {
        match self {
            Variant::A => "CGNN without GPUM",
            Variant::B => "IGNN without GPUM",
            Variant::C => "CGNN without GPUM + IGNN without GPUM",
            Variant::D => "CGNN with GPUM + IGNN without GPUM",
            Variant::E => "CGNN with GPUM + IGNN with GPUM",
            Variant::Full => "CGNN without GPUM + IGNN with GPUM",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::A => "a",
            Variant::B => "b",
            Variant::C => "c",
            Variant::D => "d",
            Variant::E => "e",
            Variant::Full => "full",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Variant::A),
            "b" => Ok(Variant::B),
            "c" => Ok(Variant::C),
            "d" => Ok(Variant::D),
            "e" => Ok(Variant::E),
            "full" | "ours" => Ok(Variant::Full),
            other => Err(Error::Config(format!("unknown variant '{other}' (expected a, b, c, d, e or full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Electrode count `N`.
    pub channels: usize,
    pub conv_layers: Vec<ConvSpec>,
    /// Node feature width `F_d`; must equal the last conv layer's channels.
    pub feature_dim: usize,
    /// Projection width `F_m` of the individual adjacency.
    pub projection_dim: usize,
    /// Branch output width `d`.
    pub hidden_dim: usize,
    /// Propagation steps `L` in both branches.
    pub gcn_steps: usize,
    /// Propagation steps `L′` at region level.
    pub region_steps: usize,
    /// Region count `N_r`.
    pub n_regions: usize,
    pub variant: Variant,
    /// Width of an optional hidden head layer, 0 for a linear head.
    pub classifier_hidden: usize,
    pub adjacency_softmax: SoftmaxAxis,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 19,
            conv_layers: default_conv_specs(),
            feature_dim: 32,
            projection_dim: 16,
            hidden_dim: 16,
            gcn_steps: 2,
            region_steps: 1,
            n_regions: 5,
            variant: Variant::Full,
            classifier_hidden: 0,
            adjacency_softmax: SoftmaxAxis::Column,
        }
    }
}

impl ModelConfig {
    /// Smallest configuration that exercises every component.
    pub fn tiny() -> Self {
        Self {
            channels: 4,
            conv_layers: vec![ConvSpec::new(7, 4, 6), ConvSpec::new(5, 2, 4)],
            feature_dim: 4,
            projection_dim: 4,
            hidden_dim: 3,
            gcn_steps: 2,
            region_steps: 1,
            n_regions: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.channels == 0 {
            return bad("channels must be positive".into());
        }
        match self.conv_layers.last() {
            None => return bad("at least one conv layer is required".into()),
            Some(last) if last.out_channels != self.feature_dim => {
                return bad(format!(
                    "last conv layer has {} channels but feature_dim is {}",
                    last.out_channels, self.feature_dim
                ))
            }
            _ => {}
        }
        if self.conv_layers.iter().any(|s| s.kernel == 0 || s.stride == 0 || s.out_channels == 0) {
            return bad("conv kernel, stride and channels must be positive".into());
        }
        if self.projection_dim == 0 || self.hidden_dim == 0 {
            return bad("projection_dim and hidden_dim must be positive".into());
        }
        let pools = self.variant.pools_common() || self.variant.pools_individual();
        if pools && (self.n_regions == 0 || self.n_regions > self.channels) {
            return bad(format!("n_regions must be in 1..={}, got {}", self.channels, self.n_regions));
        }
        Ok(())
    }

    /// Width of the merged branch output fed to the head.
    pub fn head_input_dim(&self) -> usize {
        let branches = usize::from(self.variant.has_common()) + usize::from(self.variant.has_individual());
        branches * self.hidden_dim
    }
}

/// Named sets of parameters; a variant trains a subset of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Extractor,
    CommonAdjacency,
    IndividualAdjacency,
    CgnnStack,
    IgnnStack,
    CgnnGpum,
    IgnnGpum,
    Head,
}

impl ParamGroup {
    pub fn prefix(self) -> &'static str {
        match self {
            ParamGroup::Extractor => "extractor",
            ParamGroup::CommonAdjacency => "common_adj",
            ParamGroup::IndividualAdjacency => "individual_adj",
            ParamGroup::CgnnStack => "cgnn",
            ParamGroup::IgnnStack => "ignn",
            ParamGroup::CgnnGpum => "cgnn_gpum",
            ParamGroup::IgnnGpum => "ignn_gpum",
            ParamGroup::Head => "head",
        }
    }

    /// Group a parameter belongs to, from its tensor name.
    pub fn of(name: &str) -> Option<Self> {
        let prefix = name.split('.').next()?;
        [
            ParamGroup::Extractor,
            ParamGroup::CommonAdjacency,
            ParamGroup::IndividualAdjacency,
            ParamGroup::CgnnStack,
            ParamGroup::IgnnStack,
            ParamGroup::CgnnGpum,
            ParamGroup::IgnnGpum,
            ParamGroup::Head,
        ]
        .into_iter()
        .find(|g| g.prefix() == prefix)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantManifest {
    pub variant: Variant,
    pub groups: Vec<ParamGroup>,
    pub head_input_dim: usize,
}

/// Parameter groups a variant instantiates.
pub fn build_variant(config: &ModelConfig) -> VariantManifest {
    let v = config.variant;
    let mut groups = vec![ParamGroup::Extractor];
    if v.has_common() {
        groups.extend([ParamGroup::CommonAdjacency, ParamGroup::CgnnStack]);
    }
    if v.has_individual() {
        groups.extend([ParamGroup::IndividualAdjacency, ParamGroup::IgnnStack]);
    }
    if v.pools_common() {
        groups.push(ParamGroup::CgnnGpum);
    }
    if v.pools_individual() {
        groups.push(ParamGroup::IgnnGpum);
    }
    groups.push(ParamGroup::Head);
    VariantManifest {
        variant: v,
        groups,
        head_input_dim: config.head_input_dim(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// Optional hidden layer `(weight [in, h], bias [h])`.
    pub hidden: Option<(Tensor, Tensor)>,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl HeadParams {
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let (hidden, last_in) = if hidden > 0 {
            (
                Some((glorot(&[input_dim, hidden], input_dim, hidden, rng), Tensor::zeros(&[hidden]))),
                hidden,
            )
        } else {
            (None, input_dim)
        };
        Self {
            hidden,
            weight: glorot(&[last_in, NUM_CLASSES], last_in, NUM_CLASSES, rng),
            bias: Tensor::zeros(&[NUM_CLASSES]),
        }
    }
}

/// Every learnable tensor of one model. Groups absent from the variant are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub extractor: ExtractorParams,
    pub common_adj: Option<CommonAdjacencyParams>,
    pub individual_adj: Option<IndividualAdjacencyParams>,
    pub cgnn: Option<GcnStack>,
    pub ignn: Option<GcnStack>,
    pub cgnn_gpum: Option<GpumParams>,
    pub ignn_gpum: Option<GpumParams>,
    pub head: HeadParams,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let v = config.variant;
        let (fd, d) = (config.feature_dim, config.hidden_dim);
        let extractor = ExtractorParams::init(&config.conv_layers, rng);
        let common_adj = v.has_common().then(|| CommonAdjacencyParams::init(config.channels, rng));
        let cgnn = v.has_common().then(|| GcnStack::init(config.gcn_steps, fd, d, rng));
        let individual_adj = v
            .has_individual()
            .then(|| IndividualAdjacencyParams::init(fd, config.projection_dim, rng));
        let ignn = v.has_individual().then(|| GcnStack::init(config.gcn_steps, fd, d, rng));
        let gpum = |rng: &mut R| GpumParams::init(fd, config.n_regions, config.region_steps, d, rng);
        let cgnn_gpum = v.pools_common().then(|| gpum(rng));
        let ignn_gpum = v.pools_individual().then(|| gpum(rng));
        let head = HeadParams::init(config.head_input_dim(), config.classifier_hidden, rng);
        Ok(Self {
            extractor,
            common_adj,
            individual_adj,
            cgnn,
            ignn,
            cgnn_gpum,
            ignn_gpum,
            head,
        })
    }

    /// Visits every tensor in canonical order with its dotted name.
    pub fn visit(&self, mut f: impl FnMut(&str, &Tensor)) {
        for (i, l) in self.extractor.layers.iter().enumerate() {
            f(&format!("extractor.conv{i}.weight"), &l.weight);
            f(&format!("extractor.conv{i}.bias"), &l.bias);
        }
        if let Some(p) = &self.common_adj {
            f("common_adj.raw", &p.raw);
        }
        if let Some(s) = &self.cgnn {
            for (l, w) in s.weights.iter().enumerate() {
                f(&format!("cgnn.w{l}"), w);
            }
        }
        if let Some(p) = &self.individual_adj {
            f("individual_adj.w1", &p.w1);
            f("individual_adj.w2", &p.w2);
        }
        if let Some(s) = &self.ignn {
            for (l, w) in s.weights.iter().enumerate() {
                f(&format!("ignn.w{l}"), w);
            }
        }
        for (prefix, gp) in [("cgnn_gpum", &self.cgnn_gpum), ("ignn_gpum", &self.ignn_gpum)] {
            if let Some(p) = gp {
                f(&format!("{prefix}.q"), &p.q);
                for (l, w) in p.region.weights.iter().enumerate() {
                    f(&format!("{prefix}.w{l}"), w);
                }
            }
        }
        if let Some((w, b)) = &self.head.hidden {
            f("head.hidden.weight", w);
            f("head.hidden.bias", b);
        }
        f("head.weight", &self.head.weight);
        f("head.bias", &self.head.bias);
    }

    /// Mutable counterpart of [`ModelParams::visit`], same order.
    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor)) {
        for (i, l) in self.extractor.layers.iter_mut().enumerate() {
            f(&format!("extractor.conv{i}.weight"), &mut l.weight);
            f(&format!("extractor.conv{i}.bias"), &mut l.bias);
        }
        if let Some(p) = &mut self.common_adj {
            f("common_adj.raw", &mut p.raw);
        }
        if let Some(s) = &mut self.cgnn {
            for (l, w) in s.weights.iter_mut().enumerate() {
                f(&format!("cgnn.w{l}"), w);
            }
        }
        if let Some(p) = &mut self.individual_adj {
            f("individual_adj.w1", &mut p.w1);
            f("individual_adj.w2", &mut p.w2);
        }
        if let Some(s) = &mut self.ignn {
            for (l, w) in s.weights.iter_mut().enumerate() {
                f(&format!("ignn.w{l}"), w);
            }
        }
        for (prefix, gp) in [("cgnn_gpum", &mut self.cgnn_gpum), ("ignn_gpum", &mut self.ignn_gpum)] {
            if let Some(p) = gp {
                f(&format!("{prefix}.q"), &mut p.q);
                for (l, w) in p.region.weights.iter_mut().enumerate() {
                    f(&format!("{prefix}.w{l}"), w);
                }
            }
        }
        if let Some((w, b)) = &mut self.head.hidden {
            f("head.hidden.weight", w);
            f("head.hidden.bias", b);
        }
        f("head.weight", &mut self.head.weight);
        f("head.bias", &mut self.head.bias);
    }

    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit(|n, t| out.push((n.to_string(), t.clone())));
        out
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        self.visit(|_, t| out.push(t.clone()));
        out
    }

    /// Overwrites every tensor, in canonical order, checking shapes.
    pub fn set_tensors(&mut self, values: &[Tensor]) -> Result<()> {
        let mut k = 0;
        let mut err = None;
        self.visit_mut(|name, t| {
            match values.get(k) {
                Some(v) if v.shape() == t.shape() => *t = v.clone(),
                Some(v) if err.is_none() => {
                    err = Some(Error::Config(format!(
                        "{name}: expected shape {:?}, got {:?}",
                        t.shape(),
                        v.shape()
                    )))
                }
                None if err.is_none() => err = Some(Error::Config(format!("{name}: missing tensor"))),
                _ => {}
            }
            k += 1;
        });
        match err {
            Some(e) => Err(e),
            None if k != values.len() => Err(Error::Config(format!("expected {k} tensors, got {}", values.len()))),
            None => Ok(()),
        }
    }

    /// Groups present in this parameter set.
    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut groups: Vec<ParamGroup> = Vec::new();
        self.visit(|name, _| {
            let g = ParamGroup::of(name).expect("canonical names carry a group prefix");
            if groups.last() != Some(&g) && !groups.contains(&g) {
                groups.push(g);
            }
        });
        groups
    }

    pub fn norm(&self) -> f64 {
        let mut total = 0.0;
        self.visit(|_, t| total += t.norm_sq());
        total.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, t| ok &= t.is_finite());
        ok
    }

    /// Registers every tensor in `g`, as leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundModel {
        let vars: Vec<Var> = self
            .tensors()
            .into_iter()
            .map(|t| if trainable { g.leaf(t) } else { g.constant(t) })
            .collect();
        self.assemble(&vars).expect("one var per tensor")
    }

    /// Groups nodes already in a graph, given in canonical order, into a [`BoundModel`].
    pub fn assemble(&self, vars: &[Var]) -> Result<BoundModel> {
        let expected = self.tensors().len();
        if vars.len() != expected {
            return Err(Error::Config(format!("expected {expected} parameter nodes, got {}", vars.len())));
        }
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("length checked");
        let extractor = BoundExtractor {
            layers: self
                .extractor
                .layers
                .iter()
                .map(|l| (next(), next(), l.stride))
                .collect(),
        };
        let common_raw = self.common_adj.as_ref().map(|_| next());
        let cgnn = self.cgnn.as_ref().map(|s| s.weights.iter().map(|_| next()).collect::<Vec<_>>());
        let individual = self.individual_adj.as_ref().map(|_| (next(), next()));
        let ignn = self.ignn.as_ref().map(|s| s.weights.iter().map(|_| next()).collect::<Vec<_>>());
        let mut gpum = |p: &GpumParams| BoundGpum {
            q: next(),
            region: p.region.weights.iter().map(|_| next()).collect(),
        };
        let cgnn_gpum = self.cgnn_gpum.as_ref().map(&mut gpum);
        let ignn_gpum = self.ignn_gpum.as_ref().map(&mut gpum);
        let head_hidden = self.head.hidden.as_ref().map(|_| (next(), next()));
        let head = (next(), next());
        Ok(BoundModel {
            extractor,
            common_raw,
            cgnn,
            individual,
            ignn,
            cgnn_gpum,
            ignn_gpum,
            head_hidden,
            head,
        })
    }
}

/// Model parameters registered in one graph.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub extractor: BoundExtractor,
    pub common_raw: Option<Var>,
    pub cgnn: Option<Vec<Var>>,
    pub individual: Option<(Var, Var)>,
    pub ignn: Option<Vec<Var>>,
    pub cgnn_gpum: Option<BoundGpum>,
    pub ignn_gpum: Option<BoundGpum>,
    pub head_hidden: Option<(Var, Var)>,
    pub head: (Var, Var),
}

impl BoundModel {
    /// All parameter nodes in the canonical order of [`ModelParams::visit`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.extractor.vars();
        out.extend(self.common_raw);
        out.extend(self.cgnn.iter().flatten());
        if let Some((w1, w2)) = self.individual {
            out.extend([w1, w2]);
        }
        out.extend(self.ignn.iter().flatten());
        for gp in [&self.cgnn_gpum, &self.ignn_gpum].into_iter().flatten() {
            out.extend(gp.vars());
        }
        if let Some((w, b)) = self.head_hidden {
            out.extend([w, b]);
        }
        out.extend([self.head.0, self.head.1]);
        out
    }
}

/// Nodes of interest from one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardOutput {
    pub probs: Var,
    pub logits: Var,
    pub features: Var,
    pub common_adj: Option<Var>,
    pub individual_adj: Option<Var>,
    /// Individual branch after pooling merge (`Y′_I`), or `Y_I` without pooling.
    pub individual_out: Option<Var>,
    pub common_out: Option<Var>,
    pub individual_assignment: Option<Var>,
    pub common_assignment: Option<Var>,
}

impl ForwardOutput {
    /// Assignment matrices entering the entropy regularizer.
    pub fn assignments(&self) -> Vec<Var> {
        self.individual_assignment
            .into_iter()
            .chain(self.common_assignment)
            .collect()
    }
}

/// Runs the model on one raw segment (`N × T_s`); per-electrode z-scoring is applied here.
pub fn forward(g: &mut Graph, params: &BoundModel, config: &ModelConfig, segment: &Tensor) -> Result<ForwardOutput> {
    if segment.rank() != 2 || segment.shape()[0] != config.channels {
        return Err(Error::ChannelMismatch {
            expected: config.channels,
            got: segment.shape().first().copied().unwrap_or(0),
        });
    }
    let s = g.constant(zscore_rows(segment));
    let x = extract_features(g, s, &params.extractor)?;

    let common_adj = params.common_raw.map(|raw| common_adjacency(g, raw)).transpose()?;
    let common_hat = common_adj.map(|a| normalize_adjacency(g, a)).transpose()?;
    let individual_adj = params
        .individual
        .map(|(w1, w2)| individual_adjacency(g, x, w1, w2, config.adjacency_softmax))
        .transpose()?;
    let individual_hat = individual_adj.map(|a| normalize_adjacency(g, a)).transpose()?;

    let (y_c, y_i) = branch_outputs(
        g,
        x,
        common_hat.zip(params.cgnn.as_deref()),
        individual_hat.zip(params.ignn.as_deref()),
    )?;

    let mut common_assignment = None;
    let common_out = match (y_c, &params.cgnn_gpum) {
        (Some(y), Some(gp)) => {
            let out = apply_gpum(g, common_adj.expect("common branch"), common_hat.expect("common branch"), x, gp)?;
            common_assignment = Some(out.assignment);
            Some(g.add(y, out.unpooled)?)
        }
        (y, _) => y,
    };
    let mut individual_assignment = None;
    let individual_out = match (y_i, &params.ignn_gpum) {
        (Some(y), Some(gp)) => {
            let out = apply_gpum(
                g,
                individual_adj.expect("individual branch"),
                individual_hat.expect("individual branch"),
                x,
                gp,
            )?;
            individual_assignment = Some(out.assignment);
            Some(g.add(y, out.unpooled)?)
        }
        (y, _) => y,
    };

    let merged = match (individual_out, common_out) {
        (Some(i), Some(c)) => g.concat(&[i, c], 1)?,
        (Some(i), None) => i,
        (None, Some(c)) => c,
        (None, None) => return Err(Error::Config("variant has no graph branch".into())),
    };

    let h = g.relu(merged)?;
    let pooled = g.mean_axis(h, 0)?;
    let width = g.value(pooled).numel();
    let mut z = g.reshape(pooled, &[1, width])?;
    if let Some((w, b)) = params.head_hidden {
        z = g.matmul(z, w)?;
        z = g.add_bias(z, b, 1)?;
        z = g.relu(z)?;
    }
    let (w, b) = params.head;
    let logits = g.matmul(z, w)?;
    let logits = g.add_bias(logits, b, 1)?;
    let logits = g.reshape(logits, &[NUM_CLASSES])?;
    let probs = g.softmax(logits, 0)?;

    Ok(ForwardOutput {
        probs,
        logits,
        features: x,
        common_adj,
        individual_adj,
        individual_out,
        common_out,
        individual_assignment,
        common_assignment,
    })
}

/// Values extracted from one forward pass, detached from the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: [f64; NUM_CLASSES],
    pub common_adj: Option<Tensor>,
    pub individual_adj: Option<Tensor>,
    pub individual_assignment: Option<Tensor>,
    pub common_assignment: Option<Tensor>,
}

impl Prediction {
    pub fn class(&self) -> usize {
        usize::from(self.probs[1] > self.probs[0])
    }
}

/// Inference without gradient bookkeeping.
pub fn predict(params: &ModelParams, config: &ModelConfig, segment: &Tensor) -> Result<Prediction> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let out = forward(&mut g, &bound, config, segment)?;
    let p = g.value(out.probs).data();
    let grab = |v: Option<Var>| v.map(|v| g.value(v).clone());
    Ok(Prediction {
        probs: [p[0], p[1]],
        common_adj: grab(out.common_adj),
        individual_adj: grab(out.individual_adj),
        individual_assignment: grab(out.individual_assignment),
        common_assignment: grab(out.common_assignment),
    })
}
