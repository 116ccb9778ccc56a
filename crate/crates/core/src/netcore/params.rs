//! Parameter storage for both branches and the shared heads.

use super::spec::{LayerSpec, NetworkSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng;
use crate::synthgen::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Weight,
    Bias,
    BnScale,
    BnShift,
    RunningMean,
    RunningVar,
}

impl Role {
    pub fn trainable(self) -> bool {
        !matches!(self, Role::RunningMean | Role::RunningVar)
    }
}

/// Which part of the model a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Branch(Modality),
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub group: Group,
    pub role: Role,
}

/// Per-layer tensors: dense/conv `[weight, bias]`, batchnorm
/// `[scale, shift, running_mean, running_var]`, nothing otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `[cardinality, embedding_dim]`
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub branch_a: Vec<LayerParams>,
    pub branch_b: Vec<LayerParams>,
    pub heads: Vec<HeadParams>,
}

fn layer_roles(layer: &LayerSpec) -> &'static [Role] {
    match layer {
        LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. } | LayerSpec::Conv2d { .. } => {
            &[Role::Weight, Role::Bias]
        }
        LayerSpec::BatchNorm => &[
            Role::BnScale,
            Role::BnShift,
            Role::RunningMean,
            Role::RunningVar,
        ],
        LayerSpec::Relu | LayerSpec::GlobalAvgPool => &[],
    }
}

/// Tensor shapes for one layer given its input shape, with fan-in.
fn layer_shapes(layer: &LayerSpec, input: &[usize]) -> (Vec<Vec<usize>>, usize) {
    let channels = *input.last().unwrap();
    match *layer {
        LayerSpec::Dense { out } => {
            let fan_in: usize = input.iter().product();
            (vec![vec![out, fan_in], vec![out]], fan_in)
        }
        LayerSpec::Conv1d { size, filters, .. } => (
            vec![vec![filters, size, channels], vec![filters]],
            size * channels,
        ),
        LayerSpec::Conv2d { size, filters, .. } => (
            vec![vec![filters, size, size, channels], vec![filters]],
            size * size * channels,
        ),
        LayerSpec::BatchNorm => (vec![vec![channels]; 4], 0),
        LayerSpec::Relu | LayerSpec::GlobalAvgPool => (vec![], 0),
    }
}

impl ParamStore {
    /// All tensors zero except batchnorm scale and running variance (1).
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        Self::build(spec, |_, role, shape, _| match role {
            Role::BnScale | Role::RunningVar => Tensor::full(shape, 1.0),
            _ => Tensor::zeros(shape),
        })
    }

    /// Every tensor zero, including batchnorm scales; the layout of a gradient.
    pub fn zeroed(spec: &NetworkSpec) -> Result<Self> {
        Self::build(spec, |_, _, shape, _| Tensor::zeros(shape))
    }

    /// Fan-in scaled Gaussian weights (`std = sqrt(2 / fan_in)`), zero biases,
    /// batchnorm scale 1 and shift 0.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = rng::child(seed, "init");
        Self::build(spec, |_, role, shape, fan_in| match role {
            Role::Weight => {
                let std = (2.0 / fan_in as f64).sqrt();
                let n = shape.iter().product();
                let data = (0..n).map(|_| std * rng::normal(&mut rng)).collect();
                Tensor::from_vec(shape, data).unwrap()
            }
            Role::BnScale | Role::RunningVar => Tensor::full(shape, 1.0),
            _ => Tensor::zeros(shape),
        })
    }

    fn build<F>(spec: &NetworkSpec, mut make: F) -> Result<Self>
    where
        F: FnMut(Group, Role, Vec<usize>, usize) -> Tensor,
    {
        let mut branches = Vec::new();
        for m in [Modality::A, Modality::B] {
            let shapes = spec.shapes(m)?;
            let layers = spec
                .layers(m)
                .iter()
                .zip(&shapes)
                .map(|(layer, input)| {
                    let (tshapes, fan_in) = layer_shapes(layer, input);
                    let tensors = tshapes
                        .into_iter()
                        .zip(layer_roles(layer))
                        .map(|(shape, &role)| make(Group::Branch(m), role, shape, fan_in))
                        .collect();
                    LayerParams { tensors }
                })
                .collect();
            branches.push(layers);
        }
        let d = spec.embedding_dim;
        let heads = spec
            .heads
            .covariates()
            .iter()
            .map(|c| HeadParams {
                weight: make(Group::Head, Role::Weight, vec![c.cardinality, d], d),
                bias: make(Group::Head, Role::Bias, vec![c.cardinality], d),
            })
            .collect();
        let branch_b = branches.pop().unwrap();
        let branch_a = branches.pop().unwrap();
        Ok(Self {
            branch_a,
            branch_b,
            heads,
        })
    }

    pub fn branch(&self, modality: Modality) -> &[LayerParams] {
        match modality {
            Modality::A => &self.branch_a,
            Modality::B => &self.branch_b,
        }
    }

    pub fn branch_mut(&mut self, modality: Modality) -> &mut Vec<LayerParams> {
        match modality {
            Modality::A => &mut self.branch_a,
            Modality::B => &mut self.branch_b,
        }
    }

    /// Every tensor in canonical order (branch A layers, branch B layers,
    /// heads), tagged with its slot.
    pub fn tensors<'a>(&'a self, spec: &NetworkSpec) -> Vec<(Slot, &'a Tensor)> {
        let mut out = Vec::new();
        for m in [Modality::A, Modality::B] {
            for (layer, lp) in spec.layers(m).iter().zip(self.branch(m)) {
                for (t, &role) in lp.tensors.iter().zip(layer_roles(layer)) {
                    out.push((
                        Slot {
                            group: Group::Branch(m),
                            role,
                        },
                        t,
                    ));
                }
            }
        }
        for h in &self.heads {
            for (t, role) in [(&h.weight, Role::Weight), (&h.bias, Role::Bias)] {
                out.push((
                    Slot {
                        group: Group::Head,
                        role,
                    },
                    t,
                ));
            }
        }
        out
    }

    pub fn tensors_mut<'a>(&'a mut self, spec: &NetworkSpec) -> Vec<(Slot, &'a mut Tensor)> {
        let mut out = Vec::new();
        for (m, branch) in [
            (Modality::A, &mut self.branch_a),
            (Modality::B, &mut self.branch_b),
        ] {
            for (layer, lp) in spec.layers(m).iter().zip(branch.iter_mut()) {
                for (t, &role) in lp.tensors.iter_mut().zip(layer_roles(layer)) {
                    out.push((
                        Slot {
                            group: Group::Branch(m),
                            role,
                        },
                        t,
                    ));
                }
            }
        }
        for h in &mut self.heads {
            out.push((
                Slot {
                    group: Group::Head,
                    role: Role::Weight,
                },
                &mut h.weight,
            ));
            out.push((
                Slot {
                    group: Group::Head,
                    role: Role::Bias,
                },
                &mut h.bias,
            ));
        }
        out
    }

    /// Checks every tensor against the shapes `spec` implies.
    pub fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = ParamStore::zeros(spec)?;
        let got = self.tensors(spec);
        let want = expected.tensors(spec);
        let counts_ok = self.branch_a.len() == spec.layers_a.len()
            && self.branch_b.len() == spec.layers_b.len()
            && self.heads.len() == spec.heads.len()
            && self
                .branch_a
                .iter()
                .chain(&self.branch_b)
                .zip(expected.branch_a.iter().chain(&expected.branch_b))
                .all(|(a, b)| a.tensors.len() == b.tensors.len());
        if !counts_ok || got.len() != want.len() {
            return Err(Error::shape("parameter layout does not match network spec"));
        }
        for (i, ((_, g), (_, w))) in got.iter().zip(&want).enumerate() {
            if g.shape() != w.shape() {
                return Err(Error::shape(format!(
                    "tensor {i}: shape {:?}, expected {:?}",
                    g.shape(),
                    w.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn num_trainable(&self, spec: &NetworkSpec) -> usize {
        self.tensors(spec)
            .iter()
            .filter(|(s, _)| s.role.trainable())
            .map(|(_, t)| t.numel())
            .sum()
    }

    pub fn is_finite(&self, spec: &NetworkSpec) -> bool {
        self.tensors(spec).iter().all(|(_, t)| t.is_finite())
    }
}
