//! Network topology: one layer stack per modality plus shared classifier heads.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::synthgen::{CovariateSchema, FeatureShape, Modality};

/// One layer. Convolutions use the `(size, filters)/stride,padding` notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        out: usize,
    },
    Conv1d {
        size: usize,
        filters: usize,
        stride: usize,
        padding: usize,
    },
    Conv2d {
        size: usize,
        filters: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm,
    Relu,
    GlobalAvgPool,
}

impl LayerSpec {
    pub fn conv1d(size: usize, filters: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv1d {
            size,
            filters,
            stride,
            padding,
        }
    }

    pub fn conv2d(size: usize, filters: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv2d {
            size,
            filters,
            stride,
            padding,
        }
    }

    /// Output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let conv_len = |n: usize, size: usize, stride: usize, padding: usize| -> Result<usize> {
            if stride == 0 || size == 0 {
                return Err(Error::shape("convolution size and stride must be >= 1"));
            }
            let padded = n + 2 * padding;
            if padded < size {
                return Err(Error::shape(format!(
                    "kernel {size} larger than padded input {padded}"
                )));
            }
            Ok((padded - size) / stride + 1)
        };
        match *self {
            LayerSpec::Dense { out } => {
                if out == 0 {
                    return Err(Error::shape("dense layer with zero outputs"));
                }
                Ok(vec![out])
            }
            LayerSpec::Conv1d {
                size,
                filters,
                stride,
                padding,
            } => match input {
                [len, _] => Ok(vec![conv_len(*len, size, stride, padding)?, filters]),
                _ => Err(Error::shape(format!(
                    "conv1d needs [len, ch] input, got {input:?}"
                ))),
            },
            LayerSpec::Conv2d {
                size,
                filters,
                stride,
                padding,
            } => match input {
                [h, w, _] => Ok(vec![
                    conv_len(*h, size, stride, padding)?,
                    conv_len(*w, size, stride, padding)?,
                    filters,
                ]),
                _ => Err(Error::shape(format!(
                    "conv2d needs [h, w, ch] input, got {input:?}"
                ))),
            },
            LayerSpec::BatchNorm | LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::GlobalAvgPool => Ok(vec![*input.last().unwrap()]),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Dense { out } => write!(f, "dense {out}"),
            LayerSpec::Conv1d {
                size,
                filters,
                stride,
                padding,
            } => write!(f, "conv1d {size} {filters} {stride} {padding}"),
            LayerSpec::Conv2d {
                size,
                filters,
                stride,
                padding,
            } => write!(f, "conv2d {size} {filters} {stride} {padding}"),
            LayerSpec::BatchNorm => f.write_str("batchnorm"),
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::GlobalAvgPool => f.write_str("global_avg_pool"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        let nums = |n: usize| -> Result<Vec<usize>> {
            if toks.len() != n + 1 {
                return Err(Error::invalid(format!("`{s}`: expected {n} numbers")));
            }
            toks[1..]
                .iter()
                .map(|t| {
                    t.parse()
                        .map_err(|_| Error::invalid(format!("bad number in `{s}`")))
                })
                .collect()
        };
        match toks.first().copied() {
            Some("dense") => Ok(LayerSpec::Dense { out: nums(1)?[0] }),
            Some("conv1d") => {
                let v = nums(4)?;
                Ok(LayerSpec::conv1d(v[0], v[1], v[2], v[3]))
            }
            Some("conv2d") => {
                let v = nums(4)?;
                Ok(LayerSpec::conv2d(v[0], v[1], v[2], v[3]))
            }
            Some("batchnorm") => nums(0).map(|_| LayerSpec::BatchNorm),
            Some("relu") => nums(0).map(|_| LayerSpec::Relu),
            Some("global_avg_pool") => nums(0).map(|_| LayerSpec::GlobalAvgPool),
            _ => Err(Error::invalid(format!("unknown layer `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_a: FeatureShape,
    pub input_b: FeatureShape,
    pub layers_a: Vec<LayerSpec>,
    pub layers_b: Vec<LayerSpec>,
    pub embedding_dim: usize,
    /// One logistic-regression head per covariate, in schema order.
    pub heads: CovariateSchema,
}

impl NetworkSpec {
    pub fn new(
        input_a: FeatureShape,
        input_b: FeatureShape,
        layers_a: Vec<LayerSpec>,
        layers_b: Vec<LayerSpec>,
        embedding_dim: usize,
        heads: CovariateSchema,
    ) -> Result<Self> {
        let spec = Self {
            input_a,
            input_b,
            layers_a,
            layers_b,
            embedding_dim,
            heads,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for m in [Modality::A, Modality::B] {
            let shapes = self.shapes(m)?;
            let last = shapes.last().unwrap();
            if last.as_slice() != [self.embedding_dim] {
                return Err(Error::shape(format!(
                    "branch {m} ends in {last:?}, expected [{}]",
                    self.embedding_dim
                )));
            }
        }
        Ok(())
    }

    pub fn input(&self, modality: Modality) -> &FeatureShape {
        match modality {
            Modality::A => &self.input_a,
            Modality::B => &self.input_b,
        }
    }

    pub fn layers(&self, modality: Modality) -> &[LayerSpec] {
        match modality {
            Modality::A => &self.layers_a,
            Modality::B => &self.layers_b,
        }
    }

    /// Input shape followed by every layer's output shape.
    pub fn shapes(&self, modality: Modality) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input(modality).0.clone()];
        for layer in self.layers(modality) {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Dense-BN-ReLU stack for flat inputs, closed by a linear projection to
    /// `embedding_dim` and a (shape-preserving) pool.
    pub fn mlp(
        input_a: FeatureShape,
        input_b: FeatureShape,
        hidden: &[usize],
        embedding_dim: usize,
        heads: CovariateSchema,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        for &h in hidden {
            layers.extend([
                LayerSpec::Dense { out: h },
                LayerSpec::BatchNorm,
                LayerSpec::Relu,
            ]);
        }
        layers.push(LayerSpec::Dense { out: embedding_dim });
        layers.push(LayerSpec::GlobalAvgPool);
        Self::new(
            input_a,
            input_b,
            layers.clone(),
            layers,
            embedding_dim,
            heads,
        )
    }

    /// Convolutional branches: `(3, f)/2,1` conv-BN-ReLU blocks for each
    /// entry of `filters`, then a `(3, d)/1,1` conv and global average pooling.
    /// Modality A uses 1-D convolutions, modality B 2-D.
    pub fn conv(
        input_a: FeatureShape,
        input_b: FeatureShape,
        filters: &[usize],
        embedding_dim: usize,
        heads: CovariateSchema,
    ) -> Result<Self> {
        let branch = |two_d: bool| {
            let conv = |f, s| {
                if two_d {
                    LayerSpec::conv2d(3, f, s, 1)
                } else {
                    LayerSpec::conv1d(3, f, s, 1)
                }
            };
            let mut layers = Vec::new();
            for &f in filters {
                layers.extend([conv(f, 2), LayerSpec::BatchNorm, LayerSpec::Relu]);
            }
            layers.push(conv(embedding_dim, 1));
            layers.push(LayerSpec::GlobalAvgPool);
            layers
        };
        Self::new(
            input_a,
            input_b,
            branch(false),
            branch(true),
            embedding_dim,
            heads,
        )
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("input_a {}\n", self.input_a));
        s.push_str(&format!("input_b {}\n", self.input_b));
        s.push_str(&format!("embedding_dim {}\n", self.embedding_dim));
        for (tag, layers) in [("layers_a", &self.layers_a), ("layers_b", &self.layers_b)] {
            s.push_str(&format!("{tag} {}\n", layers.len()));
            for l in layers {
                s.push_str(&format!("{l}\n"));
            }
        }
        s.push_str(&format!("heads {}\n", self.heads));
        s.push_str("end\n");
        s
    }

    /// Parses the block written by [`to_text`](Self::to_text). Lines after
    /// `end` are not consumed; returns the spec and the number of lines read.
    pub fn from_lines<'a, I: Iterator<Item = &'a str>>(lines: I) -> Result<(Self, usize)> {
        let mut lines = lines.enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |key: &str| -> Result<(usize, String)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("missing `{key}`")))?;
            let rest = line
                .strip_prefix(key)
                .ok_or_else(|| Error::parse(no, format!("expected `{key}`")))?;
            Ok((no, rest.trim().to_string()))
        };
        let shape = |(no, v): (usize, String)| {
            v.parse::<FeatureShape>()
                .map_err(|e| Error::parse(no, e.to_string()))
        };
        let input_a = shape(next("input_a")?)?;
        let input_b = shape(next("input_b")?)?;
        let (no, d) = next("embedding_dim")?;
        let embedding_dim = d
            .parse()
            .map_err(|_| Error::parse(no, "bad embedding_dim"))?;
        let mut branches = Vec::new();
        for tag in ["layers_a", "layers_b"] {
            let (no, n) = next(tag)?;
            let n: usize = n.parse().map_err(|_| Error::parse(no, "bad layer count"))?;
            let mut layers = Vec::with_capacity(n);
            for _ in 0..n {
                let (no, l) = next("")?;
                layers.push(
                    l.parse()
                        .map_err(|e: Error| Error::parse(no, e.to_string()))?,
                );
            }
            branches.push(layers);
        }
        let (no, h) = next("heads")?;
        let heads = h
            .parse()
            .map_err(|e: Error| Error::parse(no, e.to_string()))?;
        let (no, _) = next("end")?;
        let layers_b = branches.pop().unwrap();
        let layers_a = branches.pop().unwrap();
        let spec = Self::new(input_a, input_b, layers_a, layers_b, embedding_dim, heads)?;
        Ok((spec, no))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heads() -> CovariateSchema {
        CovariateSchema::standard(10, 4).unwrap()
    }

    #[test]
    fn conv_shape_chain() {
        let spec = NetworkSpec::conv(
            FeatureShape(vec![16, 2]),
            FeatureShape(vec![8, 8, 1]),
            &[4, 8],
            6,
            heads(),
        )
        .unwrap();
        let a = spec.shapes(Modality::A).unwrap();
        assert_eq!(a[1], vec![8, 4]);
        assert_eq!(a[4], vec![4, 8]);
        assert_eq!(a.last().unwrap(), &vec![6]);
        let b = spec.shapes(Modality::B).unwrap();
        assert_eq!(b[1], vec![4, 4, 4]);
        assert_eq!(b[7], vec![2, 2, 6]);
    }

    #[test]
    fn mismatched_embedding_rejected() {
        let err = NetworkSpec::new(
            FeatureShape(vec![4]),
            FeatureShape(vec![4]),
            vec![LayerSpec::Dense { out: 3 }],
            vec![LayerSpec::Dense { out: 2 }],
            3,
            heads(),
        );
        assert!(err.is_err());
        assert!(LayerSpec::conv1d(3, 2, 1, 0)
            .output_shape(&[4, 4, 1])
            .is_err());
        assert!(LayerSpec::conv1d(3, 2, 0, 0).output_shape(&[4, 1]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let spec = NetworkSpec::conv(
            FeatureShape(vec![16, 2]),
            FeatureShape(vec![8, 8, 1]),
            &[4],
            5,
            heads(),
        )
        .unwrap();
        let text = spec.to_text();
        let (back, consumed) = NetworkSpec::from_lines(text.lines()).unwrap();
        assert_eq!(back, spec);
        assert_eq!(consumed, text.lines().count());
    }
}
