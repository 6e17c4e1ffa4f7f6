//! Declarative encoder descriptions with shape inference and parameter
//! counting. Nothing here executes a network; the point is structural
//! verification of the lightweight encoder designs.

use crate::error::{Error, Result};

/// Dilation rates of the spatial pyramid branches.
pub const ASPP_RATES: [usize; 4] = [1, 6, 12, 18];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    MaxPool,
    /// Stack of bottleneck residual units (1x1, kxk stride on the first
    /// unit, 1x1; projection shortcut carries no counted parameters).
    ResnetBlock { units: usize },
    /// Two convolutions sharing the block kernel; the first downsamples.
    VggBlock,
    /// Four dilated branches plus a pooled 1x1 branch, concatenated.
    Aspp { branch_out: usize },
    /// Global pool followed by a 1x1 convolution and upscale.
    GlobalPoolBranch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    /// Kernel size; 0 when not applicable.
    pub kernel: usize,
    /// Spatial downscale this layer applies (1 or 2).
    pub stride: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    /// Declared cumulative downscale relative to the input image.
    pub scale: usize,
    pub input_ref: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

/// Inferred per-layer output geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerShape {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub downscale: usize,
}

fn layer(
    name: &str,
    kind: LayerKind,
    kernel: usize,
    stride: usize,
    in_ch: usize,
    out_ch: usize,
    scale: usize,
    input_ref: &str,
) -> LayerSpec {
    LayerSpec {
        name: name.to_string(),
        kind,
        kernel,
        stride,
        in_ch,
        out_ch,
        scale,
        input_ref: input_ref.to_string(),
    }
}

/// The VGG-backbone encoder: four VGG blocks, a max-pool, and the spatial
/// pyramid in place of the dense tail.
pub fn builtin_vggaspp() -> ArchSpec {
    ArchSpec {
        name: "vggaspp".into(),
        layers: vec![
            layer("VGG_block_1", LayerKind::VggBlock, 7, 2, 3, 32, 2, "left"),
            layer("VGG_block_2", LayerKind::VggBlock, 5, 2, 32, 64, 4, "VGG_block_1"),
            layer("VGG_block_3", LayerKind::VggBlock, 3, 2, 64, 128, 8, "VGG_block_2"),
            layer("VGG_block_4", LayerKind::VggBlock, 3, 2, 128, 256, 16, "VGG_block_3"),
            layer("maxpool_4", LayerKind::MaxPool, 3, 2, 256, 256, 32, "VGG_block_4"),
            layer(
                "ASPP",
                LayerKind::Aspp { branch_out: 256 },
                0,
                1,
                256,
                256,
                32,
                "maxpool_4",
            ),
        ],
    }
}

/// The residual-backbone encoder.
pub fn builtin_resaspp() -> ArchSpec {
    ArchSpec {
        name: "resaspp".into(),
        layers: vec![
            layer("enc_block_1", LayerKind::Conv, 7, 2, 2, 64, 2, "left"),
            layer("enc_block_2", LayerKind::MaxPool, 3, 2, 64, 64, 4, "enc_block_1"),
            layer(
                "enc_block_3",
                LayerKind::ResnetBlock { units: 3 },
                3,
                2,
                64,
                64,
                8,
                "enc_block_2",
            ),
            layer(
                "enc_block_4",
                LayerKind::ResnetBlock { units: 4 },
                3,
                2,
                64,
                128,
                16,
                "enc_block_3",
            ),
            layer("enc_block_5", LayerKind::MaxPool, 3, 2, 128, 128, 32, "enc_block_4"),
            layer(
                "enc_block_6",
                LayerKind::Aspp { branch_out: 256 },
                0,
                1,
                128,
                256,
                32,
                "enc_block_5",
            ),
        ],
    }
}

fn conv_params(kernel: usize, in_ch: usize, out_ch: usize) -> u64 {
    (kernel * kernel * in_ch * out_ch + out_ch) as u64
}

/// Parameter count of a single layer: k*k*Cin*Cout + Cout per convolution,
/// zero for pooling.
pub fn layer_params(l: &LayerSpec) -> u64 {
    match l.kind {
        LayerKind::Conv => conv_params(l.kernel, l.in_ch, l.out_ch),
        LayerKind::MaxPool => 0,
        LayerKind::VggBlock => {
            conv_params(l.kernel, l.in_ch, l.out_ch) + conv_params(l.kernel, l.out_ch, l.out_ch)
        }
        LayerKind::ResnetBlock { units } => {
            let mut total = 0u64;
            let mut cin = l.in_ch;
            for _ in 0..units {
                total += conv_params(1, cin, l.out_ch);
                total += conv_params(l.kernel, l.out_ch, l.out_ch);
                total += conv_params(1, l.out_ch, l.out_ch);
                cin = l.out_ch;
            }
            total
        }
        LayerKind::Aspp { branch_out } => {
            // pooled 1x1 branch + 1x1 branch + three 3x3 dilated branches
            conv_params(1, l.in_ch, branch_out)
                + conv_params(1, l.in_ch, branch_out)
                + 3 * conv_params(3, l.in_ch, branch_out)
        }
        LayerKind::GlobalPoolBranch => conv_params(1, l.in_ch, l.out_ch),
    }
}

/// Total parameter count. This covers the encoder and pyramid only; it is
/// a subtotal, not a whole-network figure.
pub fn count_params(spec: &ArchSpec) -> u64 {
    spec.layers.iter().map(layer_params).sum()
}

/// Walks the layer chain, checking input references, divisibility and the
/// declared downscales, and returns per-layer output shapes. Dilated
/// branches preserve spatial size; the pyramid output lists the
/// concatenation width (five branches).
pub fn infer_shapes(spec: &ArchSpec, height: usize, width: usize) -> Result<Vec<LayerShape>> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimension(format!("{}x{}", height, width)));
    }
    let mut shapes: Vec<LayerShape> = Vec::with_capacity(spec.layers.len());
    for (i, l) in spec.layers.iter().enumerate() {
        let (in_h, in_w, downscale_in) = if l.input_ref == "input" || l.input_ref == "left" {
            if i != 0 {
                return Err(Error::Arch(format!(
                    "{}: only the first layer may read the input image",
                    l.name
                )));
            }
            (height, width, 1)
        } else {
            let prev = shapes
                .iter()
                .find(|s| s.name == l.input_ref)
                .ok_or_else(|| {
                    Error::Arch(format!(
                        "{}: input_ref {:?} does not resolve",
                        l.name, l.input_ref
                    ))
                })?;
            if i > 0 {
                let prev_spec = &spec.layers[i - 1];
                if prev_spec.name == l.input_ref && prev_spec.out_ch != l.in_ch {
                    return Err(Error::Arch(format!(
                        "{}: declares {} input channels but {} produces {}",
                        l.name, l.in_ch, prev_spec.name, prev_spec.out_ch
                    )));
                }
            }
            (prev.height, prev.width, prev.downscale)
        };
        if l.stride == 0 {
            return Err(Error::Arch(format!("{}: zero stride", l.name)));
        }
        if in_h % l.stride != 0 || in_w % l.stride != 0 {
            return Err(Error::Arch(format!(
                "{}: {}x{} input is not divisible by stride {}",
                l.name, in_h, in_w, l.stride
            )));
        }
        let downscale = downscale_in * l.stride;
        if downscale != l.scale {
            return Err(Error::Arch(format!(
                "{}: declared downscale {} but the stride chain gives {}",
                l.name, l.scale, downscale
            )));
        }
        let channels = match l.kind {
            LayerKind::Aspp { branch_out } => 5 * branch_out,
            _ => l.out_ch,
        };
        shapes.push(LayerShape {
            name: l.name.clone(),
            height: in_h / l.stride,
            width: in_w / l.stride,
            channels,
            downscale,
        });
    }
    Ok(shapes)
}

/// Looks a builtin spec up by name.
pub fn builtin(name: &str) -> Option<ArchSpec> {
    match name.to_ascii_lowercase().as_str() {
        "vggaspp" => Some(builtin_vggaspp()),
        "resaspp" => Some(builtin_resaspp()),
        _ => None,
    }
}
